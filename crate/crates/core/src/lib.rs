//! Stochastic inventory routing for recyclable waste collection.
//!
//! - [`instance`]: parameters, bins, distances, fill histories
//! - [`scentree`]: scenario trees from historical accumulation rates
//! - [`models`]: the MILP formulations and plan decoding
//! - [`rollhorizon`]: the rolling-horizon heuristic and its time budgets
//! - [`measures`]: EVPI, VSS and the skeleton/upgradeability tests

pub mod instance;
pub mod measures;
pub mod models;
pub mod rollhorizon;
pub mod scentree;

pub use stochwaste_milp as milp;
