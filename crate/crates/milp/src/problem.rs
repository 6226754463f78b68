//! Problem representation: variables with bounds and integrality,
//! linear rows, and a maximisation objective.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::MilpError;

/// Index of a variable inside a [`MilpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a constraint row inside a [`MilpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    /// Lower bound; `f64::NEG_INFINITY` when unbounded below.
    #[serde(with = "lower_bound")]
    pub lower: f64,
    /// Upper bound; `f64::INFINITY` when unbounded above.
    #[serde(with = "upper_bound")]
    pub upper: f64,
    pub integer: bool,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        self.integer && self.lower == 0.0 && self.upper == 1.0
    }
}

// JSON has no infinities: an absent bound is written as null.
macro_rules! bound_serde {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_infinite() {
                    s.serialize_none()
                } else {
                    s.serialize_some(v)
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($inf))
            }
        }
    };
}
bound_serde!(lower_bound, f64::NEG_INFINITY);
bound_serde!(upper_bound, f64::INFINITY);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A mixed-integer linear program, always in maximisation form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Sparse objective coefficients (maximised).
    pub objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
}

impl MilpProblem {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer,
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, true)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, false)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let id = RowId(self.constraints.len());
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        id
    }

    pub fn set_objective(&mut self, coeffs: Vec<(VarId, f64)>) {
        self.objective = coeffs;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.num_vars() - self.num_integer()
    }

    pub fn num_rows_with(&self, sense: Sense) -> usize {
        self.constraints.iter().filter(|c| c.sense == sense).count()
    }

    /// Dense objective vector.
    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars()];
        for &(v, a) in &self.objective {
            c[v.0] += a;
        }
        c
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|(v, a)| a * values[v.0]).sum::<f64>()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    /// Structural checks: finite coefficients, valid references,
    /// consistent bounds, binaries declared on [0, 1].
    pub fn validate(&self) -> Result<(), MilpError> {
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(MilpError::Malformed(format!(
                    "variable {} ({}) has bounds [{}, {}]",
                    j, v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(MilpError::Malformed(format!("variable {} has an empty domain", v.name)));
            }
        }
        let n = self.num_vars();
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(MilpError::Malformed(format!("row {} has non-finite rhs", row.name)));
            }
            for &(v, a) in &row.coeffs {
                if v.0 >= n {
                    return Err(MilpError::Malformed(format!(
                        "row {} references undeclared variable {}",
                        row.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(MilpError::Malformed(format!("row {} has a non-finite coefficient", row.name)));
                }
            }
        }
        for &(v, a) in &self.objective {
            if v.0 >= n || !a.is_finite() {
                return Err(MilpError::Malformed("objective references an invalid term".into()));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound, and of integrality.
    pub fn max_violation(&self, values: &[f64]) -> (f64, f64) {
        let mut row_viol: f64 = 0.0;
        for row in &self.constraints {
            row_viol = row_viol.max(row.violation(values));
        }
        let mut int_viol: f64 = 0.0;
        for (v, &x) in self.variables.iter().zip(values) {
            row_viol = row_viol.max(v.lower - x).max(x - v.upper);
            if v.integer {
                int_viol = int_viol.max((x - x.round()).abs());
            }
        }
        (row_viol, int_viol)
    }

    /// The problem with every integrality flag dropped.
    ///
    /// ```
    /// # use stochwaste_milp::MilpProblem;
    /// let mut p = MilpProblem::new("r");
    /// p.add_binary("b");
    /// assert_eq!(p.relaxed().num_integer(), 0);
    /// ```
    pub fn relaxed(&self) -> MilpProblem {
        let mut p = self.clone();
        for v in &mut p.variables {
            v.integer = false;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_bounds_survive_json() {
        let mut p = MilpProblem::new("j");
        p.add_continuous("free", f64::NEG_INFINITY, f64::INFINITY);
        p.add_continuous("half", -2.0, f64::INFINITY);
        let back: MilpProblem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
