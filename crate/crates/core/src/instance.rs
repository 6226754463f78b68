//! Problem data: economic and physical parameters, bins, the distance
//! matrix, and the fill-level histories used to derive accumulation rates.
//!
//! Waste quantities are kept in kilograms once an instance is built; a
//! bin's volume in m^3 only appears through [`Instance::max_content_kg`].

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance has no bins")]
    NoBins,
    #[error("invalid parameter {name}: {msg}")]
    Parameter { name: &'static str, msg: String },
    #[error("bin {id}: {msg}")]
    Bin { id: usize, msg: String },
    #[error("duplicate bin id {0}")]
    DuplicateBin(usize),
    #[error("distance matrix is {rows}x{cols}, expected {expected}x{expected}")]
    Dimension { rows: usize, cols: usize, expected: usize },
    #[error("distance d[{i}][{j}] = {value} is invalid: {msg}")]
    Distance { i: usize, j: usize, value: f64, msg: &'static str },
    #[error("unsupported schema_version {0}")]
    Schema(u32),
    #[error("history for bin {bin}: {msg}")]
    History { bin: usize, msg: String },
    #[error("bin {bin}, days {from}..{to}: accumulation rate {rate} outside [0, 1]")]
    RateRange { bin: usize, from: i64, to: i64, rate: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// C, currency per km.
    pub travel_cost_per_km: f64,
    /// R, currency per kg.
    pub selling_price_per_kg: f64,
    /// Q, kg.
    pub vehicle_capacity_kg: f64,
    /// B, kg per m^3.
    pub waste_density_kg_m3: f64,
    pub big_m: f64,
    /// T, number of stages (days) in the planning horizon.
    pub horizon: usize,
}

impl Parameters {
    /// Reference values: C = 1, R = 0.30, Q = 2000, B = 30, M = 1e5.
    pub fn reference(horizon: usize) -> Self {
        Self {
            travel_cost_per_km: 1.0,
            selling_price_per_kg: 0.30,
            vehicle_capacity_kg: 2000.0,
            waste_density_kg_m3: 30.0,
            big_m: 1e5,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let p = |name, msg: &str| Err(InstanceError::Parameter { name, msg: msg.to_string() });
        if !(self.travel_cost_per_km >= 0.0 && self.travel_cost_per_km.is_finite()) {
            return p("travel_cost_per_km", "must be finite and >= 0");
        }
        if !(self.selling_price_per_kg >= 0.0 && self.selling_price_per_kg.is_finite()) {
            return p("selling_price_per_kg", "must be finite and >= 0");
        }
        if !(self.vehicle_capacity_kg > 0.0 && self.vehicle_capacity_kg.is_finite()) {
            return p("vehicle_capacity_kg", "must be finite and > 0");
        }
        if !(self.waste_density_kg_m3 > 0.0 && self.waste_density_kg_m3.is_finite()) {
            return p("waste_density_kg_m3", "must be finite and > 0");
        }
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return p("big_m", "must be finite and > 0");
        }
        if self.horizon < 2 {
            return p("horizon", "needs at least 2 stages");
        }
        Ok(())
    }
}

/// Optional replacements applied on top of a loaded parameter set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterOverrides {
    pub travel_cost_per_km: Option<f64>,
    pub selling_price_per_kg: Option<f64>,
    pub vehicle_capacity_kg: Option<f64>,
    pub waste_density_kg_m3: Option<f64>,
    pub big_m: Option<f64>,
    pub horizon: Option<usize>,
}

impl ParameterOverrides {
    pub fn apply(&self, p: &mut Parameters) {
        if let Some(v) = self.travel_cost_per_km {
            p.travel_cost_per_km = v;
        }
        if let Some(v) = self.selling_price_per_kg {
            p.selling_price_per_kg = v;
        }
        if let Some(v) = self.vehicle_capacity_kg {
            p.vehicle_capacity_kg = v;
        }
        if let Some(v) = self.waste_density_kg_m3 {
            p.waste_density_kg_m3 = v;
        }
        if let Some(v) = self.big_m {
            p.big_m = v;
        }
        if let Some(v) = self.horizon {
            p.horizon = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub id: usize,
    /// E_i, m^3.
    pub capacity_m3: f64,
    /// S_i^init, fraction of the volume filled at the start.
    pub initial_fill: f64,
}

/// Square matrix over vertices `0..dim`, vertex 0 being the depot.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, InstanceError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(InstanceError::Dimension {
                    rows: dim,
                    cols: r.len(),
                    expected: dim,
                });
            }
            data.extend_from_slice(r);
        }
        let m = Self { dim, data };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), InstanceError> {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let value = self.get(i, j);
                let bad = |msg| Err(InstanceError::Distance { i, j, value, msg });
                if !value.is_finite() {
                    return bad("not finite");
                }
                if value < 0.0 {
                    return bad("negative");
                }
                if i == j && value != 0.0 {
                    return bad("diagonal must be zero");
                }
            }
        }
        Ok(())
    }

    /// Euclidean distances between points (depot first).
    pub fn euclidean(points: &[(f64, f64)]) -> Self {
        let dim = points.len();
        let mut data = vec![0.0; dim * dim];
        for (i, a) in points.iter().enumerate() {
            for (j, b) in points.iter().enumerate() {
                data[i * dim + j] = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Mean over unordered pairs of `|d_ij - d_ji| / ((d_ij + d_ji) / 2)`;
    /// pairs at zero distance both ways are skipped.
    pub fn asymmetry_ratio(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.dim {
            for j in 0..i {
                let (a, b) = (self.get(i, j), self.get(j, i));
                let mean = 0.5 * (a + b);
                if mean > 0.0 {
                    sum += (a - b).abs() / mean;
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Entry (i, j) becomes `(d_ij + d_ji) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.dim;
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = 0.5 * (self.get(i, j) + self.get(j, i));
            }
        }
        Self { dim: n, data }
    }

    /// Sub-matrix on the listed vertices, in that order.
    pub fn select(&self, vertices: &[usize]) -> Self {
        let n = vertices.len();
        let mut data = Vec::with_capacity(n * n);
        for &a in vertices {
            for &b in vertices {
                data.push(self.get(a, b));
            }
        }
        Self { dim: n, data }
    }
}

pub fn symmetrize_distances(d: &DistanceMatrix) -> DistanceMatrix {
    d.symmetrized()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub parameters: Parameters,
    pub bins: Vec<Bin>,
    pub distances: DistanceMatrix,
    pub coordinates: Option<Vec<(f64, f64)>>,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        parameters: Parameters,
        bins: Vec<Bin>,
        distances: DistanceMatrix,
    ) -> Result<Self, InstanceError> {
        let inst = Self {
            name: name.into(),
            parameters,
            bins,
            distances,
            coordinates: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        self.parameters.validate()?;
        if self.bins.is_empty() {
            return Err(InstanceError::NoBins);
        }
        let mut seen = HashSet::new();
        for b in &self.bins {
            if !seen.insert(b.id) {
                return Err(InstanceError::DuplicateBin(b.id));
            }
            if !(b.capacity_m3 > 0.0 && b.capacity_m3.is_finite()) {
                return Err(InstanceError::Bin {
                    id: b.id,
                    msg: format!("capacity {} must be > 0", b.capacity_m3),
                });
            }
            if !(0.0..=1.0).contains(&b.initial_fill) {
                return Err(InstanceError::Bin {
                    id: b.id,
                    msg: format!("initial fill {} outside [0, 1]", b.initial_fill),
                });
            }
        }
        let expected = self.bins.len() + 1;
        if self.distances.dim() != expected {
            return Err(InstanceError::Dimension {
                rows: self.distances.dim(),
                cols: self.distances.dim(),
                expected,
            });
        }
        self.distances.validate()?;
        if let Some(c) = &self.coordinates {
            if c.len() != expected {
                return Err(InstanceError::Format {
                    path: self.name.clone(),
                    msg: format!("{} coordinates for {} vertices", c.len(), expected),
                });
            }
        }
        Ok(())
    }

    /// Non-fatal issues worth reporting (the big-M checks).
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let p = &self.parameters;
        if p.big_m < p.vehicle_capacity_kg {
            w.push(format!("big_m {} is below the vehicle capacity {}", p.big_m, p.vehicle_capacity_kg));
        }
        let max_content = (0..self.n_bins()).map(|i| self.max_content_kg(i)).fold(0.0, f64::max);
        if p.big_m < max_content {
            w.push(format!("big_m {} is below the largest bin content {max_content} kg", p.big_m));
        }
        w
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// E_i * B in kg for the bin at position `i` (0-based).
    pub fn max_content_kg(&self, i: usize) -> f64 {
        self.bins[i].capacity_m3 * self.parameters.waste_density_kg_m3
    }

    pub fn initial_content_kg(&self, i: usize) -> f64 {
        self.max_content_kg(i) * self.bins[i].initial_fill
    }

    pub fn total_content_kg(&self) -> f64 {
        (0..self.n_bins()).map(|i| self.max_content_kg(i)).sum()
    }

    pub fn with_symmetric_distances(&self) -> Self {
        let mut s = self.clone();
        s.distances = self.distances.symmetrized();
        s
    }

    pub fn with_parameters(&self, parameters: Parameters) -> Self {
        let mut s = self.clone();
        s.parameters = parameters;
        s
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            parameters: self.parameters,
            bins: self.bins.clone(),
            distance_matrix: self.distances.rows(),
            coordinates: self.coordinates.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serialises")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Format {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        file.into_instance()
    }

    /// Keeps the depot and the bins at the given positions (0-based).
    pub fn subset(&self, positions: &[usize], name: impl Into<String>) -> Result<Self, InstanceError> {
        let mut vertices = vec![0];
        vertices.extend(positions.iter().map(|p| p + 1));
        let s = Self {
            name: name.into(),
            parameters: self.parameters,
            bins: positions.iter().map(|&p| self.bins[p]).collect(),
            distances: self.distances.select(&vertices),
            coordinates: self.coordinates.as_ref().map(|c| vertices.iter().map(|&v| c[v]).collect()),
        };
        s.validate()?;
        Ok(s)
    }
}

/// On-disk layout of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub parameters: Parameters,
    pub bins: Vec<Bin>,
    /// Row-major, km, depot first.
    pub distance_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<(f64, f64)>>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance, InstanceError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(InstanceError::Schema(self.schema_version));
        }
        let expected = self.bins.len() + 1;
        if self.distance_matrix.len() != expected {
            return Err(InstanceError::Dimension {
                rows: self.distance_matrix.len(),
                cols: self.distance_matrix.first().map_or(0, |r| r.len()),
                expected,
            });
        }
        let inst = Instance {
            name: self.name,
            parameters: self.parameters,
            bins: self.bins,
            distances: DistanceMatrix::from_rows(&self.distance_matrix)?,
            coordinates: self.coordinates,
        };
        inst.validate()?;
        Ok(inst)
    }
}

pub fn load_instance(path: &Path, overrides: &ParameterOverrides) -> Result<Instance, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut inst = Instance::from_json(&text, &path.display().to_string())?;
    if inst.name.is_empty() {
        inst.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    overrides.apply(&mut inst.parameters);
    inst.validate()?;
    for w in inst.warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(inst)
}

/// Random instance with bins scattered on a square of side `side_km`;
/// distances are Euclidean, optionally perturbed per direction by up to
/// `asymmetry` (relative).
pub fn synthetic_instance(
    n_bins: usize,
    parameters: Parameters,
    side_km: f64,
    asymmetry: f64,
    seed: u64,
) -> Result<Instance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![(0.5 * side_km, 0.5 * side_km)];
    for _ in 0..n_bins {
        pts.push((rng.gen::<f64>() * side_km, rng.gen::<f64>() * side_km));
    }
    let mut rows = DistanceMatrix::euclidean(&pts).rows();
    if asymmetry > 0.0 {
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v *= 1.0 + asymmetry * (2.0 * rng.gen::<f64>() - 1.0);
                }
            }
        }
    }
    let bins = (0..n_bins)
        .map(|k| Bin {
            id: k + 1,
            capacity_m3: 2.5,
            initial_fill: (rng.gen::<f64>() * 0.5 * 1e4).round() / 1e4,
        })
        .collect();
    let mut inst = Instance::new(
        format!("synthetic_{n_bins}"),
        parameters,
        bins,
        DistanceMatrix::from_rows(&rows)?,
    )?;
    inst.coordinates = Some(pts);
    Ok(inst)
}

/// Draws `n` bins uniformly without replacement; named `inst_<draw>_<n>`.
pub fn draw_instance(master: &Instance, n: usize, draw: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n == 0 || n > master.n_bins() {
        return Err(InstanceError::Parameter {
            name: "n",
            msg: format!("cannot draw {n} of {} bins", master.n_bins()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(draw as u64));
    let mut idx: Vec<usize> = (0..master.n_bins()).collect();
    idx.shuffle(&mut rng);
    let mut pick = idx[..n].to_vec();
    pick.sort_unstable();
    master.subset(&pick, format!("inst_{draw}_{n}"))
}

/// Fill levels of one bin observed on collection days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillHistory {
    pub bin_id: usize,
    /// `(day, fill fraction)`; the bin is emptied right after each observation.
    pub observations: Vec<(i64, f64)>,
}

/// Daily accumulation rates for days `start_day ..= start_day + rates.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRates {
    pub bin_id: usize,
    pub start_day: i64,
    pub rates: Vec<f64>,
}

impl DailyRates {
    pub fn last_day(&self) -> i64 {
        self.start_day + self.rates.len() as i64 - 1
    }

    pub fn rate_on(&self, day: i64) -> Option<f64> {
        let k = day - self.start_day;
        if k < 0 {
            return None;
        }
        self.rates.get(k as usize).copied()
    }
}

/// Spreads each observed fill evenly over the days since the previous
/// collection: `a^(t) = p^(t2) / (t2 - t1)` for `t1 < t <= t2`.
pub fn derive_accumulation_trajectories(h: &FillHistory) -> Result<DailyRates, InstanceError> {
    let bin = h.bin_id;
    if h.observations.len() < 2 {
        return Err(InstanceError::History {
            bin,
            msg: "at least two observations are needed".into(),
        });
    }
    for &(day, p) in &h.observations {
        if !(0.0..=1.0).contains(&p) {
            return Err(InstanceError::History {
                bin,
                msg: format!("fill fraction {p} on day {day} outside [0, 1]"),
            });
        }
    }
    let first = h.observations[0].0;
    let mut rates = Vec::new();
    for w in h.observations.windows(2) {
        let ((t1, _), (t2, p)) = (w[0], w[1]);
        if t2 <= t1 {
            return Err(InstanceError::History {
                bin,
                msg: format!("day indices not increasing ({t1} then {t2})"),
            });
        }
        let rate = p / (t2 - t1) as f64;
        if !(0.0..=1.0).contains(&rate) {
            return Err(InstanceError::RateRange {
                bin,
                from: t1,
                to: t2,
                rate,
            });
        }
        rates.extend(std::iter::repeat(rate).take((t2 - t1) as usize));
    }
    Ok(DailyRates {
        bin_id: bin,
        start_day: first + 1,
        rates,
    })
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    bin_id: usize,
    day_index: i64,
    fill_fraction: f64,
}

/// Reads `bin_id, day_index, fill_fraction` rows (header required).
pub fn load_histories(path: &Path) -> Result<Vec<FillHistory>, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_histories(&text, &path.display().to_string())
}

pub fn parse_histories(text: &str, origin: &str) -> Result<Vec<FillHistory>, InstanceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut by_bin: BTreeMap<usize, Vec<(i64, f64)>> = BTreeMap::new();
    for (k, row) in rdr.deserialize::<HistoryRow>().enumerate() {
        let row = row.map_err(|e| InstanceError::Format {
            path: origin.to_string(),
            msg: format!("record {}: {e}", k + 1),
        })?;
        by_bin.entry(row.bin_id).or_default().push((row.day_index, row.fill_fraction));
    }
    if by_bin.is_empty() {
        return Err(InstanceError::Format {
            path: origin.to_string(),
            msg: "no history records".into(),
        });
    }
    Ok(by_bin
        .into_iter()
        .map(|(bin_id, observations)| FillHistory { bin_id, observations })
        .collect())
}

pub fn histories_to_csv(histories: &[FillHistory]) -> String {
    let mut s = String::from("bin_id,day_index,fill_fraction\n");
    for h in histories {
        for &(d, p) in &h.observations {
            s.push_str(&format!("{},{},{}\n", h.bin_id, d, p));
        }
    }
    s
}

/// Synthetic collection records: each bin is emptied every 1 to 4 days and
/// fills at a bin-specific mean daily rate with multiplicative noise.
pub fn synthetic_histories(n_bins: usize, days: i64, seed: u64) -> Vec<FillHistory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n_bins)
        .map(|bin_id| {
            let mean: f64 = rng.gen_range(0.05..0.25);
            let mut obs = vec![(0i64, 0.0)];
            let mut day = 0;
            while day < days {
                let gap = rng.gen_range(1..=4).min(days - day);
                day += gap;
                let mut fill = 0.0;
                for _ in 0..gap {
                    fill += mean * rng.gen_range(0.3..1.7);
                }
                let fill = (fill.min(1.0) * 1e4).round() / 1e4;
                obs.push((day, fill));
            }
            FillHistory { bin_id, observations: obs }
        })
        .collect()
}
