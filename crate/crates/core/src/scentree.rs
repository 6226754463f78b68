//! Scenario trees for daily accumulation rates: the tree type itself,
//! kernel-based trajectory sampling from historical weeks, fitting by
//! stochastic approximation, validation, and stability batches.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{derive_accumulation_trajectories, FillHistory, InstanceError};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid branching structure {0:?}")]
    Structure(String),
    #[error("trajectory bank: {0}")]
    Bank(String),
    #[error("tree: {0}")]
    Invalid(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("tree file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    /// 1-based stage.
    pub stage: usize,
    pub parent: Option<usize>,
    /// Unconditional probability.
    pub probability: f64,
    /// Probability of this branch given the parent.
    pub conditional: f64,
    /// Accumulation rate per bin, fraction of volume.
    pub rates: Vec<f64>,
}

/// Staged tree; node ids are positions in `nodes`, ordered by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub n_bins: usize,
    pub nodes: Vec<TreeNode>,
    #[serde(skip)]
    stages: Vec<Vec<usize>>,
    #[serde(skip)]
    children: Vec<Vec<usize>>,
}

impl ScenarioTree {
    /// Builds the stage and child indexes; nodes must be listed parent
    /// before child and ids must equal positions.
    pub fn from_nodes(n_bins: usize, nodes: Vec<TreeNode>) -> Result<Self, TreeError> {
        let mut t = Self {
            n_bins,
            nodes,
            stages: Vec::new(),
            children: Vec::new(),
        };
        t.reindex()?;
        Ok(t)
    }

    fn reindex(&mut self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(TreeError::Invalid("no nodes".into()));
        }
        let mut stages: Vec<Vec<usize>> = Vec::new();
        let mut children = vec![Vec::new(); n];
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id != k {
                return Err(TreeError::Invalid(format!("node at position {k} has id {}", node.id)));
            }
            if node.rates.len() != self.n_bins {
                return Err(TreeError::Invalid(format!(
                    "node {k} has {} rates for {} bins",
                    node.rates.len(),
                    self.n_bins
                )));
            }
            if node.stage == 0 {
                return Err(TreeError::Invalid(format!("node {k} has stage 0")));
            }
            match node.parent {
                None if node.stage != 1 => {
                    return Err(TreeError::Invalid(format!("node {k} at stage {} has no parent", node.stage)))
                }
                Some(p) if p >= k || self.nodes[p].stage + 1 != node.stage => {
                    return Err(TreeError::Invalid(format!("node {k} has invalid parent {p}")))
                }
                Some(p) => children[p].push(k),
                None => {}
            }
            if stages.len() < node.stage {
                stages.resize(node.stage, Vec::new());
            }
            stages[node.stage - 1].push(k);
        }
        if stages[0].len() != 1 {
            return Err(TreeError::Invalid(format!("{} roots", stages[0].len())));
        }
        if stages.iter().any(|s| s.is_empty()) {
            return Err(TreeError::Invalid("empty stage".into()));
        }
        self.stages = stages;
        self.children = children;
        Ok(())
    }

    /// Full tree with the given branching; `cond(node_stage, child_index)`
    /// gives branch probabilities and `rates(stage, path)` node states.
    pub fn from_structure(
        structure: &BranchingStructure,
        n_bins: usize,
        mut cond: impl FnMut(usize, usize) -> f64,
        mut rates: impl FnMut(usize, &[usize]) -> Vec<f64>,
    ) -> Result<Self, TreeError> {
        let mut nodes = vec![TreeNode {
            id: 0,
            stage: 1,
            parent: None,
            probability: 1.0,
            conditional: 1.0,
            rates: vec![0.0; n_bins],
        }];
        let mut paths: Vec<Vec<usize>> = vec![vec![]];
        let mut frontier = vec![0usize];
        for (s, &b) in structure.0.iter().enumerate().skip(1) {
            let stage = s + 1;
            let mut next = Vec::new();
            for &p in &frontier {
                for c in 0..b {
                    let id = nodes.len();
                    let mut path = paths[p].clone();
                    path.push(c);
                    let q = cond(stage, c);
                    nodes.push(TreeNode {
                        id,
                        stage,
                        parent: Some(p),
                        probability: nodes[p].probability * q,
                        conditional: q,
                        rates: rates(stage, &path),
                    });
                    paths.push(path);
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::from_nodes(n_bins, nodes)
    }

    /// One-scenario tree; `rates[t]` is the stage-(t+1) vector (stage 1 is
    /// forced to zero).
    pub fn single_path(rates: &[Vec<f64>]) -> Result<Self, TreeError> {
        let n_bins = rates.first().map_or(0, |r| r.len());
        let nodes = rates
            .iter()
            .enumerate()
            .map(|(t, r)| TreeNode {
                id: t,
                stage: t + 1,
                parent: if t == 0 { None } else { Some(t - 1) },
                probability: 1.0,
                conditional: 1.0,
                rates: if t == 0 { vec![0.0; n_bins] } else { r.clone() },
            })
            .collect();
        Self::from_nodes(n_bins, nodes)
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.stages[0][0]
    }

    /// Node ids at 1-based `stage`.
    pub fn stage_nodes(&self, stage: usize) -> &[usize] {
        &self.stages[stage - 1]
    }

    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    pub fn parent(&self, n: usize) -> Option<usize> {
        self.nodes[n].parent
    }

    pub fn leaves(&self) -> &[usize] {
        self.stages.last().expect("non-empty")
    }

    pub fn num_scenarios(&self) -> usize {
        self.leaves().len()
    }

    /// Root-to-node path (root first).
    pub fn path_to(&self, n: usize) -> Vec<usize> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Probability-weighted rate per bin at each stage.
    pub fn expected_rates(&self) -> Vec<Vec<f64>> {
        self.stages
            .iter()
            .map(|ids| {
                let mut e = vec![0.0; self.n_bins];
                for &n in ids {
                    for (i, r) in self.nodes[n].rates.iter().enumerate() {
                        e[i] += self.nodes[n].probability * r;
                    }
                }
                e
            })
            .collect()
    }

    /// The expected-value tree: one path carrying the stagewise expected rates.
    pub fn expected_value_tree(&self) -> Self {
        Self::single_path(&self.expected_rates()).expect("well-formed path")
    }

    /// Single-path tree for the scenario ending at `leaf`.
    pub fn scenario_tree(&self, leaf: usize) -> Self {
        let rates: Vec<Vec<f64>> = self.path_to(leaf).into_iter().map(|n| self.nodes[n].rates.clone()).collect();
        Self::single_path(&rates).expect("well-formed path")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let mut t: Self = serde_json::from_str(text).map_err(|e| TreeError::Format(e.to_string()))?;
        t.reindex()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchingStructure(pub Vec<usize>);

impl BranchingStructure {
    pub fn new(b: Vec<usize>) -> Result<Self, TreeError> {
        if b.len() < 2 || b[0] != 1 || b.iter().any(|&x| x == 0) {
            return Err(TreeError::Structure(format!("{b:?}")));
        }
        Ok(Self(b))
    }

    pub fn stages(&self) -> usize {
        self.0.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.0.iter().product()
    }

    pub fn num_nodes(&self) -> usize {
        let mut acc = 1;
        let mut total = 0;
        for &b in &self.0 {
            acc *= b;
            total += acc;
        }
        total
    }
}

impl FromStr for BranchingStructure {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Result<Vec<usize>, _> = s.split(['x', 'X', ',']).map(|p| p.trim().parse::<usize>()).collect();
        match parts {
            Ok(b) => Self::new(b),
            Err(_) => Err(TreeError::Structure(s.to_string())),
        }
    }
}

impl fmt::Display for BranchingStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        f.write_str(&s.join("x"))
    }
}

/// Historical weekly trajectories, `weeks[o][t][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBank {
    pub n_bins: usize,
    pub stages: usize,
    pub weeks: Vec<Vec<Vec<f64>>>,
}

impl TrajectoryBank {
    pub fn new(weeks: Vec<Vec<Vec<f64>>>) -> Result<Self, TreeError> {
        let first = weeks.first().ok_or_else(|| TreeError::Bank("no trajectories".into()))?;
        let stages = first.len();
        let n_bins = first.first().map_or(0, |r| r.len());
        if stages < 2 || n_bins == 0 {
            return Err(TreeError::Bank("trajectories need >= 2 stages and >= 1 bin".into()));
        }
        let mut weeks = weeks;
        for (o, w) in weeks.iter_mut().enumerate() {
            if w.len() != stages || w.iter().any(|r| r.len() != n_bins) {
                return Err(TreeError::Bank(format!("trajectory {o} has inconsistent shape")));
            }
            if w.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(TreeError::Bank(format!("trajectory {o} has a rate outside [0, 1]")));
            }
            w[0].iter_mut().for_each(|a| *a = 0.0);
        }
        Ok(Self { n_bins, stages, weeks })
    }

    /// Cuts the days covered by every bin into consecutive blocks of
    /// `stages` days. Stage 1 of each block is set to zero; trailing days
    /// that do not fill a block are dropped. Bins follow `histories` order.
    pub fn from_histories(histories: &[FillHistory], stages: usize) -> Result<Self, TreeError> {
        let daily = histories
            .iter()
            .map(derive_accumulation_trajectories)
            .collect::<Result<Vec<_>, _>>()?;
        let start = daily.iter().map(|d| d.start_day).max().ok_or_else(|| TreeError::Bank("no histories".into()))?;
        let end = daily.iter().map(|d| d.last_day()).min().expect("non-empty");
        let span = end - start + 1;
        if span < stages as i64 {
            return Err(TreeError::Bank(format!(
                "common observation span of {span} days is shorter than {stages} stages"
            )));
        }
        let blocks = span as usize / stages;
        let weeks = (0..blocks)
            .map(|b| {
                (0..stages)
                    .map(|t| {
                        let day = start + (b * stages + t) as i64;
                        daily.iter().map(|d| d.rate_on(day).expect("within span")).collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(weeks)
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    /// Copy with trajectories in a canonical order, so that results do not
    /// depend on input order.
    pub fn canonical(&self) -> Self {
        let mut weeks = self.weeks.clone();
        weeks.sort_by(|a, b| {
            a.iter()
                .flatten()
                .zip(b.iter().flatten())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self { weeks, ..self.clone() }
    }

    /// Bandwidth per stage and bin.
    pub fn bandwidths(&self) -> Vec<Vec<f64>> {
        let n_o = self.len();
        (0..self.stages)
            .map(|t| {
                (0..self.n_bins)
                    .map(|i| {
                        let v: Vec<f64> = self.weeks.iter().map(|w| w[t][i]).collect();
                        silverman_bandwidth(&v, n_o, self.n_bins)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Sample standard deviation (n - 1 denominator, 0 for fewer than two values).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Silverman's rule `h = sigma * N_o^(-1/(m+4))`.
pub fn silverman_from_sigma(sigma: f64, n_o: usize, m: usize) -> f64 {
    sigma * (n_o as f64).powf(-1.0 / (m as f64 + 4.0))
}

pub fn silverman_bandwidth(values: &[f64], n_o: usize, m: usize) -> f64 {
    silverman_from_sigma(sample_std(values), n_o, m)
}

/// Logistic density.
pub fn logistic_density(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    e / (1.0 + e).powi(2)
}

fn logistic_log_density(u: f64) -> f64 {
    let a = u.abs();
    -a - 2.0 * (-a).exp().ln_1p()
}

/// Inverse CDF of the logistic distribution.
pub fn logistic_quantile(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Conditional kernel sampler over a trajectory bank.
pub struct Sampler<'a> {
    bank: &'a TrajectoryBank,
    bandwidth: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    /// Number of times the weights collapsed and were reset to uniform.
    pub uniform_resets: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(bank: &'a TrajectoryBank, seed: u64) -> Self {
        Self {
            bank,
            bandwidth: bank.bandwidths(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            uniform_resets: 0,
        }
    }

    pub fn bandwidth(&self, stage: usize, bin: usize) -> f64 {
        self.bandwidth[stage - 1][bin]
    }

    fn pick(&mut self, weights: &[f64]) -> usize {
        let alpha: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (o, w) in weights.iter().enumerate() {
            acc += w;
            if alpha <= acc {
                return o;
            }
        }
        // rounding left alpha above the final cumulative sum
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
    }

    /// Draws one trajectory `[stage][bin]`; stage 1 is all zeros.
    pub fn sample(&mut self) -> Vec<Vec<f64>> {
        let bank = self.bank;
        let n_o = bank.len();
        let mut weights = vec![1.0 / n_o as f64; n_o];
        let mut out = vec![vec![0.0; bank.n_bins]];
        for t in 1..bank.stages {
            let o = self.pick(&weights);
            let mut v = Vec::with_capacity(bank.n_bins);
            for i in 0..bank.n_bins {
                let h = self.bandwidth[t][i];
                let base = bank.weeks[o][t][i];
                let x = if h > 0.0 {
                    let p: f64 = self.rng.gen_range(f64::EPSILON..1.0);
                    base + h * logistic_quantile(p)
                } else {
                    base
                };
                v.push(x.clamp(0.0, 1.0));
            }
            if t + 1 < bank.stages {
                self.update_weights(&mut weights, t, &v);
            }
            out.push(v);
        }
        out
    }

    /// `p_o <- p_o * prod_i k((x_i - a_{i,o}) / h_i)`, renormalised. The
    /// common factor `h^-m` cancels in the normalisation; bins with zero
    /// bandwidth carry no information and are skipped.
    fn update_weights(&mut self, weights: &mut [f64], t: usize, x: &[f64]) {
        let bank = self.bank;
        let mut logw: Vec<f64> = weights
            .iter()
            .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        for (o, lw) in logw.iter_mut().enumerate() {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            for (i, &xi) in x.iter().enumerate() {
                let h = self.bandwidth[t][i];
                if h > 0.0 {
                    *lw += logistic_log_density((xi - bank.weeks[o][t][i]) / h);
                }
            }
        }
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            log::warn!("sampler weights vanished at stage {}, resetting to uniform", t + 1);
            self.uniform_resets += 1;
            let u = 1.0 / weights.len() as f64;
            weights.iter_mut().for_each(|w| *w = u);
            return;
        }
        let mut sum = 0.0;
        for (w, lw) in weights.iter_mut().zip(&logw) {
            *w = (lw - top).exp();
            sum += *w;
        }
        weights.iter_mut().for_each(|w| *w /= sum);
    }
}

/// Convenience wrapper drawing one trajectory with a fresh sampler.
pub fn sample_trajectory(bank: &TrajectoryBank, seed: u64) -> Vec<Vec<f64>> {
    Sampler::new(bank, seed).sample()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub unvisited_branches: usize,
    pub uniform_resets: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Fits a tree with the given branching by stochastic approximation.
///
/// Node states start from sampled trajectories. Each iteration draws a
/// trajectory, walks down from the root choosing at every stage the child
/// closest (Euclidean, lowest id on ties) to the sample, and moves each
/// node on that path towards the sample with step `1 / (visits + 1)`.
/// Branch probabilities are the visit frequencies.
pub fn fit_tree(
    bank: &TrajectoryBank,
    structure: &BranchingStructure,
    iterations: usize,
    seed: u64,
) -> Result<(ScenarioTree, FitReport), TreeError> {
    if iterations == 0 {
        return Err(TreeError::Invalid("at least one iteration is needed".into()));
    }
    if structure.stages() != bank.stages {
        return Err(TreeError::Structure(format!(
            "{structure} has {} stages but trajectories have {}",
            structure.stages(),
            bank.stages
        )));
    }
    let bank = bank.canonical();
    let mut sampler = Sampler::new(&bank, seed);
    let mut skeleton = ScenarioTree::from_structure(structure, bank.n_bins, |_, _| 1.0, |_, _| vec![0.0; bank.n_bins])?;

    // every non-root node starts at its stage of an independent sample
    let n_nodes = skeleton.num_nodes();
    let mut state: Vec<Vec<f64>> = vec![Vec::new(); n_nodes];
    state[skeleton.root()] = vec![0.0; bank.n_bins];
    for t in 2..=skeleton.num_stages() {
        for &n in skeleton.stage_nodes(t) {
            state[n] = sampler.sample()[t - 1].clone();
        }
    }
    let mut visits = vec![0usize; n_nodes];
    for _ in 0..iterations {
        let xi = sampler.sample();
        let mut cur = skeleton.root();
        visits[cur] += 1;
        for x_t in xi.iter().skip(1) {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for &c in skeleton.children(cur) {
                let d = sq_dist(&state[c], x_t);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            let step = 1.0 / (visits[best] as f64 + 1.0);
            for (s, x) in state[best].iter_mut().zip(x_t) {
                *s += step * (x - *s);
            }
            visits[best] += 1;
            cur = best;
        }
    }

    let mut unvisited = 0;
    for id in 0..n_nodes {
        let node = skeleton.nodes[id].clone();
        let (cond, prob) = match node.parent {
            None => (1.0, 1.0),
            Some(p) => {
                let pv = visits[p];
                let cond = if pv == 0 {
                    1.0 / skeleton.children(p).len() as f64
                } else {
                    visits[id] as f64 / pv as f64
                };
                if visits[id] == 0 {
                    unvisited += 1;
                }
                (cond, skeleton.nodes[p].probability * cond)
            }
        };
        let n = &mut skeleton.nodes[id];
        n.conditional = cond;
        n.probability = prob;
        n.rates = state[id].iter().map(|a| a.clamp(0.0, 1.0)).collect();
    }
    if unvisited > 0 {
        log::warn!("{unvisited} tree nodes were never visited and carry probability 0");
    }
    Ok((
        skeleton,
        FitReport {
            iterations,
            unvisited_branches: unvisited,
            uniform_resets: sampler.uniform_resets,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NegativeProbability { node: usize, probability: f64 },
    StageMass { stage: usize, mass: f64 },
    ParentProduct { node: usize, expected: f64, found: f64 },
    ConditionalSum { node: usize, sum: f64 },
    RateRange { node: usize, bin: usize, rate: f64 },
    RootNotZero { bin: usize, rate: f64 },
    RootProbability(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeProbability { node, probability } => {
                write!(f, "negative probability {probability} at node {node}")
            }
            Violation::StageMass { stage, mass } => write!(f, "stage {stage} mass {mass} != 1"),
            Violation::ParentProduct { node, expected, found } => {
                write!(f, "node {node} probability {found}, parent times branch gives {expected}")
            }
            Violation::ConditionalSum { node, sum } => {
                write!(f, "branch probabilities below node {node} sum to {sum}")
            }
            Violation::RateRange { node, bin, rate } => write!(f, "node {node} bin {bin} rate {rate} outside [0, 1]"),
            Violation::RootNotZero { bin, rate } => write!(f, "root rate {rate} for bin {bin} is not zero"),
            Violation::RootProbability(p) => write!(f, "root probability {p} != 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDiagnostics {
    pub stage_mass: Vec<f64>,
    pub violations: Vec<Violation>,
}

impl TreeDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks probabilities and rates; structural problems (orphans, stage
/// gaps) are already rejected when the tree is constructed.
pub fn validate_tree(tree: &ScenarioTree) -> TreeDiagnostics {
    let mut v = Vec::new();
    let root = &tree.nodes[tree.root()];
    if (root.probability - 1.0).abs() > 1e-12 {
        v.push(Violation::RootProbability(root.probability));
    }
    for (bin, &rate) in root.rates.iter().enumerate() {
        if rate != 0.0 {
            v.push(Violation::RootNotZero { bin, rate });
        }
    }
    let mut stage_mass = Vec::new();
    for t in 1..=tree.num_stages() {
        let mass: f64 = tree.stage_nodes(t).iter().map(|&n| tree.nodes[n].probability).sum();
        stage_mass.push(mass);
        if (mass - 1.0).abs() > 1e-9 {
            v.push(Violation::StageMass { stage: t, mass });
        }
    }
    for node in &tree.nodes {
        if node.probability < 0.0 {
            v.push(Violation::NegativeProbability {
                node: node.id,
                probability: node.probability,
            });
        }
        if let Some(p) = node.parent {
            let expected = tree.nodes[p].probability * node.conditional;
            if (expected - node.probability).abs() > 1e-12 {
                v.push(Violation::ParentProduct {
                    node: node.id,
                    expected,
                    found: node.probability,
                });
            }
        }
        let ch = tree.children(node.id);
        if !ch.is_empty() {
            let sum: f64 = ch.iter().map(|&c| tree.nodes[c].conditional).sum();
            if (sum - 1.0).abs() > 1e-9 {
                v.push(Violation::ConditionalSum { node: node.id, sum });
            }
        }
        for (bin, &rate) in node.rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&rate) {
                v.push(Violation::RateRange { node: node.id, bin, rate });
            }
        }
    }
    TreeDiagnostics { stage_mass, violations: v }
}

/// Outcome of solving one generated tree in a stability batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityObservation {
    pub profit: f64,
    pub collected_kg: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub structure: String,
    pub scenarios: usize,
    pub runs: usize,
    pub failed_runs: usize,
    pub failures: Vec<String>,
    pub mean_profit: f64,
    pub std_profit: f64,
    pub mean_collected_kg: f64,
    pub mean_distance_km: f64,
    pub mean_cpu_s: f64,
    /// Nested distance between trees; not computed.
    pub multistage_distance: Option<f64>,
}

/// Fits `runs` trees per structure (seed `seed + run`) and summarises the
/// hook's results. Failed runs are listed and left out of the means.
pub fn stability_batch<F>(
    bank: &TrajectoryBank,
    structures: &[BranchingStructure],
    runs: usize,
    iterations: usize,
    seed: u64,
    mut solve: F,
) -> Result<Vec<StabilityRow>, TreeError>
where
    F: FnMut(&ScenarioTree) -> Result<StabilityObservation, String>,
{
    let mut rows = Vec::new();
    for s in structures {
        let mut obs = Vec::new();
        let mut failures = Vec::new();
        let mut cpu = Vec::new();
        for r in 0..runs {
            let (tree, _) = fit_tree(bank, s, iterations, seed.wrapping_add(r as u64))?;
            let t0 = Instant::now();
            let res = solve(&tree);
            cpu.push(t0.elapsed().as_secs_f64());
            match res {
                Ok(o) => obs.push(o),
                Err(e) => failures.push(format!("run {r}: {e}")),
            }
        }
        let mean = |f: &dyn Fn(&StabilityObservation) -> f64| {
            if obs.is_empty() {
                f64::NAN
            } else {
                obs.iter().map(f).sum::<f64>() / obs.len() as f64
            }
        };
        let profits: Vec<f64> = obs.iter().map(|o| o.profit).collect();
        rows.push(StabilityRow {
            structure: s.to_string(),
            scenarios: s.num_scenarios(),
            runs,
            failed_runs: failures.len(),
            failures,
            mean_profit: mean(&|o| o.profit),
            std_profit: sample_std(&profits),
            mean_collected_kg: mean(&|o| o.collected_kg),
            mean_distance_km: mean(&|o| o.distance_km),
            mean_cpu_s: cpu.iter().sum::<f64>() / runs.max(1) as f64,
            multistage_distance: None,
        });
    }
    Ok(rows)
}
