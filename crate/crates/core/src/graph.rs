//! Time-varying communication graphs and doubly stochastic mixing weights.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{invalid, Assumption, Error, Result};
use crate::rng::SeededRng;

/// Row/column sum tolerance for double stochasticity.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Undirected simple graph on agents `0..num_agents`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_agents: usize,
    /// Normalized `(i, j)` with `i < j`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(num_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (i, j) in edges {
            if i >= num_agents || j >= num_agents {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {num_agents} agents")));
            }
            if i == j {
                return Err(invalid(format!("self-loop at agent {i}")));
            }
            normalized.push((i.min(j), i.max(j)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(Self {
            num_agents,
            edges: normalized,
        })
    }

    /// From neighbor lists; an edge listed on either side counts.
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Result<Self> {
        let edges = adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().map(move |&j| (i, j)));
        Self::new(adjacency.len(), edges)
    }

    pub fn complete(num_agents: usize) -> Self {
        let edges = (0..num_agents).flat_map(|i| (i + 1..num_agents).map(move |j| (i, j)));
        Self::new(num_agents, edges).expect("complete graph is valid")
    }

    pub fn path(num_agents: usize) -> Self {
        Self::new(num_agents, (1..num_agents).map(|i| (i - 1, i))).expect("path graph is valid")
    }

    pub fn ring(num_agents: usize) -> Self {
        Self::new(num_agents, (0..num_agents).map(|i| (i, (i + 1) % num_agents))).expect("ring graph is valid")
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_agents];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_agents];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.num_agents == 0 {
            return false;
        }
        let adj = self.neighbor_lists();
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::AssumptionViolation {
                assumption: Assumption::Connectivity,
                detail: format!("graph on {} agents is disconnected", self.num_agents),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub graph: Graph,
    pub dwell: usize,
}

/// Piecewise-constant topology: each phase holds for `dwell` rounds, starting at round 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSchedule {
    num_agents: usize,
    phases: Vec<Phase>,
    cycling: bool,
}

impl GraphSchedule {
    pub fn new(phases: Vec<Phase>, cycling: bool) -> Result<Self> {
        let first = phases
            .first()
            .ok_or_else(|| invalid("graph schedule needs at least one phase"))?;
        let num_agents = first.graph.num_agents();
        for (p, phase) in phases.iter().enumerate() {
            if phase.graph.num_agents() != num_agents {
                return Err(invalid(format!(
                    "phase {p} has {} agents, expected {num_agents}",
                    phase.graph.num_agents()
                )));
            }
            if phase.dwell == 0 {
                return Err(invalid(format!("phase {p} has zero dwell")));
            }
            if !phase.graph.is_connected() {
                return Err(Error::AssumptionViolation {
                    assumption: Assumption::Connectivity,
                    detail: format!("phase {p} graph is disconnected"),
                });
            }
        }
        Ok(Self {
            num_agents,
            phases,
            cycling,
        })
    }

    /// A single graph held forever.
    pub fn fixed(graph: Graph) -> Result<Self> {
        Self::new(vec![Phase { graph, dwell: 1 }], true)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn cycling(&self) -> bool {
        self.cycling
    }

    /// Index of the phase active at round `k >= 1`. A non-cycling schedule
    /// stays in its last phase once exhausted.
    pub fn phase_index_at(&self, k: usize) -> usize {
        let period: usize = self.phases.iter().map(|p| p.dwell).sum();
        let mut t = k.saturating_sub(1);
        if self.cycling {
            t %= period;
        } else if t >= period {
            return self.phases.len() - 1;
        }
        for (idx, phase) in self.phases.iter().enumerate() {
            if t < phase.dwell {
                return idx;
            }
            t -= phase.dwell;
        }
        unreachable!("t is reduced below the period")
    }

    pub fn graph_at(&self, k: usize) -> &Graph {
        &self.phases[self.phase_index_at(k)].graph
    }
}

/// Mixing matrix with its uniform positivity bound `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub w: Array2<f64>,
    pub eta: f64,
}

impl WeightMatrix {
    pub fn size(&self) -> usize {
        self.w.nrows()
    }
}

fn min_pattern_entry(w: &Array2<f64>, graph: &Graph) -> f64 {
    let diag = w.diag().iter().copied().fold(f64::INFINITY, f64::min);
    graph
        .edges()
        .iter()
        .flat_map(|&(i, j)| [w[[i, j]], w[[j, i]]])
        .fold(diag, f64::min)
}

/// `w_ij = 1/(1 + max(deg_i, deg_j))` on edges, remainder on the diagonal.
pub fn metropolis_weights(graph: &Graph) -> Result<WeightMatrix> {
    let m = graph.num_agents();
    if m < 2 {
        return Err(invalid(format!("metropolis weights need m >= 2, got {m}")));
    }
    graph.require_connected()?;
    let deg = graph.degrees();
    let mut w = Array2::zeros((m, m));
    for &(i, j) in graph.edges() {
        let v = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        w[[i, j]] = v;
        w[[j, i]] = v;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[[i, j]]).sum();
        w[[i, i]] = 1.0 - off;
    }
    let eta = min_pattern_entry(&w, graph);
    Ok(WeightMatrix { w, eta })
}

/// Random doubly stochastic weights on the graph's pattern, every pattern
/// entry at least `eta_floor`.
///
/// Starts from Metropolis weights and applies, edge by edge, a symmetric move
/// `w_ij += t, w_ji += t, w_ii -= t, w_jj -= t` with `t` drawn uniformly from
/// the interval that keeps all four entries above the floor. Each move
/// preserves every row and column sum.
pub fn randomized_weights(graph: &Graph, eta_floor: f64, rng: &mut SeededRng) -> Result<WeightMatrix> {
    const PASSES: usize = 3;
    graph.require_connected()?;
    let limit = 1.0 / (graph.max_degree() + 1) as f64;
    if !(eta_floor > 0.0 && eta_floor <= limit) {
        return Err(invalid(format!(
            "eta_floor {eta_floor} infeasible; must lie in (0, {limit}]"
        )));
    }
    let WeightMatrix { mut w, .. } = metropolis_weights(graph)?;
    for _ in 0..PASSES {
        for &(i, j) in graph.edges() {
            let lo = eta_floor - w[[i, j]];
            let hi = (w[[i, i]] - eta_floor).min(w[[j, j]] - eta_floor);
            if hi <= lo {
                continue;
            }
            let t = rng.uniform(lo, hi);
            w[[i, j]] += t;
            w[[j, i]] += t;
            w[[i, i]] -= t;
            w[[j, j]] -= t;
        }
    }
    let eta = min_pattern_entry(&w, graph);
    Ok(WeightMatrix { w, eta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub max_row_residual: f64,
    pub max_col_residual: f64,
    pub min_entry: f64,
    pub min_pattern_entry: f64,
    pub eta: f64,
    /// Off-pattern nonzeros plus pattern entries below `eta`.
    pub pattern_violations: usize,
    pub shape_ok: bool,
}

impl WeightReport {
    pub fn doubly_stochastic(&self) -> bool {
        self.max_row_residual <= STOCHASTIC_TOLERANCE && self.max_col_residual <= STOCHASTIC_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.shape_ok
            && self.doubly_stochastic()
            && self.min_entry >= 0.0
            && self.eta > 0.0
            && self.pattern_violations == 0
    }
}

pub fn validate_weights(weights: &WeightMatrix, graph: &Graph) -> WeightReport {
    let w = &weights.w;
    let m = graph.num_agents();
    if w.nrows() != m || w.ncols() != m {
        return WeightReport {
            max_row_residual: f64::INFINITY,
            max_col_residual: f64::INFINITY,
            min_entry: f64::NAN,
            min_pattern_entry: f64::NAN,
            eta: weights.eta,
            pattern_violations: 0,
            shape_ok: false,
        };
    }
    let max_row_residual = w.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    let max_col_residual = w
        .columns()
        .into_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = w.iter().copied().fold(f64::INFINITY, f64::min);
    let mut pattern_violations = 0;
    for i in 0..m {
        for j in 0..m {
            let in_pattern = i == j || graph.has_edge(i, j);
            let v = w[[i, j]];
            if (in_pattern && v < weights.eta) || (!in_pattern && v != 0.0) {
                pattern_violations += 1;
            }
        }
    }
    WeightReport {
        max_row_residual,
        max_col_residual,
        min_entry,
        min_pattern_entry: min_pattern_entry(w, graph),
        eta: weights.eta,
        pattern_violations,
        shape_ok: true,
    }
}

/// A graph schedule with one validated mixing matrix per phase.
#[derive(Debug, Clone)]
pub struct WeightedSchedule {
    schedule: GraphSchedule,
    weights: Vec<WeightMatrix>,
}

impl WeightedSchedule {
    pub fn new(schedule: GraphSchedule, weights: Vec<WeightMatrix>) -> Result<Self> {
        if weights.len() != schedule.phases().len() {
            return Err(invalid(format!(
                "{} weight matrices for {} phases",
                weights.len(),
                schedule.phases().len()
            )));
        }
        for (p, (phase, wm)) in schedule.phases().iter().zip(&weights).enumerate() {
            let report = validate_weights(wm, &phase.graph);
            if !report.passed() {
                return Err(Error::AssumptionViolation {
                    assumption: Assumption::DoublyStochastic,
                    detail: format!("phase {p}: {report:?}"),
                });
            }
        }
        Ok(Self { schedule, weights })
    }

    pub fn metropolis(schedule: GraphSchedule) -> Result<Self> {
        let weights = schedule
            .phases()
            .iter()
            .map(|p| metropolis_weights(&p.graph))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schedule, weights)
    }

    pub fn randomized(schedule: GraphSchedule, eta_floor: f64, rng: &mut SeededRng) -> Result<Self> {
        let weights = schedule
            .phases()
            .iter()
            .map(|p| randomized_weights(&p.graph, eta_floor, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schedule, weights)
    }

    pub fn schedule(&self) -> &GraphSchedule {
        &self.schedule
    }

    pub fn num_agents(&self) -> usize {
        self.schedule.num_agents()
    }

    pub fn phase_weights(&self) -> &[WeightMatrix] {
        &self.weights
    }

    /// `W(k)` for round `k >= 1`.
    pub fn weights_at(&self, k: usize) -> &WeightMatrix {
        &self.weights[self.schedule.phase_index_at(k)]
    }

    /// Uniform positivity bound over all phases.
    pub fn eta(&self) -> f64 {
        self.weights.iter().map(|w| w.eta).fold(f64::INFINITY, f64::min)
    }

    /// `q = 1 − η/(4m²)`.
    pub fn mixing_rate(&self) -> f64 {
        let m = self.num_agents() as f64;
        1.0 - self.eta() / (4.0 * m * m)
    }
}

/// Ordered product `W(k)·W(k−1)·…·W(s)`.
pub fn phi_product(schedule: &WeightedSchedule, s: usize, k: usize) -> Result<Array2<f64>> {
    if s > k {
        return Err(Error::InvalidRange { s, k });
    }
    if s == 0 {
        return Err(invalid("rounds are indexed from 1"));
    }
    let mut product = schedule.weights_at(s).w.clone();
    for t in s + 1..=k {
        product = schedule.weights_at(t).w.dot(&product);
    }
    Ok(product)
}

/// `max_ij |Φ_ij − 1/m|`.
pub fn max_deviation_from_average(phi: &Array2<f64>) -> f64 {
    let inv_m = 1.0 / phi.nrows() as f64;
    phi.iter().map(|v| (v - inv_m).abs()).fold(0.0, f64::max)
}

/// `‖Φ − 11ᵀ/m‖_F`.
pub fn frobenius_deviation_from_average(phi: &Array2<f64>) -> f64 {
    let inv_m = 1.0 / phi.nrows() as f64;
    phi.iter().map(|v| (v - inv_m).powi(2)).sum::<f64>().sqrt()
}
