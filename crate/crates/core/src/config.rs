//! Experiment configuration (JSON, `schema: 1`) and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthesisParams;
use crate::dynamics::{classify_schedule, AccuracySchedule, Regime, ScheduleReport, StepSchedule, SummabilityClass};
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    /// Master seed; data, weights, initial state and noise use separate streams of it.
    pub seed: u64,
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `fᵢ(x) = ½‖Aᵢx − yᵢ‖² + (λ/m)‖x‖₁`, queried through Huber smoothing with `δ_H = δ_k`.
    LassoHuber { lambda: f64, data: DataSource },
    /// `fᵢ(x) = ½ qᵢ ‖x − cᵢ‖²`, exact oracles.
    ExactQuadratic {
        centers: Vec<Vec<f64>>,
        curvatures: Vec<f64>,
    },
    /// Same objectives, values shifted down by seeded noise in `[0, δ_k/2]`.
    NoisyExact {
        centers: Vec<Vec<f64>>,
        curvatures: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthesize(SynthesisParams),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    /// Neighbor list per agent (0-based); an edge listed on either side counts.
    pub adjacency: Vec<Vec<usize>>,
    pub dwell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsConfig {
    Metropolis,
    Randomized { eta_floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub phases: Vec<PhaseConfig>,
    #[serde(default = "default_true")]
    pub cycling: bool,
    pub weights: WeightsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub step: StepSchedule,
    pub accuracy: AccuracySchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_class: Option<SummabilityClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_regime: Option<Regime>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    #[default]
    Zeros,
    /// Entries uniform on `[−halfwidth, halfwidth)` from the init stream.
    Uniform {
        halfwidth: f64,
    },
    Explicit {
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    #[serde(default)]
    pub x_init: InitConfig,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "hundred")]
    pub retention_stride: usize,
    #[serde(default)]
    pub parallel: bool,
    /// Tolerance on `max_i ‖x_i(K) − x*‖` in the exact-convergence regime.
    #[serde(default = "default_theorem2_tol")]
    pub theorem2_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Solve the centralized reference problem before the run.
    #[serde(default = "default_true")]
    pub reference: bool,
    /// Per-agent estimates at every recorded round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_csv: Option<PathBuf>,
    /// Where to write the synthesized dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dump: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            reference: true,
            trajectory_csv: None,
            data_dump: None,
        }
    }
}

fn default_true() -> bool {
    true
}
fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn default_theorem2_tol() -> f64 {
    1e-2
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of agents implied by the problem block, when it can be read
    /// without touching the filesystem.
    pub fn problem_agents(&self) -> Option<usize> {
        match &self.problem {
            ProblemConfig::LassoHuber {
                data: DataSource::Synthesize(p),
                ..
            } => Some(p.num_agents),
            ProblemConfig::LassoHuber {
                data: DataSource::File { .. },
                ..
            } => None,
            ProblemConfig::ExactQuadratic { centers, .. } | ProblemConfig::NoisyExact { centers, .. } => {
                Some(centers.len())
            }
        }
    }

    pub fn problem_dimension(&self) -> Option<usize> {
        match &self.problem {
            ProblemConfig::LassoHuber {
                data: DataSource::Synthesize(p),
                ..
            } => Some(p.dimension),
            ProblemConfig::LassoHuber {
                data: DataSource::File { .. },
                ..
            } => None,
            ProblemConfig::ExactQuadratic { centers, .. } | ProblemConfig::NoisyExact { centers, .. } => {
                centers.first().map(Vec::len)
            }
        }
    }

    pub fn classify(&self) -> ScheduleReport {
        classify_schedule(&self.schedule.step, &self.schedule.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub schedule: ScheduleReport,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Structural and cross-module checks. Reads at most the dataset file's
/// metadata; never writes.
pub fn validate_config(config: &ExperimentConfig) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    if config.schema != SCHEMA_VERSION {
        errors.push(format!("schema must be {SCHEMA_VERSION}, got {}", config.schema));
    }

    let agents = config.problem_agents();
    let dimension = config.problem_dimension();
    match &config.problem {
        ProblemConfig::LassoHuber { lambda, data } => {
            if !(*lambda > 0.0) {
                errors.push(format!("problem: lambda must be > 0, got {lambda}"));
            }
            match data {
                DataSource::Synthesize(p) => {
                    if p.num_agents * p.rows_per_agent != p.total_rows {
                        errors.push(format!(
                            "problem: partition mismatch: {} × {} != {}",
                            p.num_agents, p.rows_per_agent, p.total_rows
                        ));
                    }
                    if p.x0.len() != p.dimension {
                        errors.push("problem: x0 length differs from dimension".into());
                    }
                }
                DataSource::File { path } => {
                    if !path.is_file() {
                        errors.push(format!("problem: data file {} does not exist", path.display()));
                    }
                }
            }
            match config.schedule.accuracy.sup() {
                Some(s) if s <= 1.0 => {}
                _ => errors.push("schedule: Huber smoothing needs every δ_k in [0, 1]".into()),
            }
        }
        ProblemConfig::ExactQuadratic { centers, curvatures } | ProblemConfig::NoisyExact { centers, curvatures } => {
            if centers.is_empty() {
                errors.push("problem: no agents".into());
            }
            if centers.len() != curvatures.len() {
                errors.push("problem: centers and curvatures differ in length".into());
            }
            if let Some(n) = dimension {
                if n == 0 || centers.iter().any(|c| c.len() != n) {
                    errors.push("problem: centers differ in dimension".into());
                }
            }
            if curvatures.iter().any(|q| !(*q > 0.0)) {
                errors.push("problem: curvatures must be > 0".into());
            }
        }
    }

    if config.graph.phases.is_empty() {
        errors.push("graph: no phases".into());
    }
    for (p, phase) in config.graph.phases.iter().enumerate() {
        if let Some(m) = agents {
            if phase.adjacency.len() != m {
                errors.push(format!(
                    "graph: phase {p} lists {} agents, problem has {m}",
                    phase.adjacency.len()
                ));
            }
        }
        if phase.dwell == 0 {
            errors.push(format!("graph: phase {p} has zero dwell"));
        }
        match Graph::from_adjacency(&phase.adjacency) {
            Err(e) => errors.push(format!("graph: phase {p}: {e}")),
            Ok(g) => {
                if !g.is_connected() {
                    errors.push(format!(
                        "graph: phase {p} violates assumption: {}",
                        crate::Assumption::Connectivity
                    ));
                }
                if let WeightsConfig::Randomized { eta_floor } = config.graph.weights {
                    let limit = 1.0 / (g.max_degree() + 1) as f64;
                    if !(eta_floor > 0.0 && eta_floor <= limit) {
                        errors.push(format!(
                            "graph: phase {p}: eta_floor {eta_floor} infeasible (must be in (0, {limit}])"
                        ));
                    }
                }
            }
        }
    }

    if let Err(e) = config.schedule.step.validate() {
        errors.push(format!("schedule: {e}"));
    }
    if let Err(e) = config.schedule.accuracy.validate() {
        errors.push(format!("schedule: {e}"));
    }
    if let Some(declared) = config.schedule.declared_class {
        if let Err(e) = config.schedule.step.check_declared(declared) {
            errors.push(format!("schedule: {e}"));
        }
    }
    let schedule = config.classify();
    match schedule.regime {
        Regime::Neither => warnings.push("regime: neither".into()),
        Regime::Unclassifiable => warnings.push("regime: unclassifiable (tabulated schedule)".into()),
        _ => {}
    }
    if let Some(expected) = config.schedule.expect_regime {
        if expected != schedule.regime {
            warnings.push(format!(
                "expected regime {expected:?} but schedule classifies as {:?}",
                schedule.regime
            ));
        }
    }

    if config.run.horizon == 0 {
        errors.push("run: horizon must be >= 1".into());
    }
    if config.run.record_stride == 0 {
        errors.push("run: record_stride must be >= 1".into());
    }
    if !(config.run.theorem2_tolerance > 0.0) {
        errors.push("run: theorem2_tolerance must be > 0".into());
    }
    match &config.run.x_init {
        InitConfig::Zeros => {}
        InitConfig::Uniform { halfwidth } => {
            if !(*halfwidth >= 0.0 && halfwidth.is_finite()) {
                errors.push("run: x_init halfwidth must be >= 0".into());
            }
        }
        InitConfig::Explicit { rows } => {
            if agents.is_some_and(|m| rows.len() != m) || dimension.is_some_and(|n| rows.iter().any(|r| r.len() != n)) {
                errors.push("run: explicit x_init does not match (agents, dimension)".into());
            }
        }
    }
    if let StepSchedule::Table { values } = &config.schedule.step {
        if values.len() < config.run.horizon {
            warnings.push("schedule: step table shorter than horizon; last value is held".into());
        }
    }

    ValidationReport {
        errors,
        warnings,
        schedule,
    }
}
