//! Wires a config into a problem, a weighted graph schedule and a run, and
//! evaluates the convergence checks on the result.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::config::{validate_config, DataSource, ExperimentConfig, InitConfig, ProblemConfig, WeightsConfig};
use crate::data::{synthesize_lasso_data, LassoDataset};
use crate::dynamics::{run, NetworkState, Regime, RunOptions, RunOutcome, ScheduleReport};
use crate::error::{shape, Error, Result};
use crate::graph::{Graph, GraphSchedule, Phase, WeightedSchedule};
use crate::metrics::{
    aggregated_oracle_check, consensus_error, format_float, theorem1_window_bound, theorem2_convergence_check, CsvSink,
    RunRecord, Theorem1Check, Theorem2Check,
};
use crate::oracle::{ExactQuadratic, FirstOrderOracle, LassoHuberOracle, NoisyExactOracle};
use crate::problem::Problem;
use crate::reference::{solve_lasso_prox, solve_quadratic_sum, ReferenceSolution, DEFAULT_TOLERANCE};
use crate::rng::{SeededRng, Stream};

/// Bound on the average-dynamics residual per round.
pub const AVERAGE_RESIDUAL_LIMIT: f64 = 1e-10;

/// A fully built experiment, ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub weights: WeightedSchedule,
    pub x_init: NetworkState,
    pub dataset: Option<LassoDataset>,
}

fn quadratic_terms(centers: &[Vec<f64>], curvatures: &[f64]) -> Result<Vec<ExactQuadratic>> {
    if centers.len() != curvatures.len() {
        return Err(shape("centers and curvatures differ in length"));
    }
    centers
        .iter()
        .zip(curvatures)
        .map(|(c, &q)| ExactQuadratic::new(Array1::from(c.clone()), q))
        .collect()
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        let report = validate_config(&config);
        if let Some(first) = report.errors.first() {
            // connectivity failures surface as assumption violations
            if first.contains("violates assumption") {
                return Err(Error::AssumptionViolation {
                    assumption: crate::Assumption::Connectivity,
                    detail: first.clone(),
                });
            }
            return Err(Error::Config(report.errors.join("; ")));
        }
        let seed = config.seed;

        let (problem, dataset) = match &config.problem {
            ProblemConfig::LassoHuber { lambda, data } => {
                let dataset = match data {
                    DataSource::Synthesize(params) => synthesize_lasso_data(seed, params)?,
                    DataSource::File { path } => LassoDataset::load(path)?,
                };
                let m = dataset.num_agents() as f64;
                let agents = dataset
                    .blocks
                    .iter()
                    .map(|b| {
                        LassoHuberOracle::new(b.a.clone(), b.y.clone(), lambda / m)
                            .map(|o| Box::new(o) as Box<dyn FirstOrderOracle>)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (Problem::new(agents)?, Some(dataset))
            }
            ProblemConfig::ExactQuadratic { centers, curvatures } => {
                let agents = quadratic_terms(centers, curvatures)?
                    .into_iter()
                    .map(|q| Box::new(q) as Box<dyn FirstOrderOracle>)
                    .collect();
                (Problem::new(agents)?, None)
            }
            ProblemConfig::NoisyExact { centers, curvatures } => {
                let mut noise = SeededRng::stream(seed, Stream::Noise);
                let agents = quadratic_terms(centers, curvatures)?
                    .into_iter()
                    .map(|q| Box::new(NoisyExactOracle::new(q, noise.next_u64())) as Box<dyn FirstOrderOracle>)
                    .collect();
                (Problem::new(agents)?, None)
            }
        };

        let phases = config
            .graph
            .phases
            .iter()
            .map(|p| {
                Ok(Phase {
                    graph: Graph::from_adjacency(&p.adjacency)?,
                    dwell: p.dwell,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = GraphSchedule::new(phases, config.graph.cycling)?;
        let weights = match config.graph.weights {
            WeightsConfig::Metropolis => WeightedSchedule::metropolis(schedule)?,
            WeightsConfig::Randomized { eta_floor } => {
                WeightedSchedule::randomized(schedule, eta_floor, &mut SeededRng::stream(seed, Stream::Weights))?
            }
        };
        if weights.num_agents() != problem.num_agents() {
            return Err(Error::Config(format!(
                "graph has {} agents, problem has {}",
                weights.num_agents(),
                problem.num_agents()
            )));
        }

        let (m, n) = (problem.num_agents(), problem.dimension());
        let x_init = match &config.run.x_init {
            InitConfig::Zeros => NetworkState::zeros(m, n)?,
            InitConfig::Uniform { halfwidth } => {
                let mut rng = SeededRng::stream(seed, Stream::Init);
                NetworkState::new(Array2::from_shape_simple_fn((m, n), || {
                    rng.uniform(-halfwidth, *halfwidth)
                }))?
            }
            InitConfig::Explicit { rows } => {
                if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("explicit x_init must be {m} × {n}")));
                }
                NetworkState::new(
                    Array2::from_shape_vec((m, n), rows.iter().flatten().copied().collect())
                        .map_err(|e| shape(e.to_string()))?,
                )?
            }
        };

        Ok(Self {
            config,
            problem,
            weights,
            x_init,
            dataset,
        })
    }

    /// Centralized optimum of the true objective.
    pub fn reference(&self) -> Result<ReferenceSolution> {
        match &self.config.problem {
            ProblemConfig::LassoHuber { lambda, .. } => {
                let dataset = self.dataset.as_ref().expect("LASSO experiments carry their dataset");
                let (a, y) = dataset.stacked()?;
                solve_lasso_prox(a.view(), y.view(), *lambda, DEFAULT_TOLERANCE)
            }
            ProblemConfig::ExactQuadratic { centers, curvatures }
            | ProblemConfig::NoisyExact { centers, curvatures } => {
                let terms: Vec<_> = quadratic_terms(centers, curvatures)?
                    .into_iter()
                    .map(|q| (q.center, q.curvature))
                    .collect();
                solve_quadratic_sum(&terms)
            }
        }
    }

    pub fn schedule_report(&self) -> ScheduleReport {
        self.config.classify()
    }

    /// Accuracy constants `(certified Σδᵢ, nominal Σδᵢ)` at oracle accuracy `accuracy`.
    pub fn delta_sums(&self, accuracy: f64) -> Result<(f64, Option<f64>)> {
        let certified = self.problem.aggregate_spec(accuracy)?.delta;
        let nominal = match &self.config.problem {
            ProblemConfig::LassoHuber { .. } => {
                let n = self.problem.dimension() as f64;
                let smoothing = LassoHuberOracle::smoothing(accuracy)?;
                Some(self.problem.num_agents() as f64 * n * smoothing / 2.0)
            }
            _ => None,
        };
        Ok((certified, nominal))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageIdentityCheck {
    pub max_residual: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregatedSummary {
    pub rounds_checked: usize,
    pub probes_checked: usize,
    pub failures: usize,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientBound {
    pub grad_sup: f64,
    pub alarm: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Checks {
    pub average_identity: AverageIdentityCheck,
    pub aggregated_oracle: AggregatedSummary,
    pub theorem1: Theorem1Check,
    pub theorem2: Theorem2Check,
    pub gradient_bound: GradientBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleConstants {
    /// `Σᵢ δᵢ` at `sup_k δ_k`, as certified by the oracle implementations.
    pub certified_delta_sum: f64,
    /// The looser nominal constant `m·n·δ/2`, LASSO only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal_delta_sum: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub regime: Regime,
    pub schedule: ScheduleReport,
    pub rounds: usize,
    pub initial_consensus_error: f64,
    pub final_consensus_error: f64,
    pub final_objective: f64,
    pub final_subopt: f64,
    pub final_average: Vec<f64>,
    pub reference: Option<ReferenceSolution>,
    pub oracle_constants: OracleConstants,
    pub checks: Checks,
    pub passed: bool,
}

/// A finished run with its records kept in memory.
pub struct RunArtifacts {
    pub summary: Summary,
    pub records: Vec<RunRecord>,
    pub outcome: RunOutcome,
}

fn trajectory_row(record: &RunRecord, state: &NetworkState, out: &mut dyn Write) -> Result<()> {
    for i in 0..state.num_agents() {
        let coords: Vec<String> = state.agent(i).iter().map(|v| format_float(*v)).collect();
        writeln!(out, "{},{},{}", record.k, i, coords.join(","))?;
    }
    Ok(())
}

fn open_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs the experiment, streaming CSV to `csv` and per-agent estimates to
/// `trajectory` when given.
pub fn execute(
    experiment: &Experiment,
    csv: Option<&mut dyn Write>,
    mut trajectory: Option<&mut dyn Write>,
) -> Result<RunArtifacts> {
    let config = &experiment.config;
    let problem = &experiment.problem;
    let schedule = experiment.schedule_report();
    let reference = if config.output.reference {
        Some(experiment.reference()?)
    } else {
        None
    };

    let opts = RunOptions {
        horizon: config.run.horizon,
        record_stride: config.run.record_stride,
        retention_stride: config.run.retention_stride,
        parallel: config.run.parallel,
        f_star: reference.as_ref().map(|r| r.f_star),
    };

    let mut sink = match csv {
        Some(out) => Some(CsvSink::new(out)?),
        None => None,
    };
    if let Some(out) = trajectory.as_deref_mut() {
        let cols: Vec<String> = (0..problem.dimension()).map(|j| format!("x{j}")).collect();
        writeln!(out, "k,agent,{}", cols.join(","))?;
    }
    let mut records = Vec::new();
    let outcome = run(
        problem,
        &experiment.weights,
        &config.schedule.step,
        &config.schedule.accuracy,
        experiment.x_init.clone(),
        &opts,
        |record, state| {
            if let Some(s) = sink.as_mut() {
                s.write(record)?;
            }
            if let Some(out) = trajectory.as_deref_mut() {
                trajectory_row(record, state, out)?;
            }
            records.push(record.clone());
            Ok(())
        },
    )?;
    if let Some(s) = sink {
        s.finish()?;
    }
    if let Some(out) = trajectory {
        out.flush()?;
    }

    let sup_accuracy = config.schedule.accuracy.sup().unwrap_or(f64::NAN);
    let (certified_delta_sum, nominal_delta_sum) = experiment.delta_sums(sup_accuracy)?;

    // aggregated oracle inequalities on every retained round
    let mut aggregated = AggregatedSummary {
        rounds_checked: 0,
        probes_checked: 0,
        failures: 0,
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        passed: true,
    };
    for snap in &outcome.snapshots {
        let lipschitz = problem.max_lipschitz(snap.delta_k)?;
        let delta_sum = problem.aggregate_spec(snap.delta_k)?.delta;
        let (x_av, _) = crate::dynamics::average_and_error(&snap.state);
        let mut probes = vec![x_av.clone(), &x_av + 10.0];
        if let Some(r) = &reference {
            probes.push(Array1::from(r.x_star.clone()));
        }
        for y in &probes {
            let c = aggregated_oracle_check(snap, problem, y.view(), lipschitz, delta_sum)?;
            aggregated.probes_checked += 1;
            aggregated.worst_lower_margin = aggregated.worst_lower_margin.min(c.xi_lower_margin);
            aggregated.worst_upper_margin = aggregated.worst_upper_margin.min(c.xi_upper_margin);
            if !c.passed {
                aggregated.failures += 1;
            }
        }
        aggregated.rounds_checked += 1;
    }
    aggregated.passed = aggregated.failures == 0;

    let (theorem1, theorem2) = match &reference {
        Some(r) => (
            theorem1_window_bound(&records, schedule.regime, r.f_star, certified_delta_sum, r.gap_bound),
            theorem2_convergence_check(
                &records,
                &outcome.final_state,
                schedule.regime,
                &r.x_star,
                config.run.theorem2_tolerance,
            ),
        ),
        None => (
            Theorem1Check::Inapplicable {
                reason: "no reference solution".into(),
            },
            Theorem2Check::Inapplicable {
                reason: "no reference solution".into(),
            },
        ),
    };

    let average_identity = AverageIdentityCheck {
        max_residual: outcome.max_average_residual,
        limit: AVERAGE_RESIDUAL_LIMIT,
        passed: outcome.max_average_residual <= AVERAGE_RESIDUAL_LIMIT,
    };
    let gradient_bound = GradientBound {
        grad_sup: outcome.grad_sup,
        alarm: outcome.gradient_alarm,
    };

    let (final_average, _) = crate::dynamics::average_and_error(&outcome.final_state);
    let final_objective = problem.true_objective(final_average.view())?;
    let f_star = reference.as_ref().map_or(f64::NAN, |r| r.f_star);
    let passed = average_identity.passed
        && aggregated.passed
        && theorem1.passed() != Some(false)
        && theorem2.passed() != Some(false)
        && !gradient_bound.alarm;

    let summary = Summary {
        name: config.name.clone(),
        regime: schedule.regime,
        schedule,
        rounds: outcome.rounds,
        initial_consensus_error: consensus_error(&experiment.x_init),
        final_consensus_error: consensus_error(&outcome.final_state),
        final_objective,
        final_subopt: final_objective - f_star,
        final_average: final_average.to_vec(),
        reference,
        oracle_constants: OracleConstants {
            certified_delta_sum,
            nominal_delta_sum,
        },
        checks: Checks {
            average_identity,
            aggregated_oracle: aggregated,
            theorem1,
            theorem2,
            gradient_bound,
        },
        passed,
    };
    Ok(RunArtifacts {
        summary,
        records,
        outcome,
    })
}

/// Builds and runs the experiment described by `config`, writing every
/// output file named in its output block.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunArtifacts> {
    let experiment = Experiment::build(config)?;
    if let (Some(path), Some(data)) = (&experiment.config.output.data_dump, &experiment.dataset) {
        data.save(path)?;
    }
    let mut csv = match &experiment.config.output.csv {
        Some(p) => Some(open_output(p)?),
        None => None,
    };
    let mut trajectory = match &experiment.config.output.trajectory_csv {
        Some(p) => Some(open_output(p)?),
        None => None,
    };
    execute(
        &experiment,
        csv.as_mut().map(|w| w as &mut dyn Write),
        trajectory.as_mut().map(|w| w as &mut dyn Write),
    )
}

pub fn run_experiment_file(path: &Path) -> Result<RunArtifacts> {
    run_experiment(ExperimentConfig::load(path)?)
}
