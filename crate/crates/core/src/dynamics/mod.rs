//! Synchronous distributed iteration
//! `x_i(k+1) = Σ_j w_ij(k) x_j(k) − α_k g_{i,δ}(k)`.

mod schedule;

pub use schedule::{classify_schedule, AccuracySchedule, Regime, ScheduleReport, StepSchedule, SummabilityClass};

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{invalid, shape, Error, Result};
use crate::graph::{WeightMatrix, WeightedSchedule};
use crate::metrics::{consensus_error, RunRecord};
use crate::oracle::{OracleResponse, QueryContext};
use crate::problem::Problem;

/// Above this the recorded gradient sup is flagged as unbounded.
pub const GRADIENT_ALARM: f64 = 1e6;

/// Stacked agent estimates; row `i` belongs to agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    x: Array2<f64>,
    k: usize,
}

impl NetworkState {
    /// State at round 1.
    pub fn new(x: Array2<f64>) -> Result<Self> {
        Self::at_round(x, 1)
    }

    pub fn at_round(x: Array2<f64>, k: usize) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(shape("network state needs m >= 1 agents and n >= 1 coordinates"));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(invalid("network state has non-finite entries"));
        }
        if k == 0 {
            return Err(invalid("rounds are indexed from 1"));
        }
        Ok(Self { x, k })
    }

    pub fn zeros(num_agents: usize, dimension: usize) -> Result<Self> {
        Self::new(Array2::zeros((num_agents, dimension)))
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn round(&self) -> usize {
        self.k
    }

    pub fn num_agents(&self) -> usize {
        self.x.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.x.ncols()
    }

    pub fn agent(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }
}

/// One round: mix with `w`, then step along the oracle gradients.
///
/// Each row is accumulated over `j` in ascending order, so the result does
/// not depend on how the caller parallelized the oracle queries.
pub fn step(
    state: &NetworkState,
    w: &WeightMatrix,
    alpha_k: f64,
    responses: &[OracleResponse],
) -> Result<NetworkState> {
    let (m, n) = state.x.dim();
    if w.w.dim() != (m, m) {
        return Err(shape(format!("weight matrix is {:?}, state has {m} agents", w.w.dim())));
    }
    if responses.len() != m {
        return Err(shape(format!("{} oracle responses for {m} agents", responses.len())));
    }
    if !(alpha_k > 0.0 && alpha_k.is_finite()) {
        return Err(invalid(format!("step size must be > 0, got {alpha_k}")));
    }
    for (agent, r) in responses.iter().enumerate() {
        if r.gradient.len() != n {
            return Err(shape(format!(
                "agent {agent} gradient has length {}, expected {n}",
                r.gradient.len()
            )));
        }
        if !r.is_finite() {
            return Err(Error::NonFinite { agent, round: state.k });
        }
    }
    let mut next = Array2::zeros((m, n));
    for (i, response) in responses.iter().enumerate() {
        let mut row = next.row_mut(i);
        for j in 0..m {
            let wij = w.w[[i, j]];
            if wij == 0.0 {
                continue;
            }
            row.scaled_add(wij, &state.x.row(j));
        }
        row.scaled_add(-alpha_k, &response.gradient);
    }
    if let Some(agent) = next.rows().into_iter().position(|r| !r.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite { agent, round: state.k });
    }
    Ok(NetworkState {
        x: next,
        k: state.k + 1,
    })
}

/// Network average `x_av` and disagreement `x̄ = x − 1 x_avᵀ`.
pub fn average_and_error(state: &NetworkState) -> (Array1<f64>, Array2<f64>) {
    let x_av = column_mean(&state.x);
    let x_bar = &state.x - &x_av;
    (x_av, x_bar)
}

fn column_mean(x: &Array2<f64>) -> Array1<f64> {
    let mut sum = Array1::zeros(x.ncols());
    for row in x.rows() {
        sum += &row;
    }
    sum / x.nrows() as f64
}

/// `‖x_av(k+1) − x_av(k) + α_k·mean_i g_i‖`; zero in exact arithmetic under
/// doubly stochastic mixing.
pub fn average_update_residual(
    state_k: &NetworkState,
    state_k1: &NetworkState,
    alpha_k: f64,
    responses: &[OracleResponse],
) -> Result<f64> {
    if state_k.x.dim() != state_k1.x.dim() || responses.len() != state_k.num_agents() {
        return Err(shape("states and responses disagree in size"));
    }
    let mut mean_grad = Array1::zeros(state_k.dimension());
    for r in responses {
        mean_grad += &r.gradient;
    }
    mean_grad /= responses.len() as f64;
    let residual = column_mean(&state_k1.x) - column_mean(&state_k.x) + mean_grad * alpha_k;
    Ok(residual.dot(&residual).sqrt())
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: usize,
    /// Emit a [`RunRecord`] every `record_stride` rounds (and at the last round).
    pub record_stride: usize,
    /// Retain a full [`RoundSnapshot`] every `retention_stride` rounds; 0 disables.
    pub retention_stride: usize,
    /// Query oracles for a round on the rayon pool.
    pub parallel: bool,
    /// Optimal value used for `subopt`; NaN is recorded when absent.
    pub f_star: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            horizon: 1,
            record_stride: 1,
            retention_stride: 100,
            parallel: false,
            f_star: None,
        }
    }
}

/// Everything observed at one round, kept for the aggregated oracle checks.
#[derive(Debug, Clone)]
pub struct RoundSnapshot {
    pub k: usize,
    pub state: NetworkState,
    pub responses: Vec<OracleResponse>,
    pub alpha_k: f64,
    pub delta_k: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// `x(K+1)`.
    pub final_state: NetworkState,
    pub rounds: usize,
    pub max_average_residual: f64,
    pub grad_sup: f64,
    pub gradient_alarm: bool,
    pub snapshots: Vec<RoundSnapshot>,
}

fn query_all(problem: &Problem, state: &NetworkState, delta_k: f64, parallel: bool) -> Result<Vec<OracleResponse>> {
    let query = |i: usize| {
        problem.agent(i).query(
            state.agent(i),
            delta_k,
            QueryContext {
                agent: i,
                round: state.k,
            },
        )
    };
    let m = problem.num_agents();
    if parallel {
        (0..m).into_par_iter().map(query).collect()
    } else {
        (0..m).map(query).collect()
    }
}

/// Runs `opts.horizon` synchronous rounds from `x_init`, calling `sink` with
/// each emitted record and the state it describes, in iteration order.
pub fn run<S>(
    problem: &Problem,
    weights: &WeightedSchedule,
    steps: &StepSchedule,
    accuracy: &AccuracySchedule,
    x_init: NetworkState,
    opts: &RunOptions,
    mut sink: S,
) -> Result<RunOutcome>
where
    S: FnMut(&RunRecord, &NetworkState) -> Result<()>,
{
    if opts.horizon == 0 {
        return Err(invalid("horizon must be >= 1"));
    }
    if opts.record_stride == 0 {
        return Err(invalid("record stride must be >= 1"));
    }
    steps.validate()?;
    accuracy.validate()?;
    let m = problem.num_agents();
    if weights.num_agents() != m {
        return Err(shape(format!(
            "graph schedule has {} agents, problem has {m}",
            weights.num_agents()
        )));
    }
    if x_init.x.dim() != (m, problem.dimension()) {
        return Err(shape(format!(
            "initial state is {:?}, expected ({m}, {})",
            x_init.x.dim(),
            problem.dimension()
        )));
    }

    let f_star = opts.f_star.unwrap_or(f64::NAN);
    let mut state = x_init;
    let mut grad_sup: f64 = 0.0;
    let mut max_average_residual: f64 = 0.0;
    let mut snapshots = Vec::new();
    let first = state.k;
    let last = first + opts.horizon - 1;

    for k in first..=last {
        let alpha_k = steps.alpha(k);
        let delta_k = accuracy.delta(k);
        let responses = query_all(problem, &state, delta_k, opts.parallel)?;
        for (agent, r) in responses.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::NonFinite { agent, round: k });
            }
            grad_sup = grad_sup.max(r.gradient.dot(&r.gradient).sqrt());
        }

        let offset = k - first;
        if offset.is_multiple_of(opts.record_stride) || k == last {
            let (x_av, _) = average_and_error(&state);
            let f_av_true = problem.true_objective(x_av.view())?;
            let record = RunRecord {
                k,
                alpha_k,
                delta_k,
                consensus_error: consensus_error(&state),
                f_av_true,
                f_oracle_sum: responses.iter().map(|r| r.value).sum(),
                subopt: f_av_true - f_star,
                grad_sup,
                x_av: x_av.to_vec(),
            };
            sink(&record, &state)?;
        }

        let next = step(&state, weights.weights_at(k), alpha_k, &responses)?;
        max_average_residual = max_average_residual.max(average_update_residual(&state, &next, alpha_k, &responses)?);

        if opts.retention_stride > 0 && offset.is_multiple_of(opts.retention_stride) {
            snapshots.push(RoundSnapshot {
                k,
                state: state.clone(),
                responses,
                alpha_k,
                delta_k,
            });
        }
        state = next;
    }

    Ok(RunOutcome {
        final_state: state,
        rounds: opts.horizon,
        max_average_residual,
        grad_sup,
        gradient_alarm: grad_sup > GRADIENT_ALARM,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, GraphSchedule};
    use crate::oracle::{ExactQuadratic, FirstOrderOracle};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn resp(g: Array1<f64>) -> OracleResponse {
        OracleResponse {
            value: 0.0,
            gradient: g,
        }
    }

    fn zero_grads(m: usize, n: usize) -> Vec<OracleResponse> {
        (0..m).map(|_| resp(Array1::zeros(n))).collect()
    }

    #[test]
    fn identity_mixing_zero_gradient_is_fixed_point() {
        let s = NetworkState::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let w = WeightMatrix {
            w: Array2::eye(3),
            eta: 1.0,
        };
        let next = step(&s, &w, 0.1, &zero_grads(3, 2)).unwrap();
        assert_eq!(next.x(), s.x());
        assert_eq!(next.round(), 2);
    }

    #[test]
    fn averaging_matrix_reaches_consensus() {
        let s = NetworkState::new(array![[1.0], [2.0], [6.0]]).unwrap();
        let w = WeightMatrix {
            w: Array2::from_elem((3, 3), 1.0 / 3.0),
            eta: 1.0 / 3.0,
        };
        let next = step(&s, &w, 0.1, &zero_grads(3, 1)).unwrap();
        for v in next.x().iter() {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_agent_hand_example() {
        let s = NetworkState::new(array![[0.0], [2.0]]).unwrap();
        let w = WeightMatrix {
            w: array![[0.5, 0.5], [0.5, 0.5]],
            eta: 0.5,
        };
        let g = vec![resp(array![1.0]), resp(array![-1.0])];
        let next = step(&s, &w, 0.1, &g).unwrap();
        assert_abs_diff_eq!(next.x()[[0, 0]], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x()[[1, 0]], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn step_rejects_non_finite_and_bad_alpha() {
        let s = NetworkState::new(array![[0.0], [2.0]]).unwrap();
        let w = WeightMatrix {
            w: array![[0.5, 0.5], [0.5, 0.5]],
            eta: 0.5,
        };
        let g = vec![resp(array![f64::NAN]), resp(array![0.0])];
        assert!(matches!(step(&s, &w, 0.1, &g), Err(Error::NonFinite { agent: 0, .. })));
        assert!(step(&s, &w, 0.0, &zero_grads(2, 1)).is_err());
        assert!(step(&s, &w, 0.1, &zero_grads(3, 1)).is_err());
    }

    #[test]
    fn average_and_error_examples() {
        let s = NetworkState::new(array![[0.0], [2.0]]).unwrap();
        let (avg, bar) = average_and_error(&s);
        assert_eq!(avg, array![1.0]);
        assert_eq!(bar, array![[-1.0], [1.0]]);
        let s = NetworkState::new(array![[1.5, -2.0], [1.5, -2.0]]).unwrap();
        let (_, bar) = average_and_error(&s);
        assert!(bar.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residual_zero_for_doubly_stochastic() {
        let g = Graph::path(3);
        let w = crate::graph::metropolis_weights(&g).unwrap();
        let s = NetworkState::new(array![[0.3, 1.0], [-2.0, 0.5], [4.0, 0.0]]).unwrap();
        let grads = vec![resp(array![1.0, 2.0]), resp(array![-0.5, 0.0]), resp(array![3.0, 1.0])];
        let next = step(&s, &w, 0.2, &grads).unwrap();
        assert!(average_update_residual(&s, &next, 0.2, &grads).unwrap() <= 1e-10);
        let next = step(&s, &w, 0.2, &zero_grads(3, 2)).unwrap();
        assert!(average_update_residual(&s, &next, 0.2, &zero_grads(3, 2)).unwrap() <= 1e-15);
    }

    #[test]
    fn residual_detects_row_stochastic_only() {
        // rows sum to one, columns do not
        let w = WeightMatrix {
            w: array![[1.0, 0.0], [0.5, 0.5]],
            eta: 0.5,
        };
        let s = NetworkState::new(array![[0.0], [2.0]]).unwrap();
        let next = step(&s, &w, 0.1, &zero_grads(2, 1)).unwrap();
        let r = average_update_residual(&s, &next, 0.1, &zero_grads(2, 1)).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-15);
    }

    fn quadratic_problem(centers: &[f64]) -> Problem {
        let agents: Vec<Box<dyn FirstOrderOracle>> = centers
            .iter()
            .map(|&c| Box::new(ExactQuadratic::new(array![c], 1.0).unwrap()) as Box<dyn FirstOrderOracle>)
            .collect();
        Problem::new(agents).unwrap()
    }

    #[test]
    fn single_round_equals_step() {
        let problem = quadratic_problem(&[1.0, 2.0, 3.0]);
        let ws = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::complete(3)).unwrap()).unwrap();
        let steps = StepSchedule::Harmonic { a: 1.0, b: 10.0 };
        let acc = AccuracySchedule::Constant { delta: 0.0 };
        let init = NetworkState::new(array![[0.0], [5.0], [-1.0]]).unwrap();
        let opts = RunOptions {
            horizon: 1,
            ..Default::default()
        };
        let out = run(&problem, &ws, &steps, &acc, init.clone(), &opts, |_, _| Ok(())).unwrap();
        let grads: Vec<_> = (0..3)
            .map(|i| {
                problem
                    .agent(i)
                    .query(init.agent(i), 0.0, QueryContext::default())
                    .unwrap()
            })
            .collect();
        let expected = step(&init, ws.weights_at(1), steps.alpha(1), &grads).unwrap();
        assert_eq!(out.final_state, expected);
    }

    #[test]
    fn quadratic_toy_converges_to_mean() {
        let problem = quadratic_problem(&[1.0, 2.0, 3.0]);
        let ws = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::complete(3)).unwrap()).unwrap();
        let opts = RunOptions {
            horizon: 10_000,
            record_stride: 100,
            ..Default::default()
        };
        let out = run(
            &problem,
            &ws,
            &StepSchedule::Harmonic { a: 1.0, b: 0.0 },
            &AccuracySchedule::Constant { delta: 0.0 },
            NetworkState::zeros(3, 1).unwrap(),
            &opts,
            |_, _| Ok(()),
        )
        .unwrap();
        for v in out.final_state.x().iter() {
            assert!((v - 2.0).abs() < 1e-3, "{v}");
        }
        assert!(out.max_average_residual <= 1e-10);
        assert!(!out.gradient_alarm);
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let problem = quadratic_problem(&[1.0, -2.0, 3.0, 0.5]);
        let ws = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::ring(4)).unwrap()).unwrap();
        let steps = StepSchedule::Harmonic { a: 0.5, b: 5.0 };
        let acc = AccuracySchedule::Constant { delta: 0.0 };
        let mut a_recs = Vec::new();
        let mut b_recs = Vec::new();
        let mut opts = RunOptions {
            horizon: 500,
            ..Default::default()
        };
        let a = run(
            &problem,
            &ws,
            &steps,
            &acc,
            NetworkState::zeros(4, 1).unwrap(),
            &opts,
            |r, _| {
                a_recs.push(r.clone());
                Ok(())
            },
        )
        .unwrap();
        opts.parallel = true;
        let b = run(
            &problem,
            &ws,
            &steps,
            &acc,
            NetworkState::zeros(4, 1).unwrap(),
            &opts,
            |r, _| {
                b_recs.push(r.clone());
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(a.final_state, b.final_state);
        let rows = |recs: &[RunRecord]| recs.iter().map(RunRecord::csv_row).collect::<Vec<_>>();
        assert_eq!(rows(&a_recs), rows(&b_recs));
    }

    #[test]
    fn run_rejects_mismatched_inputs() {
        let problem = quadratic_problem(&[1.0, 2.0]);
        let ws = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::complete(3)).unwrap()).unwrap();
        let steps = StepSchedule::Constant { value: 0.1 };
        let acc = AccuracySchedule::Constant { delta: 0.0 };
        let opts = RunOptions::default();
        let r = run(
            &problem,
            &ws,
            &steps,
            &acc,
            NetworkState::zeros(2, 1).unwrap(),
            &opts,
            |_, _| Ok(()),
        );
        assert!(r.is_err());
        let opts = RunOptions {
            horizon: 0,
            ..Default::default()
        };
        let ws2 = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::complete(2)).unwrap()).unwrap();
        let r = run(
            &problem,
            &ws2,
            &steps,
            &acc,
            NetworkState::zeros(2, 1).unwrap(),
            &opts,
            |_, _| Ok(()),
        );
        assert!(r.is_err());
    }

    #[test]
    fn records_follow_stride_and_last_round() {
        let problem = quadratic_problem(&[1.0, 2.0]);
        let ws = WeightedSchedule::metropolis(GraphSchedule::fixed(Graph::complete(2)).unwrap()).unwrap();
        let opts = RunOptions {
            horizon: 25,
            record_stride: 10,
            retention_stride: 7,
            ..Default::default()
        };
        let mut ks = Vec::new();
        let out = run(
            &problem,
            &ws,
            &StepSchedule::Harmonic { a: 1.0, b: 1.0 },
            &AccuracySchedule::Constant { delta: 0.0 },
            NetworkState::zeros(2, 1).unwrap(),
            &opts,
            |r, _| {
                ks.push(r.k);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(ks, vec![1, 11, 21, 25]);
        let snap_ks: Vec<_> = out.snapshots.iter().map(|s| s.k).collect();
        assert_eq!(snap_ks, vec![1, 8, 15, 22]);
        assert_eq!(out.final_state.round(), 26);
    }
}
