//! Per-round diagnostics and the checks that tie a finite run back to the
//! convergence guarantees.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::dynamics::{average_and_error, NetworkState, Regime, RoundSnapshot};
use crate::error::{shape, Result};
use crate::problem::Problem;

/// Slack on both sides of the aggregated oracle inequalities.
pub const AGGREGATE_TOLERANCE: f64 = 1e-9;

/// Fraction of recorded rounds forming the trailing window that stands in
/// for a liminf.
pub const TRAILING_FRACTION: f64 = 0.2;

pub const CSV_HEADER: &str = "k,alpha_k,delta_k,consensus_error,f_av_true,f_oracle_sum,subopt,grad_sup";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub k: usize,
    pub alpha_k: f64,
    pub delta_k: f64,
    /// `‖x̄(k)‖_F`
    pub consensus_error: f64,
    /// `f(x_av(k))` with the true objective.
    pub f_av_true: f64,
    /// `Σᵢ f_{i,δ}(k)`
    pub f_oracle_sum: f64,
    pub subopt: f64,
    pub grad_sup: f64,
    /// Not part of the CSV.
    pub x_av: Vec<f64>,
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k,
            format_float(self.alpha_k),
            format_float(self.delta_k),
            format_float(self.consensus_error),
            format_float(self.f_av_true),
            format_float(self.f_oracle_sum),
            format_float(self.subopt),
            format_float(self.grad_sup),
        )
    }
}

/// Streams records as CSV, header first.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<()> {
        writeln!(self.out, "{}", record.csv_row())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn consensus_error(state: &NetworkState) -> f64 {
    let (_, x_bar) = average_and_error(state);
    x_bar.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn true_objective(problem: &Problem, z: ArrayView1<f64>) -> Result<f64> {
    problem.true_objective(z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedOracleCheck {
    pub k: usize,
    /// `Ξ(1y, k)`
    pub xi: f64,
    pub xi_lower_margin: f64,
    pub xi_upper_margin: f64,
    /// `L‖x̄(k)‖² + Σδᵢ`
    pub accuracy_k: f64,
    pub passed: bool,
}

/// Evaluates `Ξ(1y, k) = f(y) − (Σf_{i,δ} − ΣΔᵢ) − Σg_{i,δ}ᵀ(y − x_av)` with
/// `Δᵢ = g_{i,δ}ᵀ(xᵢ − x_av)` and checks
/// `0 <= Ξ <= L·m‖y − x_av‖² + L‖x̄‖² + Σδᵢ`.
///
/// `lipschitz` is the largest per-agent curvature and `delta_sum` the sum of
/// per-agent accuracies at round `k`.
pub fn aggregated_oracle_check(
    snapshot: &RoundSnapshot,
    problem: &Problem,
    y: ArrayView1<f64>,
    lipschitz: f64,
    delta_sum: f64,
) -> Result<AggregatedOracleCheck> {
    let m = snapshot.state.num_agents();
    if snapshot.responses.len() != m || y.len() != snapshot.state.dimension() {
        return Err(shape("snapshot, responses and probe disagree in size"));
    }
    let (x_av, x_bar) = average_and_error(&snapshot.state);
    let mut oracle_sum = 0.0;
    let mut delta_terms = 0.0;
    let mut grad_sum = Array1::<f64>::zeros(x_av.len());
    for (i, r) in snapshot.responses.iter().enumerate() {
        oracle_sum += r.value;
        delta_terms += r.gradient.dot(&x_bar.row(i));
        grad_sum += &r.gradient;
    }
    let d = &y - &x_av;
    let xi = problem.true_objective(y)? - (oracle_sum - delta_terms) - grad_sum.dot(&d);
    let bar_sq: f64 = x_bar.iter().map(|v| v * v).sum();
    let accuracy_k = lipschitz * bar_sq + delta_sum;
    let upper = lipschitz * m as f64 * d.dot(&d) + accuracy_k;
    let xi_lower_margin = xi;
    let xi_upper_margin = upper - xi;
    Ok(AggregatedOracleCheck {
        k: snapshot.k,
        xi,
        xi_lower_margin,
        xi_upper_margin,
        accuracy_k,
        passed: xi_lower_margin >= -AGGREGATE_TOLERANCE && xi_upper_margin >= -AGGREGATE_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Theorem1Check {
    Applicable {
        passed: bool,
        /// `f* + delta_sum + tolerance − trailing_min`
        margin: f64,
        trailing_min: f64,
        bound: f64,
        window: usize,
    },
    Inapplicable {
        reason: String,
    },
}

impl Theorem1Check {
    pub fn passed(&self) -> Option<bool> {
        match self {
            Theorem1Check::Applicable { passed, .. } => Some(*passed),
            Theorem1Check::Inapplicable { .. } => None,
        }
    }
}

/// Number of trailing records used for a window over `len` records.
pub fn trailing_window(len: usize) -> usize {
    ((len as f64 * TRAILING_FRACTION).ceil() as usize).clamp(1, len.max(1))
}

/// Checks `min over trailing window of f(x_av) <= f* + delta_sum + tolerance`.
pub fn theorem1_window_bound(
    records: &[RunRecord],
    regime: Regime,
    f_star: f64,
    delta_sum: f64,
    tolerance: f64,
) -> Theorem1Check {
    if !matches!(regime, Regime::Theorem1 | Regime::Theorem2) {
        return Theorem1Check::Inapplicable {
            reason: format!("schedule regime is {regime:?}"),
        };
    }
    if records.is_empty() {
        return Theorem1Check::Inapplicable {
            reason: "no records".into(),
        };
    }
    let window = trailing_window(records.len());
    let trailing_min = records[records.len() - window..]
        .iter()
        .map(|r| r.f_av_true)
        .fold(f64::INFINITY, f64::min);
    let bound = f_star + delta_sum;
    let margin = bound + tolerance - trailing_min;
    Theorem1Check::Applicable {
        passed: margin >= 0.0,
        margin,
        trailing_min,
        bound,
        window,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Theorem2Check {
    Applicable {
        passed: bool,
        /// `max_i ‖x_i(K) − x*‖`
        max_agent_distance: f64,
        tolerance: f64,
        /// `‖x_av(k) − x*‖` at the first and last record.
        average_distance_first: f64,
        average_distance_last: f64,
        /// Whether `‖x_av(k) − x*‖` is nonincreasing over the trailing window.
        average_distance_tail_nonincreasing: bool,
    },
    Inapplicable {
        reason: String,
    },
}

impl Theorem2Check {
    pub fn passed(&self) -> Option<bool> {
        match self {
            Theorem2Check::Applicable { passed, .. } => Some(*passed),
            Theorem2Check::Inapplicable { .. } => None,
        }
    }
}

fn distance(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Checks `max_i ‖x_i(K) − x*‖ <= tol` on the final state.
pub fn theorem2_convergence_check(
    records: &[RunRecord],
    final_state: &NetworkState,
    regime: Regime,
    x_star: &[f64],
    tol: f64,
) -> Theorem2Check {
    if regime != Regime::Theorem2 {
        return Theorem2Check::Inapplicable {
            reason: format!("schedule regime is {regime:?}"),
        };
    }
    if x_star.len() != final_state.dimension() {
        return Theorem2Check::Inapplicable {
            reason: "x* dimension does not match the state".into(),
        };
    }
    let max_agent_distance = (0..final_state.num_agents())
        .map(|i| distance(final_state.agent(i), x_star))
        .fold(0.0, f64::max);
    let distances: Vec<f64> = records
        .iter()
        .map(|r| distance(ArrayView1::from(&r.x_av[..]), x_star))
        .collect();
    let window = trailing_window(distances.len());
    let tail = &distances[distances.len().saturating_sub(window)..];
    let tail_nonincreasing = tail.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Theorem2Check::Applicable {
        passed: max_agent_distance <= tol,
        max_agent_distance,
        tolerance: tol,
        average_distance_first: distances.first().copied().unwrap_or(f64::NAN),
        average_distance_last: distances.last().copied().unwrap_or(f64::NAN),
        average_distance_tail_nonincreasing: tail_nonincreasing,
    }
}
