//! First-order (δ, L)-oracles.
//!
//! An oracle for a convex `f` returns, at a query point `x`, a pair
//! `(f̃, g̃)` such that for every `y`
//!
//! ```text
//! 0 <= f(y) - f̃ - g̃ᵀ(y - x) <= L/2 ‖y - x‖² + δ
//! ```
//!
//! This module ships three oracle families (exact quadratics, the
//! Huber-smoothed LASSO oracle and a value-perturbed exact oracle), the
//! calculus rules for scaling and summing oracle constants, and an empirical
//! certifier that checks both inequalities on a probe set.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{invalid, shape, Result};
use crate::rng::{mix64, SeededRng};

/// Slack absorbed on both sides of the oracle inequality.
pub const CERTIFY_TOLERANCE: f64 = 1e-9;

const POWER_ITER_RTOL: f64 = 1e-8;
const POWER_ITER_MAX: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub value: f64,
    pub gradient: Array1<f64>,
}

impl OracleResponse {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Accuracy `delta` and curvature `lipschitz` of an oracle on `R^dimension`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSpec {
    pub delta: f64,
    pub lipschitz: f64,
    pub dimension: usize,
}

impl OracleSpec {
    pub fn new(delta: f64, lipschitz: f64, dimension: usize) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(invalid(format!("oracle delta must be >= 0, got {delta}")));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(invalid(format!("oracle L must be > 0, got {lipschitz}")));
        }
        if dimension == 0 {
            return Err(invalid("oracle dimension must be positive"));
        }
        Ok(Self {
            delta,
            lipschitz,
            dimension,
        })
    }
}

/// `c·f` admits a `(cδ, cL)`-oracle.
pub fn scale_oracle(spec: OracleSpec, c: f64) -> Result<OracleSpec> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid(format!("scale factor must be > 0, got {c}")));
    }
    Ok(OracleSpec {
        delta: spec.delta * c,
        lipschitz: spec.lipschitz * c,
        dimension: spec.dimension,
    })
}

/// `Σ fᵢ` admits a `(Σδᵢ, ΣLᵢ)`-oracle.
pub fn sum_oracles(specs: &[OracleSpec]) -> Result<OracleSpec> {
    let first = specs
        .first()
        .ok_or_else(|| invalid("cannot sum an empty list of oracles"))?;
    if let Some(bad) = specs.iter().find(|s| s.dimension != first.dimension) {
        return Err(shape(format!(
            "oracle dimensions differ: {} vs {}",
            first.dimension, bad.dimension
        )));
    }
    Ok(OracleSpec {
        delta: specs.iter().map(|s| s.delta).sum(),
        lipschitz: specs.iter().map(|s| s.lipschitz).sum(),
        dimension: first.dimension,
    })
}

fn check_smoothing(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("Huber smoothing must be > 0, got {delta}")))
    }
}

/// Huber smoothing of `|x|`. The closed branch `|x| <= delta` is quadratic.
pub fn huber(x: f64, delta: f64) -> Result<f64> {
    check_smoothing(delta)?;
    Ok(huber_unchecked(x, delta))
}

pub fn huber_grad(x: f64, delta: f64) -> Result<f64> {
    check_smoothing(delta)?;
    Ok(huber_grad_unchecked(x, delta))
}

#[inline]
fn huber_unchecked(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x * x / (2.0 * delta)
    } else {
        x.abs() - delta / 2.0
    }
}

#[inline]
fn huber_grad_unchecked(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x / delta
    } else {
        x.signum()
    }
}

/// Squared spectral norm `‖A‖²` by power iteration on `AᵀA`.
pub fn spectral_norm_sq(a: ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let gram = a.t().dot(&a);
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut rho = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - rho).abs() <= POWER_ITER_RTOL * next.abs() {
            rho = next;
            break;
        }
        rho = next;
    }
    // one final Rayleigh quotient on the converged direction
    rho.max(v.dot(&gram.dot(&v)))
}

/// Local LASSO term `½‖A x − y‖² + (λ/m)‖x‖₁` together with its Huber smoothing.
#[derive(Debug, Clone)]
pub struct LassoLocalProblem {
    pub a_mat: Array2<f64>,
    pub y_vec: Array1<f64>,
    pub lambda_over_m: f64,
    pub huber_delta: f64,
}

impl LassoLocalProblem {
    pub fn new(a_mat: Array2<f64>, y_vec: Array1<f64>, lambda_over_m: f64, huber_delta: f64) -> Result<Self> {
        if a_mat.nrows() != y_vec.len() {
            return Err(shape(format!(
                "design block has {} rows but target has length {}",
                a_mat.nrows(),
                y_vec.len()
            )));
        }
        if !(lambda_over_m > 0.0) {
            return Err(invalid(format!("λ/m must be > 0, got {lambda_over_m}")));
        }
        if !(huber_delta > 0.0 && huber_delta <= 1.0) {
            return Err(invalid(format!(
                "Huber smoothing must lie in (0, 1], got {huber_delta}"
            )));
        }
        Ok(Self {
            a_mat,
            y_vec,
            lambda_over_m,
            huber_delta,
        })
    }

    pub fn dimension(&self) -> usize {
        self.a_mat.ncols()
    }

    fn check_point(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(shape(format!(
                "query point has length {}, expected {}",
                x.len(),
                self.dimension()
            )));
        }
        Ok(())
    }

    fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.a_mat.dot(&x) - &self.y_vec
    }

    /// The nonsmooth objective.
    pub fn true_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_point(x)?;
        let r = self.residual(x);
        Ok(0.5 * r.dot(&r) + self.lambda_over_m * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Smoothed value and gradient at smoothing level `huber_delta`.
    pub fn eval_with(&self, x: ArrayView1<f64>, huber_delta: f64) -> Result<OracleResponse> {
        self.check_point(x)?;
        check_smoothing(huber_delta)?;
        let r = self.residual(x);
        let smooth_l1: f64 = x.iter().map(|&v| huber_unchecked(v, huber_delta)).sum();
        let mut gradient = self.a_mat.t().dot(&r);
        for (g, &v) in gradient.iter_mut().zip(x.iter()) {
            *g += self.lambda_over_m * huber_grad_unchecked(v, huber_delta);
        }
        Ok(OracleResponse {
            value: 0.5 * r.dot(&r) + self.lambda_over_m * smooth_l1,
            gradient,
        })
    }

    /// Oracle constants proved for this smoothing:
    /// `δ = (λ/m)·n·δ_H/2`, `L = ‖A‖² + (λ/m)/δ_H`.
    pub fn certified_spec_at(&self, huber_delta: f64, spectral_sq: f64) -> Result<OracleSpec> {
        check_smoothing(huber_delta)?;
        let n = self.dimension();
        OracleSpec::new(
            self.lambda_over_m * n as f64 * huber_delta / 2.0,
            spectral_sq + self.lambda_over_m / huber_delta,
            n,
        )
    }

    /// The looser nominal constants `(n·δ_H/2, √n/δ_H + ‖A‖²)`, which omit
    /// the `λ/m` factor on the accuracy.
    pub fn nominal_spec_at(&self, huber_delta: f64, spectral_sq: f64) -> Result<OracleSpec> {
        check_smoothing(huber_delta)?;
        let n = self.dimension() as f64;
        OracleSpec::new(
            n * huber_delta / 2.0,
            n.sqrt() / huber_delta + spectral_sq,
            self.dimension(),
        )
    }
}

/// Value and gradient of the Huber-smoothed local LASSO objective.
pub fn lasso_oracle_eval(p: &LassoLocalProblem, x: ArrayView1<f64>) -> Result<OracleResponse> {
    p.eval_with(x, p.huber_delta)
}

/// Where and by whom an oracle is being queried. Only the noisy oracle uses it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryContext {
    pub agent: usize,
    pub round: usize,
}

/// A local objective that can be queried through an inexact oracle whose
/// accuracy is set per call.
pub trait FirstOrderOracle: Send + Sync {
    fn dimension(&self) -> usize;

    /// Value of the true (possibly nonsmooth) local objective.
    fn true_value(&self, x: ArrayView1<f64>) -> Result<f64>;

    fn query(&self, x: ArrayView1<f64>, accuracy: f64, ctx: QueryContext) -> Result<OracleResponse>;

    /// The (δ, L) pair this oracle satisfies when queried at `accuracy`.
    fn certified_spec(&self, accuracy: f64) -> Result<OracleSpec>;
}

/// `f(x) = ½ q ‖x − c‖²`, answered exactly.
#[derive(Debug, Clone)]
pub struct ExactQuadratic {
    pub center: Array1<f64>,
    pub curvature: f64,
}

impl ExactQuadratic {
    pub fn new(center: Array1<f64>, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(invalid(format!("curvature must be > 0, got {curvature}")));
        }
        if center.is_empty() {
            return Err(invalid("quadratic center must be nonempty"));
        }
        Ok(Self { center, curvature })
    }

    fn check_point(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.center.len() {
            return Err(shape(format!(
                "query point has length {}, expected {}",
                x.len(),
                self.center.len()
            )));
        }
        Ok(())
    }
}

impl FirstOrderOracle for ExactQuadratic {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn true_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_point(x)?;
        let d = &x - &self.center;
        Ok(0.5 * self.curvature * d.dot(&d))
    }

    fn query(&self, x: ArrayView1<f64>, _accuracy: f64, _ctx: QueryContext) -> Result<OracleResponse> {
        let value = self.true_value(x)?;
        Ok(OracleResponse {
            value,
            gradient: (&x - &self.center) * self.curvature,
        })
    }

    fn certified_spec(&self, _accuracy: f64) -> Result<OracleSpec> {
        OracleSpec::new(0.0, self.curvature, self.dimension())
    }
}

/// One agent's LASSO term, queried through Huber smoothing with `δ_H = accuracy`.
#[derive(Debug, Clone)]
pub struct LassoHuberOracle {
    problem: LassoLocalProblem,
    spectral_sq: f64,
}

impl LassoHuberOracle {
    pub fn new(a_mat: Array2<f64>, y_vec: Array1<f64>, lambda_over_m: f64) -> Result<Self> {
        let problem = LassoLocalProblem::new(a_mat, y_vec, lambda_over_m, 1.0)?;
        let spectral_sq = spectral_norm_sq(problem.a_mat.view());
        Ok(Self { problem, spectral_sq })
    }

    pub fn problem(&self) -> &LassoLocalProblem {
        &self.problem
    }

    pub fn spectral_sq(&self) -> f64 {
        self.spectral_sq
    }

    /// Smoothing level used for accuracy `accuracy`: clamped into
    /// `[f64::MIN_POSITIVE, 1]`.
    pub fn smoothing(accuracy: f64) -> Result<f64> {
        if accuracy.is_nan() || accuracy < 0.0 {
            return Err(invalid(format!("oracle accuracy must be >= 0, got {accuracy}")));
        }
        if accuracy > 1.0 {
            return Err(invalid(format!(
                "Huber smoothing must lie in (0, 1], got accuracy {accuracy}"
            )));
        }
        Ok(accuracy.max(f64::MIN_POSITIVE))
    }

    pub fn nominal_spec(&self, accuracy: f64) -> Result<OracleSpec> {
        self.problem
            .nominal_spec_at(Self::smoothing(accuracy)?, self.spectral_sq)
    }
}

impl FirstOrderOracle for LassoHuberOracle {
    fn dimension(&self) -> usize {
        self.problem.dimension()
    }

    fn true_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.problem.true_value(x)
    }

    fn query(&self, x: ArrayView1<f64>, accuracy: f64, _ctx: QueryContext) -> Result<OracleResponse> {
        self.problem.eval_with(x, Self::smoothing(accuracy)?)
    }

    fn certified_spec(&self, accuracy: f64) -> Result<OracleSpec> {
        self.problem
            .certified_spec_at(Self::smoothing(accuracy)?, self.spectral_sq)
    }
}

/// Returns `(f(x) − u, ∇f(x))` with `u` uniform on `[0, delta_k/2]`, drawn from `noise`.
pub fn noisy_oracle_eval(
    base: &dyn FirstOrderOracle,
    x: ArrayView1<f64>,
    delta_k: f64,
    noise: &mut SeededRng,
) -> Result<OracleResponse> {
    if !(delta_k >= 0.0) {
        return Err(invalid(format!("oracle accuracy must be >= 0, got {delta_k}")));
    }
    let mut response = base.query(x, 0.0, QueryContext::default())?;
    if delta_k > 0.0 {
        response.value -= noise.uniform(0.0, delta_k / 2.0);
    }
    Ok(response)
}

/// An exact quadratic whose values are shifted down by bounded seeded noise.
#[derive(Debug, Clone)]
pub struct NoisyExactOracle {
    base: ExactQuadratic,
    seed: u64,
}

impl NoisyExactOracle {
    pub fn new(base: ExactQuadratic, seed: u64) -> Self {
        Self { base, seed }
    }

    pub fn base(&self) -> &ExactQuadratic {
        &self.base
    }

    fn noise_for(&self, ctx: QueryContext) -> SeededRng {
        let key = mix64(self.seed ^ mix64(ctx.agent as u64) ^ mix64(mix64(ctx.round as u64)));
        SeededRng::new(key)
    }
}

impl FirstOrderOracle for NoisyExactOracle {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn true_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.base.true_value(x)
    }

    fn query(&self, x: ArrayView1<f64>, accuracy: f64, ctx: QueryContext) -> Result<OracleResponse> {
        noisy_oracle_eval(&self.base, x, accuracy, &mut self.noise_for(ctx))
    }

    fn certified_spec(&self, accuracy: f64) -> Result<OracleSpec> {
        OracleSpec::new(accuracy, self.base.curvature, self.dimension())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    /// `f(y) − f̃ − g̃ᵀ(y − x)`, must be >= 0.
    pub lower_margin: f64,
    /// `L/2‖y − x‖² + δ − (f(y) − f̃ − g̃ᵀ(y − x))`, must be >= 0.
    pub upper_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub probes: Vec<ProbeOutcome>,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub passed: bool,
}

impl CertificationReport {
    pub fn failures(&self) -> usize {
        self.probes.iter().filter(|p| !p.passed).count()
    }
}

/// Checks both oracle inequalities at every probe `y`, with
/// [`CERTIFY_TOLERANCE`] absolute slack.
pub fn certify_oracle<F>(
    f_true: F,
    oracle_at_x: &OracleResponse,
    x: ArrayView1<f64>,
    probes: &[Array1<f64>],
    spec: &OracleSpec,
) -> Result<CertificationReport>
where
    F: Fn(ArrayView1<f64>) -> Result<f64>,
{
    if probes.is_empty() {
        return Err(invalid("certification needs at least one probe"));
    }
    if x.len() != spec.dimension || oracle_at_x.gradient.len() != spec.dimension {
        return Err(shape("query point, gradient and spec dimension disagree"));
    }
    let mut outcomes = Vec::with_capacity(probes.len());
    for y in probes {
        if y.len() != spec.dimension {
            return Err(shape(format!(
                "probe has length {}, expected {}",
                y.len(),
                spec.dimension
            )));
        }
        let d = y - &x;
        let gap = f_true(y.view())? - oracle_at_x.value - oracle_at_x.gradient.dot(&d);
        let lower_margin = gap;
        let upper_margin = 0.5 * spec.lipschitz * d.dot(&d) + spec.delta - gap;
        outcomes.push(ProbeOutcome {
            lower_margin,
            upper_margin,
            passed: lower_margin >= -CERTIFY_TOLERANCE && upper_margin >= -CERTIFY_TOLERANCE,
        });
    }
    let worst_lower_margin = outcomes.iter().map(|o| o.lower_margin).fold(f64::INFINITY, f64::min);
    let worst_upper_margin = outcomes.iter().map(|o| o.upper_margin).fold(f64::INFINITY, f64::min);
    let passed = outcomes.iter().all(|o| o.passed);
    Ok(CertificationReport {
        probes: outcomes,
        worst_lower_margin,
        worst_upper_margin,
        passed,
    })
}

/// Default probe set around `x`: the point itself, coordinate perturbations
/// at ±{0.1, 1, 10}, then seeded uniform draws in the box of radius 10 until
/// 64 probes are present.
pub fn default_probes(x: ArrayView1<f64>, seed: u64) -> Vec<Array1<f64>> {
    const TOTAL: usize = 64;
    const RADIUS: f64 = 10.0;
    let n = x.len();
    let mut probes = vec![x.to_owned()];
    for j in 0..n {
        for step in [0.1, 1.0, 10.0] {
            for sign in [1.0, -1.0] {
                let mut y = x.to_owned();
                y[j] += sign * step;
                probes.push(y);
            }
        }
    }
    let mut rng = SeededRng::new(seed);
    while probes.len() < TOTAL {
        probes.push(x.mapv(|v| v + rng.uniform(-RADIUS, RADIUS)));
    }
    probes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn abs_sum(x: ArrayView1<f64>) -> Result<f64> {
        Ok(x.iter().map(|v| v.abs()).sum())
    }

    fn huber_pair(x: f64, delta: f64) -> OracleResponse {
        OracleResponse {
            value: huber(x, delta).unwrap(),
            gradient: array![huber_grad(x, delta).unwrap()],
        }
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(huber(2.0, 1.0).unwrap(), 1.5);
        assert_abs_diff_eq!(huber(0.3, 1.0).unwrap(), 0.045, epsilon = 1e-15);
        assert!(huber(1.0, 0.0).is_err());
        assert!(huber(1.0, -1.0).is_err());
    }

    #[test]
    fn huber_grad_examples() {
        assert_eq!(huber_grad(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(huber_grad(3.0, 1.0).unwrap(), 1.0);
        assert_eq!(huber_grad(-3.0, 1.0).unwrap(), -1.0);
        // central difference of huber at 0.25, delta 0.5
        let h = 1e-5;
        let fd = (huber(0.25 + h, 0.5).unwrap() - huber(0.25 - h, 0.5).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(fd, 0.5, epsilon = 1e-9);
        assert_eq!(huber_grad(0.25, 0.5).unwrap(), 0.5);
        assert!(huber_grad(0.0, 0.0).is_err());
    }

    #[test]
    fn kink_uses_quadratic_branch() {
        // both branches agree at |x| = delta
        assert_eq!(huber(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(huber_grad(-1.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn lasso_eval_examples() {
        let p = LassoLocalProblem::new(array![[1.0]], array![0.0], 1.0, 1.0).unwrap();
        let r = lasso_oracle_eval(&p, array![0.0].view()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.gradient, array![0.0]);
        let r = lasso_oracle_eval(&p, array![2.0].view()).unwrap();
        assert_eq!(r.value, 3.5);
        assert_eq!(r.gradient, array![3.0]);
    }

    #[test]
    fn lasso_shape_errors() {
        assert!(LassoLocalProblem::new(array![[1.0, 2.0]], array![0.0, 1.0], 1.0, 1.0).is_err());
        let p = LassoLocalProblem::new(array![[1.0, 2.0]], array![0.0], 1.0, 1.0).unwrap();
        assert!(lasso_oracle_eval(&p, array![1.0].view()).is_err());
        assert!(LassoLocalProblem::new(array![[1.0]], array![0.0], 1.0, 1.5).is_err());
        assert!(LassoLocalProblem::new(array![[1.0]], array![0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn scale_examples() {
        let s = scale_oracle(OracleSpec::new(1.0, 2.0, 1).unwrap(), 3.0).unwrap();
        assert_eq!((s.delta, s.lipschitz), (3.0, 6.0));
        let s = scale_oracle(OracleSpec::new(0.0, 1.0, 1).unwrap(), 1.0).unwrap();
        assert_eq!((s.delta, s.lipschitz), (0.0, 1.0));
        let s = scale_oracle(OracleSpec::new(0.5, 4.0, 1).unwrap(), 0.5).unwrap();
        assert_eq!((s.delta, s.lipschitz), (0.25, 2.0));
        assert!(scale_oracle(s, 0.0).is_err());
        assert!(scale_oracle(s, -2.0).is_err());
    }

    #[test]
    fn sum_examples() {
        let a = OracleSpec::new(1.0, 1.0, 2).unwrap();
        let b = OracleSpec::new(2.0, 3.0, 2).unwrap();
        let s = sum_oracles(&[a, b]).unwrap();
        assert_eq!((s.delta, s.lipschitz), (3.0, 4.0));
        let single = OracleSpec::new(0.0, 7.0, 2).unwrap();
        assert_eq!(sum_oracles(&[single]).unwrap(), single);
        let copies = vec![OracleSpec::new(0.25, 2.0, 2).unwrap(); 10];
        let s = sum_oracles(&copies).unwrap();
        assert_eq!((s.delta, s.lipschitz), (2.5, 20.0));
        assert!(sum_oracles(&[]).is_err());
        assert!(sum_oracles(&[a, OracleSpec::new(0.0, 1.0, 3).unwrap()]).is_err());
    }

    #[test]
    fn spec_rejects_bad_constants() {
        assert!(OracleSpec::new(-0.1, 1.0, 1).is_err());
        assert!(OracleSpec::new(0.0, 0.0, 1).is_err());
        assert!(OracleSpec::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn exact_quadratic_certifies_with_zero_delta() {
        let q = ExactQuadratic::new(array![0.0], 2.0).unwrap();
        for &x in &[-2.0, 0.0, 0.7, 3.0] {
            let xv = array![x];
            let r = q.query(xv.view(), 0.0, QueryContext::default()).unwrap();
            let probes = default_probes(xv.view(), 1);
            let spec = OracleSpec::new(0.0, 2.0, 1).unwrap();
            let report = certify_oracle(|y| q.true_value(y), &r, xv.view(), &probes, &spec).unwrap();
            assert!(report.passed, "x = {x}: {report:?}");
        }
    }

    #[test]
    fn huber_pair_certifies_abs_on_grid() {
        let spec = OracleSpec::new(0.5, 1.0, 1).unwrap();
        let grid: Vec<Array1<f64>> = (0..=600).map(|i| array![-3.0 + i as f64 * 0.01]).collect();
        for x in &grid {
            let r = huber_pair(x[0], 1.0);
            let report = certify_oracle(abs_sum, &r, x.view(), &grid, &spec).unwrap();
            assert!(report.passed, "x = {}: {:?}", x[0], report.worst_upper_margin);
        }
    }

    #[test]
    fn too_small_delta_is_flagged() {
        // At x = 1 with smoothing 1 the gap f(y) − f̃ − g̃(y − 1) equals 1/2 for
        // every y >= 0; the iterate itself leaves no quadratic room, so a
        // declared accuracy of 0.01 breaks the upper inequality there.
        let spec = OracleSpec::new(0.01, 1.0, 1).unwrap();
        let r = huber_pair(1.0, 1.0);
        let x = array![1.0];
        let report = certify_oracle(abs_sum, &r, x.view(), &[array![0.0], array![1.0]], &spec).unwrap();
        assert!(!report.passed);
        assert!(report.probes[0].passed);
        assert_abs_diff_eq!(report.probes[0].upper_margin, 0.01, epsilon = 1e-12);
        assert!(!report.probes[1].passed);
        assert_abs_diff_eq!(report.probes[1].upper_margin, -0.49, epsilon = 1e-12);
        assert!(report.worst_lower_margin >= 0.0);
    }

    #[test]
    fn certify_requires_probes() {
        let r = huber_pair(0.0, 1.0);
        let spec = OracleSpec::new(0.5, 1.0, 1).unwrap();
        assert!(certify_oracle(abs_sum, &r, array![0.0].view(), &[], &spec).is_err());
    }

    #[test]
    fn default_probe_count() {
        let x = array![0.0, 1.0, 2.0, 3.0, 4.0];
        let probes = default_probes(x.view(), 9);
        assert_eq!(probes.len(), 64);
        assert_eq!(probes[0], x);
        assert_eq!(probes[1], array![0.1, 1.0, 2.0, 3.0, 4.0]);
        assert!(probes[31..].iter().all(|y| (y - &x).iter().all(|d| d.abs() <= 10.0)));
    }

    #[test]
    fn noisy_zero_delta_is_exact() {
        let q = ExactQuadratic::new(array![1.0, -1.0], 1.0).unwrap();
        let x = array![0.5, 0.5];
        let mut rng = SeededRng::new(3);
        let exact = q.query(x.view(), 0.0, QueryContext::default()).unwrap();
        assert_eq!(noisy_oracle_eval(&q, x.view(), 0.0, &mut rng).unwrap(), exact);
    }

    #[test]
    fn noisy_quadratic_value_band() {
        // f(x) = x² is ½·2·x²
        let q = ExactQuadratic::new(array![0.0], 2.0).unwrap();
        let mut rng = SeededRng::new(11);
        for _ in 0..1000 {
            let r = noisy_oracle_eval(&q, array![1.0].view(), 0.2, &mut rng).unwrap();
            assert!((0.9..=1.0).contains(&r.value), "{}", r.value);
            assert_eq!(r.gradient, array![2.0]);
        }
        assert!(noisy_oracle_eval(&q, array![1.0].view(), -0.1, &mut rng).is_err());
    }

    #[test]
    fn noisy_oracle_certifies() {
        let q = ExactQuadratic::new(array![0.0], 2.0).unwrap();
        let noisy = NoisyExactOracle::new(q.clone(), 5);
        let spec = OracleSpec::new(0.2, 2.0, 1).unwrap();
        let mut probe_rng = SeededRng::new(77);
        let probes: Vec<_> = (0..100).map(|_| array![probe_rng.uniform(-10.0, 10.0)]).collect();
        for round in 1..50 {
            let x = array![probe_rng.uniform(-3.0, 3.0)];
            let r = noisy.query(x.view(), 0.2, QueryContext { agent: 2, round }).unwrap();
            let report = certify_oracle(|y| q.true_value(y), &r, x.view(), &probes, &spec).unwrap();
            assert!(report.passed);
        }
    }

    #[test]
    fn noisy_oracle_is_pure() {
        let noisy = NoisyExactOracle::new(ExactQuadratic::new(array![0.0], 1.0).unwrap(), 5);
        let ctx = QueryContext { agent: 1, round: 9 };
        let a = noisy.query(array![1.0].view(), 0.5, ctx).unwrap();
        let b = noisy.query(array![1.0].view(), 0.5, ctx).unwrap();
        assert_eq!(a, b);
        let c = noisy
            .query(array![1.0].view(), 0.5, QueryContext { agent: 1, round: 10 })
            .unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert_abs_diff_eq!(spectral_norm_sq(a.view()), 9.0, epsilon = 1e-6);
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert_abs_diff_eq!(spectral_norm_sq(a.view()), 4.0, epsilon = 1e-6);
    }

    #[test]
    fn lasso_smoothing_clamps() {
        assert_eq!(LassoHuberOracle::smoothing(0.0).unwrap(), f64::MIN_POSITIVE);
        assert_eq!(LassoHuberOracle::smoothing(0.5).unwrap(), 0.5);
        assert!(LassoHuberOracle::smoothing(1.5).is_err());
        assert!(LassoHuberOracle::smoothing(-0.5).is_err());
    }
}
