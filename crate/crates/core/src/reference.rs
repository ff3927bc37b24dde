//! Centralized ground-truth solvers.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{invalid, shape, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_PROX_ITERATIONS: usize = 1_000_000;
const MAX_GOLDEN_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Certified upper bound on `f(x_star) − min f`.
    pub gap_bound: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Stopping statistic: gradient-mapping norm, or final bracket width.
    pub residual: f64,
    /// Set by the 1-D refiner when the final bracket touches the initial one.
    pub boundary_minimum: bool,
}

fn soft_threshold(v: f64, level: f64) -> f64 {
    v.signum() * (v.abs() - level).max(0.0)
}

fn lasso_objective(a: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, x: &Array1<f64>) -> f64 {
    let r = a.dot(x) - y;
    0.5 * r.dot(&r) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Duality gap of `½‖Ax − y‖² + λ‖x‖₁` at `x`, using the scaled residual as
/// dual point.
pub fn lasso_duality_gap(a: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, x: &Array1<f64>) -> f64 {
    let r = &y - &a.dot(x);
    let corr = a.t().dot(&r);
    let corr_inf = corr.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let scale = if corr_inf == 0.0 {
        1.0
    } else {
        (lambda / corr_inf).min(1.0)
    };
    let theta = &r * scale;
    // ½‖r − θ‖² + λ‖x‖₁ − (Aᵀθ)ᵀx, the primal-minus-dual gap without cancellation
    let diff = &r - &theta;
    let gap = 0.5 * diff.dot(&diff) + lambda * x.iter().map(|v| v.abs()).sum::<f64>() - (&corr * scale).dot(x);
    gap.max(0.0)
}

/// Largest violation of `0 ∈ ∂f(x)` over coordinates.
pub fn lasso_optimality_violation(a: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, x: &Array1<f64>) -> f64 {
    let grad = a.t().dot(&(a.dot(x) - y));
    grad.iter()
        .zip(x.iter())
        .map(|(&g, &xj)| {
            if xj == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * xj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Proximal gradient (ISTA) with backtracking on `½‖Ax − y‖² + λ‖x‖₁`, run
/// until both the gradient-mapping norm and the duality gap drop to `tol`.
pub fn solve_lasso_prox(a: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, tol: f64) -> Result<ReferenceSolution> {
    if a.nrows() != y.len() {
        return Err(shape(format!("A has {} rows, y has length {}", a.nrows(), y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let n = a.ncols();
    let mut x = Array1::<f64>::zeros(n);
    let mut lip = 1.0;
    let mut residual = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_PROX_ITERATIONS {
        iterations += 1;
        let grad = a.t().dot(&(a.dot(&x) - y));
        let (next, d) = loop {
            let next = (&x - &(&grad / lip)).mapv(|v| soft_threshold(v, lambda / lip));
            let d = &next - &x;
            // the smooth part is quadratic, so the sufficient-decrease test is ‖Ad‖² <= L‖d‖²
            let ad = a.dot(&d);
            if ad.dot(&ad) <= lip * d.dot(&d) {
                break (next, d);
            }
            lip *= 2.0;
        };
        residual = lip * d.dot(&d).sqrt();
        x = next;
        if residual <= tol {
            gap = lasso_duality_gap(a, y, lambda, &x);
            if gap <= tol {
                break;
            }
        }
    }
    if !(residual <= tol) {
        gap = lasso_duality_gap(a, y, lambda, &x);
    }
    Ok(ReferenceSolution {
        f_star: lasso_objective(a, y, lambda, &x),
        gap_bound: gap,
        x_star: x.to_vec(),
        iterations_used: iterations,
        converged: residual <= tol && gap <= tol,
        residual,
        boundary_minimum: false,
    })
}

/// Minimizer of `Σᵢ ½ qᵢ ‖x − cᵢ‖²`, i.e. the curvature-weighted mean.
pub fn solve_quadratic_sum(terms: &[(Array1<f64>, f64)]) -> Result<ReferenceSolution> {
    let (first, _) = terms.first().ok_or_else(|| invalid("no quadratic terms"))?;
    let n = first.len();
    let mut weighted = Array1::<f64>::zeros(n);
    let mut total = 0.0;
    for (c, q) in terms {
        if c.len() != n {
            return Err(shape("quadratic centers differ in dimension"));
        }
        if !(*q > 0.0) {
            return Err(invalid(format!("curvature must be > 0, got {q}")));
        }
        weighted.scaled_add(*q, c);
        total += q;
    }
    let x_star = weighted / total;
    let f_star = terms
        .iter()
        .map(|(c, q)| {
            let d = &x_star - c;
            0.5 * q * d.dot(&d)
        })
        .sum();
    Ok(ReferenceSolution {
        x_star: x_star.to_vec(),
        f_star,
        gap_bound: 0.0,
        iterations_used: 0,
        converged: true,
        residual: 0.0,
        boundary_minimum: false,
    })
}

/// Golden-section search of a convex `f` on `[lo, hi]` down to width `tol`.
///
/// The gap bound comes from the two secant lines through the outer and inner
/// bracket points, which under-estimate `f` on either side of the bracket.
pub fn grid_refine_1d<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<ReferenceSolution>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bracket [{lo}, {hi}] is empty")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > tol && iterations < MAX_GOLDEN_ITERATIONS {
        iterations += 1;
        if fc <= fd {
            b = d;
            fb = fd;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            fa = fc;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, fa), (c, fc), (d, fd), (b, fb)];
    let (x_best, f_best) =
        candidates
            .iter()
            .copied()
            .fold((f64::NAN, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });

    let secant = |(x0, f0): (f64, f64), (x1, f1): (f64, f64), t: f64| {
        if x1 == x0 {
            f0.min(f1)
        } else {
            f0 + (f1 - f0) / (x1 - x0) * (t - x0)
        }
    };
    // minimizer in [c, b]: f >= secant(a, c) there; in [a, d]: f >= secant(d, b)
    let right = fc.min(secant((a, fa), (c, fc), b));
    let left = fd.min(secant((d, fd), (b, fb), a));
    let lower = right.min(left);
    Ok(ReferenceSolution {
        x_star: vec![x_best],
        f_star: f_best,
        gap_bound: (f_best - lower).max(0.0),
        iterations_used: iterations,
        converged: b - a <= tol,
        residual: b - a,
        boundary_minimum: a == lo || b == hi,
    })
}
