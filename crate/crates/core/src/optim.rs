//! Box-constrained nonlinear least squares: projected Levenberg–Marquardt
//! with finite-difference Jacobians, and a deterministic parallel multistart.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::simulate::RngSpec;

/// Cost assigned to points where the residual cannot be evaluated.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the cost falls below this value.
    pub cost_tol: f64,
    /// Stop when a step changes every coordinate by less than this fraction
    /// of the box width.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 300, cost_tol: 1e-30, step_tol: 1e-14 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of<F>(f: &F, x: &[f64]) -> (f64, Option<DVector<f64>>)
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    match f(x) {
        Some(r) if r.iter().all(|v| v.is_finite()) => {
            let v = DVector::from_vec(r);
            (v.norm_squared(), Some(v))
        }
        _ => (PENALTY, None),
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimizes `Σ r_i(x)²` over the box `[lo, hi]`. A residual of `None`
/// marks an infeasible point and costs [`PENALTY`].
pub fn lm_box<F>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LmOptions) -> LmResult
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut cost, mut res) = cost_of(f, &x);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        if cost <= opts.cost_tol {
            converged = true;
            break;
        }
        let Some(r) = res.clone() else { break };
        // Central differences, one-sided at the box faces.
        let mut jac = DMatrix::zeros(r.len(), n);
        let mut ok = true;
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1e-6 * (hi[j] - lo[j]).max(1e-12));
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] = (x[j] + h).min(hi[j]);
            xm[j] = (x[j] - h).max(lo[j]);
            let span = xp[j] - xm[j];
            if span <= 0.0 {
                continue;
            }
            match (f(&xp), f(&xm)) {
                (Some(rp), Some(rm)) => {
                    for i in 0..r.len() {
                        jac[(i, j)] = (rp[i] - rm[i]) / span;
                    }
                }
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut accepted = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * (jtj[(i, i)].max(1e-12));
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut xn, lo, hi);
            let (cn, rn) = cost_of(f, &xn);
            if cn < cost {
                let small = (0..n).all(|i| (xn[i] - x[i]).abs() <= opts.step_tol * (hi[i] - lo[i]).max(x[i].abs()));
                let rel_drop = (cost - cn) / cost;
                x = xn;
                cost = cn;
                res = rn;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if small || rel_drop < 1e-15 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            // No descent direction left: a stationary point of the box problem.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmResult { x, cost, iterations, converged }
}

/// Summary of a multistart run.
#[derive(Debug, Clone, Serialize)]
pub struct MultistartResult {
    pub best: LmResult,
    pub starts: usize,
    pub converged_starts: usize,
}

/// Runs `starts` local solves from uniform points in the box, plus any
/// `seeds`, in parallel. Start `i` draws from stream `rng.stream + i`. The
/// winner is the lowest cost, ties broken by the lexicographically smallest
/// parameter vector, so the result does not depend on scheduling.
pub fn multistart<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    starts: usize,
    seeds: &[Vec<f64>],
    rng: RngSpec,
    opts: &LmOptions,
) -> MultistartResult
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    let mut points: Vec<Vec<f64>> = seeds.to_vec();
    for i in 0..starts {
        let mut r = RngSpec::new(rng.seed, rng.stream.wrapping_add(i as u64)).rng();
        points.push(lo.iter().zip(hi).map(|(l, h)| l + r.random::<f64>() * (h - l)).collect());
    }
    let results: Vec<LmResult> = points.par_iter().map(|p| lm_box(f, p, lo, hi, opts)).collect();
    let converged_starts = results.iter().filter(|r| r.converged).count();
    let best = results
        .into_iter()
        .min_by(|a, b| {
            a.cost.total_cmp(&b.cost).then_with(|| {
                a.x.iter().zip(&b.x).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .expect("at least one start");
    MultistartResult { best, starts: points.len(), converged_starts }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| Some(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let r = lm_box(&f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &LmOptions::default());
        assert!(r.cost < 1e-20, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn active_bound() {
        // Unconstrained minimum at 3, box stops at 1.
        let f = |x: &[f64]| Some(vec![x[0] - 3.0]);
        let r = lm_box(&f, &[0.0], &[0.0], &[1.0], &LmOptions::default());
        assert_eq!(r.x[0], 1.0);
        assert!(r.converged);
    }

    #[test]
    fn multistart_is_deterministic() {
        let f = |x: &[f64]| Some(vec![(x[0] - 0.3) * (x[0] + 0.5), 0.1 * x[0]]);
        let a = multistart(&f, &[-1.0], &[1.0], 16, &[], RngSpec::new(5, 0), &LmOptions::default());
        let b = multistart(&f, &[-1.0], &[1.0], 16, &[], RngSpec::new(5, 0), &LmOptions::default());
        assert_eq!(a.best.x, b.best.x);
        assert_eq!(a.starts, 16);
    }
}
