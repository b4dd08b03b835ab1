//! Counting process: `p(n,t)` by uniformization, counts of one batch size,
//! the Palm function and the count variance.

use serde::Serialize;

use crate::descriptors::stationary_vectors;
use crate::error::{Error, Result};
use crate::linalg::{expm2, inv2, ones, Mat2, RowVec2};
use crate::model::BmmppModel;

/// Upper bound on `(Poisson terms) × (count levels)` for one call.
pub const TERM_BUDGET: usize = 400_000_000;

/// Minimum count levels tried before the adaptive doubling.
const MIN_LEVELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution {
    pub t: f64,
    /// `p(n,t)` for `n = 0..=n_max`.
    pub probs: Vec<f64>,
    /// `1 - Σ probs`.
    pub truncation_mass: f64,
    pub n_max: usize,
    /// True when `n_max` reached the number of Poisson terms, beyond which
    /// no probability mass can exist.
    pub capped: bool,
    /// Poisson terms used by the uniformization sum.
    pub terms: usize,
}

impl CountDistribution {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs.iter().enumerate().map(|(n, p)| (n as f64 - m).powi(2) * p).sum()
    }
}

fn check(m: &BmmppModel, t: f64, eps: f64) -> Result<()> {
    m.validate().into_result()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::infeasible("t > 0", t));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::infeasible("0 < eps < 1", eps));
    }
    Ok(())
}

/// Poisson(`lambda`) weights `w_0..w_M` with `Σ w ≥ 1 - tail`.
fn poisson_weights(lambda: f64, tail: f64, budget: usize) -> Result<Vec<f64>> {
    // The sum cannot close before the mean, so fail without iterating.
    if lambda >= budget as f64 {
        return Err(Error::TruncationBudget(format!(
            "theta*t = {lambda:.6e} needs more than {budget} Poisson terms"
        )));
    }
    let ln_l = lambda.ln();
    let mut ln_fact = 0.0;
    let mut w = Vec::new();
    let mut cum = 0.0;
    for m in 0.. {
        if m > 0 {
            ln_fact += (m as f64).ln();
        }
        let lw = if lambda > 0.0 { -lambda + m as f64 * ln_l - ln_fact } else if m == 0 { 0.0 } else { f64::NEG_INFINITY };
        let v = lw.exp();
        w.push(v);
        cum += v;
        if cum >= 1.0 - tail && m as f64 >= lambda {
            break;
        }
        if w.len() > budget {
            return Err(Error::TruncationBudget(format!(
                "more than {budget} Poisson terms needed for theta*t = {lambda:.6e} at tail {tail:.1e}"
            )));
        }
    }
    Ok(w)
}

/// `start · P(n,t)` for `n = 0..=n_max` under the event process `{d0, d}`.
fn uniformized_rows(d0: &Mat2, d: &Mat2, start: RowVec2, weights: &[f64], theta: f64, n_max: usize) -> Vec<RowVec2> {
    let p0 = Mat2::identity() + d0 / theta;
    let p1 = d / theta;
    let mut out = vec![RowVec2::zeros(); n_max + 1];
    let mut v = vec![RowVec2::zeros(); n_max + 1];
    v[0] = start;
    for (m, &w) in weights.iter().enumerate() {
        let top = m.min(n_max);
        if w > 0.0 {
            for n in 0..=top {
                out[n] += v[n] * w;
            }
        }
        if m + 1 == weights.len() {
            break;
        }
        // Levels above n_max are dropped; their mass shows up as truncation.
        let new_top = (m + 1).min(n_max);
        for n in (0..=new_top).rev() {
            let stay = if n <= top { v[n] * p0 } else { RowVec2::zeros() };
            let step = if n > 0 { v[n - 1] * p1 } else { RowVec2::zeros() };
            v[n] = stay + step;
        }
    }
    out
}

struct Plan {
    theta: f64,
    weights: Vec<f64>,
}

fn plan(d0: &Mat2, t: f64, eps: f64) -> Result<Plan> {
    // Every transition, silent or not, leaves a (phase, count) pair at total
    // rate -D0_ii, so the clock must dominate the diagonal of D0.
    let theta = 1.01 * d0[(0, 0)].abs().max(d0[(1, 1)].abs());
    let weights = poisson_weights(theta * t, eps / 2.0, TERM_BUDGET)?;
    Ok(Plan { theta, weights })
}

fn initial_levels(m: &BmmppModel, t: f64) -> usize {
    let mean = palm_mean(m, t).unwrap_or(0.0);
    let sd = count_variance(m, t).unwrap_or(mean).max(0.0).sqrt();
    ((mean + 10.0 * sd).ceil() as usize).max(MIN_LEVELS)
}

/// `p(n,t) = s P(n,t) e` with `s` the stationary phase vector `π` unless
/// `start` overrides it. `n_max` starts at mean + 10 sd and doubles until the
/// neglected mass is below `eps`.
pub fn count_distribution_from(m: &BmmppModel, t: f64, eps: f64, start: Option<[f64; 2]>) -> Result<CountDistribution> {
    check(m, t, eps)?;
    let s = match start {
        Some(s) => {
            if s.iter().any(|v| !(*v >= 0.0)) || ((s[0] + s[1]) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidPmf(format!("start vector {s:?} is not a distribution")));
            }
            RowVec2::new(s[0], s[1])
        }
        None => {
            let sv = stationary_vectors(m)?;
            RowVec2::new(sv.pi[0], sv.pi[1])
        }
    };
    let d0 = *m.d0();
    let d = m.d_total();
    let p = plan(&d0, t, eps)?;
    let cap = p.weights.len() - 1;
    let mut n_max = initial_levels(m, t).min(cap);
    loop {
        if p.weights.len().saturating_mul(n_max + 1) > TERM_BUDGET {
            return Err(Error::TruncationBudget(format!(
                "{} Poisson terms x {} count levels exceeds {TERM_BUDGET}",
                p.weights.len(),
                n_max + 1
            )));
        }
        let rows = uniformized_rows(&d0, &d, s, &p.weights, p.theta, n_max);
        let probs: Vec<f64> = rows.iter().map(|r| (r * ones())[0].max(0.0)).collect();
        let truncation_mass = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        if truncation_mass < eps || n_max >= cap {
            if truncation_mass >= eps {
                return Err(Error::TruncationBudget(format!(
                    "neglected mass {truncation_mass:.3e} >= eps {eps:.1e} with all {} terms kept",
                    p.weights.len()
                )));
            }
            return Ok(CountDistribution { t, probs, truncation_mass, n_max, capped: n_max >= cap, terms: p.weights.len() });
        }
        n_max = (2 * n_max).min(cap);
    }
}

/// Stationary count distribution `p(n,t) = π P(n,t) e`.
pub fn count_distribution(m: &BmmppModel, t: f64, eps: f64) -> Result<CountDistribution> {
    count_distribution_from(m, t, eps, None)
}

/// The matrices `P(n,t)` for `n = 0..=n_max`, each computed with neglected
/// Poisson mass below `eps / 2` per row.
pub fn count_matrices(m: &BmmppModel, t: f64, eps: f64, n_max: usize) -> Result<Vec<Mat2>> {
    check(m, t, eps)?;
    let d0 = *m.d0();
    let d = m.d_total();
    let p = plan(&d0, t, eps)?;
    if p.weights.len().saturating_mul(n_max + 1) > TERM_BUDGET {
        return Err(Error::TruncationBudget(format!("{} Poisson terms x {} levels", p.weights.len(), n_max + 1)));
    }
    let r0 = uniformized_rows(&d0, &d, RowVec2::new(1.0, 0.0), &p.weights, p.theta, n_max);
    let r1 = uniformized_rows(&d0, &d, RowVec2::new(0.0, 1.0), &p.weights, p.theta, n_max);
    Ok(r0.iter().zip(&r1).map(|(a, b)| Mat2::new(a[0], a[1], b[0], b[1])).collect())
}

/// The MMPP `{D0 + Σ_{j≠k} D_j, D_k}` whose events are the size-`k` batches.
pub fn size_k_model(m: &BmmppModel, k: usize) -> Result<BmmppModel> {
    if k == 0 || k > m.k() {
        return Err(Error::IndexOutOfRange { index: k, k: m.k() });
    }
    let dk = m.batch_diagonals()[k - 1];
    let rates = m.event_rates();
    let g0 = *m.d0() + Mat2::new(rates[0] - dk[0], 0.0, 0.0, rates[1] - dk[1]);
    BmmppModel::new(g0, vec![dk])
}

/// Distribution of the number of size-`k` batches in `(0, t]`.
pub fn count_distribution_size_k(m: &BmmppModel, t: f64, k: usize, eps: f64) -> Result<CountDistribution> {
    let sub = size_k_model(m, k)?;
    // The phase process is unchanged, so π carries over.
    let sv = stationary_vectors(m)?;
    count_distribution_from(&sub, t, eps, Some(sv.pi))
}

/// `E[N(t)] = λ* t` with `λ* = π D e = 1 / μ1`.
pub fn palm_mean(m: &BmmppModel, t: f64) -> Result<f64> {
    let sv = stationary_vectors(m)?;
    let r = m.event_rates();
    Ok((sv.pi[0] * r[0] + sv.pi[1] * r[1]) * t)
}

/// `V[N(t)] = (1 + 2λ*) E[N(t)] - 2 π D (eπ + Q)⁻¹ D e t
///          - 2 π D (I - e^{Qt}) (eπ + Q)⁻² D e`.
pub fn count_variance(m: &BmmppModel, t: f64) -> Result<f64> {
    let sv = stationary_vectors(m)?;
    let pi = RowVec2::new(sv.pi[0], sv.pi[1]);
    let q = m.generator();
    let d = m.d_total();
    let e = ones();
    let lam = (pi * d * e)[0];
    let z = inv2(&(e * pi + q)).ok_or(Error::Singular("e pi + Q"))?;
    let mean = lam * t;
    let linear = (pi * d * z * d * e)[0];
    let transient = (pi * d * (Mat2::identity() - expm2(&(q * t))) * z * z * d * e)[0];
    Ok((1.0 + 2.0 * lam) * mean - 2.0 * linear * t - 2.0 * transient)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_k2() -> BmmppModel {
        BmmppModel::new(Mat2::new(-5.0, 2.0, 5.0, -10.0), vec![[1.0, 2.0], [2.0, 3.0]]).unwrap()
    }

    fn poisson(lam: f64) -> BmmppModel {
        BmmppModel::new(Mat2::new(-lam - 0.7, 0.7, 1.3, -lam - 1.3), vec![[lam, lam]]).unwrap()
    }

    /// Textbook variance with the deviation matrix `(eπ - Q)⁻¹`.
    fn variance_oracle(m: &BmmppModel, t: f64) -> f64 {
        let sv = stationary_vectors(m).unwrap();
        let pi = RowVec2::new(sv.pi[0], sv.pi[1]);
        let q = m.generator();
        let d = m.d_total();
        let e = ones();
        let lam = (pi * d * e)[0];
        let z = inv2(&(e * pi - q)).unwrap();
        (lam - 2.0 * lam * lam + 2.0 * (pi * d * z * d * e)[0]) * t
            - 2.0 * (pi * d * (Mat2::identity() - expm2(&(q * t))) * z * z * d * e)[0]
    }

    #[test]
    fn poisson_reduction() {
        let lam = 2.5;
        let t = 1.7;
        let cd = count_distribution(&poisson(lam), t, 1e-12).unwrap();
        let mut pmf = (-lam * t).exp();
        for n in 0..cd.probs.len() {
            if n > 0 {
                pmf *= lam * t / n as f64;
            }
            assert!((cd.probs[n] - pmf).abs() < 1e-10, "n = {n}");
        }
        assert!((palm_mean(&poisson(lam), t).unwrap() - lam * t).abs() < 1e-12);
        assert!((count_variance(&poisson(lam), t).unwrap() - lam * t).abs() < 1e-10);
    }

    #[test]
    fn short_horizon_has_no_events() {
        let cd = count_distribution(&reference_k2(), 1e-9, 1e-10).unwrap();
        assert!((cd.probs[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mean_and_variance_identities() {
        let m = reference_k2();
        for t in [0.1, 1.0, 7.5] {
            let cd = count_distribution(&m, t, 1e-13).unwrap();
            assert!(cd.truncation_mass < 1e-13);
            assert!((cd.mean() - t / 0.28).abs() < 1e-8, "t = {t}");
            let v = count_variance(&m, t).unwrap();
            assert!((v - variance_oracle(&m, t)).abs() < 1e-10 * v.max(1.0));
            assert!((cd.variance() - v).abs() < 1e-7 * v.max(1.0), "{} vs {v}", cd.variance());
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let m = reference_k2();
        let t = 0.8;
        let n = 40;
        let half = count_matrices(&m, t / 2.0, 1e-14, n).unwrap();
        let full = count_matrices(&m, t, 1e-14, n).unwrap();
        for total in 0..=n {
            let mut acc = Mat2::zeros();
            for a in 0..=total {
                acc += half[a] * half[total - a];
            }
            assert!((acc - full[total]).abs().max() < 1e-10, "n = {total}");
        }
    }

    #[test]
    fn size_k_decomposition() {
        let m = reference_k2();
        let t = 2.0;
        let total: f64 = (1..=2).map(|k| count_distribution_size_k(&m, t, k, 1e-12).unwrap().mean()).sum();
        assert!((total - palm_mean(&m, t).unwrap()).abs() < 1e-8);
        let one = BmmppModel::new(*m.d0(), vec![[3.0, 5.0]]).unwrap();
        let a = count_distribution(&one, t, 1e-12).unwrap();
        let b = count_distribution_size_k(&one, t, 1, 1e-12).unwrap();
        assert_eq!(a.probs.len(), b.probs.len());
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_and_argument_errors() {
        let m = reference_k2();
        assert!(matches!(count_distribution(&m, 1e9, 1e-12), Err(Error::TruncationBudget(_))));
        assert!(count_distribution(&m, -1.0, 1e-6).is_err());
        assert!(count_distribution(&m, 1.0, 0.0).is_err());
        assert!(matches!(count_distribution_size_k(&m, 1.0, 3, 1e-6), Err(Error::IndexOutOfRange { .. })));
    }
}
