//! Empirical moments and the sequential moment-matching fit.
//!
//! The silent-transition matrix is fitted first from `(μ1, μ2, μ3, ρ_T(1))`.
//! Batch rates follow one size at a time: stage `k` matches `(β1, η)` of the
//! sub-process that isolates size `k`, within the rate budget left by the
//! earlier stages. `D_K` closes the row sums.
//!
//! All optimization runs in time units of the empirical mean `μ̄1`, so the
//! box bounds and tolerances are scale free.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_to_mmpp, moments_to_canonical, solve_batch_split, Degeneracy, MomentSet};
use crate::descriptors::{map2_time_descriptors, moment_set, shape_stats, sub_pair, DescriptorReport, REPORT_LAGS};
use crate::error::{Error, Result};
use crate::linalg::{diag, Mat2};
use crate::model::BmmppModel;
use crate::optim::{multistart, LmOptions};
use crate::simulate::{RngSpec, Trace};
use crate::stats::{autocorrelation, mean, raw_moment};

/// Sample counterparts of the characterizing moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub n: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// Sample autocorrelations of the times at lags 1..=3.
    pub rho_t: Vec<f64>,
    /// Collapsed-batch means, k = 1..K-1.
    pub beta1: Vec<f64>,
    /// Collapsed-batch joint moments, k = 1..K-1.
    pub eta: Vec<f64>,
    pub cv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    General,
    /// Batch rates proportional to the state event rates (i.i.d. sizes).
    IidBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Weight of the relative time-moment errors against `ρ_T(1)`.
    pub tau: f64,
    pub multistart: usize,
    /// Box for the rates `y, r, -x-y, -r-u`, in units of `1/μ̄1`.
    pub rate_bounds: (f64, f64),
    pub rng: RngSpec,
    pub variant: Variant,
    /// Adds the closed-form moment inversion as an extra start when it exists.
    pub closed_form_start: bool,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            multistart: 100,
            rate_bounds: (1e-10, 100.0),
            rng: RngSpec::new(0, 0),
            variant: Variant::General,
            closed_form_start: true,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts: usize,
    pub converged_starts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: BmmppModel,
    pub stages: Vec<StageReport>,
    pub empirical: Option<MomentSet>,
    pub fitted: MomentSet,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidModel(format!("tau must be positive, got {}", self.tau)));
        }
        if self.multistart == 0 {
            return Err(Error::InvalidModel("multistart must be at least 1".into()));
        }
        let (lo, hi) = self.rate_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidModel(format!("rate bounds must satisfy 0 < lo < hi, got ({lo}, {hi})")));
        }
        Ok(())
    }

    fn lm(&self) -> LmOptions {
        LmOptions { max_iter: self.max_iter, ..LmOptions::default() }
    }
}

impl EmpiricalMoments {
    pub fn rho_t1(&self) -> f64 {
        self.rho_t[0]
    }

    pub fn moment_set(&self) -> MomentSet {
        MomentSet {
            mu1: self.mu1,
            mu2: self.mu2,
            mu3: self.mu3,
            rho_t1: self.rho_t1(),
            beta1: self.beta1.clone(),
            eta: self.eta.clone(),
        }
    }

    /// Moments of a model in the same layout, for exact-moment fits.
    pub fn from_moment_set(ms: &MomentSet) -> Self {
        Self {
            n: 0,
            mu1: ms.mu1,
            mu2: ms.mu2,
            mu3: ms.mu3,
            rho_t: vec![ms.rho_t1],
            beta1: ms.beta1.clone(),
            eta: ms.eta.clone(),
            cv: (ms.mu2 - ms.mu1 * ms.mu1).sqrt() / ms.mu1,
        }
    }
}

/// Collapsed sizes for stage `k`: 1 where `b = k`, 2 elsewhere.
fn collapsed(b: &[usize], k: usize) -> impl Iterator<Item = f64> + '_ {
    b.iter().map(move |&v| if v == k { 1.0 } else { 2.0 })
}

pub fn empirical_moments(trace: &Trace, k: usize) -> Result<EmpiricalMoments> {
    trace.validate(Some(k))?;
    let n = trace.len();
    if n < 4 {
        return Err(Error::InvalidTrace(format!("need at least 4 events, got {n}")));
    }
    let t = &trace.t;
    let rho_t = (1..=REPORT_LAGS as usize)
        .map(|l| autocorrelation(t, l).ok_or(Error::Degenerate("constant inter-event times".into())))
        .collect::<Result<Vec<_>>>()?;
    let mu1 = mean(t);
    let mu2 = raw_moment(t, 2);
    let mut beta1 = Vec::new();
    let mut eta = Vec::new();
    for kk in 1..k {
        beta1.push(collapsed(&trace.b, kk).sum::<f64>() / n as f64);
        eta.push(collapsed(&trace.b, kk).zip(t).map(|(b, t)| b * t).sum::<f64>() / n as f64);
    }
    Ok(EmpiricalMoments {
        n,
        mu1,
        mu2,
        mu3: raw_moment(t, 3),
        rho_t,
        beta1,
        eta,
        cv: (mu2 - mu1 * mu1).sqrt() / mu1,
    })
}

/// Sample version of the full descriptor table.
pub fn empirical_report(trace: &Trace, k: usize) -> Result<DescriptorReport> {
    let em = empirical_moments(trace, k)?;
    let t = &trace.t;
    let b: Vec<f64> = trace.b.iter().map(|&v| v as f64).collect();
    let n = t.len() as f64;
    let mu4 = raw_moment(t, 4);
    let (cv, skewness, kurtosis) = shape_stats([em.mu1, em.mu2, em.mu3, mu4]);
    let beta: BTreeMap<u32, f64> = (1..=3).map(|r| (r, raw_moment(&b, r as i32))).collect();
    let rho_b = (1..=REPORT_LAGS).filter_map(|l| autocorrelation(&b, l as usize).map(|v| (l, v))).collect();
    let eta = t.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
    let cov_tb = eta - em.mu1 * beta[&1];
    let var_b = beta[&2] - beta[&1] * beta[&1];
    let var_t = em.mu2 - em.mu1 * em.mu1;
    let corr_tb = (var_b > 0.0).then(|| cov_tb / (var_t * var_b).sqrt());
    let mut pmf_b = vec![0.0; k];
    for &v in &trace.b {
        pmf_b[v - 1] += 1.0 / n;
    }
    Ok(DescriptorReport {
        mu1: em.mu1,
        mu2: em.mu2,
        mu3: em.mu3,
        rho_t: em.rho_t.iter().enumerate().map(|(i, v)| (i as u32 + 1, *v)).collect(),
        beta,
        rho_b,
        eta,
        cov_tb,
        corr_tb,
        cv,
        skewness,
        kurtosis,
        pmf_b,
        beta1_sub: em.beta1.clone(),
        eta_sub: em.eta.clone(),
    })
}

fn d0_from(p: &[f64]) -> Mat2 {
    Mat2::new(-p[0] - p[2], p[0], p[1], -p[1] - p[3])
}

/// Fits `D0` from `(μ̄1, μ̄2, μ̄3, ρ̄_T(1))` by minimizing
/// `(ρ_T(1) - ρ̄_T(1))² + τ Σ_r ((μ_r - μ̄_r)/μ̄_r)²`.
/// The result is ordered so that `x + y >= r + u`.
pub fn fit_d0(em: &EmpiricalMoments, cfg: &FitConfig) -> Result<(Mat2, StageReport)> {
    cfg.validate()?;
    let s = em.mu1;
    if !(s > 0.0) {
        return Err(Error::infeasible("mu1 > 0", s));
    }
    let target = [1.0, em.mu2 / (s * s), em.mu3 / (s * s * s)];
    let rho = em.rho_t1();
    let st = cfg.tau.sqrt();
    let resid = |p: &[f64]| -> Option<Vec<f64>> {
        let d0 = d0_from(p);
        let t = map2_time_descriptors(&d0, &diag(p[2], p[3])).ok()?;
        Some(vec![
            t.rho1 - rho,
            st * (t.mu[0] / target[0] - 1.0),
            st * (t.mu[1] / target[1] - 1.0),
            st * (t.mu[2] / target[2] - 1.0),
        ])
    };
    let (lo, hi) = cfg.rate_bounds;
    let lower = [lo; 4];
    let upper = [hi; 4];
    let mut seeds = Vec::new();
    if cfg.closed_form_start {
        if let Ok(sol) = moments_to_canonical(target[0], target[1], target[2], rho) {
            if sol.degeneracy != Some(Degeneracy::Poisson) {
                if let Ok(m) = canonical_to_mmpp(&sol.map) {
                    let g = m.g0;
                    let p = vec![g[(0, 1)], g[(1, 0)], m.g1[0], m.g1[1]];
                    if p.iter().all(|v| *v >= lo && *v <= hi) {
                        seeds.push(p);
                    }
                }
            }
        }
    }
    let ms = multistart(&resid, &lower, &upper, cfg.multistart, &seeds, cfg.rng, &cfg.lm());
    if ms.best.cost >= crate::optim::PENALTY {
        return Err(Error::NoConvergence(format!("no start reached a feasible point ({} starts)", ms.starts)));
    }
    let d0 = d0_from(&ms.best.x) / s;
    let d0 = BmmppModel::new(d0, vec![[-d0[(0, 0)] - d0[(0, 1)], -d0[(1, 0)] - d0[(1, 1)]]])?.normalize_state_order();
    Ok((
        *d0.d0(),
        StageReport {
            stage: "D0".into(),
            objective: ms.best.cost,
            iterations: ms.best.iterations,
            converged: ms.best.converged,
            starts: ms.starts,
            converged_starts: ms.converged_starts,
        },
    ))
}

/// Fits `(w_k, q_k)` by minimizing
/// `τ [((β1 - β̄1)/β̄1)² + ((η - η̄)/η̄)²]` on the sub-process isolating size
/// `k`, over `0 <= w_k <= budget1`, `0 <= q_k <= budget2`.
pub fn fit_stage_k(d0: &Mat2, prior: &[[f64; 2]], em: &EmpiricalMoments, cfg: &FitConfig, k: usize) -> Result<([f64; 2], StageReport)> {
    cfg.validate()?;
    if k == 0 || k > em.beta1.len() {
        return Err(Error::IndexOutOfRange { index: k, k: em.beta1.len() + 1 });
    }
    let s = em.mu1;
    let d0n = d0 * s;
    let total = [-d0n[(0, 0)] - d0n[(0, 1)], -d0n[(1, 0)] - d0n[(1, 1)]];
    let used = prior.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0] * s, a[1] + d[1] * s]);
    let budget = [total[0] - used[0], total[1] - used[1]];
    let tol = 1e-9 * total[0].max(total[1]).max(1.0);
    if budget[0] < -tol || budget[1] < -tol {
        return Err(Error::EmptyFeasibleBox { stage: k, budget1: budget[0] / s, budget2: budget[1] / s });
    }
    let budget = [budget[0].max(0.0), budget[1].max(0.0)];
    let (bt, et) = (em.beta1[k - 1], em.eta[k - 1] / s);
    let st = cfg.tau.sqrt();
    let pair = |w: f64, q: f64| -> Option<Vec<f64>> {
        let m = BmmppModel::new(d0n, vec![[w, q], [(total[0] - w).max(0.0), (total[1] - q).max(0.0)]]).ok()?;
        let (b, e) = sub_pair(&m, 1).ok()?;
        Some(vec![st * (b / bt - 1.0), st * (e / et - 1.0)])
    };
    let (w, q, ms) = match cfg.variant {
        Variant::General => {
            let resid = |p: &[f64]| pair(p[0], p[1]);
            let mut seeds = Vec::new();
            if cfg.closed_form_start {
                if let Ok((w, q)) = solve_batch_split(&d0n, bt, et) {
                    if w <= budget[0] && q <= budget[1] {
                        seeds.push(vec![w, q]);
                    }
                }
            }
            let ms = multistart(&resid, &[0.0, 0.0], &budget, cfg.multistart, &seeds, cfg.rng, &cfg.lm());
            (ms.best.x[0], ms.best.x[1], ms)
        }
        Variant::IidBatch => {
            let frac = if total[0] > 0.0 { budget[0] / total[0] } else { budget[1] / total[1] };
            let resid = |p: &[f64]| pair(p[0] * total[0], p[0] * total[1]);
            let ms = multistart(&resid, &[0.0], &[frac.max(0.0)], cfg.multistart, &[], cfg.rng, &cfg.lm());
            (ms.best.x[0] * total[0], ms.best.x[0] * total[1], ms)
        }
    };
    if ms.best.cost >= crate::optim::PENALTY {
        return Err(Error::NoConvergence(format!("stage {k}: no feasible start")));
    }
    Ok((
        [w / s, q / s],
        StageReport {
            stage: format!("D{k}"),
            objective: ms.best.cost,
            iterations: ms.best.iterations,
            converged: ms.best.converged,
            starts: ms.starts,
            converged_starts: ms.converged_starts,
        },
    ))
}

/// Runs every stage on precomputed moments.
pub fn fit_moments(em: &EmpiricalMoments, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    let start = Instant::now();
    if em.beta1.len() + 1 != k {
        return Err(Error::InvalidModel(format!("moments carry {} batch pairs, expected {}", em.beta1.len(), k - 1)));
    }
    let (d0, rep0) = fit_d0(em, cfg).map_err(|e| e.at_stage("D0"))?;
    let mut stages = vec![rep0];
    let mut interior: Vec<[f64; 2]> = Vec::new();
    for kk in 1..k {
        let (wq, rep) = fit_stage_k(&d0, &interior, em, cfg, kk).map_err(|e| e.at_stage(format!("D{kk}")))?;
        interior.push(wq);
        stages.push(rep);
    }
    let model = BmmppModel::from_interior(d0, &interior)?;
    model.validate().into_result().map_err(|e| e.at_stage(format!("D{k}")))?;
    let fitted = moment_set(&model)?;
    Ok(FitResult {
        model,
        stages,
        empirical: (em.n > 0).then(|| em.moment_set()),
        fitted,
        wall_time: start.elapsed(),
    })
}

/// Sequential moment-matching fit of a BMMPP₂(K) to a trace.
pub fn fit(trace: &Trace, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    let start = Instant::now();
    let em = empirical_moments(trace, k)?;
    let mut res = fit_moments(&em, k, cfg)?;
    res.wall_time = start.elapsed();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::cov_corr_tb;
    use crate::descriptors::rho_b;

    fn reference_k2() -> BmmppModel {
        BmmppModel::new(Mat2::new(-5.0, 2.0, 5.0, -10.0), vec![[1.0, 2.0], [2.0, 3.0]]).unwrap()
    }

    fn quick() -> FitConfig {
        FitConfig { multistart: 12, ..FitConfig::default() }
    }

    #[test]
    fn collapse_rule() {
        let tr = Trace::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![2, 2, 2, 2, 2]).unwrap();
        let em = empirical_moments(&tr, 3).unwrap();
        assert_eq!(em.beta1, vec![2.0, 1.0]);
        let em = empirical_moments(&tr, 2).unwrap();
        assert_eq!(em.beta1, vec![2.0]);
        let tr = Trace::new(vec![1.0, 2.0, 3.0, 4.0], vec![1, 1, 1, 1]).unwrap();
        let em = empirical_moments(&tr, 3).unwrap();
        assert_eq!(em.beta1, vec![1.0, 2.0]);
        assert_eq!(em.eta, vec![2.5, 5.0]);
        let flat = Trace::new(vec![1.0; 6], vec![1; 6]).unwrap();
        assert!(matches!(empirical_moments(&flat, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn exact_moments_are_recovered() {
        let ms = moment_set(&reference_k2()).unwrap();
        let em = EmpiricalMoments::from_moment_set(&ms);
        let res = fit_moments(&em, 2, &quick()).unwrap();
        assert!(res.fitted.max_rel_diff(&ms, 1e-3) < 1e-6, "{:?} vs {ms:?}", res.fitted);
        assert!(res.stages.iter().all(|s| s.objective < 1e-12));
    }

    #[test]
    fn exact_moments_without_closed_form_start() {
        let ms = moment_set(&reference_k2()).unwrap();
        let em = EmpiricalMoments::from_moment_set(&ms);
        let cfg = FitConfig { closed_form_start: false, multistart: 40, ..FitConfig::default() };
        let res = fit_moments(&em, 2, &cfg).unwrap();
        assert!(res.fitted.max_rel_diff(&ms, 1e-3) < 1e-6, "{:?} vs {ms:?}", res.fitted);
    }

    #[test]
    fn iid_variant_has_no_batch_correlation() {
        let ms = moment_set(&reference_k2()).unwrap();
        let em = EmpiricalMoments::from_moment_set(&ms);
        let cfg = FitConfig { variant: Variant::IidBatch, ..quick() };
        let res = fit_moments(&em, 2, &cfg).unwrap();
        assert!(cov_corr_tb(&res.model).unwrap().1.unwrap().abs() < 1e-10);
        assert!(rho_b(&res.model, 1).unwrap().abs() < 1e-10);
    }

    #[test]
    fn deterministic_fit() {
        let tr = crate::simulate::simulate_trace(&reference_k2(), 300, RngSpec::new(2, 0), Default::default()).unwrap();
        let a = fit(&tr, 2, &quick()).unwrap();
        let b = fit(&tr, 2, &quick()).unwrap();
        assert_eq!(a.model, b.model);
    }
}
