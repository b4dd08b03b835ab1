//! Exact stationary descriptors: inter-event moments and autocorrelations,
//! batch-size law and autocorrelations, and the joint moment `E[TB]`.
//!
//! Everything reduces to 2×2 closed forms around `N = (-D0)^{-1}` and the
//! event-stationary vector `φ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::MomentSet;
use crate::error::{Error, Result};
use crate::linalg::{generator_stationary, inv2, ones, stochastic_stationary, Mat2, RowVec2};
use crate::model::BmmppModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryVectors {
    pub pi: [f64; 2],
    pub phi: [f64; 2],
    pub pstar: [[f64; 2]; 2],
    pub gamma: f64,
}

/// Inter-event descriptors shared by every two-state MAP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDescriptors {
    /// `μ1..μ4`.
    pub mu: [f64; 4],
    pub gamma: f64,
    pub rho1: f64,
}

/// The full descriptor table of a model or of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorReport {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub rho_t: BTreeMap<u32, f64>,
    pub beta: BTreeMap<u32, f64>,
    pub rho_b: BTreeMap<u32, f64>,
    pub eta: f64,
    pub cov_tb: f64,
    pub corr_tb: Option<f64>,
    pub cv: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub pmf_b: Vec<f64>,
    /// `β1` of each isolating sub-process, i = 1..K-1.
    pub beta1_sub: Vec<f64>,
    /// `η` of each isolating sub-process, i = 1..K-1.
    pub eta_sub: Vec<f64>,
}

/// Number of lags reported for `ρ_T` and `ρ_B`.
pub const REPORT_LAGS: u32 = 3;

pub(crate) struct Core {
    pub neg_inv: Mat2,
    pub pi: RowVec2,
    pub phi: RowVec2,
    pub pstar: Mat2,
    pub gamma: f64,
}

impl Core {
    /// Stationary quantities of the MAP `{d0, d1}`.
    pub fn new(d0: &Mat2, d1: &Mat2) -> Result<Self> {
        let neg_inv = inv2(&(-d0)).ok_or(Error::Singular("-D0"))?;
        let q = d0 + d1;
        let pi = generator_stationary(&q).ok_or(Error::Reducible { y: d0[(0, 1)], r: d0[(1, 0)] })?;
        let rate = (pi * d1 * ones())[0];
        if !(rate > 0.0) {
            return Err(Error::ZeroEventRate);
        }
        let pstar = neg_inv * d1;
        // πD / πDe is the stationary vector of P*; fall back to the direct
        // solve only if πD degenerates numerically.
        let phi = {
            let v = pi * d1;
            let s = v[0] + v[1];
            if s > 0.0 {
                v / s
            } else {
                stochastic_stationary(&pstar).ok_or(Error::ZeroEventRate)?
            }
        };
        let gamma = pstar[(0, 0)] + pstar[(1, 1)] - 1.0;
        Ok(Self { neg_inv, pi, phi, pstar, gamma })
    }

    pub fn for_model(m: &BmmppModel) -> Result<Self> {
        m.require_stationary()?;
        Self::new(m.d0(), &m.d_total())
    }

    /// Reduced moment `φ N^r e`.
    pub fn reduced(&self, r: u32) -> f64 {
        let mut v = self.phi;
        for _ in 0..r {
            v *= self.neg_inv;
        }
        v[0] + v[1]
    }

    pub fn moment(&self, r: u32) -> f64 {
        factorial(r) * self.reduced(r)
    }

    pub fn time(&self) -> Result<TimeDescriptors> {
        let mu = [self.moment(1), self.moment(2), self.moment(3), self.moment(4)];
        let rho1 = rho_from(mu[0], mu[1], self.gamma, 1)?;
        Ok(TimeDescriptors { mu, gamma: self.gamma, rho1 })
    }

    /// `φ N M e` for a diagonal-like matrix `M`.
    fn phi_n(&self, m: &Mat2) -> f64 {
        (self.phi * self.neg_inv * m * ones())[0]
    }
}

fn factorial(r: u32) -> f64 {
    (1..=r).fold(1.0, |acc, k| acc * k as f64)
}

fn rho_from(mu1: f64, mu2: f64, gamma: f64, lag: u32) -> Result<f64> {
    let var = mu2 - mu1 * mu1;
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance { mu2, mu1_sq: mu1 * mu1 });
    }
    Ok(gamma.powi(lag as i32) * (mu2 - 2.0 * mu1 * mu1) / (2.0 * var))
}

/// Inter-event descriptors of an arbitrary two-state MAP `{d0, d1}`.
pub fn map2_time_descriptors(d0: &Mat2, d1: &Mat2) -> Result<TimeDescriptors> {
    Core::new(d0, d1)?.time()
}

pub fn stationary_vectors(m: &BmmppModel) -> Result<StationaryVectors> {
    let c = Core::for_model(m)?;
    Ok(StationaryVectors {
        pi: [c.pi[0], c.pi[1]],
        phi: [c.phi[0], c.phi[1]],
        pstar: [[c.pstar[(0, 0)], c.pstar[(0, 1)]], [c.pstar[(1, 0)], c.pstar[(1, 1)]]],
        gamma: c.gamma,
    })
}

/// `μ_r = r! φ (-D0)^{-r} e`.
pub fn time_moment(m: &BmmppModel, r: u32) -> Result<f64> {
    Ok(Core::for_model(m)?.moment(r))
}

/// `ρ_T(l) = γ^l (μ2 - 2μ1²) / (2(μ2 - μ1²))`.
pub fn rho_t(m: &BmmppModel, lag: u32) -> Result<f64> {
    let c = Core::for_model(m)?;
    rho_from(c.moment(1), c.moment(2), c.gamma, lag)
}

/// `P(B = k) = φ (-D0)^{-1} D_k e`, k = 1..K.
pub fn batch_pmf(m: &BmmppModel) -> Result<Vec<f64>> {
    let c = Core::for_model(m)?;
    Ok((1..=m.k()).map(|k| c.phi_n(&m.d(k))).collect())
}

/// `β_r = φ (-D0)^{-1} D*_r e`.
pub fn batch_moment(m: &BmmppModel, r: u32) -> Result<f64> {
    let c = Core::for_model(m)?;
    Ok(c.phi_n(&m.d_star(r as i32)))
}

fn rho_b_with(c: &Core, m: &BmmppModel, lag: u32) -> Result<f64> {
    let d1s = m.d_star(1);
    let beta1 = c.phi_n(&d1s);
    let var = c.phi_n(&m.d_star(2)) - beta1 * beta1;
    if !(var > 1e-300) {
        return Err(Error::ZeroBatchVariance);
    }
    let mut v = c.phi * c.neg_inv * d1s;
    for _ in 1..lag {
        v *= c.pstar;
    }
    let joint = (v * c.neg_inv * d1s * ones())[0];
    Ok((joint - beta1 * beta1) / var)
}

/// Lag-`l` autocorrelation of the batch-size sequence.
pub fn rho_b(m: &BmmppModel, lag: u32) -> Result<f64> {
    let c = Core::for_model(m)?;
    rho_b_with(&c, m, lag)
}

/// `η = E[TB] = φ (-D0)^{-2} D*_1 e`.
pub fn eta(m: &BmmppModel) -> Result<f64> {
    let c = Core::for_model(m)?;
    Ok(eta_with(&c, m))
}

fn eta_with(c: &Core, m: &BmmppModel) -> f64 {
    (c.phi * c.neg_inv * c.neg_inv * m.d_star(1) * ones())[0]
}

/// `cov(T, B) = η - μ1 β1` and the correlation, which is `None` when the
/// batch size is constant.
pub fn cov_corr_tb(m: &BmmppModel) -> Result<(f64, Option<f64>)> {
    let c = Core::for_model(m)?;
    Ok(cov_corr_with(&c, m))
}

fn cov_corr_with(c: &Core, m: &BmmppModel) -> (f64, Option<f64>) {
    let mu1 = c.moment(1);
    let beta1 = c.phi_n(&m.d_star(1));
    let cov = eta_with(c, m) - mu1 * beta1;
    let var_t = c.moment(2) - mu1 * mu1;
    let var_b = c.phi_n(&m.d_star(2)) - beta1 * beta1;
    let corr = if var_b > 1e-300 && var_t > 0.0 { Some(cov / (var_t * var_b).sqrt()) } else { None };
    (cov, corr)
}

/// `(β1, η)` of the sub-process isolating batch size `i`.
pub fn sub_pair(m: &BmmppModel, i: usize) -> Result<(f64, f64)> {
    let sub = m.sub_bmmpp2(i)?;
    let c = Core::for_model(&sub)?;
    Ok((c.phi_n(&sub.d_star(1)), eta_with(&c, &sub)))
}

/// The `2(K+1)` characterizing moments.
pub fn moment_set(m: &BmmppModel) -> Result<MomentSet> {
    let c = Core::for_model(m)?;
    let t = c.time()?;
    let mut beta1 = Vec::with_capacity(m.k().saturating_sub(1));
    let mut eta = Vec::with_capacity(m.k().saturating_sub(1));
    for i in 1..m.k() {
        let (b, e) = sub_pair(m, i)?;
        beta1.push(b);
        eta.push(e);
    }
    Ok(MomentSet { mu1: t.mu[0], mu2: t.mu[1], mu3: t.mu[2], rho_t1: t.rho1, beta1, eta })
}

/// Shape statistics as reported in descriptor tables: `μ3/σ³` and `μ4/σ⁴`
/// with raw (non-central) moments in the numerators.
pub fn shape_stats(mu: [f64; 4]) -> (f64, f64, f64) {
    let sd = (mu[1] - mu[0] * mu[0]).sqrt();
    (sd / mu[0], mu[2] / sd.powi(3), mu[3] / sd.powi(4))
}

/// Full descriptor report with [`REPORT_LAGS`] lags.
pub fn describe(m: &BmmppModel) -> Result<DescriptorReport> {
    let c = Core::for_model(m)?;
    let t = c.time()?;
    let (cv, skewness, kurtosis) = shape_stats(t.mu);
    let rho_t = (1..=REPORT_LAGS).map(|l| Ok((l, rho_from(t.mu[0], t.mu[1], c.gamma, l)?))).collect::<Result<_>>()?;
    let beta = (1..=3).map(|r| (r, c.phi_n(&m.d_star(r as i32)))).collect();
    let rho_b = (1..=REPORT_LAGS).filter_map(|l| rho_b_with(&c, m, l).ok().map(|v| (l, v))).collect();
    let (cov_tb, corr_tb) = cov_corr_with(&c, m);
    let pmf_b = (1..=m.k()).map(|k| c.phi_n(&m.d(k))).collect();
    let ms = moment_set(m)?;
    Ok(DescriptorReport {
        mu1: t.mu[0],
        mu2: t.mu[1],
        mu3: t.mu[2],
        rho_t,
        beta,
        rho_b,
        eta: eta_with(&c, m),
        cov_tb,
        corr_tb,
        cv,
        skewness,
        kurtosis,
        pmf_b,
        beta1_sub: ms.beta1,
        eta_sub: ms.eta,
    })
}

impl DescriptorReport {
    /// Named rows in table order. Undefined entries are omitted.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = vec![("mu1".to_string(), self.mu1), ("mu2".into(), self.mu2), ("mu3".into(), self.mu3)];
        if let Some(v) = self.rho_t.get(&1) {
            out.push(("rhoT1".into(), *v));
        }
        for (i, (b, e)) in self.beta1_sub.iter().zip(&self.eta_sub).enumerate() {
            out.push((format!("beta1_{}", i + 1), *b));
            out.push((format!("eta_{}", i + 1), *e));
        }
        out.push(("cv".into(), self.cv));
        out.push(("skewness".into(), self.skewness));
        out.push(("kurtosis".into(), self.kurtosis));
        for (r, v) in &self.beta {
            out.push((format!("beta{r}"), *v));
        }
        out.push(("eta".into(), self.eta));
        out.push(("cov".into(), self.cov_tb));
        if let Some(c) = self.corr_tb {
            out.push(("corr".into(), c));
        }
        for (l, v) in &self.rho_b {
            out.push((format!("rhoB{l}"), *v));
        }
        for (l, v) in self.rho_t.iter().filter(|(l, _)| **l > 1) {
            out.push((format!("rhoT{l}"), *v));
        }
        for (k, p) in self.pmf_b.iter().enumerate() {
            out.push((format!("P(B={})", k + 1), *p));
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn csv_header(&self) -> String {
        self.rows().into_iter().map(|(n, _)| n).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.rows().into_iter().map(|(_, v)| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }
}

/// Side-by-side rows `(name, left, right)` for names present in both reports.
pub fn compare(left: &DescriptorReport, right: &DescriptorReport) -> Vec<(String, f64, f64)> {
    let r = right.rows();
    left.rows()
        .into_iter()
        .filter_map(|(n, a)| r.iter().find(|(m, _)| *m == n).map(|(_, b)| (n, a, *b)))
        .collect()
}
