//! BMMPP/M/1 queue length at departure epochs by the M/G/1-type
//! matrix-analytic method, with an event-driven simulation oracle.

use std::str::FromStr;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::descriptors::{batch_moment, stationary_vectors, time_moment};
use crate::error::{Error, Result};
use crate::linalg::{inv2, ones, stochastic_stationary, Mat2, RowVec2};
use crate::model::BmmppModel;
use crate::simulate::{initial_state, InitialPhase, RngSpec, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueSpec {
    /// Service rate `μ*`.
    pub service_rate: f64,
    /// Fixed-point tolerance for `G` (max-norm change per iteration).
    pub tol: f64,
    /// Tail cut: levels are added until `Σ z_i ≥ 1 - eps`.
    pub eps: f64,
    pub max_iter: usize,
    pub max_levels: usize,
}

impl Default for QueueSpec {
    fn default() -> Self {
        Self { service_rate: 1.0, tol: 1e-14, eps: 1e-10, max_iter: 200_000, max_levels: 1_000_000 }
    }
}

impl QueueSpec {
    pub fn with_service_rate(service_rate: f64) -> Self {
        Self { service_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.service_rate > 0.0) || !self.service_rate.is_finite() {
            return Err(Error::infeasible("service rate > 0", self.service_rate));
        }
        for (name, v) in [("0 < tol < 1", self.tol), ("0 < eps < 1", self.eps)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::infeasible(name, v));
            }
        }
        Ok(())
    }
}

/// Which arrival rate a load value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoKind {
    /// Batches per service time, `λ*/μ*`.
    Batch,
    /// Customers per service time, `λ* β1 / μ*`.
    Customer,
}

impl FromStr for RhoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Self::Batch),
            "customer" => Ok(Self::Customer),
            other => Err(Error::Parse { line: 0, message: format!("unknown load kind '{other}'") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficIntensity {
    pub rho_batch: f64,
    pub rho_customer: f64,
}

/// Batch-level and customer-level loads; stability needs `rho_customer < 1`.
pub fn traffic_intensity(m: &BmmppModel, spec: &QueueSpec) -> Result<TrafficIntensity> {
    let lam = 1.0 / time_moment(m, 1)?;
    let beta1 = batch_moment(m, 1)?;
    Ok(TrafficIntensity { rho_batch: lam / spec.service_rate, rho_customer: lam * beta1 / spec.service_rate })
}

/// Service rate giving load `rho` of the requested kind.
pub fn service_rate_for(m: &BmmppModel, rho: f64, kind: RhoKind) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::infeasible("rho > 0", rho));
    }
    let lam = 1.0 / time_moment(m, 1)?;
    Ok(match kind {
        RhoKind::Batch => lam / rho,
        RhoKind::Customer => lam * batch_moment(m, 1)? / rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueLengthDist {
    /// `z_i`: probability that a departure leaves `i` customers behind.
    pub z: Vec<f64>,
    /// `1 - Σ z_i`.
    pub tail_mass: f64,
}

impl QueueLengthDist {
    pub fn mean(&self) -> f64 {
        self.z.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    /// `P(L > i)` for each level, from the truncated vector.
    pub fn tail(&self) -> Vec<f64> {
        let mut acc = 1.0 - self.tail_mass;
        self.z
            .iter()
            .map(|p| {
                acc -= p;
                acc.max(0.0)
            })
            .collect()
    }
}

/// Customer arrivals during one service: `A_n` for `n = 0..` until the row
/// sums are within `tail` of one.
fn service_blocks(m: &BmmppModel, mu: f64, tail: f64, cap: usize) -> Result<Vec<Mat2>> {
    let d0 = *m.d0();
    let r = inv2(&(Mat2::identity() * mu - d0)).ok_or(Error::Singular("mu I - D0"))?;
    let dk: Vec<Mat2> = (1..=m.k()).map(|k| m.d(k)).collect();
    let mut a = vec![r * mu];
    loop {
        let mass = a.iter().fold(Mat2::zeros(), |s, x| s + x) * ones();
        if 1.0 - mass.min() < tail {
            return Ok(a);
        }
        if a.len() >= cap {
            return Err(Error::TruncationBudget(format!("service blocks exceed {cap} levels")));
        }
        let n = a.len();
        let mut s = Mat2::zeros();
        for (k, d) in dk.iter().enumerate().take(n) {
            s += a[n - k - 1] * d;
        }
        a.push(s * r);
    }
}

/// Minimal nonnegative solution of `G = Σ A_n G^n`, iterating
/// `G ← (I - Σ_{n≥1} A_n G^{n-1})⁻¹ A_0`.
fn g_matrix(a: &[Mat2], tol: f64, max_iter: usize) -> Result<Mat2> {
    let mut g = Mat2::zeros();
    for _ in 0..max_iter {
        let mut s = Mat2::zeros();
        for blk in a[1..].iter().rev() {
            s = blk + s * g;
        }
        let next = inv2(&(Mat2::identity() - s)).ok_or(Error::Singular("I - U"))? * a[0];
        let diff = (next - g).abs().max();
        g = next;
        if diff < tol {
            return Ok(g);
        }
    }
    Err(Error::NoConvergence(format!("G iteration did not reach {tol:.1e} in {max_iter} steps")))
}

/// `X̄_i = Σ_{k≥i} X_k G^{k-i}` for `i = 0..len`.
fn bar(x: &[Mat2], g: &Mat2) -> Vec<Mat2> {
    let mut out = vec![Mat2::zeros(); x.len()];
    let mut acc = Mat2::zeros();
    for i in (0..x.len()).rev() {
        acc = x[i] + acc * g;
        out[i] = acc;
    }
    out
}

/// Stationary distribution of the number left behind by a departure.
pub fn queue_length_at_departures(m: &BmmppModel, spec: &QueueSpec) -> Result<QueueLengthDist> {
    m.validate().into_result()?;
    spec.validate()?;
    let load = traffic_intensity(m, spec)?;
    if load.rho_customer >= 1.0 {
        return Err(Error::Unstable { rho: load.rho_customer });
    }
    let mu = spec.service_rate;
    let a = service_blocks(m, mu, spec.eps * 1e-3, spec.max_levels)?;
    let g = g_matrix(&a, spec.tol, spec.max_iter)?;

    // Idle start: the first batch (size k) arrives, one of its customers is
    // served while n + 1 - k more arrive.
    let neg_inv = inv2(&-m.d0()).ok_or(Error::Singular("D0"))?;
    let kmax = m.k();
    let mut b = vec![Mat2::zeros(); a.len() + kmax - 1];
    for (n, bn) in b.iter_mut().enumerate() {
        for k in 1..=kmax.min(n + 1) {
            if let Some(ak) = a.get(n + 1 - k) {
                *bn += neg_inv * m.d(k) * ak;
            }
        }
    }
    let abar = bar(&a, &g);
    let bbar = bar(&b, &g);
    let kappa = stochastic_stationary(&bbar[0]).ok_or(Error::Singular("boundary matrix"))?;
    let lam_c = batch_moment(m, 1)? / time_moment(m, 1)?;
    let idle = (kappa * neg_inv * ones())[0];
    let x0 = kappa * ((1.0 - load.rho_customer) / (lam_c * idle));

    let inv_a1 = inv2(&(Mat2::identity() - abar.get(1).copied().unwrap_or_else(Mat2::zeros)))
        .ok_or(Error::Singular("I - A1 bar"))?;
    let mut x: Vec<RowVec2> = vec![x0];
    let mut total = x0.sum();
    while total < 1.0 - spec.eps {
        let i = x.len();
        if i >= spec.max_levels {
            return Err(Error::TruncationBudget(format!(
                "queue tail {:.3e} above eps after {i} levels",
                1.0 - total
            )));
        }
        let mut acc = bbar.get(i).map(|bb| x0 * bb).unwrap_or_else(RowVec2::zeros);
        let lo = (i + 1).saturating_sub(abar.len() - 1).max(1);
        for j in lo..i {
            acc += x[j] * abar[i + 1 - j];
        }
        let xi = acc * inv_a1;
        total += xi.sum();
        x.push(xi);
    }
    let z: Vec<f64> = x.iter().map(|v| v.sum()).collect();
    let sum: f64 = z.iter().sum();
    Ok(QueueLengthDist { z, tail_mass: (1.0 - sum).max(0.0) })
}

/// The `G` matrix for the given service rate (exposed for diagnostics).
pub fn g_matrix_for(m: &BmmppModel, spec: &QueueSpec) -> Result<Mat2> {
    m.validate().into_result()?;
    spec.validate()?;
    let a = service_blocks(m, spec.service_rate, spec.eps * 1e-3, spec.max_levels)?;
    g_matrix(&a, spec.tol, spec.max_iter)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedQueue {
    /// Empirical departure-epoch distribution.
    pub z: Vec<f64>,
    /// Batch-means standard error of each `z_i`.
    pub se: Vec<f64>,
    pub departures: usize,
    pub warmup: usize,
}

/// Number of batches for the standard errors of [`simulate_queue`].
pub const SE_BATCHES: usize = 100;

/// Event-driven BMMPP/M/1 simulation recording the number left behind at
/// each of `n_departures` departures, after a warm-up of 1% (at least 1000).
pub fn simulate_queue(m: &BmmppModel, spec: &QueueSpec, n_departures: usize, rng: RngSpec) -> Result<SimulatedQueue> {
    m.validate().into_result()?;
    spec.validate()?;
    let load = traffic_intensity(m, spec)?;
    if load.rho_customer >= 1.0 {
        return Err(Error::Unstable { rho: load.rho_customer });
    }
    if n_departures < SE_BATCHES {
        return Err(Error::infeasible("departures >= 100", n_departures as f64));
    }
    stationary_vectors(m)?;
    let mut rng = rng.rng();
    let stepper = Stepper::new(m);
    let mut phase = initial_state(m, InitialPhase::StationaryPi, &mut rng)?;
    let warmup = (n_departures / 100).max(1000);
    let per_batch = n_departures / SE_BATCHES;
    let used = per_batch * SE_BATCHES;
    let mu = spec.service_rate;
    let mut len: usize = 0;
    let mut seen = 0usize;
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); SE_BATCHES];
    while seen < warmup + used {
        let mut next = phase;
        let (h, k) = stepper.step(&mut next, &mut rng);
        let service = if len > 0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / mu
        } else {
            f64::INFINITY
        };
        if service < h {
            len -= 1;
            if seen >= warmup {
                let bucket = &mut counts[(seen - warmup) / per_batch];
                if bucket.len() <= len {
                    bucket.resize(len + 1, 0);
                }
                bucket[len] += 1;
            }
            seen += 1;
        } else {
            phase = next;
            len += k;
        }
    }
    let levels = counts.iter().map(Vec::len).max().unwrap_or(0);
    let mut z = vec![0.0; levels];
    let mut se = vec![0.0; levels];
    for i in 0..levels {
        let frac: Vec<f64> =
            counts.iter().map(|c| c.get(i).copied().unwrap_or(0) as f64 / per_batch as f64).collect();
        let mean = frac.iter().sum::<f64>() / SE_BATCHES as f64;
        let var = frac.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (SE_BATCHES - 1) as f64;
        z[i] = mean;
        se[i] = (var / SE_BATCHES as f64).sqrt();
    }
    Ok(SimulatedQueue { z, se, departures: used, warmup })
}
