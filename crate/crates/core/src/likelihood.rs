//! Trace log-likelihood and an EM estimator for the hidden phase process.

use serde::Serialize;

use crate::descriptors::{moment_set, stationary_vectors};
use crate::error::{Error, Result};
use crate::fit::{FitResult, StageReport};
use crate::linalg::{expm2, ones, van_loan_integral, Mat2, RowVec2, Vec2};
use crate::model::BmmppModel;
use crate::simulate::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodValue {
    pub loglik: f64,
    pub n: usize,
    /// `log c_i`, the per-event normalizers of the forward pass.
    pub log_scales: Vec<f64>,
}

fn check_inputs(m: &BmmppModel, trace: &Trace) -> Result<()> {
    m.validate().into_result()?;
    trace.validate(Some(m.k()))
}

fn phi_row(m: &BmmppModel) -> Result<RowVec2> {
    let sv = stationary_vectors(m)?;
    Ok(RowVec2::new(sv.phi[0], sv.phi[1]))
}

/// Forward pass from `alpha0`, returning the per-event log normalizers.
fn forward_scales(m: &BmmppModel, trace: &Trace, alpha0: RowVec2) -> Result<Vec<f64>> {
    let d0 = m.d0();
    let mut alpha = alpha0;
    let mut out = Vec::with_capacity(trace.len());
    for (&t, &b) in trace.t.iter().zip(&trace.b) {
        let dk = m.batch_diagonals()[b - 1];
        let v = alpha * expm2(&(d0 * t));
        let next = RowVec2::new(v[0] * dk[0], v[1] * dk[1]);
        let c = next[0] + next[1];
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Degenerate(format!("zero likelihood contribution at event {}", out.len())));
        }
        alpha = next / c;
        out.push(c.ln());
    }
    Ok(out)
}

/// `log φ Π exp(D0 t_i) D_{b_i} e`, normalized after every event.
pub fn loglik(m: &BmmppModel, trace: &Trace) -> Result<LikelihoodValue> {
    check_inputs(m, trace)?;
    let log_scales = forward_scales(m, trace, phi_row(m)?)?;
    Ok(LikelihoodValue { loglik: log_scales.iter().sum(), n: trace.len(), log_scales })
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when the log-likelihood gains less than this.
    pub tol: f64,
    /// Allowed decrease per iteration, relative to `max(1, |loglik|)`.
    pub slack: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-8, slack: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmFit {
    pub model: BmmppModel,
    /// Initial phase distribution estimated jointly with the rates.
    pub initial: [f64; 2],
    /// Log-likelihood under the estimated initial vector, one per iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the final model under its own `φ`.
    pub loglik: f64,
}

struct Stats {
    /// Expected time in each state.
    z: [f64; 2],
    /// Expected silent switches out of each state.
    n: [f64; 2],
    /// Expected batch-k emissions per state.
    m: Vec<[f64; 2]>,
    initial: [f64; 2],
    loglik: f64,
}

fn e_step(model: &BmmppModel, trace: &Trace, init: RowVec2) -> Result<Stats> {
    let d0 = model.d0();
    let n = trace.len();
    let props: Vec<Mat2> = trace.t.iter().map(|&t| expm2(&(d0 * t))).collect();
    let dk = model.batch_diagonals();
    // Forward, storing α_{i-1} and the normalizers.
    let mut alphas = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut alpha = init;
    for i in 0..n {
        alphas.push(alpha);
        let v = alpha * props[i];
        let d = dk[trace.b[i] - 1];
        let next = RowVec2::new(v[0] * d[0], v[1] * d[1]);
        let c = next[0] + next[1];
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Degenerate(format!("zero likelihood contribution at event {i}")));
        }
        scales.push(c);
        alpha = next / c;
    }
    // Backward with the same normalizers.
    let mut st = Stats { z: [0.0; 2], n: [0.0; 2], m: vec![[0.0; 2]; model.k()], initial: [0.0; 2], loglik: 0.0 };
    let mut beta: Vec2 = ones();
    for i in (0..n).rev() {
        let d = dk[trace.b[i] - 1];
        let c = scales[i];
        let v = Vec2::new(d[0] * beta[0], d[1] * beta[1]);
        let a = alphas[i];
        // X = ∫ exp(D0 (t-s)) v a exp(D0 s) ds, so X[k][j] pairs state j at
        // time s with state k just after.
        let x = van_loan_integral(d0, &(v * a), trace.t[i]);
        st.z[0] += x[(0, 0)] / c;
        st.z[1] += x[(1, 1)] / c;
        st.n[0] += d0[(0, 1)] * x[(1, 0)] / c;
        st.n[1] += d0[(1, 0)] * x[(0, 1)] / c;
        let ae = a * props[i];
        let bk = trace.b[i] - 1;
        st.m[bk][0] += ae[0] * d[0] * beta[0] / c;
        st.m[bk][1] += ae[1] * d[1] * beta[1] / c;
        beta = props[i] * v / c;
    }
    let post = RowVec2::new(init[0] * beta[0], init[1] * beta[1]);
    let s = post[0] + post[1];
    st.initial = [post[0] / s, post[1] / s];
    st.loglik = scales.iter().map(|c| c.ln()).sum();
    Ok(st)
}

fn m_step(st: &Stats, k: usize) -> Result<BmmppModel> {
    if !(st.z[0] > 0.0 && st.z[1] > 0.0) {
        return Err(Error::Degenerate("a state has zero expected sojourn time".into()));
    }
    let y = st.n[0] / st.z[0];
    let r = st.n[1] / st.z[1];
    let dk: Vec<[f64; 2]> = (0..k).map(|j| [st.m[j][0] / st.z[0], st.m[j][1] / st.z[1]]).collect();
    let l1: f64 = dk.iter().map(|d| d[0]).sum();
    let l2: f64 = dk.iter().map(|d| d[1]).sum();
    BmmppModel::new(Mat2::new(-y - l1, y, r, -r - l2), dk)
}

/// EM for the hidden two-state chain with marked self-transitions. The
/// initial phase vector starts at `φ` of `init` and is re-estimated with the
/// rates, which makes every iteration non-decreasing in likelihood.
pub fn em_fit(trace: &Trace, k: usize, init: &BmmppModel, opts: &EmOptions) -> Result<EmFit> {
    if init.k() != k {
        return Err(Error::InvalidModel(format!("initial model has K = {}, expected {k}", init.k())));
    }
    check_inputs(init, trace)?;
    let mut model = init.clone();
    let mut alpha0 = phi_row(init)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let st = e_step(&model, trace, alpha0)?;
        if let Some(prev) = history.last().copied() {
            let drop: f64 = prev - st.loglik;
            if drop > opts.slack * f64::max(1.0, st.loglik.abs()) {
                return Err(Error::NonMonotoneEm { iteration: iterations, drop });
            }
            history.push(st.loglik);
            if (st.loglik - prev).abs() < opts.tol {
                converged = true;
                break;
            }
        } else {
            history.push(st.loglik);
        }
        model = m_step(&st, k)?;
        alpha0 = RowVec2::new(st.initial[0], st.initial[1]);
        iterations += 1;
    }
    let loglik = if model.is_irreducible() { loglik(&model, trace)?.loglik } else { f64::NAN };
    Ok(EmFit { model, initial: [alpha0[0], alpha0[1]], history, iterations, converged, loglik })
}

impl EmFit {
    /// Same layout as the moment-matching result.
    pub fn into_fit_result(self, wall_time: std::time::Duration) -> Result<FitResult> {
        let fitted = moment_set(&self.model)?;
        Ok(FitResult {
            stages: vec![StageReport {
                stage: "EM".into(),
                objective: -self.loglik,
                iterations: self.iterations,
                converged: self.converged,
                starts: 1,
                converged_starts: usize::from(self.converged),
            }],
            model: self.model,
            empirical: None,
            fitted,
            wall_time,
        })
    }
}
