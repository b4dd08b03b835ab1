//! The BMMPP₂(K) parameter object and its derived constructions.
//!
//! A model is stored as the silent-transition matrix `D0 = [[x, y], [r, u]]`
//! and the diagonals of the batch matrices `D1..DK`. Row sums of
//! `D0 + D1 + ... + DK` vanish, so `DK` is determined by the others.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag, Mat2};

/// Absolute tolerance for row sums and probability sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Two-state batch Markov modulated Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct BmmppModel {
    d0: Mat2,
    /// Diagonals `(w_k, q_k)` of `D_k`, for k = 1..=K.
    dk: Vec<[f64; 2]>,
}

/// Two-state MMPP `{G0, G1}` with diagonal `G1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmppModel {
    pub g0: Mat2,
    pub g1: [f64; 2],
}

/// Probability parameterization: sojourn rates and per-state outcome
/// probabilities (silent switch, or batch of size k with no state change).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbParam {
    pub lambda: [f64; 2],
    pub p120: f64,
    pub p210: f64,
    /// `p11k` for k = 1..=K.
    pub p11: Vec<f64>,
    /// `p22k` for k = 1..=K.
    pub p22: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Warning {
    /// `y = 0` or `r = 0`: simulation is fine, stationary analysis is not.
    Reducible,
    /// Both event rates are zero.
    ZeroEventRate,
    /// `w_k = q_k = 0`: batch size k never occurs.
    BatchNeverOccurs(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn violate(&mut self, invariant: impl Into<String>, value: f64) {
        self.violations.push(Violation { invariant: invariant.into(), value });
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            let msg = self
                .violations
                .iter()
                .map(|v| format!("{} ({})", v.invariant, v.value))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidModel(msg))
        }
    }
}

fn clamp_tiny(v: f64, tol: f64) -> f64 {
    if v < 0.0 && v > -tol {
        0.0
    } else {
        v
    }
}

impl BmmppModel {
    /// Builds a model from `D0` and all K batch diagonals. Entries of `D_K`
    /// that are negative by less than the row-sum tolerance are clamped to 0.
    /// Invariants are checked by [`BmmppModel::validate`], not here.
    pub fn new(d0: Mat2, mut dk: Vec<[f64; 2]>) -> Result<Self> {
        if dk.is_empty() {
            return Err(Error::InvalidModel("K must be at least 1".into()));
        }
        if d0.iter().chain(dk.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        let tol = ROW_SUM_TOL * d0[(0, 0)].abs().max(d0[(1, 1)].abs()).max(1.0);
        if let Some(last) = dk.last_mut() {
            last[0] = clamp_tiny(last[0], tol);
            last[1] = clamp_tiny(last[1], tol);
        }
        Ok(Self { d0, dk })
    }

    /// Builds a model from `D0` and the interior diagonals `D1..D_{K-1}`;
    /// `D_K` closes the row sums as in the rate-matrix representation.
    pub fn from_interior(d0: Mat2, interior: &[[f64; 2]]) -> Result<Self> {
        let mut dk = interior.to_vec();
        let w_sum: f64 = interior.iter().map(|d| d[0]).sum();
        let q_sum: f64 = interior.iter().map(|d| d[1]).sum();
        dk.push([
            -d0[(0, 0)] - d0[(0, 1)] - w_sum,
            -d0[(1, 0)] - d0[(1, 1)] - q_sum,
        ]);
        Self::new(d0, dk)
    }

    /// Rate matrices from the probability parameterization:
    /// `x = -λ1, u = -λ2, y = λ1 p120, r = λ2 p210, w_k = λ1 p11k, q_k = λ2 p22k`.
    pub fn from_prob_params(p: &ProbParam) -> Result<Self> {
        if p.p11.is_empty() || p.p11.len() != p.p22.len() {
            return Err(Error::InvalidProbability("p11 and p22 must have the same length K >= 1".into()));
        }
        if !(p.lambda[0] > 0.0 && p.lambda[1] > 0.0) {
            return Err(Error::InvalidProbability(format!("rates must be positive, got {:?}", p.lambda)));
        }
        let all = [p.p120, p.p210].into_iter().chain(p.p11.iter().copied()).chain(p.p22.iter().copied());
        for v in all {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!("probability {v} outside [0, 1]")));
            }
        }
        let row1 = p.p120 + p.p11.iter().sum::<f64>();
        let row2 = p.p210 + p.p22.iter().sum::<f64>();
        if (row1 - 1.0).abs() > ROW_SUM_TOL || (row2 - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidProbability(format!("rows sum to {row1} and {row2}, expected 1")));
        }
        let [l1, l2] = p.lambda;
        let d0 = Mat2::new(-l1, l1 * p.p120, l2 * p.p210, -l2);
        let dk = p.p11.iter().zip(&p.p22).map(|(a, b)| [l1 * a, l2 * b]).collect();
        Self::new(d0, dk)
    }

    /// Inverse of [`BmmppModel::from_prob_params`].
    pub fn to_prob_params(&self) -> ProbParam {
        let l1 = -self.x();
        let l2 = -self.u();
        ProbParam {
            lambda: [l1, l2],
            p120: self.y() / l1,
            p210: self.r() / l2,
            p11: self.dk.iter().map(|d| d[0] / l1).collect(),
            p22: self.dk.iter().map(|d| d[1] / l2).collect(),
        }
    }

    /// Maximum batch size.
    pub fn k(&self) -> usize {
        self.dk.len()
    }

    pub fn d0(&self) -> &Mat2 {
        &self.d0
    }

    pub fn x(&self) -> f64 {
        self.d0[(0, 0)]
    }
    pub fn y(&self) -> f64 {
        self.d0[(0, 1)]
    }
    pub fn r(&self) -> f64 {
        self.d0[(1, 0)]
    }
    pub fn u(&self) -> f64 {
        self.d0[(1, 1)]
    }

    /// `w_k`, the state-1 rate of batches of size `k` (1-based).
    pub fn w(&self, k: usize) -> f64 {
        self.dk[k - 1][0]
    }

    /// `q_k`, the state-2 rate of batches of size `k` (1-based).
    pub fn q(&self, k: usize) -> f64 {
        self.dk[k - 1][1]
    }

    /// Diagonals of `D1..DK`.
    pub fn batch_diagonals(&self) -> &[[f64; 2]] {
        &self.dk
    }

    /// `D_k` as a matrix (1-based).
    pub fn d(&self, k: usize) -> Mat2 {
        let [a, b] = self.dk[k - 1];
        diag(a, b)
    }

    /// `D = D1 + ... + DK`.
    pub fn d_total(&self) -> Mat2 {
        let [a, b] = self.event_rates();
        diag(a, b)
    }

    /// `D*_r = Σ k^r D_k`.
    pub fn d_star(&self, power: i32) -> Mat2 {
        let (a, b) = self.dk.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, d)| {
            let kr = ((i + 1) as f64).powi(power);
            (a + kr * d[0], b + kr * d[1])
        });
        diag(a, b)
    }

    /// Total event rate in each state, `(Σ w_k, Σ q_k)`.
    pub fn event_rates(&self) -> [f64; 2] {
        self.dk.iter().fold([0.0, 0.0], |acc, d| [acc[0] + d[0], acc[1] + d[1]])
    }

    /// Generator of the phase process, `Q = D0 + D`.
    pub fn generator(&self) -> Mat2 {
        self.d0 + self.d_total()
    }

    pub fn is_irreducible(&self) -> bool {
        self.y() > 0.0 && self.r() > 0.0
    }

    /// Row-sum tolerance: [`ROW_SUM_TOL`] for rates up to 1, scaled by the
    /// largest exit rate beyond that.
    pub fn row_sum_tol(&self) -> f64 {
        ROW_SUM_TOL * self.x().abs().max(self.u().abs()).max(1.0)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        if !(self.x() < 0.0) {
            rep.violate("x < 0", self.x());
        }
        if !(self.u() < 0.0) {
            rep.violate("u < 0", self.u());
        }
        if self.y() < 0.0 {
            rep.violate("y >= 0", self.y());
        }
        if self.r() < 0.0 {
            rep.violate("r >= 0", self.r());
        }
        for (i, d) in self.dk.iter().enumerate() {
            if d[0] < 0.0 {
                rep.violate(format!("w_{} >= 0", i + 1), d[0]);
            }
            if d[1] < 0.0 {
                rep.violate(format!("q_{} >= 0", i + 1), d[1]);
            }
        }
        let rates = self.event_rates();
        let row1 = self.x() + self.y() + rates[0];
        let row2 = self.r() + self.u() + rates[1];
        let tol = self.row_sum_tol();
        if row1.abs() > tol {
            rep.violate("row 1 sum of D0 + D1 + ... + DK = 0", row1);
        }
        if row2.abs() > tol {
            rep.violate("row 2 sum of D0 + D1 + ... + DK = 0", row2);
        }
        if !self.is_irreducible() {
            rep.warnings.push(Warning::Reducible);
        }
        if rates[0] == 0.0 && rates[1] == 0.0 {
            rep.warnings.push(Warning::ZeroEventRate);
        }
        for (i, d) in self.dk.iter().enumerate() {
            if d[0] == 0.0 && d[1] == 0.0 && self.k() > 1 {
                rep.warnings.push(Warning::BatchNeverOccurs(i + 1));
            }
        }
        rep
    }

    /// Errors unless the model is valid and irreducible with a positive event
    /// rate; the precondition of every stationary descriptor.
    pub fn require_stationary(&self) -> Result<()> {
        self.validate().into_result()?;
        if !self.is_irreducible() {
            return Err(Error::Reducible { y: self.y(), r: self.r() });
        }
        let rates = self.event_rates();
        if rates[0] + rates[1] <= 0.0 {
            return Err(Error::ZeroEventRate);
        }
        Ok(())
    }

    /// MMPP `{D0, D1 + ... + DK}` sharing every inter-event descriptor.
    pub fn embedded_mmpp(&self) -> MmppModel {
        MmppModel { g0: self.d0, g1: self.event_rates() }
    }

    /// The BMMPP₂(2) `{D0, D_i, Σ_{k≠i} D_k}` isolating batch size `i`.
    pub fn sub_bmmpp2(&self, i: usize) -> Result<BmmppModel> {
        if i == 0 || i > self.k() {
            return Err(Error::IndexOutOfRange { index: i, k: self.k() });
        }
        let di = self.dk[i - 1];
        let total = self.event_rates();
        let rest = [total[0] - di[0], total[1] - di[1]];
        BmmppModel::new(self.d0, vec![di, [rest[0].max(0.0), rest[1].max(0.0)]])
    }

    /// Swaps the two states in every matrix.
    pub fn permute_states(&self) -> BmmppModel {
        let d0 = Mat2::new(self.u(), self.r(), self.y(), self.x());
        let dk = self.dk.iter().map(|d| [d[1], d[0]]).collect();
        BmmppModel { d0, dk }
    }

    /// Orders the states so that `x + y >= r + u`; ties keep the input order.
    pub fn normalize_state_order(&self) -> BmmppModel {
        if self.x() + self.y() >= self.r() + self.u() {
            self.clone()
        } else {
            self.permute_states()
        }
    }

    /// Maps a model to its file representation.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

impl MmppModel {
    pub fn new(g0: Mat2, g1: [f64; 2]) -> Self {
        Self { g0, g1 }
    }

    /// MMPP whose event rates close the row sums of `g0`.
    pub fn from_g0(g0: Mat2) -> Self {
        let g1 = [-g0[(0, 0)] - g0[(0, 1)], -g0[(1, 0)] - g0[(1, 1)]];
        let tol = ROW_SUM_TOL * g0[(0, 0)].abs().max(g0[(1, 1)].abs()).max(1.0);
        Self { g0, g1: [clamp_tiny(g1[0], tol), clamp_tiny(g1[1], tol)] }
    }

    pub fn g1_matrix(&self) -> Mat2 {
        diag(self.g1[0], self.g1[1])
    }

    pub fn as_bmmpp(&self) -> BmmppModel {
        BmmppModel { d0: self.g0, dk: vec![self.g1] }
    }

    pub fn validate(&self) -> ValidationReport {
        self.as_bmmpp().validate()
    }

    pub fn normalize_state_order(&self) -> MmppModel {
        self.as_bmmpp().normalize_state_order().embedded_mmpp()
    }
}

/// MAP with i.i.d. batch sizes: `D_k = G1 p_k`.
pub fn make_iid_batch(mmpp: &MmppModel, pmf: &[f64]) -> Result<BmmppModel> {
    if pmf.is_empty() {
        return Err(Error::InvalidPmf("empty pmf".into()));
    }
    if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidPmf("entries must lie in [0, 1]".into()));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidPmf(format!("sums to {total}")));
    }
    let dk = pmf.iter().map(|p| [mmpp.g1[0] * p, mmpp.g1[1] * p]).collect();
    BmmppModel::new(mmpp.g0, dk)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D0")]
    d0: [[f64; 2]; 2],
    #[serde(rename = "Dk")]
    dk: Vec<[f64; 2]>,
}

impl TryFrom<ModelFile> for BmmppModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.dk.len() != f.k {
            return Err(Error::InvalidModel(format!("K = {} but {} batch diagonals given", f.k, f.dk.len())));
        }
        let d0 = Mat2::new(f.d0[0][0], f.d0[0][1], f.d0[1][0], f.d0[1][1]);
        BmmppModel::new(d0, f.dk)
    }
}

impl From<BmmppModel> for ModelFile {
    fn from(m: BmmppModel) -> Self {
        ModelFile {
            k: m.k(),
            d0: [[m.x(), m.y()], [m.r(), m.u()]],
            dk: m.dk,
        }
    }
}
