//! Canonical form of the two-state MAP and the moment characterization.
//!
//! The canonical MAP is
//! `C0 = [[-ζ1, (1-a)ζ1], [0, -ζ2]]`, `C1 = [[aζ1, 0], [(1-b)ζ2, bζ2]]`.
//! Its event-chain eigenvalue is `γ = ab` and its event-stationary vector is
//! `(1-b, b-ab)/(1-ab)`. An MMPP₂ maps to a unique canonical point and back,
//! and the four numbers `μ1, μ2, μ3, ρ_T(1)` pin that point down. Batch
//! rates are then recovered one sub-process at a time from `(β1, η)`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::descriptors::map2_time_descriptors;
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::model::{BmmppModel, MmppModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMap2 {
    pub zeta1: f64,
    pub zeta2: f64,
    pub a: f64,
    pub b: f64,
}

/// The characterizing moments of a BMMPP₂(K): `μ1, μ2, μ3, ρ_T(1)` and one
/// `(β1, η)` pair per isolating sub-process, i = 1..K-1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub rho_t1: f64,
    pub beta1: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Special structure detected while inverting moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    /// Exponential inter-event times; every symmetric representation fits.
    Poisson,
    /// `ρ_T(1) = 0` with non-exponential times: a renewal MMPP.
    Renewal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalSolution {
    pub map: CanonicalMap2,
    pub degeneracy: Option<Degeneracy>,
}

impl MomentSet {
    pub fn k(&self) -> usize {
        self.beta1.len() + 1
    }

    /// All values in a flat vector, time moments first.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.mu1, self.mu2, self.mu3, self.rho_t1];
        for (b, e) in self.beta1.iter().zip(&self.eta) {
            v.push(*b);
            v.push(*e);
        }
        v
    }

    /// Largest relative deviation between two moment sets. `ρ_T(1)` is
    /// compared relative to `max(|ρ|, floor)`.
    pub fn max_rel_diff(&self, other: &MomentSet, rho_floor: f64) -> f64 {
        let a = self.to_vec();
        let b = other.to_vec();
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter()
            .zip(&b)
            .enumerate()
            .map(|(i, (x, y))| {
                let scale = if i == 3 { y.abs().max(rho_floor) } else { y.abs().max(1e-300) };
                (x - y).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

impl CanonicalMap2 {
    pub fn matrices(&self) -> (Mat2, Mat2) {
        let (z1, z2, a, b) = (self.zeta1, self.zeta2, self.a, self.b);
        (
            Mat2::new(-z1, (1.0 - a) * z1, 0.0, -z2),
            Mat2::new(a * z1, 0.0, (1.0 - b) * z2, b * z2),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta1 > 0.0) {
            return Err(Error::infeasible("zeta1 > 0", self.zeta1));
        }
        if !(self.zeta2 > 0.0) {
            return Err(Error::infeasible("zeta2 > 0", self.zeta2));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::infeasible("0 <= a <= 1", self.a));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::infeasible("0 <= b <= 1", self.b));
        }
        Ok(())
    }

    /// `(μ1, μ2, μ3, ρ_T(1))` of the canonical MAP.
    pub fn time_moments(&self) -> Result<[f64; 4]> {
        let (c0, c1) = self.matrices();
        let t = map2_time_descriptors(&c0, &c1)?;
        Ok([t.mu[0], t.mu[1], t.mu[2], t.rho1])
    }
}

/// Canonical point of an MMPP₂. The states are reordered first so that the
/// first state has the smaller event rate.
pub fn mmpp_to_canonical(m: &MmppModel) -> Result<CanonicalMap2> {
    m.validate().into_result()?;
    let m = m.normalize_state_order();
    let (x, y, r, u) = (m.g0[(0, 0)], m.g0[(0, 1)], m.g0[(1, 0)], m.g0[(1, 1)]);
    if !(y > 0.0 && r > 0.0) {
        return Err(Error::Reducible { y, r });
    }
    let disc = ((u - x) * (u - x) + 4.0 * r * y).sqrt();
    let den = x + 2.0 * y - u + disc;
    if den == 0.0 {
        return Err(Error::Degenerate("x + 2y - u + sqrt((u-x)^2 + 4ry) = 0".into()));
    }
    let num = x - 2.0 * r - u - disc;
    let t = y * num / den;
    let zeta1 = -(x - t);
    let zeta2 = -(u + t);
    let c = CanonicalMap2 { zeta1, zeta2, a: (-x - y) / zeta1, b: (-r - u) / zeta2 };
    c.validate()?;
    Ok(c)
}

/// MMPP₂ representation of a canonical point.
pub fn canonical_to_mmpp(c: &CanonicalMap2) -> Result<MmppModel> {
    c.validate()?;
    let (z1, z2, a, b) = (c.zeta1, c.zeta2, c.a, c.b);
    let den = a * z1 - b * z2;
    let scale = (a * z1).abs().max((b * z2).abs());
    if den.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::Degenerate("a*zeta1 = b*zeta2".into()));
    }
    let g00 = z1 * z2 - a * z1 * z1 - a * z1 * z2 + a * b * z1 * z2;
    let g01 = -a * a * z1 * z1 + a * z1 * z1 + a * z1 * z2 - z1 * z2;
    let g10 = (z1 - b * z2) * (z2 - b * z2);
    let g11 = -z1 * z2 + b * z2 * z2 + b * z1 * z2 - a * b * z1 * z2;
    let g0 = Mat2::new(g00, g01, g10, g11) / den;
    Ok(MmppModel::new(g0, [a * z1, b * z2]))
}

/// Reduced-moment coordinates used by the closed-form inversion.
struct Reduced {
    m1: f64,
    s1: f64,
    s2: f64,
}

fn candidate_points(mu: [f64; 4]) -> Result<(Vec<CanonicalMap2>, f64)> {
    let [mu1, mu2, mu3, rho1] = mu;
    let m1 = mu1;
    let m2 = mu2 / 2.0;
    let m3 = mu3 / 6.0;
    let var_r = m2 - m1 * m1;
    let s1 = (m3 - m1 * m2) / var_r;
    let s2 = m1 * s1 - m2;
    let red = Reduced { m1, s1, s2 };
    let disc = red.s1 * red.s1 - 4.0 * red.s2;
    if disc < -1e-12 * red.s1 * red.s1 {
        return Err(Error::infeasible("real canonical rates (sigma1^2 >= 4 sigma2)", disc));
    }
    let sq = disc.max(0.0).sqrt();
    let inv = [(red.s1 - sq) / 2.0, (red.s1 + sq) / 2.0];
    if !(inv[0] > 0.0) {
        return Err(Error::infeasible("positive canonical rates", inv[0]));
    }
    let h = red.s1 - red.m1;
    let gamma = 2.0 * rho1 * (mu2 - mu1 * mu1) / (mu2 - 2.0 * mu1 * mu1);
    if !gamma.is_finite() {
        return Err(Error::Degenerate("mu2 = 2 mu1^2 with nonzero rho_T(1)".into()));
    }
    if gamma < -1e-12 {
        return Err(Error::infeasible("gamma >= 0", gamma));
    }
    let gamma = gamma.max(0.0);
    let mut out = Vec::new();
    for (p1, p2) in [(inv[0], inv[1]), (inv[1], inv[0])] {
        let (z1, z2) = (1.0 / p1, 1.0 / p2);
        if gamma == 0.0 {
            // a = 0 leaves b free and fixed by h = b/ζ1; b = 0 gives a = Cζ2.
            out.push(CanonicalMap2 { zeta1: z1, zeta2: z2, a: 0.0, b: h * z1 });
            out.push(CanonicalMap2 { zeta1: z1, zeta2: z2, a: h * z2, b: 0.0 });
            continue;
        }
        let c = h * (1.0 - gamma) + gamma * red.s1;
        // a²/ζ2 - C a + γ/ζ1 = 0
        let qa = 1.0 / z2;
        let qd = c * c - 4.0 * qa * gamma / z1;
        if qd < -1e-12 * c * c {
            continue;
        }
        let qs = qd.max(0.0).sqrt();
        for a in [(c - qs) / (2.0 * qa), (c + qs) / (2.0 * qa)] {
            if a > 0.0 {
                out.push(CanonicalMap2 { zeta1: z1, zeta2: z2, a, b: gamma / a });
            }
        }
    }
    Ok((out, gamma))
}

fn snap_unit(v: f64) -> f64 {
    if v < 0.0 && v > -1e-10 {
        0.0
    } else if v > 1.0 && v < 1.0 + 1e-10 {
        1.0
    } else {
        v
    }
}

fn forward_error(c: &CanonicalMap2, mu: [f64; 4]) -> f64 {
    match c.time_moments() {
        Ok(f) => (0..4)
            .map(|i| {
                let scale = if i == 3 { mu[3].abs().max(1e-12) } else { mu[i].abs() };
                (f[i] - mu[i]).abs() / scale
            })
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Damped Newton refinement on `(ζ1, ζ2, a, b)` with a finite-difference
/// Jacobian; only accepted when it lowers the forward error.
fn polish(c: CanonicalMap2, mu: [f64; 4]) -> CanonicalMap2 {
    let target = Vector4::new(mu[0], mu[1], mu[2], mu[3]);
    let scale = Vector4::new(mu[0], mu[1], mu[2], mu[3].abs().max(1e-12));
    let eval = |p: &Vector4<f64>| -> Option<Vector4<f64>> {
        let cm = CanonicalMap2 { zeta1: p[0], zeta2: p[1], a: p[2], b: p[3] };
        let f = cm.time_moments().ok()?;
        Some((Vector4::new(f[0], f[1], f[2], f[3]) - target).component_div(&scale))
    };
    let mut p = Vector4::new(c.zeta1, c.zeta2, c.a, c.b);
    let mut best = c;
    let mut best_err = forward_error(&c, mu);
    for _ in 0..200 {
        if best_err < 1e-14 {
            break;
        }
        let Some(f0) = eval(&p) else { break };
        let mut jac = Matrix4::zeros();
        for j in 0..4 {
            let h = 1e-7 * p[j].abs().max(1e-8);
            let mut pp = p;
            pp[j] += h;
            let mut pm = p;
            pm[j] -= h;
            let (Some(fp), Some(fm)) = (eval(&pp), eval(&pm)) else { return best };
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        let Some(step) = jac.lu().solve(&(-f0)) else { break };
        let mut damp = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = p + step * damp;
            let cand = CanonicalMap2 { zeta1: trial[0], zeta2: trial[1], a: trial[2], b: trial[3] };
            if cand.validate().is_ok() {
                let err = forward_error(&cand, mu);
                if err < best_err {
                    p = trial;
                    best = cand;
                    best_err = err;
                    improved = true;
                    break;
                }
            }
            damp *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Canonical point with the given `(μ1, μ2, μ3, ρ_T(1))`.
///
/// Closed-form inversion through the reduced moments `m_k = μ_k/k!`: the
/// canonical rates are the reciprocal roots of `z² - σ1 z + σ2`, and `a` solves
/// a quadratic built from `γ` and the interval-law numerator. Candidates whose
/// MMPP image is valid are preferred; a Newton pass polishes the winner.
pub fn moments_to_canonical(mu1: f64, mu2: f64, mu3: f64, rho_t1: f64) -> Result<CanonicalSolution> {
    let mu = [mu1, mu2, mu3, rho_t1];
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::infeasible("finite moments", f64::NAN));
    }
    if !(mu1 > 0.0) {
        return Err(Error::infeasible("mu1 > 0", mu1));
    }
    if !(mu2 > mu1 * mu1) {
        return Err(Error::infeasible("mu2 > mu1^2", mu2 - mu1 * mu1));
    }
    let exp_gap = (mu2 - 2.0 * mu1 * mu1) / (2.0 * mu1 * mu1);
    let exp_gap3 = (mu3 - 6.0 * mu1.powi(3)) / (6.0 * mu1.powi(3));
    if exp_gap.abs() < 1e-10 && exp_gap3.abs() < 1e-8 {
        if rho_t1.abs() > 1e-10 {
            return Err(Error::infeasible("rho_T(1) = 0 for exponential inter-event times", rho_t1));
        }
        let lam = 1.0 / mu1;
        return Ok(CanonicalSolution {
            map: CanonicalMap2 { zeta1: lam, zeta2: lam, a: 1.0, b: 1.0 },
            degeneracy: Some(Degeneracy::Poisson),
        });
    }
    let (cands, gamma) = candidate_points(mu)?;
    let mut scored: Vec<(bool, f64, CanonicalMap2)> = cands
        .into_iter()
        .map(|c| CanonicalMap2 { a: snap_unit(c.a), b: snap_unit(c.b), ..c })
        .filter(|c| c.validate().is_ok())
        .map(|c| {
            let mmpp_ok = canonical_to_mmpp(&c).map(|m| m.validate().is_valid()).unwrap_or(false);
            (mmpp_ok, forward_error(&c, mu), c)
        })
        .filter(|(_, e, _)| *e < 1e-6)
        .collect();
    if scored.is_empty() {
        return Err(Error::infeasible("0 <= a, b <= 1 for some canonical point", gamma));
    }
    scored.sort_by(|l, r| r.0.cmp(&l.0).then(l.1.total_cmp(&r.1)));
    let map = polish(scored[0].2, mu);
    let degeneracy = if gamma == 0.0 { Some(Degeneracy::Renewal) } else { None };
    Ok(CanonicalSolution { map, degeneracy })
}

/// `(w, q)` such that the sub-process `{d0, diag(w, q), rest}` has the given
/// `β1` and `η`. The two targets are linear in `(w, q)`:
/// `r w + y q = S(β1 - 2)` and
/// `r(y-u) w + y(r-x) q = η S (xu - ry) + (xu - ry)(2r + 2y)`,
/// with `S = rx + 2ry + yu`.
pub fn solve_batch_split(d0: &Mat2, beta1: f64, eta: f64) -> Result<(f64, f64)> {
    let (x, y, r, u) = (d0[(0, 0)], d0[(0, 1)], d0[(1, 0)], d0[(1, 1)]);
    if !(x < 0.0 && u < 0.0 && y > 0.0 && r > 0.0) {
        return Err(Error::InvalidModel("D0 must have negative diagonal and positive off-diagonal".into()));
    }
    let (l1, l2) = (-x - y, -r - u);
    if !(l1 >= 0.0 && l2 >= 0.0) {
        return Err(Error::InvalidModel("D0 row sums must be non-positive".into()));
    }
    let bal = r + u - x - y;
    if bal.abs() <= 1e-12 * (x.abs() + u.abs()) {
        return Err(Error::BalancedRates);
    }
    let s = r * x + 2.0 * r * y + y * u;
    let det_d0 = x * u - r * y;
    let rhs1 = s * (beta1 - 2.0);
    let rhs2 = eta * s * det_d0 + det_d0 * (2.0 * r + 2.0 * y);
    // Cramer on [[r, y], [r(y-u), y(r-x)]]; determinant r y (r + u - x - y).
    let det = r * y * bal;
    let w = (rhs1 * y * (r - x) - y * rhs2) / det;
    let q = (r * rhs2 - r * (y - u) * rhs1) / det;
    let clamp = |v: f64, budget: f64, name: &str| -> Result<f64> {
        let tol = 1e-9 * budget.max(1.0);
        if v < -tol {
            return Err(Error::infeasible(format!("{name} >= 0"), v));
        }
        if v > budget + tol {
            return Err(Error::infeasible(format!("{name} <= row budget {budget}"), v));
        }
        Ok(v.clamp(0.0, budget))
    };
    Ok((clamp(w, l1, "w")?, clamp(q, l2, "q")?))
}

/// Rebuilds a BMMPP₂(K) from its characterizing moments.
pub fn moments_to_model(ms: &MomentSet, k: usize) -> Result<BmmppModel> {
    if ms.beta1.len() != ms.eta.len() || ms.k() != k {
        return Err(Error::InvalidModel(format!("moment set has {} pairs, expected {}", ms.beta1.len(), k.saturating_sub(1))));
    }
    let sol = moments_to_canonical(ms.mu1, ms.mu2, ms.mu3, ms.rho_t1).map_err(|e| e.at_stage("D0"))?;
    let d0 = if sol.degeneracy == Some(Degeneracy::Poisson) {
        if k > 1 {
            return Err(Error::BalancedRates.at_stage("D1"));
        }
        let lam = sol.map.zeta1;
        Mat2::new(-2.0 * lam, lam, lam, -2.0 * lam)
    } else {
        canonical_to_mmpp(&sol.map).map_err(|e| e.at_stage("D0"))?.g0
    };
    let budget = [-d0[(0, 0)] - d0[(0, 1)], -d0[(1, 0)] - d0[(1, 1)]];
    let mut used = [0.0, 0.0];
    let mut interior = Vec::with_capacity(k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        let (w, q) = solve_batch_split(&d0, ms.beta1[i], ms.eta[i]).map_err(|e| e.at_stage(format!("D{}", i + 1)))?;
        used[0] += w;
        used[1] += q;
        for j in 0..2 {
            if used[j] > budget[j] * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::infeasible(format!("cumulative batch rates within row {} budget", j + 1), used[j] - budget[j])
                    .at_stage(format!("D{}", i + 1)));
            }
        }
        interior.push([w, q]);
    }
    let mut model = BmmppModel::from_interior(d0, &interior)?;
    if let Some(last) = model.batch_diagonals().last() {
        if last[0] < 0.0 || last[1] < 0.0 {
            let dk = model.batch_diagonals().iter().map(|d| [d[0].max(0.0), d[1].max(0.0)]).collect();
            model = BmmppModel::new(d0, dk)?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{moment_set, time_moment};

    fn reference_k2() -> BmmppModel {
        BmmppModel::new(Mat2::new(-5.0, 2.0, 5.0, -10.0), vec![[1.0, 2.0], [2.0, 3.0]]).unwrap()
    }

    #[test]
    fn mmpp_to_canonical_example() {
        let c = mmpp_to_canonical(&reference_k2().embedded_mmpp()).unwrap();
        assert!((c.zeta1 - 3.4689).abs() < 1e-4, "{c:?}");
        assert!((c.zeta2 - 11.5311).abs() < 1e-4);
        assert!((c.a - 0.8648).abs() < 1e-4);
        assert!((c.b - 0.4336).abs() < 1e-4);
        let f = c.time_moments().unwrap();
        let m = reference_k2();
        assert!((f[0] - time_moment(&m, 1).unwrap()).abs() < 1e-12);
        assert!((f[1] - time_moment(&m, 2).unwrap()).abs() < 1e-12);
        assert!((f[3] - crate::descriptors::rho_t(&m, 1).unwrap()).abs() < 1e-12);
        // γ = ab
        assert!((c.a * c.b - 0.375).abs() < 1e-12);
    }

    #[test]
    fn canonical_inverts_to_mmpp() {
        let c = mmpp_to_canonical(&reference_k2().embedded_mmpp()).unwrap();
        let m = canonical_to_mmpp(&c).unwrap();
        let want = Mat2::new(-5.0, 2.0, 5.0, -10.0);
        assert!((m.g0 - want).abs().max() < 1e-12, "{}", m.g0);
        assert!((m.g1[0] - 3.0).abs() < 1e-12 && (m.g1[1] - 5.0).abs() < 1e-12);

        let sing = CanonicalMap2 { zeta1: 2.0, zeta2: 4.0, a: 0.5, b: 0.25 };
        assert!(matches!(canonical_to_mmpp(&sing), Err(Error::Degenerate(_))));
    }

    #[test]
    fn permuted_twin_has_same_canonical_point() {
        let m = reference_k2().embedded_mmpp();
        let twin = m.as_bmmpp().permute_states().embedded_mmpp();
        let a = mmpp_to_canonical(&m).unwrap();
        let b = mmpp_to_canonical(&twin).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moments_invert_to_reference_d0() {
        let ms = moment_set(&reference_k2()).unwrap();
        let sol = moments_to_canonical(ms.mu1, ms.mu2, ms.mu3, ms.rho_t1).unwrap();
        assert!(sol.degeneracy.is_none());
        let m = canonical_to_mmpp(&sol.map).unwrap();
        assert!((m.g0 - Mat2::new(-5.0, 2.0, 5.0, -10.0)).abs().max() < 1e-9, "{}", m.g0);
    }

    #[test]
    fn exponential_point() {
        let sol = moments_to_canonical(1.0, 2.0, 6.0, 0.0).unwrap();
        assert_eq!(sol.degeneracy, Some(Degeneracy::Poisson));
        assert_eq!((sol.map.zeta1, sol.map.zeta2), (1.0, 1.0));
        assert!(moments_to_canonical(1.0, 2.0, 6.0, 0.1).is_err());
        assert!(matches!(moments_to_canonical(1.0, 0.9, 6.0, 0.0), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn batch_split_examples() {
        let d0 = Mat2::new(-5.0, 2.0, 5.0, -10.0);
        let (w, q) = solve_batch_split(&d0, 1.64, 0.46).unwrap();
        assert!((w - 1.0).abs() < 1e-12 && (q - 2.0).abs() < 1e-12);

        // all mass on size 2
        let all2 = BmmppModel::new(d0, vec![[0.0, 0.0], [3.0, 5.0]]).unwrap();
        let ms = moment_set(&all2).unwrap();
        assert!((ms.beta1[0] - 2.0).abs() < 1e-14);
        let (w, q) = solve_batch_split(&d0, ms.beta1[0], ms.eta[0]).unwrap();
        assert!(w.abs() < 1e-12 && q.abs() < 1e-12);

        // all mass on size 1: η = μ1
        let (w, q) = solve_batch_split(&d0, 1.0, 0.28).unwrap();
        assert!((w - 3.0).abs() < 1e-12 && (q - 5.0).abs() < 1e-12);

        let balanced = Mat2::new(-3.0, 1.0, 1.0, -3.0);
        assert_eq!(solve_batch_split(&balanced, 1.5, 1.0), Err(Error::BalancedRates));
        assert!(matches!(solve_batch_split(&d0, 0.5, 0.46), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn reference_k2_round_trip() {
        let ms = moment_set(&reference_k2()).unwrap();
        let m = moments_to_model(&ms, 2).unwrap();
        assert!((m.d0() - reference_k2().d0()).abs().max() < 1e-9);
        assert!((m.w(1) - 1.0).abs() < 1e-9 && (m.q(2) - 3.0).abs() < 1e-9);

        let ms1 = moment_set(&reference_k2().embedded_mmpp().as_bmmpp()).unwrap();
        let m1 = moments_to_model(&ms1, 1).unwrap();
        assert_eq!(m1.k(), 1);
    }
}
