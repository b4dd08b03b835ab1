//! Closed-form 2×2 helpers: inverse, exponential, stationary vectors and the
//! Van Loan integral used by the EM E-step.

use nalgebra::{Matrix2, Matrix4, RowVector2, Vector2};

pub type Mat2 = Matrix2<f64>;
pub type RowVec2 = RowVector2<f64>;
pub type Vec2 = Vector2<f64>;

#[inline]
pub fn ones() -> Vec2 {
    Vec2::new(1.0, 1.0)
}

#[inline]
pub fn diag(a: f64, b: f64) -> Mat2 {
    Mat2::new(a, 0.0, 0.0, b)
}

/// Determinant-based inverse; `None` when the determinant vanishes relative
/// to the matrix scale.
pub fn inv2(m: &Mat2) -> Option<Mat2> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !det.is_finite() || det.abs() <= f64::EPSILON * scale * scale {
        return None;
    }
    Some(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Matrix exponential of a 2×2 matrix from its trace and determinant.
///
/// Uses `exp(A) = e^s [c(q) I + s(q) (A - sI)]` with `s = tr/2` and
/// `q^2 = s^2 - det`, written with `expm1` so the coincident-eigenvalue limit
/// is exact.
pub fn expm2(a: &Mat2) -> Mat2 {
    let s = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = s * s - det;
    let shifted = a - Mat2::identity() * s;
    if disc >= 0.0 {
        let q = disc.sqrt();
        let hi = (s + q).exp();
        // e^{s} cosh q and e^{s} sinh(q)/q, evaluated from the larger eigenvalue.
        let c = 0.5 * (hi + (s - q).exp());
        let sh = if q > 0.0 { hi * (-(-2.0 * q).exp_m1()) / (2.0 * q) } else { hi };
        Mat2::identity() * c + shifted * sh
    } else {
        let w = (-disc).sqrt();
        let es = s.exp();
        Mat2::identity() * (es * w.cos()) + shifted * (es * w.sin() / w)
    }
}

/// Stationary vector of a 2×2 generator with positive off-diagonals.
pub fn generator_stationary(q: &Mat2) -> Option<RowVec2> {
    let a = q[(0, 1)];
    let b = q[(1, 0)];
    let s = a + b;
    if !(s > 0.0) {
        return None;
    }
    Some(RowVec2::new(b / s, a / s))
}

/// Stationary vector of a 2×2 stochastic matrix.
pub fn stochastic_stationary(p: &Mat2) -> Option<RowVec2> {
    let a = p[(0, 1)];
    let b = p[(1, 0)];
    let s = a + b;
    if !(s > 0.0) {
        return None;
    }
    Some(RowVec2::new(b / s, a / s))
}

/// `∫_0^t exp(A (t - s)) E exp(A s) ds`, the upper-right block of the
/// exponential of the block matrix `[[A, E], [0, A]] t`.
pub fn van_loan_integral(a: &Mat2, e: &Mat2, t: f64) -> Mat2 {
    let mut block = Matrix4::<f64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            block[(i, j)] = a[(i, j)] * t;
            block[(i + 2, j + 2)] = a[(i, j)] * t;
            block[(i, j + 2)] = e[(i, j)] * t;
        }
    }
    let ex = block.exp();
    Mat2::new(ex[(0, 2)], ex[(0, 3)], ex[(1, 2)], ex[(1, 3)])
}
