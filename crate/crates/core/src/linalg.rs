//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// `ln|det w|` and `w^{-1}`, or `None` when `w` is numerically singular.
pub fn log_abs_det_and_inverse(w: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let lu = w.clone().lu();
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = lu.try_inverse()?;
    Some((det.abs().ln(), inv))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Companion matrix of the reduced-form VAR `x(t) = sum_p c_p x(t-p) + u(t)`.
pub fn companion(coeffs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = coeffs.len();
    if p == 0 {
        return DMatrix::zeros(0, 0);
    }
    let m = coeffs[0].nrows();
    let mut c = DMatrix::zeros(m * p, m * p);
    for (lag, a) in coeffs.iter().enumerate() {
        c.view_mut((0, lag * m), (m, m)).copy_from(a);
    }
    for block in 1..p {
        for i in 0..m {
            c[(block * m + i, (block - 1) * m + i)] = 1.0;
        }
    }
    c
}
