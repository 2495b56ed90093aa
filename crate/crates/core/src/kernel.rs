//! Allocation-light evaluation of the SVAR log-likelihood and its gradient.
//!
//! A subject's lag-stacked design row is `z_t = [x_t, x_{t-1}, .., x_{t-p}]`
//! (missing history is zero) and the coefficient block matrix is
//! `C = [I - B, -A_1, .., -A_p]`, so the residual is `e_t = C z_t`.

use nalgebra::DMatrix;

use crate::linalg::log_abs_det_and_inverse;
use crate::model::{NoiseModel, SubjectSeries};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub rows: usize,
    pub width: usize,
    pub z: Vec<f64>,
}

impl Design {
    pub fn new(x: &SubjectSeries, lags: usize) -> Self {
        let rows = x.len();
        let m = x.n_vars();
        let width = m * (lags + 1);
        let mut z = vec![0.0; rows * width];
        for t in 0..rows {
            let row = &mut z[t * width..(t + 1) * width];
            for p in 0..=lags.min(t) {
                for j in 0..m {
                    row[p * m + j] = x.data[(t - p, j)];
                }
            }
        }
        Self { rows, width, z }
    }
}

/// Precomputed per-component constants of a diagonal Gaussian mixture.
#[derive(Clone, Debug)]
pub(crate) struct NoiseTerms {
    pub q: usize,
    pub m: usize,
    pub weights: Vec<f64>,
    /// `ln w_k - 0.5 * sum_i ln(2 pi v_ki)`.
    pub log_norm: Vec<f64>,
    pub means: Vec<f64>,
    pub inv_var: Vec<f64>,
}

impl NoiseTerms {
    pub fn new(noise: &NoiseModel) -> Self {
        let q = noise.components();
        let m = noise.dim();
        let mut log_norm = Vec::with_capacity(q);
        let mut means = Vec::with_capacity(q * m);
        let mut inv_var = Vec::with_capacity(q * m);
        for k in 0..q {
            let mut c = noise.weights[k].ln();
            for i in 0..m {
                let v = noise.variances[k][i];
                c -= 0.5 * (LN_2PI + v.ln());
                means.push(noise.means[k][i]);
                inv_var.push(1.0 / v);
            }
            log_norm.push(c);
        }
        Self {
            q,
            m,
            weights: noise.weights.clone(),
            log_norm,
            means,
            inv_var,
        }
    }

    /// Component log-densities into `out`; returns their log-sum-exp.
    #[inline]
    fn component_logs(&self, e: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.q {
            let mu = &self.means[k * self.m..(k + 1) * self.m];
            let iv = &self.inv_var[k * self.m..(k + 1) * self.m];
            let mut quad = 0.0;
            for i in 0..self.m {
                let d = e[i] - mu[i];
                quad += d * d * iv[i];
            }
            let l = self.log_norm[k] - 0.5 * quad;
            out[k] = l;
            if l > max {
                max = l;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let s: f64 = out[..self.q].iter().map(|l| (l - max).exp()).sum();
        max + s.ln()
    }
}

/// The block matrix `C` of one coefficient draw plus its Jacobian terms.
#[derive(Clone, Debug)]
pub(crate) struct Coefs {
    pub m: usize,
    pub width: usize,
    pub c: Vec<f64>,
    pub log_abs_det: f64,
    /// `(I - B)^{-1}`, row-major.
    pub inv: Vec<f64>,
}

impl Coefs {
    /// Returns `None` when `I - B` is singular.
    pub fn new(b: &DMatrix<f64>, a: &[DMatrix<f64>]) -> Option<Self> {
        let m = b.nrows();
        let width = m * (a.len() + 1);
        let w = DMatrix::identity(m, m) - b;
        let (log_abs_det, inv) = log_abs_det_and_inverse(&w)?;
        let mut c = vec![0.0; m * width];
        for i in 0..m {
            for j in 0..m {
                c[i * width + j] = w[(i, j)];
            }
            for (p, ap) in a.iter().enumerate() {
                for j in 0..m {
                    c[i * width + (p + 1) * m + j] = -ap[(i, j)];
                }
            }
        }
        let inv = (0..m * m).map(|idx| inv[(idx / m, idx % m)]).collect();
        Some(Self {
            m,
            width,
            c,
            log_abs_det,
            inv,
        })
    }

    #[inline]
    fn residual(&self, z: &[f64], e: &mut [f64]) {
        for i in 0..self.m {
            let row = &self.c[i * self.width..(i + 1) * self.width];
            e[i] = row.iter().zip(z).map(|(c, z)| c * z).sum();
        }
    }
}

/// Log-likelihood of one design under one coefficient draw.
pub(crate) fn loglik(design: &Design, coefs: &Coefs, noise: &NoiseTerms) -> f64 {
    let m = coefs.m;
    let mut e = vec![0.0; m];
    let mut comp = vec![0.0; noise.q];
    let mut total = design.rows as f64 * coefs.log_abs_det;
    for t in 0..design.rows {
        let z = &design.z[t * design.width..(t + 1) * design.width];
        coefs.residual(z, &mut e);
        total += noise.component_logs(&e, &mut comp);
    }
    total
}

/// Gradient accumulator for [`loglik_grad`].
#[derive(Clone, Debug)]
pub(crate) struct GradAccum {
    /// d loglik / d C, excluding the Jacobian term.
    pub dc: Vec<f64>,
    /// Number of time steps accumulated; the Jacobian contributes
    /// `rows * (I - B)^{-T}` to d loglik / d (I - B).
    pub rows: usize,
    pub d_logit: Vec<f64>,
    pub d_mean: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

impl GradAccum {
    pub fn new(m: usize, width: usize, q: usize) -> Self {
        Self {
            dc: vec![0.0; m * width],
            rows: 0,
            d_logit: vec![0.0; q],
            d_mean: vec![0.0; q * m],
            d_log_var: vec![0.0; q * m],
        }
    }

    pub fn clear(&mut self) {
        self.dc.fill(0.0);
        self.rows = 0;
        self.d_logit.fill(0.0);
        self.d_mean.fill(0.0);
        self.d_log_var.fill(0.0);
    }
}

/// Log-likelihood plus gradient with respect to `C`, the noise logits, the
/// noise means and the noise log-variances, accumulated into `acc`.
pub(crate) fn loglik_grad(
    design: &Design,
    coefs: &Coefs,
    noise: &NoiseTerms,
    acc: &mut GradAccum,
) -> f64 {
    let m = coefs.m;
    let q = noise.q;
    let width = design.width;
    let mut e = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut comp = vec![0.0; q];
    let mut total = design.rows as f64 * coefs.log_abs_det;
    for t in 0..design.rows {
        let z = &design.z[t * width..(t + 1) * width];
        coefs.residual(z, &mut e);
        let lse = noise.component_logs(&e, &mut comp);
        total += lse;
        g.fill(0.0);
        for k in 0..q {
            let r = (comp[k] - lse).exp();
            acc.d_logit[k] += r - noise.weights[k];
            let base = k * m;
            for i in 0..m {
                let d = e[i] - noise.means[base + i];
                let iv = noise.inv_var[base + i];
                let s = r * d * iv;
                acc.d_mean[base + i] += s;
                acc.d_log_var[base + i] += 0.5 * (s * d - r);
                g[i] -= s;
            }
        }
        for i in 0..m {
            let gi = g[i];
            let row = &mut acc.dc[i * width..(i + 1) * width];
            for (d, zk) in row.iter_mut().zip(z) {
                *d += gi * zk;
            }
        }
    }
    acc.rows += design.rows;
    total
}
