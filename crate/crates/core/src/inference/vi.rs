//! Reparameterized ELBO and its gradient over a flat parameter vector.
//!
//! Flat layout for `m` variables, `p` lags and `q` noise components, with
//! `nc = m^2 (1 + p)` coefficients ordered `B` row-major then each lag
//! matrix row-major:
//!
//! | range              | content                      |
//! |--------------------|------------------------------|
//! | `0..nc`            | coefficient means            |
//! | `nc..2nc`          | coefficient log std devs     |
//! | next `q`           | noise mixture logits         |
//! | next `q m`         | noise component means        |
//! | next `q m`         | noise component log-variances|

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernel::{self, Coefs, Design, GradAccum, NoiseTerms};
use crate::model::{GroupModel, NoiseModel, SubjectSeries, PINNED_SIGMA};
use crate::serde_matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub m: usize,
    pub lags: usize,
    pub q: usize,
}

impl Layout {
    pub fn of(group: &GroupModel) -> Self {
        Self {
            m: group.n_vars(),
            lags: group.lags(),
            q: group.noise.components(),
        }
    }

    pub fn n_coef(&self) -> usize {
        self.m * self.m * (self.lags + 1)
    }

    pub fn logits(&self) -> usize {
        2 * self.n_coef()
    }

    pub fn means(&self) -> usize {
        self.logits() + self.q
    }

    pub fn log_vars(&self) -> usize {
        self.means() + self.q * self.m
    }

    pub fn len(&self) -> usize {
        self.log_vars() + self.q * self.m
    }

    /// Whether coefficient `c` is pinned (a self-loop of `B`).
    pub fn pinned(&self, c: usize) -> bool {
        c < self.m * self.m && c / self.m == c % self.m
    }

    /// Free coefficient indices in sampling order.
    pub fn free(&self) -> Vec<usize> {
        (0..self.n_coef()).filter(|&c| !self.pinned(c)).collect()
    }

    pub fn flatten(&self, group: &GroupModel) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        let rows = |mat: &DMatrix<f64>, out: &mut Vec<f64>, f: fn(f64) -> f64| {
            for i in 0..self.m {
                for j in 0..self.m {
                    out.push(f(mat[(i, j)]));
                }
            }
        };
        rows(&group.mu_b, &mut theta, |v| v);
        for nu in &group.nu_a {
            rows(nu, &mut theta, |v| v);
        }
        rows(&group.sigma_b, &mut theta, f64::ln);
        for omega in &group.omega_a {
            rows(omega, &mut theta, f64::ln);
        }
        let noise = &group.noise;
        theta.extend(noise.weights.iter().map(|w| w.max(f64::MIN_POSITIVE).ln()));
        theta.extend(noise.means.iter().flatten());
        theta.extend(noise.variances.iter().flatten().map(|v| v.ln()));
        theta
    }

    pub fn unflatten(&self, theta: &[f64]) -> GroupModel {
        let (m, nc) = (self.m, self.n_coef());
        let block = |offset: usize, f: fn(f64) -> f64| {
            DMatrix::from_fn(m, m, |i, j| f(theta[offset + i * m + j]))
        };
        let mut mu_b = block(0, |v| v);
        let mut sigma_b = block(nc, f64::exp);
        for i in 0..m {
            mu_b[(i, i)] = 0.0;
            sigma_b[(i, i)] = PINNED_SIGMA;
        }
        let nu_a = (1..=self.lags).map(|p| block(p * m * m, |v| v)).collect();
        let omega_a = (1..=self.lags)
            .map(|p| block(nc + p * m * m, f64::exp))
            .collect();
        GroupModel {
            mu_b,
            sigma_b,
            nu_a,
            omega_a,
            noise: self.noise(theta),
        }
    }

    pub fn noise(&self, theta: &[f64]) -> NoiseModel {
        let (m, q) = (self.m, self.q);
        let weights = softmax(&theta[self.logits()..self.logits() + q]);
        let means = (0..q)
            .map(|k| theta[self.means() + k * m..self.means() + (k + 1) * m].to_vec())
            .collect();
        let variances = (0..q)
            .map(|k| {
                theta[self.log_vars() + k * m..self.log_vars() + (k + 1) * m]
                    .iter()
                    .map(|v| v.exp())
                    .collect()
            })
            .collect();
        NoiseModel {
            weights,
            means,
            variances,
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of the ELBO, shaped like [`GroupModel`].
///
/// Scale parameters are differentiated in log space: `log_sigma_b` holds
/// `d ELBO / d ln sigma_b`, and likewise for `log_omega_a`, `noise_logits`
/// (softmax logits of the weights) and `noise_log_variances`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupGradient {
    #[serde(with = "serde_matrix")]
    pub mu_b: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub log_sigma_b: DMatrix<f64>,
    #[serde(with = "serde_matrix::seq")]
    pub nu_a: Vec<DMatrix<f64>>,
    #[serde(with = "serde_matrix::seq")]
    pub log_omega_a: Vec<DMatrix<f64>>,
    pub noise_logits: Vec<f64>,
    pub noise_means: Vec<Vec<f64>>,
    pub noise_log_variances: Vec<Vec<f64>>,
}

impl GroupGradient {
    pub(crate) fn from_flat(layout: &Layout, g: &[f64]) -> Self {
        let (m, q, nc) = (layout.m, layout.q, layout.n_coef());
        let block = |offset: usize| DMatrix::from_fn(m, m, |i, j| g[offset + i * m + j]);
        let split = |offset: usize| {
            (0..q)
                .map(|k| g[offset + k * m..offset + (k + 1) * m].to_vec())
                .collect()
        };
        Self {
            mu_b: block(0),
            log_sigma_b: block(nc),
            nu_a: (1..=layout.lags).map(|p| block(p * m * m)).collect(),
            log_omega_a: (1..=layout.lags).map(|p| block(nc + p * m * m)).collect(),
            noise_logits: g[layout.logits()..layout.logits() + q].to_vec(),
            noise_means: split(layout.means()),
            noise_log_variances: split(layout.log_vars()),
        }
    }

    /// All coordinates in the flat layout order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut push = |mat: &DMatrix<f64>| {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    out.push(mat[(i, j)]);
                }
            }
        };
        push(&self.mu_b);
        self.nu_a.iter().for_each(&mut push);
        push(&self.log_sigma_b);
        self.log_omega_a.iter().for_each(&mut push);
        out.extend(&self.noise_logits);
        out.extend(self.noise_means.iter().flatten());
        out.extend(self.noise_log_variances.iter().flatten());
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-coefficient `KL(N(mu, s^2) || N(mu_p, s_p^2))`.
pub fn gaussian_kl(mu: f64, sigma: f64, mu_p: f64, sigma_p: f64) -> f64 {
    let ratio = (sigma / sigma_p).powi(2);
    let d = (mu - mu_p) / sigma_p;
    0.5 * (ratio + d * d - 1.0 - ratio.ln())
}

/// Everything needed to evaluate one cluster's ELBO repeatedly.
pub(crate) struct Problem {
    pub layout: Layout,
    pub free: Vec<usize>,
    pub designs: Vec<Design>,
    /// Prior mean and std dev per coefficient.
    pub prior_mu: Vec<f64>,
    pub prior_sigma: Vec<f64>,
}

impl Problem {
    pub fn new(data: &[&SubjectSeries], prior: &GroupModel) -> Self {
        let layout = Layout::of(prior);
        let flat = layout.flatten(prior);
        let nc = layout.n_coef();
        Self {
            layout,
            free: layout.free(),
            designs: data.iter().map(|x| Design::new(x, layout.lags)).collect(),
            prior_mu: flat[..nc].to_vec(),
            prior_sigma: flat[nc..2 * nc].iter().map(|v| v.exp()).collect(),
        }
    }

    /// Standard normal draws for `samples` coefficient samples, in the same
    /// order [`GroupModel::sample_params`] consumes them.
    pub fn draw_eps<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Vec<f64> {
        (0..samples * self.free.len())
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    pub fn kl(&self, theta: &[f64]) -> f64 {
        let nc = self.layout.n_coef();
        self.free
            .iter()
            .map(|&c| {
                gaussian_kl(
                    theta[c],
                    theta[nc + c].exp(),
                    self.prior_mu[c],
                    self.prior_sigma[c],
                )
            })
            .sum()
    }

    /// ELBO at `theta` under the given draws; with `grad`, also writes its
    /// gradient there. Draws landing on a singular `I - B` make the value
    /// `-inf` and contribute no gradient.
    pub fn evaluate(&self, theta: &[f64], eps: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout;
        let (m, nc, nf) = (l.m, l.n_coef(), self.free.len());
        let samples = eps.len().checked_div(nf).unwrap_or(1);
        let noise = NoiseTerms::new(&l.noise(theta));
        let width = m * (l.lags + 1);
        let mut acc = GradAccum::new(m, width, l.q);
        let mut vals = vec![0.0; nc];
        let mut dvals = vec![0.0; nc];
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut ell = 0.0;
        for s in 0..samples {
            let e = &eps[s * nf..(s + 1) * nf];
            vals.fill(0.0);
            for (&c, z) in self.free.iter().zip(e) {
                vals[c] = theta[c] + theta[nc + c].exp() * z;
            }
            let Some(coefs) = coefs_from_flat(m, l.lags, &vals) else {
                ell = f64::NEG_INFINITY;
                continue;
            };
            let Some(g) = grad.as_deref_mut() else {
                ell += self
                    .designs
                    .iter()
                    .map(|d| kernel::loglik(d, &coefs, &noise))
                    .sum::<f64>();
                continue;
            };
            acc.clear();
            for d in &self.designs {
                ell += kernel::loglik_grad(d, &coefs, &noise, &mut acc);
            }
            let rows = acc.rows as f64;
            for i in 0..m {
                for j in 0..m {
                    // d/dB = -d/dW, with the Jacobian term rows * W^{-T}.
                    dvals[i * m + j] = -(acc.dc[i * width + j] + rows * coefs.inv[j * m + i]);
                }
                for p in 0..l.lags {
                    for j in 0..m {
                        dvals[(p + 1) * m * m + i * m + j] = -acc.dc[i * width + (p + 1) * m + j];
                    }
                }
            }
            for (&c, z) in self.free.iter().zip(e) {
                g[c] += dvals[c];
                g[nc + c] += dvals[c] * z * theta[nc + c].exp();
            }
            let noise_grads = acc.d_logit.iter().chain(&acc.d_mean).chain(&acc.d_log_var);
            for (gv, d) in g[l.logits()..].iter_mut().zip(noise_grads) {
                *gv += d;
            }
        }
        let inv_s = 1.0 / samples as f64;
        if let Some(g) = grad {
            for v in g.iter_mut() {
                *v *= inv_s;
            }
            for &c in &self.free {
                let sp2 = self.prior_sigma[c].powi(2);
                let sigma2 = (2.0 * theta[nc + c]).exp();
                g[c] -= (theta[c] - self.prior_mu[c]) / sp2;
                g[nc + c] -= sigma2 / sp2 - 1.0;
            }
        }
        ell * inv_s - self.kl(theta)
    }
}

fn coefs_from_flat(m: usize, lags: usize, vals: &[f64]) -> Option<Coefs> {
    let b = DMatrix::from_row_slice(m, m, &vals[..m * m]);
    let a: Vec<DMatrix<f64>> = (1..=lags)
        .map(|p| DMatrix::from_row_slice(m, m, &vals[p * m * m..(p + 1) * m * m]))
        .collect();
    Coefs::new(&b, &a)
}

/// Monte-Carlo ELBO `L_ell + L_kl` of `group` on a cluster's data, with
/// `L_kl` the closed-form negative KL of the coefficient Gaussians from
/// `prior`. Self-loops of `B` are excluded from both terms.
pub fn elbo_estimate<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    group: &GroupModel,
    prior: &GroupModel,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let problem = Problem::new(cluster_data, prior);
    let theta = problem.layout.flatten(group);
    let eps = problem.draw_eps(samples.max(1), rng);
    problem.evaluate(&theta, &eps, None)
}

/// Reparameterization gradient of [`elbo_estimate`], drawing the same
/// random numbers as the value for an identically seeded `rng`.
pub fn elbo_gradient<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    group: &GroupModel,
    prior: &GroupModel,
    samples: usize,
    rng: &mut R,
) -> GroupGradient {
    elbo_value_and_gradient(cluster_data, group, prior, samples, rng).1
}

pub fn elbo_value_and_gradient<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    group: &GroupModel,
    prior: &GroupModel,
    samples: usize,
    rng: &mut R,
) -> (f64, GroupGradient) {
    let problem = Problem::new(cluster_data, prior);
    let layout = problem.layout;
    let theta = layout.flatten(group);
    let eps = problem.draw_eps(samples.max(1), rng);
    let mut g = vec![0.0; layout.len()];
    let value = problem.evaluate(&theta, &eps, Some(&mut g));
    (value, GroupGradient::from_flat(&layout, &g))
}
