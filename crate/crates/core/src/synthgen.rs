//! Ground-truth structures, group parameters and simulated panels.
//!
//! Groups get an Erdős–Rényi DAG over the variables, per-edge Gaussian
//! coefficient distributions and a Gaussian-mixture noise model. Each
//! subject draws its own coefficients from its group's distributions and is
//! simulated from a zero history with a burn-in.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{CcslError, Result};
use crate::graph::Adjacency;
use crate::linalg::{companion, log_abs_det_and_inverse, spectral_radius};
use crate::model::{CausalParams, GroupModel, NoiseModel, Panel, SubjectSeries, PINNED_SIGMA};

pub const DEFAULT_EDGE_PROB: f64 = 0.3;
pub const DEFAULT_BURN_IN: usize = 100;

/// Rescaling kicks in at this companion spectral radius.
const STABILITY_LIMIT: f64 = 0.95;
const STABILITY_TARGET: f64 = 0.9;
const MAX_RESCALES: usize = 10;
const MAX_RESAMPLES: usize = 100;

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("valid range").sample(rng)
}

/// Random DAG: a uniformly random variable ordering, then every pair that
/// respects it is joined independently with probability `edge_prob`.
pub fn gen_dag<R: Rng + ?Sized>(m: usize, edge_prob: f64, rng: &mut R) -> Adjacency {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut g = Adjacency::empty(m);
    for early in 0..m {
        for late in early + 1..m {
            if rng.random::<f64>() < edge_prob {
                g.set_edge(order[late], order[early], true);
            }
        }
    }
    g
}

/// Independent Erdős–Rényi lag supports, one per lag; self-lags allowed.
pub fn gen_lag_support<R: Rng + ?Sized>(
    m: usize,
    lags: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Vec<Adjacency> {
    (0..lags)
        .map(|_| {
            let mut g = Adjacency::empty(m);
            for to in 0..m {
                for from in 0..m {
                    if rng.random::<f64>() < edge_prob {
                        g.set_edge(to, from, true);
                    }
                }
            }
            g
        })
        .collect()
}

/// Instantaneous DAG plus lag supports of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSupport {
    pub instantaneous: Adjacency,
    pub lagged: Vec<Adjacency>,
}

impl GroupSupport {
    pub fn random<R: Rng + ?Sized>(m: usize, lags: usize, edge_prob: f64, rng: &mut R) -> Self {
        let instantaneous = gen_dag(m, edge_prob, rng);
        let lagged = gen_lag_support(m, lags, edge_prob, rng);
        Self {
            instantaneous,
            lagged,
        }
    }
}

/// Mixture noise with coordinate means of magnitude in [0.4, 0.6] and a fair
/// random sign, variances in [0.2, 0.5] and weights drawn from [0.3, 0.6]
/// then normalized.
pub fn sample_noise_model<R: Rng + ?Sized>(m: usize, components: usize, rng: &mut R) -> NoiseModel {
    let mut weights = Vec::with_capacity(components);
    let mut means = Vec::with_capacity(components);
    let mut variances = Vec::with_capacity(components);
    for _ in 0..components {
        weights.push(uniform(rng, 0.3, 0.6));
        means.push(
            (0..m)
                .map(|_| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * uniform(rng, 0.4, 0.6)
                })
                .collect(),
        );
        variances.push((0..m).map(|_| uniform(rng, 0.2, 0.5)).collect());
    }
    NoiseModel::new(weights, means, variances).expect("sampled noise model is valid")
}

/// Zero-mean single Gaussian noise. Only for demonstrating the
/// unidentifiable case.
pub fn sample_gaussian_noise<R: Rng + ?Sized>(m: usize, rng: &mut R) -> NoiseModel {
    let variances = vec![(0..m).map(|_| uniform(rng, 0.2, 0.5)).collect()];
    NoiseModel::new(vec![1.0], vec![vec![0.0; m]], variances).expect("valid")
}

/// Group coefficient distributions on the given support: means in
/// [0.1, 0.4] and variances in [0.01, 0.1] on edges; non-edges have mean 0
/// and a pinned standard deviation.
pub fn sample_group_model<R: Rng + ?Sized>(
    support: &GroupSupport,
    noise_components: usize,
    rng: &mut R,
) -> GroupModel {
    let m = support.instantaneous.size();
    let lags = support.lagged.len();
    let mut model = GroupModel::base_prior(m, lags, noise_components);
    let edge_dist = |g: &Adjacency, mu: &mut DMatrix<f64>, sd: &mut DMatrix<f64>, rng: &mut R| {
        for i in 0..m {
            for j in 0..m {
                if g.has_edge(i, j) {
                    mu[(i, j)] = uniform(rng, 0.1, 0.4);
                    sd[(i, j)] = uniform(rng, 0.01, 0.1).sqrt();
                } else {
                    mu[(i, j)] = 0.0;
                    sd[(i, j)] = PINNED_SIGMA;
                }
            }
        }
    };
    edge_dist(
        &support.instantaneous,
        &mut model.mu_b,
        &mut model.sigma_b,
        rng,
    );
    for p in 0..lags {
        edge_dist(
            &support.lagged[p],
            &mut model.nu_a[p],
            &mut model.omega_a[p],
            rng,
        );
    }
    model.noise = sample_noise_model(m, noise_components, rng);
    model
}

/// One subject's coefficients: Gaussian draws on the support, exact zeros
/// elsewhere.
pub fn sample_subject_params<R: Rng + ?Sized>(
    group: &GroupModel,
    support: &GroupSupport,
    rng: &mut R,
) -> CausalParams {
    let m = group.n_vars();
    let draw = |g: &Adjacency, mu: &DMatrix<f64>, sd: &DMatrix<f64>, rng: &mut R| {
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                if g.has_edge(i, j) {
                    let z: f64 = rng.sample(StandardNormal);
                    out[(i, j)] = mu[(i, j)] + sd[(i, j)] * z;
                }
            }
        }
        out
    };
    let mut b = draw(&support.instantaneous, &group.mu_b, &group.sigma_b, rng);
    b.fill_diagonal(0.0);
    let a = (0..group.lags())
        .map(|p| draw(&support.lagged[p], &group.nu_a[p], &group.omega_a[p], rng))
        .collect();
    CausalParams { b, a }
}

/// Spectral radius of the reduced-form lag dynamics `(I - B)^{-1} A_p`.
pub fn lag_spectral_radius(params: &CausalParams) -> Result<f64> {
    if params.lags() == 0 {
        return Ok(0.0);
    }
    let (_, inv) = log_abs_det_and_inverse(&params.mixing()).ok_or(CcslError::SingularSystem)?;
    let reduced: Vec<DMatrix<f64>> = params.a.iter().map(|a| &inv * a).collect();
    Ok(spectral_radius(&companion(&reduced)))
}

/// Shrinks the lag matrices until the companion radius drops below 0.95:
/// each round scales every `A_p` by `0.9 / radius`, at most ten rounds.
/// Support and signs are preserved.
pub fn stabilize(mut params: CausalParams) -> Result<CausalParams> {
    let mut radius = lag_spectral_radius(&params)?;
    for _ in 0..MAX_RESCALES {
        if radius < STABILITY_LIMIT {
            return Ok(params);
        }
        let scale = STABILITY_TARGET / radius;
        for a in &mut params.a {
            *a *= scale;
        }
        radius = lag_spectral_radius(&params)?;
    }
    if radius < STABILITY_LIMIT {
        Ok(params)
    } else {
        Err(CcslError::Unstable { radius })
    }
}

/// Simulates `burn_in + len` steps of
/// `x(t) = (I - B)^{-1} (sum_p A_p x(t - p) + e(t))` from a zero history and
/// keeps the last `len`.
pub fn simulate_subject<R: Rng + ?Sized>(
    id: impl Into<String>,
    params: &CausalParams,
    noise: &NoiseModel,
    len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SubjectSeries> {
    params.validate()?;
    let m = params.n_vars();
    if noise.dim() != m {
        return Err(CcslError::InvalidNoise(
            "noise dimension differs from m".into(),
        ));
    }
    let (_, inv) = log_abs_det_and_inverse(&params.mixing()).ok_or(CcslError::SingularSystem)?;
    let radius = lag_spectral_radius(params)?;
    if radius >= 1.0 {
        return Err(CcslError::Unstable { radius });
    }
    let total = burn_in + len;
    let mut history: Vec<DVector<f64>> = Vec::with_capacity(total);
    for t in 0..total {
        let mut rhs = DVector::from_vec(noise.sample(rng));
        for (p, a) in params.a.iter().enumerate() {
            if let Some(past) = t.checked_sub(p + 1) {
                rhs += a * &history[past];
            }
        }
        history.push(&inv * rhs);
    }
    let data = DMatrix::from_fn(len, m, |t, j| history[burn_in + t][j]);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CcslError::Unstable { radius });
    }
    Ok(SubjectSeries::new(id, data))
}

/// Dataset-level generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSettings {
    pub groups: usize,
    pub subjects: usize,
    pub variables: usize,
    pub length: usize,
    pub lags: usize,
    pub noise_components: usize,
    pub edge_prob: f64,
    pub burn_in: usize,
    /// Replace the mixture noise with a single zero-mean Gaussian. The
    /// resulting data are not identifiable; for negative tests only.
    pub gaussian_noise: bool,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            groups: 2,
            subjects: 30,
            variables: 6,
            length: 60,
            lags: 1,
            noise_components: 2,
            edge_prob: DEFAULT_EDGE_PROB,
            burn_in: DEFAULT_BURN_IN,
            gaussian_noise: false,
        }
    }
}

impl GenSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(CcslError::InvalidConfig {
                field,
                reason: reason.into(),
            })
        };
        if self.subjects == 0 {
            return bad("subjects", "must be at least 1");
        }
        if self.groups == 0 {
            return bad("groups", "must be at least 1");
        }
        if self.groups > self.subjects {
            return bad("groups", "cannot exceed the number of subjects");
        }
        if self.variables == 0 {
            return bad("variables", "must be at least 1");
        }
        if self.length < self.lags + 1 {
            return bad("length", "must exceed the number of lags");
        }
        if self.noise_components == 0 {
            return bad("noise_components", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("edge_prob", "must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueGroup {
    pub support: GroupSupport,
    pub model: GroupModel,
}

/// Everything used to generate a panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub groups: Vec<TrueGroup>,
    /// True group index of every subject.
    pub labels: Vec<usize>,
    pub subject_params: Vec<CausalParams>,
}

impl GroundTruth {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Identifier of subject `index` in a panel of `n` subjects, zero-padded so
/// lexical order equals index order.
pub fn subject_id(index: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("s{index:0width$}")
}

/// Draws `groups` group models, assigns subjects round-robin (sizes differ
/// by at most one), samples and stabilizes per-subject coefficients and
/// simulates every subject.
///
/// Subject `s` is simulated from its own ChaCha8 stream: the seed is one
/// `u64` drawn from `rng` after the group models, the stream index is `s`.
pub fn gen_dataset<R: Rng + ?Sized>(
    settings: &GenSettings,
    rng: &mut R,
) -> Result<(Panel, GroundTruth)> {
    settings.validate()?;
    let m = settings.variables;
    let groups: Vec<TrueGroup> = (0..settings.groups)
        .map(|_| {
            let support = GroupSupport::random(m, settings.lags, settings.edge_prob, rng);
            let mut model = sample_group_model(&support, settings.noise_components, rng);
            if settings.gaussian_noise {
                model.noise = sample_gaussian_noise(m, rng);
            }
            TrueGroup { support, model }
        })
        .collect();
    let labels: Vec<usize> = (0..settings.subjects)
        .map(|s| s % settings.groups)
        .collect();
    let stream_seed: u64 = rng.random();

    let mut subjects = Vec::with_capacity(settings.subjects);
    let mut subject_params = Vec::with_capacity(settings.subjects);
    for (s, &label) in labels.iter().enumerate() {
        let mut srng = ChaCha8Rng::seed_from_u64(stream_seed);
        srng.set_stream(s as u64);
        let group = &groups[label];
        let mut last_err = None;
        let mut params = None;
        for _ in 0..MAX_RESAMPLES {
            let draw = sample_subject_params(&group.model, &group.support, &mut srng);
            match stabilize(draw) {
                Ok(p) => {
                    params = Some(p);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let params = params.ok_or_else(|| last_err.expect("at least one attempt"))?;
        let id = subject_id(s, settings.subjects);
        subjects.push(simulate_subject(
            id,
            &params,
            &group.model.noise,
            settings.length,
            settings.burn_in,
            &mut srng,
        )?);
        subject_params.push(params);
    }
    let panel = Panel::new(subjects)?;
    Ok((
        panel,
        GroundTruth {
            groups,
            labels,
            subject_params,
        },
    ))
}
