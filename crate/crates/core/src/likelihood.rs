//! Probability computations: mixture noise densities, change-of-variables
//! subject likelihoods, Monte-Carlo marginal likelihoods and cluster
//! membership scores. Everything is in natural-log space.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CcslError, Result};
use crate::kernel::{self, Coefs, Design, NoiseTerms};
use crate::linalg::log_abs_det_and_inverse;
use crate::model::{CausalParams, ClusterState, GroupModel, NoiseModel, SubjectSeries};

/// `ln sum_i exp(v_i)`, stable for large magnitudes. Empty input gives -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln (1/n) sum_i exp(v_i)`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// A log-density with an optional per-time-step breakdown that sums to
/// `value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDensity {
    pub value: f64,
    pub breakdown: Option<Vec<f64>>,
}

/// `ln sum_k w_k N(e | mu_k, diag(v_k))`.
pub fn noise_logpdf(e: &[f64], noise: &NoiseModel) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let logs: Vec<f64> = (0..noise.components())
        .map(|k| {
            let quad: f64 = e
                .iter()
                .zip(&noise.means[k])
                .zip(&noise.variances[k])
                .map(|((x, mu), v)| (x - mu).powi(2) / v + (LN_2PI + v.ln()))
                .sum();
            noise.weights[k].ln() - 0.5 * quad
        })
        .collect();
    log_sum_exp(&logs)
}

fn check_shapes(x: &SubjectSeries, params: &CausalParams, noise: &NoiseModel) -> Result<()> {
    let m = x.n_vars();
    if params.n_vars() != m {
        return Err(CcslError::DimensionMismatch {
            subject: x.id.clone(),
            index: 0,
            expected: params.n_vars(),
            found: m,
        });
    }
    if noise.dim() != m {
        return Err(CcslError::InvalidNoise(format!(
            "noise has dimension {}, data has {m}",
            noise.dim()
        )));
    }
    x.check_length(params.lags())
}

/// Exact log-likelihood of one subject under fixed coefficients.
///
/// Each time step contributes `ln|det(I - B)|` plus the noise log-density of
/// its residual `(I - B) x(t) - sum_p A_p x(t - p)`; lags that reach before
/// the first observation are dropped.
pub fn subject_loglik(
    x: &SubjectSeries,
    params: &CausalParams,
    noise: &NoiseModel,
) -> Result<LogDensity> {
    check_shapes(x, params, noise)?;
    let w = params.mixing();
    let (log_abs_det, _) = log_abs_det_and_inverse(&w).ok_or(CcslError::SingularSystem)?;
    let rows: Vec<DVector<f64>> = x.data.row_iter().map(|r| r.transpose()).collect();
    let breakdown: Vec<f64> = (0..x.len())
        .map(|t| {
            let mut e = &w * &rows[t];
            for (p, a) in params.a.iter().enumerate() {
                if let Some(past) = t.checked_sub(p + 1) {
                    e -= a * &rows[past];
                }
            }
            log_abs_det + noise_logpdf(e.as_slice(), noise)
        })
        .collect();
    Ok(LogDensity {
        value: breakdown.iter().sum(),
        breakdown: Some(breakdown),
    })
}

/// Monte-Carlo estimate of `ln P(x | group)`: the log-mean-exp of the
/// subject log-likelihood over `draws` coefficient samples from the group's
/// Gaussians.
pub fn mc_marginal_loglik<R: Rng + ?Sized>(
    x: &SubjectSeries,
    group: &GroupModel,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws == 0 {
        return Err(CcslError::TooFewItems {
            required: 1,
            found: 0,
        });
    }
    check_shapes(x, &group.mean_params(), &group.noise)?;
    let design = Design::new(x, group.lags());
    let noise = NoiseTerms::new(&group.noise);
    let logs: Vec<f64> = (0..draws)
        .map(|_| {
            let params = group.sample_params(rng);
            Coefs::new(&params.b, &params.a)
                .map_or(f64::NEG_INFINITY, |c| kernel::loglik(&design, &c, &noise))
        })
        .collect();
    let value = log_mean_exp(&logs);
    if value == f64::NEG_INFINITY {
        return Err(CcslError::AllSamplesSingular);
    }
    Ok(value)
}

/// Where a subject could be seated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Seat {
    Existing(usize),
    New,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipScore {
    pub seat: Seat,
    /// Unnormalized log-posterior.
    pub score: f64,
}

/// Unnormalized log-posterior of seating `x` at each live cluster and at a
/// new one.
///
/// Live cluster `k` scores `ln n_k + ln P(x | k)`; a new cluster scores
/// `ln alpha + ln P(x | ref_prior)`. The caller must have detached `x`
/// from `state` first, so sizes exclude it. Existing clusters come first in
/// ascending index order, `Seat::New` last.
pub fn membership_logposterior<R: Rng + ?Sized>(
    x: &SubjectSeries,
    state: &ClusterState,
    ref_prior: &GroupModel,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<MembershipScore>> {
    let mut scores = Vec::with_capacity(state.n_clusters() + 1);
    for (&k, model) in &state.clusters {
        let n_k = state.sizes.get(&k).copied().unwrap_or(0);
        let score = (n_k as f64).ln() + mc_marginal_loglik(x, model, draws, rng)?;
        scores.push(MembershipScore {
            seat: Seat::Existing(k),
            score,
        });
    }
    let score = state.alpha.ln() + mc_marginal_loglik(x, ref_prior, draws, rng)?;
    scores.push(MembershipScore {
        seat: Seat::New,
        score,
    });
    Ok(scores)
}

/// The highest-scoring seat; ties go to the earliest entry.
pub fn best_seat(scores: &[MembershipScore]) -> Option<Seat> {
    let mut best: Option<&MembershipScore> = None;
    for s in scores {
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|s| s.seat)
}
