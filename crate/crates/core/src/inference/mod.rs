//! Fitting: variational optimization of each cluster's model interleaved
//! with hard-assignment CRP sweeps over the subjects.

mod optim;
mod vi;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use optim::{canonical_order, optimize_group, warm_start, OptimState};
pub use vi::{elbo_estimate, elbo_gradient, elbo_value_and_gradient, gaussian_kl, GroupGradient};

use crate::error::{CcslError, Result};
use crate::likelihood::{best_seat, membership_logposterior, Seat};
use crate::metrics::extract_graph;
use crate::model::{
    validate_panel, ClusterState, FitConfig, FitResult, GroupModel, Panel, SubjectSeries,
};

/// The base distribution scoring new clusters and anchoring the KL term.
pub fn base_prior(panel: &Panel, config: &FitConfig) -> GroupModel {
    GroupModel::base_prior(panel.m, config.lags, config.noise_components)
}

fn cluster_data<'a>(panel: &'a Panel, state: &ClusterState, k: usize) -> Vec<&'a SubjectSeries> {
    state
        .members(k)
        .into_iter()
        .map(|s| &panel.subjects[s])
        .collect()
}

fn refit<R: Rng + ?Sized>(
    panel: &Panel,
    state: &mut ClusterState,
    k: usize,
    prior: &GroupModel,
    config: &FitConfig,
    rng: &mut R,
) {
    let data = cluster_data(panel, state, k);
    let group = &state.clusters[&k];
    let opt = OptimState::new(group, config);
    let (updated, _) = optimize_group(&data, group, prior, config, opt, rng);
    state.clusters.insert(k, updated);
}

/// Fits cluster `k` afresh on its current members, returning the model it
/// had before, or `None` when nothing was re-fitted.
fn holdout_refit<R: Rng + ?Sized>(
    panel: &Panel,
    state: &mut ClusterState,
    k: usize,
    prior: &GroupModel,
    config: &FitConfig,
    rng: &mut R,
) -> Option<GroupModel> {
    if config.holdout_iterations == 0 || !state.clusters.contains_key(&k) {
        return None;
    }
    let data = cluster_data(panel, state, k);
    let steps = FitConfig {
        warm_start_iterations: config.holdout_iterations,
        ..config.clone()
    };
    let held_out = warm_start(&data, prior, &steps, rng);
    state.clusters.insert(k, held_out)
}

/// One pass over the subjects in order: each is detached, scored against
/// every live cluster and a new one, and seated at the argmax. The cluster
/// it left is first fitted afresh without it, so every score is conditioned
/// on the other subjects only; if it returns there, the earlier model is
/// restored. Clusters whose membership changed are re-optimized.
pub fn crp_sweep<R: Rng + ?Sized>(
    panel: &Panel,
    state: ClusterState,
    config: &FitConfig,
    rng: &mut R,
) -> Result<ClusterState> {
    if state.n_subjects() != panel.len() {
        return Err(CcslError::LengthMismatch {
            left: state.n_subjects(),
            right: panel.len(),
        });
    }
    state.check_invariants(false)?;
    let prior = base_prior(panel, config);
    let mut state = state;
    for (s, x) in panel.subjects.iter().enumerate() {
        let old = state.detach(s);
        let kept = old.and_then(|o| holdout_refit(panel, &mut state, o, &prior, config, rng));
        let scores = membership_logposterior(x, &state, &prior, config.mc_samples_score, rng)?;
        let seat = best_seat(&scores).unwrap_or(Seat::New);
        let k = match seat {
            Seat::Existing(k) => k,
            Seat::New => {
                let group = warm_start(&[x], &prior, config, rng);
                state.open(group)
            }
        };
        state.attach(s, k);
        if old == Some(k) {
            if let Some(model) = kept {
                state.clusters.insert(k, model);
            }
            continue;
        }
        if matches!(seat, Seat::Existing(_)) {
            refit(panel, &mut state, k, &prior, config, rng);
        }
        if let Some(o) = old.filter(|o| state.clusters.contains_key(o)) {
            refit(panel, &mut state, o, &prior, config, rng);
        }
    }
    state.check_invariants(true)?;
    Ok(state)
}

/// Sum of cluster ELBOs, each estimated with draws from a fresh stream
/// seeded by `seed` so that unchanged states give identical values.
fn objective(
    panel: &Panel,
    state: &ClusterState,
    prior: &GroupModel,
    config: &FitConfig,
    seed: u64,
) -> f64 {
    state
        .clusters
        .iter()
        .map(|(&k, group)| {
            let data = cluster_data(panel, state, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            elbo_estimate(&data, group, prior, config.mc_samples_fit, &mut rng)
        })
        .sum()
}

/// Clusters the panel and learns each cluster's model.
///
/// Every subject starts in its own warm-started cluster; sweeps repeat until
/// the assignments stop changing and the objective moves by less than
/// `config.tolerance`, or `config.max_sweeps` is reached. The final
/// cluster models are put in canonical equation order (see
/// [`canonical_order`]) before their graphs are extracted.
pub fn fit<R: Rng + ?Sized>(panel: &Panel, config: &FitConfig, rng: &mut R) -> Result<FitResult> {
    validate_panel(panel)?;
    config.validate()?;
    for x in &panel.subjects {
        x.check_length(config.lags)?;
    }
    let prior = base_prior(panel, config);
    let mut state = ClusterState::empty(panel.len(), config.alpha);
    for (s, x) in panel.subjects.iter().enumerate() {
        let group = warm_start(&[x], &prior, config, rng);
        let k = state.open(group);
        state.attach(s, k);
    }
    let seed: u64 = rng.random();
    let mut previous = objective(panel, &state, &prior, config, seed);
    let mut elbo_trace = Vec::new();
    let mut converged = false;
    let mut sweeps_run = 0;
    while sweeps_run < config.max_sweeps {
        let before = state.assignments.clone();
        state = crp_sweep(panel, state, config, rng)?;
        sweeps_run += 1;
        let current = objective(panel, &state, &prior, config, seed);
        elbo_trace.push(current);
        if state.assignments == before && (current - previous).abs() < config.tolerance {
            converged = true;
            break;
        }
        previous = current;
    }
    for group in state.clusters.values_mut() {
        if let Some(reordered) = canonical_order(group) {
            *group = reordered;
        }
    }
    let graphs: BTreeMap<_, _> = state
        .clusters
        .iter()
        .map(|(&k, group)| (k, extract_graph(group, config.tau_b, config.tau_a)))
        .collect();
    Ok(FitResult {
        state,
        graphs,
        elbo_trace,
        sweeps_run,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_dataset, GenSettings};

    fn quick_config() -> FitConfig {
        FitConfig {
            learning_rate: 0.05,
            mc_samples_fit: 4,
            mc_samples_score: 16,
            inner_iterations: 10,
            warm_start_iterations: 5,
            holdout_iterations: 5,
            max_sweeps: 3,
            ..FitConfig::default()
        }
    }

    fn small_panel(subjects: usize, seed: u64) -> Panel {
        let settings = GenSettings {
            groups: subjects.min(2),
            subjects,
            variables: 3,
            length: 30,
            ..GenSettings::default()
        };
        gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .0
    }

    #[test]
    fn first_customer_opens_one_cluster() {
        let panel = small_panel(1, 1);
        let config = quick_config();
        let state = ClusterState::empty(1, config.alpha);
        let state = crp_sweep(&panel, state, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(state.n_clusters(), 1);
        assert_eq!(state.labels(), Some(vec![0]));
    }

    #[test]
    fn identical_subjects_share_a_cluster() {
        let mut panel = small_panel(1, 3);
        let mut twin = panel.subjects[0].clone();
        twin.id = "twin".into();
        panel = Panel::new(vec![panel.subjects[0].clone(), twin]).unwrap();
        let config = quick_config();
        let state = ClusterState::empty(2, config.alpha);
        let state = crp_sweep(&panel, state, &config, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(state.n_clusters(), 1);
    }

    #[test]
    fn sweeps_keep_state_invariants() {
        let panel = small_panel(8, 5);
        let config = quick_config();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = ClusterState::empty(panel.len(), config.alpha);
        for _ in 0..3 {
            state = crp_sweep(&panel, state, &config, &mut rng).unwrap();
            state.check_invariants(true).unwrap();
            assert!(state.n_clusters() <= panel.len());
            for group in state.clusters.values() {
                group.validate().unwrap();
            }
        }
    }

    #[test]
    fn sweep_rejects_mismatched_state() {
        let panel = small_panel(3, 7);
        let state = ClusterState::empty(2, 1.0);
        assert!(matches!(
            crp_sweep(
                &panel,
                state,
                &quick_config(),
                &mut ChaCha8Rng::seed_from_u64(8)
            ),
            Err(CcslError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let panel = small_panel(6, 9);
        let config = quick_config();
        let a = fit(&panel, &config, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let b = fit(&panel, &config, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert!(a.sweeps_run >= 1 && a.sweeps_run <= config.max_sweeps);
        assert_eq!(a.elbo_trace.len(), a.sweeps_run);
        assert_eq!(a.graphs.len(), a.state.n_clusters());
        a.state.check_invariants(true).unwrap();
    }

    #[test]
    fn converged_fit_ends_with_a_still_sweep() {
        let panel = small_panel(4, 11);
        let config = FitConfig {
            max_sweeps: 20,
            ..quick_config()
        };
        let result = fit(&panel, &config, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        if result.converged {
            let n = result.elbo_trace.len();
            assert!(
                n == 1
                    || (result.elbo_trace[n - 1] - result.elbo_trace[n - 2]).abs()
                        < config.tolerance
            );
        }
    }

    #[test]
    fn fit_rejects_short_series() {
        let panel = small_panel(2, 13);
        let config = FitConfig {
            lags: 40,
            ..quick_config()
        };
        assert!(matches!(
            fit(&panel, &config, &mut ChaCha8Rng::seed_from_u64(14)),
            Err(CcslError::SeriesTooShort { .. })
        ));
    }
}
