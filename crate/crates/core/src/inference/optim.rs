use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vi::{Layout, Problem};
use crate::model::{
    FitConfig, GroupModel, NoiseModel, SubjectSeries, PINNED_SIGMA, VARIANCE_FLOOR,
};

const ADAM_EPSILON: f64 = 1e-8;
const LLOYD_ROUNDS: usize = 10;
/// Fixed-point scale of the log-diagonal weights in [`canonical_order`].
const WEIGHT_SCALE: f64 = 1e9;

/// Adam moment estimates over the flat parameter vector of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl OptimState {
    /// Fresh moments shaped for `group`.
    pub fn new(group: &GroupModel, config: &FitConfig) -> Self {
        let n = Layout::of(group).len();
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
        }
    }

    /// One ascent step of `theta` along `grad`.
    fn ascend(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.first[i] / c1;
            let vhat = self.second[i] / c2;
            theta[i] += self.learning_rate * mhat / (vhat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// Floors variances at [`VARIANCE_FLOOR`] and recentres the logits.
fn project(layout: &Layout, theta: &mut [f64]) {
    let nc = layout.n_coef();
    let floor = VARIANCE_FLOOR.ln();
    for v in &mut theta[nc..2 * nc] {
        *v = v.max(0.5 * floor);
    }
    for v in &mut theta[layout.log_vars()..] {
        *v = v.max(floor);
    }
    let logits = &mut theta[layout.logits()..layout.means()];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for l in logits {
        *l -= max;
    }
}

/// Runs `config.inner_iterations` Adam steps on the cluster's ELBO.
pub fn optimize_group<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    group: &GroupModel,
    prior: &GroupModel,
    config: &FitConfig,
    opt: OptimState,
    rng: &mut R,
) -> (GroupModel, OptimState) {
    run_steps(
        cluster_data,
        group,
        prior,
        config,
        config.inner_iterations,
        opt,
        rng,
    )
}

fn run_steps<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    group: &GroupModel,
    prior: &GroupModel,
    config: &FitConfig,
    steps: usize,
    mut opt: OptimState,
    rng: &mut R,
) -> (GroupModel, OptimState) {
    if steps == 0 {
        return (group.clone(), opt);
    }
    let problem = Problem::new(cluster_data, prior);
    let layout = problem.layout;
    let mut theta = layout.flatten(group);
    project(&layout, &mut theta);
    let mut grad = vec![0.0; layout.len()];
    for _ in 0..steps {
        let eps = problem.draw_eps(config.mc_samples_fit.max(1), rng);
        let value = problem.evaluate(&theta, &eps, Some(&mut grad));
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            continue;
        }
        opt.ascend(&mut theta, &grad);
        project(&layout, &mut theta);
    }
    (layout.unflatten(&theta), opt)
}

/// Reorders the equations of `group` so that the product of the absolute
/// diagonal entries of `I - mu_b` is maximal, then rescales every equation
/// to a unit diagonal, carrying lag rows and noise dimensions along. The
/// likelihood at the coefficient means is invariant under this map; among
/// the equivalent orderings it selects the one with the dominant diagonal.
/// Returns `None` when the current order is already optimal.
pub fn canonical_order(group: &GroupModel) -> Option<GroupModel> {
    let m = group.n_vars();
    if m < 2 {
        return None;
    }
    let w = DMatrix::<f64>::identity(m, m) - &group.mu_b;
    // weights[(i, r)]: equation r moved to position i.
    let weight = |v: f64| {
        let v = v.abs();
        if v < 1e-12 || !v.is_finite() {
            i64::MIN / (4 * m as i64)
        } else {
            (v.ln() * WEIGHT_SCALE).round() as i64
        }
    };
    let weights = Matrix::from_fn(m, m, |(i, r)| weight(w[(r, i)]));
    let (total, assign) = kuhn_munkres(&weights);
    if total <= 0 || assign.iter().enumerate().all(|(i, &r)| i == r) {
        return None;
    }

    let mut out = group.clone();
    for (i, &r) in assign.iter().enumerate() {
        let d = w[(r, i)];
        for j in 0..m {
            out.mu_b[(i, j)] = if i == j { 0.0 } else { -w[(r, j)] / d };
            out.sigma_b[(i, j)] = if j == r {
                PINNED_SIGMA
            } else {
                group.sigma_b[(r, j)]
            } / d.abs();
        }
        for (p, nu) in group.nu_a.iter().enumerate() {
            for j in 0..m {
                out.nu_a[p][(i, j)] = nu[(r, j)] / d;
                out.omega_a[p][(i, j)] = group.omega_a[p][(r, j)] / d.abs();
            }
        }
        for k in 0..group.noise.components() {
            out.noise.means[k][i] = group.noise.means[k][r] / d;
            out.noise.variances[k][i] = (group.noise.variances[k][r] / (d * d)).max(VARIANCE_FLOOR);
        }
    }
    out.pin_diagonal();
    Some(out)
}

/// A data-driven starting point for a cluster: zero coefficient means with
/// std dev `config.init_sigma`, and a noise mixture seeded by k-means on the
/// observations, followed by `config.warm_start_iterations` optimizer steps.
pub fn warm_start<R: Rng + ?Sized>(
    cluster_data: &[&SubjectSeries],
    prior: &GroupModel,
    config: &FitConfig,
    rng: &mut R,
) -> GroupModel {
    let mut group = prior.clone();
    group.sigma_b.fill(config.init_sigma);
    for omega in &mut group.omega_a {
        omega.fill(config.init_sigma);
    }
    group.pin_diagonal();
    group.noise = seed_noise(cluster_data, prior.noise.components(), rng);
    let opt = OptimState::new(&group, config);
    run_steps(
        cluster_data,
        &group,
        prior,
        config,
        config.warm_start_iterations,
        opt,
        rng,
    )
    .0
}

/// k-means++ seeding plus a few Lloyd rounds on the pooled rows.
fn seed_noise<R: Rng + ?Sized>(data: &[&SubjectSeries], q: usize, rng: &mut R) -> NoiseModel {
    let m = data[0].n_vars();
    let rows: Vec<Vec<f64>> = data
        .iter()
        .flat_map(|x| {
            x.data
                .row_iter()
                .map(|r| r.iter().copied().collect::<Vec<_>>())
        })
        .collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    let mut centres = vec![rows[rng.random_range(0..rows.len())].clone()];
    while centres.len() < q {
        let d: Vec<f64> = rows
            .iter()
            .map(|r| {
                centres
                    .iter()
                    .map(|c| dist2(r, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d.iter()
                .position(|&di| {
                    u -= di;
                    u <= 0.0
                })
                .unwrap_or(rows.len() - 1)
        } else {
            rng.random_range(0..rows.len())
        };
        centres.push(rows[next].clone());
    }

    let mut owner = vec![0usize; rows.len()];
    for _ in 0..LLOYD_ROUNDS {
        for (o, r) in owner.iter_mut().zip(&rows) {
            *o = (0..q)
                .min_by(|&a, &b| dist2(r, &centres[a]).total_cmp(&dist2(r, &centres[b])))
                .unwrap_or(0);
        }
        for (k, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&owner)
                .filter(|(_, &o)| o == k)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            for i in 0..m {
                centre[i] = members.iter().map(|r| r[i]).sum::<f64>() / members.len() as f64;
            }
        }
    }

    let pooled_var: Vec<f64> = (0..m)
        .map(|i| {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
            rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / rows.len() as f64
        })
        .collect();
    let mut weights = Vec::with_capacity(q);
    let mut variances = Vec::with_capacity(q);
    for (k, centre) in centres.iter().enumerate() {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(&owner)
            .filter(|(_, &o)| o == k)
            .map(|(r, _)| r)
            .collect();
        weights.push(members.len().max(1) as f64);
        let var = (0..m)
            .map(|i| {
                if members.len() < 2 {
                    return pooled_var[i].max(VARIANCE_FLOOR);
                }
                let v = members
                    .iter()
                    .map(|r| (r[i] - centre[i]).powi(2))
                    .sum::<f64>()
                    / members.len() as f64;
                v.max(0.01 * pooled_var[i]).max(VARIANCE_FLOOR)
            })
            .collect();
        variances.push(var);
    }
    let total: f64 = weights.iter().sum();
    NoiseModel {
        weights: weights.into_iter().map(|w| w / total).collect(),
        means: centres,
        variances,
    }
}
