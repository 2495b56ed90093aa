//! Domain types shared by every stage: panels of subject series, SVAR
//! coefficient draws, per-cluster variational parameter sets and the
//! partition state of the clustering process.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CcslError, Result};
use crate::graph::Adjacency;
use crate::serde_matrix;

/// Standard deviation used for coefficients that are structurally fixed
/// (self-loops, and non-edges of ground-truth models).
pub const PINNED_SIGMA: f64 = 1e-6;

/// Lower bound applied to every learned variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// One subject's multivariate time series. Rows are time steps, columns
/// are variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeries {
    pub id: String,
    #[serde(with = "serde_matrix")]
    pub data: DMatrix<f64>,
}

impl SubjectSeries {
    pub fn new(id: impl Into<String>, data: DMatrix<f64>) -> Self {
        Self {
            id: id.into(),
            data,
        }
    }

    /// Number of time steps `T_s`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Number of variables `m`.
    pub fn n_vars(&self) -> usize {
        self.data.ncols()
    }

    /// Checks that the series is long enough for a model with `lags` lags.
    pub fn check_length(&self, lags: usize) -> Result<()> {
        if self.len() < lags + 1 {
            return Err(CcslError::SeriesTooShort {
                subject: self.id.clone(),
                length: self.len(),
                required: lags + 1,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub subjects: Vec<SubjectSeries>,
    pub m: usize,
}

impl Panel {
    /// Builds a panel and validates it.
    pub fn new(subjects: Vec<SubjectSeries>) -> Result<Self> {
        let m = subjects.first().map_or(0, SubjectSeries::n_vars);
        let panel = Self { subjects, m };
        validate_panel(&panel)?;
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

/// Checks the panel invariants: at least one subject, a shared variable
/// count and finite entries everywhere.
pub fn validate_panel(panel: &Panel) -> Result<()> {
    if panel.subjects.is_empty() {
        return Err(CcslError::EmptyPanel);
    }
    for (index, s) in panel.subjects.iter().enumerate() {
        if s.n_vars() != panel.m {
            return Err(CcslError::DimensionMismatch {
                subject: s.id.clone(),
                index,
                expected: panel.m,
                found: s.n_vars(),
            });
        }
        if s.is_empty() {
            return Err(CcslError::SeriesTooShort {
                subject: s.id.clone(),
                length: 0,
                required: 1,
            });
        }
        for row in 0..s.len() {
            for column in 0..s.n_vars() {
                if !s.data[(row, column)].is_finite() {
                    return Err(CcslError::NonFinite {
                        subject: s.id.clone(),
                        row,
                        column,
                    });
                }
            }
        }
    }
    Ok(())
}

/// A concrete coefficient draw: instantaneous matrix `b` and lag matrices
/// `a[p - 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalParams {
    #[serde(with = "serde_matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_matrix::seq")]
    pub a: Vec<DMatrix<f64>>,
}

impl CausalParams {
    pub fn new(b: DMatrix<f64>, a: Vec<DMatrix<f64>>) -> Result<Self> {
        let params = Self { b, a };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(m: usize, lags: usize) -> Self {
        Self {
            b: DMatrix::zeros(m, m),
            a: vec![DMatrix::zeros(m, m); lags],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.b.nrows()
    }

    pub fn lags(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.b.nrows();
        if self.b.ncols() != m {
            return Err(CcslError::InvalidParams("B must be square".into()));
        }
        if self.a.iter().any(|a| a.shape() != (m, m)) {
            return Err(CcslError::InvalidParams(
                "lag matrices must be m x m".into(),
            ));
        }
        if (0..m).any(|i| self.b[(i, i)] != 0.0) {
            return Err(CcslError::InvalidParams(
                "diagonal of B must be zero".into(),
            ));
        }
        Ok(())
    }

    /// `I - B`.
    pub fn mixing(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_vars(), self.n_vars()) - &self.b
    }
}

/// Gaussian-mixture noise with diagonal covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl NoiseModel {
    /// Builds a mixture. Weights must be nonnegative with a positive sum and
    /// are renormalized to sum to one; variances must be strictly positive.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let q = weights.len();
        if q == 0 {
            return Err(CcslError::InvalidNoise(
                "at least one component required".into(),
            ));
        }
        if means.len() != q || variances.len() != q {
            return Err(CcslError::InvalidNoise("component counts disagree".into()));
        }
        let dim = means[0].len();
        if means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(CcslError::InvalidNoise(
                "component dimensions disagree".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CcslError::InvalidNoise(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(CcslError::InvalidNoise("weights sum to zero".into()));
        }
        if variances
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(CcslError::InvalidNoise("variances must be positive".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CcslError::InvalidNoise("means must be finite".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Single standard-normal component per coordinate.
    pub fn standard(dim: usize) -> Self {
        Self::base(dim, 1)
    }

    /// `components` identical components with uniform weights, zero means
    /// and unit variances.
    pub fn base(dim: usize, components: usize) -> Self {
        Self {
            weights: vec![1.0 / components as f64; components],
            means: vec![vec![0.0; dim]; components],
            variances: vec![vec![1.0; dim]; components],
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Mixture mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (o, m) in out.iter_mut().zip(mu) {
                *o += w * m;
            }
        }
        out
    }

    /// Draws one noise vector: a component, then independent coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.means[k]
            .iter()
            .zip(&self.variances[k])
            .map(|(mu, var)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + var.sqrt() * z
            })
            .collect()
    }
}

/// Per-cluster parameter set: independent Gaussians over every entry of `B`
/// and of each lag matrix, plus the cluster's noise mixture.
///
/// `sigma_b` and `omega_a` hold standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    #[serde(with = "serde_matrix")]
    pub mu_b: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma_b: DMatrix<f64>,
    #[serde(with = "serde_matrix::seq")]
    pub nu_a: Vec<DMatrix<f64>>,
    #[serde(with = "serde_matrix::seq")]
    pub omega_a: Vec<DMatrix<f64>>,
    pub noise: NoiseModel,
}

impl GroupModel {
    /// The broad base distribution: N(0, 1) on every free coefficient and a
    /// `components`-way mixture with zero means and unit variances.
    pub fn base_prior(m: usize, lags: usize, components: usize) -> Self {
        let mut model = Self {
            mu_b: DMatrix::zeros(m, m),
            sigma_b: DMatrix::from_element(m, m, 1.0),
            nu_a: vec![DMatrix::zeros(m, m); lags],
            omega_a: vec![DMatrix::from_element(m, m, 1.0); lags],
            noise: NoiseModel::base(m, components),
        };
        model.pin_diagonal();
        model
    }

    pub fn n_vars(&self) -> usize {
        self.mu_b.nrows()
    }

    pub fn lags(&self) -> usize {
        self.nu_a.len()
    }

    pub(crate) fn pin_diagonal(&mut self) {
        for i in 0..self.n_vars() {
            self.mu_b[(i, i)] = 0.0;
            self.sigma_b[(i, i)] = PINNED_SIGMA;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_vars();
        let square = |x: &DMatrix<f64>| x.shape() == (m, m);
        if !square(&self.sigma_b)
            || self.nu_a.len() != self.omega_a.len()
            || !self.nu_a.iter().chain(&self.omega_a).all(square)
        {
            return Err(CcslError::InvalidParams(
                "group model shapes disagree".into(),
            ));
        }
        if self.noise.dim() != m {
            return Err(CcslError::InvalidParams(
                "noise dimension differs from m".into(),
            ));
        }
        let positive = |x: &DMatrix<f64>| x.iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive(&self.sigma_b) || !self.omega_a.iter().all(positive) {
            return Err(CcslError::InvalidParams(
                "standard deviations must be positive".into(),
            ));
        }
        if (0..m).any(|i| self.mu_b[(i, i)] != 0.0) {
            return Err(CcslError::InvalidParams(
                "diagonal of mu_b must be zero".into(),
            ));
        }
        Ok(())
    }

    /// The coefficient means as a parameter draw.
    pub fn mean_params(&self) -> CausalParams {
        CausalParams {
            b: self.mu_b.clone(),
            a: self.nu_a.clone(),
        }
    }

    /// Draws coefficients from the per-entry Gaussians, `B` then each lag
    /// matrix, row-major; self-loops stay 0.
    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> CausalParams {
        let m = self.n_vars();
        let mut b = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let z: f64 = rng.sample(StandardNormal);
                    b[(i, j)] = self.mu_b[(i, j)] + self.sigma_b[(i, j)] * z;
                }
            }
        }
        let a = self
            .nu_a
            .iter()
            .zip(&self.omega_a)
            .map(|(nu, omega)| {
                let mut a = DMatrix::zeros(m, m);
                for i in 0..m {
                    for j in 0..m {
                        let z: f64 = rng.sample(StandardNormal);
                        a[(i, j)] = nu[(i, j)] + omega[(i, j)] * z;
                    }
                }
                a
            })
            .collect();
        CausalParams { b, a }
    }
}

/// The current partition of subjects into clusters.
///
/// `assignments[s]` is `None` only while subject `s` is detached (before the
/// first sweep seats it, or mid-sweep while it is being rescored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub assignments: Vec<Option<usize>>,
    pub clusters: BTreeMap<usize, GroupModel>,
    pub sizes: BTreeMap<usize, usize>,
    pub alpha: f64,
}

impl ClusterState {
    /// No clusters, every subject detached.
    pub fn empty(n: usize, alpha: f64) -> Self {
        Self {
            assignments: vec![None; n],
            clusters: BTreeMap::new(),
            sizes: BTreeMap::new(),
            alpha,
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Smallest index larger than every live cluster.
    pub fn next_cluster_id(&self) -> usize {
        self.clusters.keys().next_back().map_or(0, |k| k + 1)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Some(cluster))
            .map(|(s, _)| s)
            .collect()
    }

    /// Detaches subject `s`, deleting its cluster if that leaves it empty.
    /// Returns the cluster it left.
    pub fn detach(&mut self, s: usize) -> Option<usize> {
        let k = self.assignments[s].take()?;
        let size = self.sizes.get_mut(&k).expect("assigned cluster has a size");
        *size -= 1;
        if *size == 0 {
            self.sizes.remove(&k);
            self.clusters.remove(&k);
        }
        Some(k)
    }

    /// Seats subject `s` at live cluster `k`.
    pub fn attach(&mut self, s: usize, k: usize) {
        debug_assert!(self.clusters.contains_key(&k));
        debug_assert!(self.assignments[s].is_none());
        self.assignments[s] = Some(k);
        *self.sizes.entry(k).or_insert(0) += 1;
    }

    /// Opens a new cluster holding `model` and returns its index.
    pub fn open(&mut self, model: GroupModel) -> usize {
        let k = self.next_cluster_id();
        self.clusters.insert(k, model);
        self.sizes.insert(k, 0);
        k
    }

    /// Labels for every subject, if all are seated.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.assignments.iter().copied().collect()
    }

    /// Checks size bookkeeping; `require_complete` also demands every subject
    /// be seated.
    pub fn check_invariants(&self, require_complete: bool) -> Result<()> {
        let mut counted: BTreeMap<usize, usize> = BTreeMap::new();
        for c in self.assignments.iter().flatten() {
            *counted.entry(*c).or_insert(0) += 1;
        }
        if require_complete && self.assignments.iter().any(Option::is_none) {
            return Err(CcslError::InvalidState("unassigned subject".into()));
        }
        if counted != self.sizes {
            return Err(CcslError::InvalidState(
                "sizes disagree with assignments".into(),
            ));
        }
        if self.sizes.values().any(|&n| n == 0) {
            return Err(CcslError::InvalidState("empty live cluster".into()));
        }
        if !self.clusters.keys().eq(self.sizes.keys()) {
            return Err(CcslError::InvalidState(
                "cluster keys disagree with sizes".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(CcslError::InvalidState("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Settings for [`crate::inference::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// CRP concentration.
    pub alpha: f64,
    pub lags: usize,
    /// Mixture components in each cluster's noise model.
    pub noise_components: usize,
    /// Monte-Carlo draws per ELBO gradient step.
    pub mc_samples_fit: usize,
    /// Monte-Carlo draws per marginal-likelihood membership score.
    pub mc_samples_score: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Optimizer steps applied to a cluster whose membership changed.
    pub inner_iterations: usize,
    /// Optimizer steps used to fit a freshly opened single-subject cluster.
    pub warm_start_iterations: usize,
    /// Optimizer steps of the fresh fit of a cluster's remaining members
    /// when a subject is taken out for scoring; 0 scores against the
    /// unchanged model.
    pub holdout_iterations: usize,
    /// Initial standard deviation of the variational coefficient posteriors.
    pub init_sigma: f64,
    pub max_sweeps: usize,
    /// Absolute change in the summed objective below which a sweep with no
    /// reassignments counts as converged.
    pub tolerance: f64,
    pub tau_b: f64,
    pub tau_a: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lags: 1,
            noise_components: 2,
            mc_samples_fit: 8,
            mc_samples_score: 128,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            inner_iterations: 100,
            warm_start_iterations: 20,
            holdout_iterations: 200,
            init_sigma: 0.1,
            max_sweeps: 50,
            tolerance: 1e-3,
            tau_b: 0.1,
            tau_a: 0.1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: &str) -> Result<()> {
            Err(CcslError::InvalidConfig {
                field,
                reason: reason.into(),
            })
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha) {
            return bad("alpha", "must be positive");
        }
        if self.noise_components == 0 {
            return bad("noise_components", "must be at least 1");
        }
        if self.mc_samples_fit == 0 {
            return bad("mc_samples_fit", "must be at least 1");
        }
        if self.mc_samples_score == 0 {
            return bad("mc_samples_score", "must be at least 1");
        }
        if !positive(self.learning_rate) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !positive(self.init_sigma) {
            return bad("init_sigma", "must be positive");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps", "must be at least 1");
        }
        if !positive(self.tolerance) {
            return bad("tolerance", "must be positive");
        }
        if !positive(self.tau_b) {
            return bad("tau_b", "must be positive");
        }
        if !positive(self.tau_a) {
            return bad("tau_a", "must be positive");
        }
        Ok(())
    }
}

/// Extracted binary structure of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGraph {
    pub instantaneous: Adjacency,
    pub lagged: Vec<Adjacency>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub state: ClusterState,
    pub graphs: BTreeMap<usize, ClusterGraph>,
    pub elbo_trace: Vec<f64>,
    pub sweeps_run: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn n_clusters(&self) -> usize {
        self.state.n_clusters()
    }
}
