//! Causal cluster structure learning for multi-subject time-series panels.
//!
//! Subjects are grouped by a Chinese-restaurant-process clustering whose
//! seating probabilities come from each cluster's causal model, while every
//! cluster's linear non-Gaussian SVAR (instantaneous matrix `B`, lag
//! matrices `A_p`, Gaussian-mixture noise) is learned by variational
//! inference with reparameterized Monte-Carlo gradients.
//!
//! Modules:
//! - [`model`]: panels, coefficient draws, group models, partition state.
//! - [`synthgen`]: ground-truth structures and simulated panels.
//! - [`likelihood`]: noise densities, subject likelihoods, marginal
//!   likelihoods and membership scores.
//! - [`inference`]: ELBO, its gradient, the optimizer and the fitting loop.
//! - [`metrics`]: graph extraction, ARI, AUC and evaluation reports.

pub mod error;
pub mod graph;
pub mod inference;
mod kernel;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod model;
mod serde_matrix;
pub mod synthgen;

pub use error::{CcslError, Result};
pub use graph::Adjacency;
pub use model::{
    validate_panel, CausalParams, ClusterGraph, ClusterState, FitConfig, FitResult, GroupModel,
    NoiseModel, Panel, SubjectSeries,
};
