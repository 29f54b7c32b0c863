//! ℓ1-regularized multinomial logistic regression.
//!
//! The production solver is proximal SAGA ([`prox_saga_fit`]); the
//! full-batch accelerated proximal gradient solver ([`fista_fit`]) is kept
//! as an independent reference for it. [`regularization_path`] runs SAGA
//! over a log-spaced λ grid starting at [`lambda_max`], where the all-zero
//! head is optimal. [`masked_refit`] debiases a selected support and
//! [`linear_probe`] is the ℓ2 baseline on raw embeddings.

mod fista;
mod lbfgs;
mod loss;
mod path;
mod probe;
mod refit;
mod saga;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

pub use fista::{fista_fit, fista_fit_from};
pub use lbfgs::{minimize_lbfgs, LbfgsOutcome};
pub use loss::{
    multinomial_loss, multinomial_loss_grad, penalized_objective, soft_threshold, LossGrad,
};
pub use path::{regularization_path, PathConfig, PathEntry, RegPathResult};
pub use probe::{l2_logistic_fit, linear_probe, lp_default_grid, LinearProbeResult};
pub use refit::masked_refit;
pub use saga::{prox_saga_fit, prox_saga_fit_from, saga_step_size};

/// Default magnitude below which a coefficient counts as zero.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// SAGA passes over the data.
    pub epochs: usize,
    /// SAGA stops once the relative objective change over an epoch drops
    /// below this.
    pub tol: f64,
    pub seed: u64,
    pub intercept: bool,
    /// Iteration cap for the full-batch solvers (FISTA, L-BFGS).
    pub max_iter: usize,
    /// Full-batch solvers stop once the (prox-)gradient sup-norm drops
    /// below this.
    pub grad_tol: f64,
    /// Extra `(l2/2)‖W‖²` term, honored by the full-batch solvers only.
    pub l2: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            tol: 1e-8,
            seed: 0,
            intercept: false,
            max_iter: 10_000,
            grad_tol: 1e-9,
            l2: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidArgument("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// A fitted head plus solver diagnostics.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub weights: WeightMatrix,
    /// Penalized objective at `weights`.
    pub objective: f64,
    /// Epochs (SAGA) or iterations (full-batch) used.
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn check_problem(features: &ArrayView2<f64>, labels: &LabelVector) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if labels.n_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    Ok(())
}

/// Smallest ℓ1 strength at which the all-zero head is optimal:
/// `max_{c,j} |(1/n) Σ_i (y_ic − π_c) h_ij|`, with `π_c = 1/|C|` without an
/// intercept and the class frequencies with one.
pub fn lambda_max(features: &ArrayView2<f64>, labels: &LabelVector, intercept: bool) -> Result<f64> {
    check_problem(features, labels)?;
    let n = features.nrows();
    let k = labels.n_classes;
    let prior: Vec<f64> = if intercept {
        let mut counts = vec![0.0; k];
        for &y in labels.as_slice() {
            counts[y] += 1.0;
        }
        counts.iter().map(|c| c / n as f64).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let mut residual = Array2::from_shape_fn((n, k), |(_, c)| prior[c]);
    for (i, &y) in labels.as_slice().iter().enumerate() {
        residual[[i, y]] -= 1.0;
    }
    let grad = residual.t().dot(features) / n as f64;
    let value = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if value == 0.0 {
        return Err(Error::DegenerateFeatures);
    }
    Ok(value)
}

/// Entries with magnitude above `tol`.
pub fn extract_support(weights: &WeightMatrix, tol: f64) -> Array2<bool> {
    weights.weights.mapv(|w| w.abs() > tol)
}

/// Rescales columns to unit root-mean-square. Returns the scaled features
/// and the per-column scale; zero columns keep scale 1.
pub fn standardize_columns(features: &ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
    let n = features.nrows().max(1) as f64;
    let scales: Vec<f64> = features
        .axis_iter(Axis(1))
        .map(|col| {
            let rms = (col.dot(&col) / n).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = features.to_owned();
    for (mut col, s) in scaled.axis_iter_mut(Axis(1)).zip(&scales) {
        col.mapv_inplace(|v| v / s);
    }
    (scaled, scales)
}

/// Maps a head fit on standardized columns back to the original scale.
pub fn unstandardize_weights(weights: &mut WeightMatrix, scales: &[f64]) {
    for (mut col, s) in weights.weights.axis_iter_mut(Axis(1)).zip(scales) {
        col.mapv_inplace(|w| w / s);
    }
}
