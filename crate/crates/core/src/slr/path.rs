use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{lambda_max, multinomial_loss, prox_saga_fit_from, SolverConfig, DEFAULT_SUPPORT_TOL};
use crate::error::{Error, Result};
use crate::eval::evaluate_accuracy;
use crate::numeric::logspace;
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_lambdas: usize,
    /// `λ_last / λ_first`.
    pub min_ratio: f64,
    pub warm_start: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_lambdas: 100,
            min_ratio: 0.1,
            warm_start: true,
        }
    }
}

impl PathConfig {
    /// Strictly decreasing, log-spaced from `lambda_max` to
    /// `min_ratio * lambda_max`.
    pub fn grid(&self, lambda_max: f64) -> Vec<f64> {
        logspace(lambda_max, lambda_max * self.min_ratio, self.n_lambdas)
    }
}

#[derive(Clone, Debug)]
pub struct PathEntry {
    pub lambda: f64,
    pub weights: WeightMatrix,
    pub nnz: usize,
    /// Unpenalized mean NLL on the training set.
    pub train_loss: f64,
    pub objective: f64,
    pub val_accuracy: f64,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RegPathResult {
    pub lambda_max: f64,
    pub entries: Vec<PathEntry>,
    pub selected: usize,
}

impl RegPathResult {
    pub fn selected_entry(&self) -> &PathEntry {
        &self.entries[self.selected]
    }
}

/// Solves the ℓ1 problem along the λ path with proximal SAGA and selects
/// the strength with the best validation accuracy (ties toward larger λ).
pub fn regularization_path(
    train: &ArrayView2<f64>,
    train_labels: &LabelVector,
    val: &ArrayView2<f64>,
    val_labels: &LabelVector,
    path: &PathConfig,
    solver: &SolverConfig,
) -> Result<RegPathResult> {
    if val_labels.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    if path.n_lambdas == 0 || !(path.min_ratio > 0.0 && path.min_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "path needs n_lambdas >= 1 and 0 < min_ratio < 1, got {path:?}"
        )));
    }
    let lmax = lambda_max(train, train_labels, solver.intercept)?;
    let mut entries: Vec<PathEntry> = Vec::with_capacity(path.n_lambdas);
    let mut selected = 0;
    for lambda in path.grid(lmax) {
        let init = entries.last().filter(|_| path.warm_start).map(|e| &e.weights);
        let fit = prox_saga_fit_from(train, train_labels, lambda, solver, init)?;
        let val_accuracy = evaluate_accuracy(&fit.weights, val, val_labels)?;
        let entry = PathEntry {
            lambda,
            nnz: fit.weights.nnz(DEFAULT_SUPPORT_TOL),
            train_loss: multinomial_loss(&fit.weights, train, train_labels),
            objective: fit.objective,
            val_accuracy,
            epochs: fit.iterations,
            converged: fit.converged,
            weights: fit.weights,
        };
        if entry.val_accuracy > entries.get(selected).map_or(f64::NEG_INFINITY, |e| e.val_accuracy) {
            selected = entries.len();
        }
        entries.push(entry);
    }
    Ok(RegPathResult {
        lambda_max: lmax,
        entries,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::Array2;

    fn problem(n: usize, f: usize, k: usize, seed: u64) -> (Array2<f64>, LabelVector) {
        let mut rng = SeededRng::new(seed);
        let h = Array2::from_shape_fn((n, f), |_| rng.normal());
        let labels = (0..n)
            .map(|i| if h[[i, 0]] > 0.0 { 0 } else { 1 + rng.below(k - 1) })
            .collect();
        (h, LabelVector::with_classes(labels, k).unwrap())
    }

    #[test]
    fn grid_shape() {
        let g = PathConfig::default().grid(2.0);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 0.2).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn first_entry_is_empty_and_selection_prefers_sparse() {
        let (h, y) = problem(60, 6, 3, 41);
        let (hv, yv) = problem(40, 6, 3, 42);
        let path = PathConfig {
            n_lambdas: 10,
            ..PathConfig::default()
        };
        let res = regularization_path(&h.view(), &y, &hv.view(), &yv, &path, &SolverConfig::default()).unwrap();
        assert_eq!(res.entries.len(), 10);
        assert_eq!(res.entries[0].nnz, 0);
        let best = res.entries.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
        let first_best = res.entries.iter().position(|e| e.val_accuracy == best).unwrap();
        assert_eq!(res.selected, first_best);
    }

    #[test]
    fn empty_validation_rejected() {
        let (h, y) = problem(20, 3, 2, 43);
        let empty = Array2::zeros((0, 3));
        let ev = LabelVector::with_classes(vec![], 2).unwrap();
        assert!(regularization_path(
            &h.view(),
            &y,
            &empty.view(),
            &ev,
            &PathConfig::default(),
            &SolverConfig::default()
        )
        .is_err());
    }
}
