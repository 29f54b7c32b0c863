use log::warn;
use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use super::loss::loss_and_grad_raw;
use super::{check_problem, minimize_lbfgs, FitOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate_accuracy;
use crate::numeric::logspace;
use crate::tensor_io::LabelVector;
use crate::weights::{FeatureSpace, WeightMatrix};

/// 100 log-spaced ℓ2 strengths from 0.5 to 6.
pub fn lp_default_grid() -> Vec<f64> {
    logspace(0.5, 6.0, 100)
}

/// Minimizes `loss + (λ/2)‖W‖²` with L-BFGS.
pub fn l2_logistic_fit(
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    lambda: f64,
    config: &SolverConfig,
    init: Option<&WeightMatrix>,
) -> Result<FitOutcome> {
    check_problem(features, labels)?;
    config.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let (k, f) = (labels.n_classes, features.ncols());
    let n_w = k * f;
    let mut x0 = vec![0.0; n_w + if config.intercept { k } else { 0 }];
    if let Some(init) = init {
        x0[..n_w].copy_from_slice(init.weights.as_standard_layout().as_slice().unwrap());
        if let (true, Some(b)) = (config.intercept, &init.intercept) {
            x0[n_w..].copy_from_slice(b.as_slice().unwrap());
        }
    }
    let unpack = |x: &[f64]| {
        let w = Array2::from_shape_vec((k, f), x[..n_w].to_vec()).unwrap();
        let b = config.intercept.then(|| Array1::from(x[n_w..].to_vec()));
        (w, b)
    };
    let outcome = minimize_lbfgs(
        |x| {
            let (w, b) = unpack(x);
            let lg = loss_and_grad_raw(&w.view(), b.as_ref().map(|b| b.view()).as_ref(), features, labels.as_slice());
            let reg: f64 = x[..n_w].iter().map(|v| v * v).sum::<f64>() * 0.5 * lambda;
            let mut g: Vec<f64> = lg
                .grad
                .iter()
                .zip(&x[..n_w])
                .map(|(g, w)| g + lambda * w)
                .collect();
            if let Some(gb) = lg.grad_intercept {
                g.extend(gb.iter());
            }
            (lg.loss + reg, g)
        },
        x0,
        config.max_iter,
        config.grad_tol,
    );
    if !outcome.converged {
        warn!(
            "l2 logistic fit (lambda {lambda}): gradient sup-norm {:.3e} after {} iterations",
            outcome.grad_norm_inf, outcome.iterations
        );
    }
    let (w, b) = unpack(&outcome.x);
    Ok(FitOutcome {
        weights: WeightMatrix::dense(w, FeatureSpace::Image).with_intercept(b),
        objective: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearProbeResult {
    pub grid: Vec<f64>,
    pub val_accuracies: Vec<f64>,
    pub objectives: Vec<f64>,
    pub selected: usize,
    #[serde(skip)]
    pub weights: WeightMatrix,
}

impl LinearProbeResult {
    pub fn selected_lambda(&self) -> f64 {
        self.grid[self.selected]
    }
}

/// Fits the ℓ2 probe at every grid strength (warm-starting along the grid)
/// and keeps the one with the best validation accuracy; ties go to the
/// larger strength.
pub fn linear_probe(
    train: &ArrayView2<f64>,
    train_labels: &LabelVector,
    val: &ArrayView2<f64>,
    val_labels: &LabelVector,
    grid: &[f64],
    config: &SolverConfig,
) -> Result<LinearProbeResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty regularization grid".into()));
    }
    if val_labels.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let mut best: Option<(usize, f64, WeightMatrix)> = None;
    let mut val_accuracies = Vec::with_capacity(grid.len());
    let mut objectives = Vec::with_capacity(grid.len());
    let mut previous: Option<WeightMatrix> = None;
    for (idx, &lambda) in grid.iter().enumerate() {
        let fit = l2_logistic_fit(train, train_labels, lambda, config, previous.as_ref())?;
        let acc = evaluate_accuracy(&fit.weights, val, val_labels)?;
        val_accuracies.push(acc);
        objectives.push(fit.objective);
        let better = match &best {
            None => true,
            Some((best_idx, best_acc, _)) => {
                acc > *best_acc || (acc == *best_acc && lambda > grid[*best_idx])
            }
        };
        if better {
            best = Some((idx, acc, fit.weights.clone()));
        }
        previous = Some(fit.weights);
    }
    let (selected, _, weights) = best.expect("nonempty grid");
    Ok(LinearProbeResult {
        grid: grid.to_vec(),
        val_accuracies,
        objectives,
        selected,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::slr::{fista_fit, multinomial_loss_grad};

    fn problem(n: usize, f: usize, k: usize, seed: u64) -> (Array2<f64>, LabelVector) {
        let mut rng = SeededRng::new(seed);
        let h = Array2::from_shape_fn((n, f), |_| rng.normal());
        let labels = (0..n).map(|_| rng.below(k)).collect();
        (h, LabelVector::with_classes(labels, k).unwrap())
    }

    #[test]
    fn stationary_at_solution() {
        let (z, y) = problem(50, 6, 3, 31);
        let lambda = 0.5;
        let fit = l2_logistic_fit(&z.view(), &y, lambda, &SolverConfig::default(), None).unwrap();
        let lg = multinomial_loss_grad(&fit.weights, &z.view(), &y);
        let g = lg.grad + &(&fit.weights.weights * lambda);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "{norm}");
    }

    #[test]
    fn huge_strength_shrinks_to_uniform() {
        let (z, y) = problem(30, 4, 3, 32);
        let fit = l2_logistic_fit(&z.view(), &y, 1e9, &SolverConfig::default(), None).unwrap();
        assert!(fit.weights.weights.iter().all(|w| w.abs() < 1e-8));
    }

    #[test]
    fn matches_fista_with_ridge_term() {
        let (z, y) = problem(40, 5, 3, 33);
        let lambda = 0.7;
        let config = SolverConfig {
            l2: lambda,
            ..SolverConfig::default()
        };
        let lbfgs = l2_logistic_fit(&z.view(), &y, lambda, &SolverConfig::default(), None).unwrap();
        let fista = fista_fit(&z.view(), &y, 0.0, &config).unwrap();
        assert!((lbfgs.objective - fista.objective).abs() <= 1e-5);
    }

    #[test]
    fn default_grid_endpoints() {
        let g = lp_default_grid();
        assert_eq!(g.len(), 100);
        assert_eq!((g[0], g[99]), (0.5, 6.0));
    }

    #[test]
    fn probe_selects_from_grid() {
        let (z, y) = problem(60, 5, 3, 34);
        let (zv, yv) = problem(30, 5, 3, 35);
        let grid = logspace(0.5, 6.0, 5);
        let res = linear_probe(&z.view(), &y, &zv.view(), &yv, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(res.val_accuracies.len(), 5);
        let best = res.val_accuracies.iter().cloned().fold(0.0, f64::max);
        assert_eq!(res.val_accuracies[res.selected], best);
        assert_eq!(res.weights.space, FeatureSpace::Image);
    }
}
