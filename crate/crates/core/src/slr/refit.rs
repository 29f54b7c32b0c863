use log::warn;
use ndarray::{Array1, Array2, ArrayView2};

use super::loss::loss_and_grad_raw;
use super::{check_problem, minimize_lbfgs, FitOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

/// Re-optimizes the unpenalized loss over the entries of `mask` only; every
/// other entry stays exactly zero. Starts from `init` restricted to the mask
/// (typically the ℓ1 solution), or from zero.
pub fn masked_refit(
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    mask: &Array2<bool>,
    config: &SolverConfig,
    init: Option<&WeightMatrix>,
) -> Result<FitOutcome> {
    check_problem(features, labels)?;
    config.validate()?;
    let k = labels.n_classes;
    if mask.dim() != (k, features.ncols()) {
        return Err(Error::Shape(format!(
            "mask {:?} vs head ({k}, {})",
            mask.dim(),
            features.ncols()
        )));
    }
    let free: Vec<(usize, usize)> = mask
        .indexed_iter()
        .filter_map(|(idx, &m)| m.then_some(idx))
        .collect();
    if free.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n_free = free.len();
    let n_params = n_free + if config.intercept { k } else { 0 };

    let mut x0 = vec![0.0; n_params];
    if let Some(init) = init {
        for (slot, &idx) in x0.iter_mut().zip(&free) {
            *slot = init.weights[idx];
        }
        if let (true, Some(b)) = (config.intercept, &init.intercept) {
            x0[n_free..].copy_from_slice(b.as_slice().expect("contiguous intercept"));
        }
    }

    let unpack = |x: &[f64]| -> (Array2<f64>, Option<Array1<f64>>) {
        let mut w = Array2::zeros(mask.dim());
        for (&v, &idx) in x.iter().zip(&free) {
            w[idx] = v;
        }
        let b = config.intercept.then(|| Array1::from(x[n_free..].to_vec()));
        (w, b)
    };

    let outcome = minimize_lbfgs(
        |x| {
            let (w, b) = unpack(x);
            let lg = loss_and_grad_raw(&w.view(), b.as_ref().map(|b| b.view()).as_ref(), features, labels.as_slice());
            let mut g: Vec<f64> = free.iter().map(|&idx| lg.grad[idx]).collect();
            if let Some(gb) = lg.grad_intercept {
                g.extend(gb.iter());
            }
            (lg.loss, g)
        },
        x0,
        config.max_iter,
        config.grad_tol,
    );
    if !outcome.converged {
        warn!(
            "masked refit: gradient sup-norm {:.3e} after {} iterations",
            outcome.grad_norm_inf, outcome.iterations
        );
    }
    let (w, b) = unpack(&outcome.x);
    let space = init.map_or(crate::weights::FeatureSpace::Avd, |w| w.space);
    let weights = WeightMatrix::with_mask(w, mask.clone(), space)?.with_intercept(b);
    Ok(FitOutcome {
        weights,
        objective: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::slr::{fista_fit, lambda_max, multinomial_loss, prox_saga_fit, extract_support};

    fn noisy_problem(n: usize, f: usize, k: usize, seed: u64) -> (Array2<f64>, LabelVector) {
        let mut rng = SeededRng::new(seed);
        let h = Array2::from_shape_fn((n, f), |_| rng.normal());
        let labels = (0..n).map(|_| rng.below(k)).collect();
        (h, LabelVector::with_classes(labels, k).unwrap())
    }

    #[test]
    fn full_mask_matches_unregularized_fit() {
        let (h, y) = noisy_problem(80, 3, 2, 21);
        let mask = Array2::from_elem((2, 3), true);
        let config = SolverConfig {
            grad_tol: 1e-11,
            max_iter: 50_000,
            ..SolverConfig::default()
        };
        let refit = masked_refit(&h.view(), &y, &mask, &config, None).unwrap();
        let reference = fista_fit(&h.view(), &y, 0.0, &config).unwrap();
        assert!(refit.converged && reference.converged);
        // the two-class softmax is shift-invariant per column; compare
        // the identifiable row difference
        let d_refit = &refit.weights.weights.row(0) - &refit.weights.weights.row(1);
        let d_ref = &reference.weights.weights.row(0) - &reference.weights.weights.row(1);
        for (a, b) in d_refit.iter().zip(d_ref.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((refit.objective - reference.objective).abs() < 1e-10);
    }

    #[test]
    fn refit_debiases_and_respects_mask() {
        let (h, y) = noisy_problem(60, 8, 3, 22);
        let lambda = 0.3 * lambda_max(&h.view(), &y, false).unwrap();
        let sparse = prox_saga_fit(&h.view(), &y, lambda, &SolverConfig::default()).unwrap();
        let mask = extract_support(&sparse.weights, 1e-10);
        assert!(mask.iter().any(|&m| m));
        let refit = masked_refit(&h.view(), &y, &mask, &SolverConfig::default(), Some(&sparse.weights)).unwrap();
        assert!(
            multinomial_loss(&refit.weights, &h.view(), &y)
                <= multinomial_loss(&sparse.weights, &h.view(), &y)
        );
        for (idx, &m) in mask.indexed_iter() {
            if !m {
                assert_eq!(refit.weights.weights[idx], 0.0);
            }
        }
    }

    #[test]
    fn empty_mask_rejected() {
        let (h, y) = noisy_problem(10, 2, 2, 23);
        let mask = Array2::from_elem((2, 2), false);
        assert!(matches!(
            masked_refit(&h.view(), &y, &mask, &SolverConfig::default(), None),
            Err(Error::EmptyMask)
        ));
    }
}
