//! Weight-space ensembling and evaluation: interpolation between learned and
//! zero-shot heads, ID/OOD frontier sweeps, per-class feature reports, and
//! the prompt separation probe.

mod features;
mod frontier;
mod separation;

use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::numeric::argmax;
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

pub use features::{top_features, ClassFeatures, FeatureReport, RankedFeature};
pub use frontier::{frontier_sweep, default_alpha_grid, uniform_alpha_grid, EvalSet, FrontierCurve};
pub use separation::{rank_auc, separation_probe, ClassSummary, PairAuc, PromptStats, SeparationStats};

/// `α · learned + (1 − α) · zero_shot`. The mask is the union of both masks;
/// a missing intercept counts as zero. The endpoints return the operands
/// unchanged.
pub fn interpolate(learned: &WeightMatrix, zero_shot: &WeightMatrix, alpha: f64) -> Result<WeightMatrix> {
    if learned.weights.dim() != zero_shot.weights.dim() {
        return Err(Error::Shape(format!(
            "learned head {:?} vs zero-shot head {:?}",
            learned.weights.dim(),
            zero_shot.weights.dim()
        )));
    }
    if learned.space != zero_shot.space {
        return Err(Error::FeatureSpace {
            weights: learned.space.to_string(),
            features: zero_shot.space.to_string(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut mask = learned.mask.clone();
    Zip::from(&mut mask).and(&zero_shot.mask).for_each(|m, &z| *m |= z);

    let (weights, intercept) = if alpha == 0.0 {
        (zero_shot.weights.clone(), zero_shot.intercept.clone())
    } else if alpha == 1.0 {
        (learned.weights.clone(), learned.intercept.clone())
    } else {
        let w = &learned.weights * alpha + &(&zero_shot.weights * (1.0 - alpha));
        let b = match (&learned.intercept, &zero_shot.intercept) {
            (None, None) => None,
            (Some(l), None) => Some(l * alpha),
            (None, Some(z)) => Some(z * (1.0 - alpha)),
            (Some(l), Some(z)) => Some(l * alpha + &(z * (1.0 - alpha))),
        };
        (w, b)
    };
    Ok(WeightMatrix {
        weights,
        mask,
        space: learned.space,
        intercept,
    })
}

/// Interpolation weight used for prior injection with `shots` examples per
/// class: `min(0.05 · shots, 1)`.
pub fn prior_alpha(shots: usize) -> f64 {
    (0.05 * shots as f64).min(1.0)
}

pub fn prior_injected_weights(
    learned: &WeightMatrix,
    zero_shot: &WeightMatrix,
    shots: usize,
) -> Result<WeightMatrix> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be at least 1".into()));
    }
    interpolate(learned, zero_shot, prior_alpha(shots))
}

/// Fraction of samples whose arg-max class (ties to the lowest index) equals
/// the label.
pub fn evaluate_accuracy(
    weights: &WeightMatrix,
    features: &ArrayView2<f64>,
    labels: &LabelVector,
) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on zero samples".into()));
    }
    let logits = weights.logits(features)?;
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels.as_slice())
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
