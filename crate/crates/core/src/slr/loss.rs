use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::numeric::softmax_in_place;
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

/// Mean multinomial negative log-likelihood and its gradient.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    /// `|C| x F`, `(1/n) Σ (p_i − e_{y_i}) h_iᵀ`.
    pub grad: Array2<f64>,
    /// `(1/n) Σ (p_i − e_{y_i})`, present when the head has an intercept.
    pub grad_intercept: Option<Array1<f64>>,
}

pub(crate) fn class_scores(
    weights: &ArrayView2<f64>,
    intercept: Option<&ArrayView1<f64>>,
    features: &ArrayView2<f64>,
) -> Array2<f64> {
    let mut scores = features.dot(&weights.t());
    if let Some(b) = intercept {
        scores += &b.view().insert_axis(Axis(0));
    }
    scores
}

/// Turns scores into residuals `p_i − e_{y_i}` in place, returning the
/// summed negative log-likelihood.
pub(crate) fn residuals_in_place(scores: &mut Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (mut row, &y) in scores.rows_mut().into_iter().zip(labels) {
        let true_score = row[y];
        let (max, tail) = softmax_in_place(row.view_mut());
        total += (max - true_score) + tail;
        row[y] -= 1.0;
    }
    total
}

pub(crate) fn loss_and_grad_raw(
    weights: &ArrayView2<f64>,
    intercept: Option<&ArrayView1<f64>>,
    features: &ArrayView2<f64>,
    labels: &[usize],
) -> LossGrad {
    let n = features.nrows().max(1) as f64;
    let mut scores = class_scores(weights, intercept, features);
    let total = residuals_in_place(&mut scores, labels);
    let grad = scores.t().dot(features) / n;
    let grad_intercept = intercept.map(|_| scores.sum_axis(Axis(0)) / n);
    LossGrad {
        loss: total / n,
        grad,
        grad_intercept,
    }
}

pub(crate) fn loss_raw(
    weights: &ArrayView2<f64>,
    intercept: Option<&ArrayView1<f64>>,
    features: &ArrayView2<f64>,
    labels: &[usize],
) -> f64 {
    let n = features.nrows().max(1) as f64;
    let mut scores = class_scores(weights, intercept, features);
    residuals_in_place(&mut scores, labels) / n
}

/// Mean negative log-likelihood of `labels` under softmax(`features · Wᵀ`).
pub fn multinomial_loss_grad(
    weights: &WeightMatrix,
    features: &ArrayView2<f64>,
    labels: &LabelVector,
) -> LossGrad {
    loss_and_grad_raw(
        &weights.weights.view(),
        weights.intercept.as_ref().map(|b| b.view()).as_ref(),
        features,
        labels.as_slice(),
    )
}

pub fn multinomial_loss(weights: &WeightMatrix, features: &ArrayView2<f64>, labels: &LabelVector) -> f64 {
    loss_raw(
        &weights.weights.view(),
        weights.intercept.as_ref().map(|b| b.view()).as_ref(),
        features,
        labels.as_slice(),
    )
}

/// `loss + λ‖W‖₁ + (l2/2)‖W‖²`; the intercept is never penalized.
pub fn penalized_objective(
    weights: &WeightMatrix,
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    lambda: f64,
    l2: f64,
) -> f64 {
    multinomial_loss(weights, features, labels) + penalty(&weights.weights.view(), lambda, l2)
}

pub(crate) fn penalty(weights: &ArrayView2<f64>, lambda: f64, l2: f64) -> f64 {
    let mut value = 0.0;
    if lambda != 0.0 {
        value += lambda * weights.iter().map(|w| w.abs()).sum::<f64>();
    }
    if l2 != 0.0 {
        value += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    }
    value
}

/// Proximal operator of `t·|x|`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::weights::FeatureSpace;
    use ndarray::array;

    #[test]
    fn zero_weights_give_log_classes() {
        let h = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = LabelVector::with_classes(vec![0, 2, 1], 3).unwrap();
        let w = WeightMatrix::zeros(3, 2, FeatureSpace::Avd);
        let lg = multinomial_loss_grad(&w, &h.view(), &y);
        assert!((lg.loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_with_margin() {
        let h = array![[1.0]];
        let y = LabelVector::with_classes(vec![0], 2).unwrap();
        let mut last = f64::INFINITY;
        for scale in [0.0, 1.0, 5.0, 20.0, 50.0] {
            let w = WeightMatrix::dense(array![[scale], [-scale]], FeatureSpace::Avd);
            let loss = multinomial_loss(&w, &h.view(), &y);
            assert!(loss < last);
            last = loss;
        }
        assert!(last < 1e-40);
    }

    #[test]
    fn intercept_gradient_by_finite_differences() {
        let mut rng = SeededRng::new(11);
        let h = Array2::from_shape_fn((7, 3), |_| rng.normal());
        let y = LabelVector::with_classes(vec![0, 1, 2, 1, 0, 2, 2], 3).unwrap();
        let w = WeightMatrix::dense(Array2::from_shape_fn((3, 3), |_| rng.normal()), FeatureSpace::Avd)
            .with_intercept(Some(array![0.3, -0.2, 0.1]));
        let lg = multinomial_loss_grad(&w, &h.view(), &y);
        let gb = lg.grad_intercept.unwrap();
        let step = 1e-6;
        for c in 0..3 {
            let mut plus = w.clone();
            plus.intercept.as_mut().unwrap()[c] += step;
            let mut minus = w.clone();
            minus.intercept.as_mut().unwrap()[c] -= step;
            let fd = (multinomial_loss(&plus, &h.view(), &y) - multinomial_loss(&minus, &h.view(), &y))
                / (2.0 * step);
            assert!((fd - gb[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.123, 0.0), 0.123);
    }

    #[test]
    fn stable_for_huge_logits() {
        let h = array![[1e4, -1e4]];
        let y = LabelVector::with_classes(vec![1], 2).unwrap();
        let w = WeightMatrix::dense(array![[1.0, 0.0], [0.0, 1.0]], FeatureSpace::Avd);
        let lg = multinomial_loss_grad(&w, &h.view(), &y);
        assert!(lg.loss.is_finite());
        assert!((lg.loss - 2e4).abs() < 1e-6);
    }
}
