//! Synthetic problems with known structure, used by the examples, the
//! acceptance suite, and `avd` smoke tests.

use ndarray::{Array2, ArrayView2};

use crate::rng::SeededRng;
use crate::tensor_io::{DescriptorLayout, LabelVector};

/// Gaussian features and labels drawn from a random dense softmax model.
pub fn random_problem(n: usize, f: usize, k: usize, seed: u64) -> (Array2<f64>, LabelVector) {
    let mut rng = SeededRng::new(seed);
    let features = Array2::from_shape_fn((n, f), |_| rng.normal());
    let w = Array2::from_shape_fn((k, f), |_| rng.normal() / (f as f64).sqrt());
    let labels = sample_labels(&features.view(), &w, 1.0, &mut rng);
    (features, LabelVector::with_classes(labels, k).expect("labels < k"))
}

/// `argmax(W h + noise · ε)` per row.
fn sample_labels(features: &ArrayView2<f64>, w: &Array2<f64>, noise: f64, rng: &mut SeededRng) -> Vec<usize> {
    let logits = features.dot(&w.t());
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let noisy: Vec<f64> = row.iter().map(|v| v + noise * rng.normal()).collect();
            crate::numeric::argmax(ndarray::ArrayView1::from(&noisy))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub n_classes: usize,
    /// Descriptor features (the augmented space adds one column per class).
    pub n_descriptors: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub per_class: usize,
    /// Standard deviation of the Gaussian noise on every feature.
    pub noise: f64,
    /// Mean shift of a class's planted features on samples of that class.
    pub shift: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_descriptors: 195,
            n_train: 500,
            n_val: 500,
            per_class: 4,
            noise: 0.1,
            shift: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlantedProblem {
    pub layout: DescriptorLayout,
    pub train: Array2<f64>,
    pub train_labels: LabelVector,
    pub val: Array2<f64>,
    pub val_labels: LabelVector,
    pub true_weights: Array2<f64>,
    pub support: Array2<bool>,
}

/// Augmented-descriptor-shaped problem with balanced labels. Every feature
/// is `N(0, noise²)`; on samples of class `c`, the `per_class` planted
/// features drawn from `c`'s own descriptor block are shifted up by
/// `shift`. The Bayes posterior is then a softmax of a linear head whose
/// support is exactly the planted set (`true_weights = shift / noise²`).
pub fn planted_support_problem(config: &PlantedConfig, seed: u64) -> PlantedProblem {
    let k = config.n_classes;
    let base = config.n_descriptors / k;
    let counts: Vec<usize> = (0..k)
        .map(|c| base + usize::from(c < config.n_descriptors % k))
        .collect();
    let layout = DescriptorLayout::from_counts(counts).expect("positive counts");
    let f = layout.n_augmented();
    let mut rng = SeededRng::new(seed);

    let mut true_weights = Array2::zeros((k, f));
    for c in 0..k {
        let mut block: Vec<usize> = layout.range(c).collect();
        for i in 0..config.per_class.min(block.len()) {
            let j = i + rng.below(block.len() - i);
            block.swap(i, j);
            true_weights[[c, block[i]]] = config.shift / (config.noise * config.noise);
        }
    }
    let support = true_weights.mapv(|w: f64| w != 0.0);

    let draw = |n: usize, rng: &mut SeededRng| {
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let h = Array2::from_shape_fn((n, f), |(i, j)| {
            let mean = if support[[labels[i], j]] { config.shift } else { 0.0 };
            mean + config.noise * rng.normal()
        });
        (h, LabelVector::with_classes(labels, k).expect("labels < k"))
    };
    let (train, train_labels) = draw(config.n_train, &mut rng);
    let (val, val_labels) = draw(config.n_val, &mut rng);
    PlantedProblem {
        layout,
        train,
        train_labels,
        val,
        val_labels,
        true_weights,
        support,
    }
}

/// Harmonic mean of precision and recall of `estimated` against `truth`.
pub fn support_f1(estimated: &Array2<bool>, truth: &Array2<bool>) -> f64 {
    let tp = estimated.iter().zip(truth).filter(|(&e, &t)| e && t).count() as f64;
    let predicted = estimated.iter().filter(|&&e| e).count() as f64;
    let actual = truth.iter().filter(|&&t| t).count() as f64;
    if predicted == 0.0 || actual == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (tp / predicted, tp / actual);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn f1_cases() {
        let t = array![[true, false], [false, true]];
        assert_eq!(support_f1(&t, &t), 1.0);
        assert_eq!(support_f1(&array![[true, true], [false, true]], &t), 0.8);
        assert_eq!(support_f1(&array![[false, false], [false, false]], &t), 0.0);
    }

    #[test]
    fn planted_shape() {
        let p = planted_support_problem(&PlantedConfig::default(), 1);
        assert_eq!(p.train.dim(), (500, 200));
        assert_eq!(p.layout.n_descriptors(), 195);
        assert_eq!(p.support.iter().filter(|&&s| s).count(), 20);
        for c in 0..5 {
            let r = p.layout.range(c);
            assert_eq!(p.support.row(c).iter().enumerate().filter(|(j, &s)| s && r.contains(j)).count(), 4);
        }
    }
}
