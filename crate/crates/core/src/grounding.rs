//! Fixed text projections and zero-shot heads.
//!
//! The grounding matrix stacks the unit-normalized descriptor embeddings
//! (class-major, following the [`DescriptorLayout`]) on top of one
//! class-prompt embedding per class. Grounding an image embedding is a
//! product with this matrix, so every grounded feature is a cosine.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numeric::{argmax_rows, softmax_in_place};
use crate::tensor_io::{DescriptorLayout, EmbeddingMatrix};
use crate::weights::{FeatureSpace, WeightMatrix};

/// Default weight of the class-prompt block in the merged zero-shot head.
pub const DEFAULT_GAMMA: f64 = 5.0;

pub fn l2_normalize_rows(matrix: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = matrix.to_owned();
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        let norm = r.dot(&r).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow { row });
        }
        r.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Collapses `n_classes * n_templates` template embeddings (class-major)
/// into one class-prompt row per class: the template mean, re-normalized.
pub fn average_class_prompts(
    template_embeddings: &ArrayView2<f64>,
    n_classes: usize,
) -> Result<Array2<f64>> {
    let rows = template_embeddings.nrows();
    if n_classes == 0 || !rows.is_multiple_of(n_classes) || rows == 0 {
        return Err(Error::Shape(format!(
            "{rows} template rows do not divide into {n_classes} classes"
        )));
    }
    let per_class = rows / n_classes;
    let normalized = l2_normalize_rows(template_embeddings)?;
    let mut means = Array2::zeros((n_classes, template_embeddings.ncols()));
    for c in 0..n_classes {
        let block = normalized.slice(s![c * per_class..(c + 1) * per_class, ..]);
        means.row_mut(c).assign(&block.mean_axis(Axis(0)).unwrap());
    }
    l2_normalize_rows(&means.view())
}

/// `(M + |C|) x d` projection: descriptor rows then class-prompt rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundingMatrix {
    pub matrix: Array2<f64>,
    pub layout: DescriptorLayout,
}

impl GroundingMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `n x (M + |C|)` inner products of image embeddings with the grounding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundedFeatures {
    pub values: Array2<f64>,
}

impl GroundedFeatures {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Descriptor block only (first M columns).
    pub fn descriptor_block(&self, layout: &DescriptorLayout) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., ..layout.n_descriptors()])
    }

    /// Class-prompt block only (last |C| columns).
    pub fn class_prompt_block(&self, layout: &DescriptorLayout) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., layout.n_descriptors()..])
    }
}

pub fn build_grounding(
    descriptor_embeddings: &EmbeddingMatrix,
    class_prompt_embeddings: &EmbeddingMatrix,
    layout: &DescriptorLayout,
) -> Result<GroundingMatrix> {
    let m = layout.n_descriptors();
    let c = layout.n_classes();
    if descriptor_embeddings.rows() != m {
        return Err(Error::Shape(format!(
            "descriptor embeddings have {} rows, layout declares M = {m}",
            descriptor_embeddings.rows()
        )));
    }
    if class_prompt_embeddings.rows() != c {
        return Err(Error::Shape(format!(
            "class-prompt embeddings have {} rows, layout declares {c} classes",
            class_prompt_embeddings.rows()
        )));
    }
    if descriptor_embeddings.cols() != class_prompt_embeddings.cols() {
        return Err(Error::Shape(format!(
            "descriptor dim {} != class-prompt dim {}",
            descriptor_embeddings.cols(),
            class_prompt_embeddings.cols()
        )));
    }
    let stacked = ndarray::concatenate(
        Axis(0),
        &[
            descriptor_embeddings.data.view(),
            class_prompt_embeddings.data.view(),
        ],
    )
    .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(GroundingMatrix {
        matrix: l2_normalize_rows(&stacked.view())?,
        layout: layout.clone(),
    })
}

/// `H = Z · Uᵀ`. `Z` rows are expected to be unit-normalized already.
pub fn compute_groundings(
    grounding: &GroundingMatrix,
    images: &ArrayView2<f64>,
) -> Result<GroundedFeatures> {
    if images.ncols() != grounding.dim() {
        return Err(Error::Shape(format!(
            "image dim {} != grounding dim {}",
            images.ncols(),
            grounding.dim()
        )));
    }
    Ok(GroundedFeatures {
        values: images.dot(&grounding.matrix.t()),
    })
}

/// Block-diagonal descriptor-averaging head: row `c` holds `1 / M_c` on
/// class `c`'s descriptors.
pub fn zero_shot_vd_weights(layout: &DescriptorLayout) -> WeightMatrix {
    let mut w = Array2::zeros((layout.n_classes(), layout.n_descriptors()));
    for c in 0..layout.n_classes() {
        let value = 1.0 / layout.count(c) as f64;
        w.slice_mut(s![c, layout.range(c)]).fill(value);
    }
    WeightMatrix::dense(w, FeatureSpace::Vd)
}

/// Identity head over class-prompt groundings.
pub fn zero_shot_cp_weights(n_classes: usize) -> WeightMatrix {
    WeightMatrix::dense(Array2::eye(n_classes), FeatureSpace::Cp)
}

/// `[W_vd, γ · W_cp]` over the augmented feature space.
pub fn merge_zero_shot(vd: &WeightMatrix, cp: &WeightMatrix, gamma: f64) -> Result<WeightMatrix> {
    if vd.space != FeatureSpace::Vd || cp.space != FeatureSpace::Cp {
        return Err(Error::FeatureSpace {
            weights: format!("{} + {}", vd.space, cp.space),
            features: "vd + cp".into(),
        });
    }
    if vd.n_classes() != cp.n_classes() {
        return Err(Error::Shape(format!(
            "vd head has {} classes, cp head has {}",
            vd.n_classes(),
            cp.n_classes()
        )));
    }
    let scaled = &cp.weights * gamma;
    let weights = ndarray::concatenate(Axis(1), &[vd.weights.view(), scaled.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let cp_mask = if gamma == 0.0 {
        Array2::from_elem(cp.mask.dim(), false)
    } else {
        cp.mask.clone()
    };
    let mask = ndarray::concatenate(Axis(1), &[vd.mask.view(), cp_mask.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    WeightMatrix::with_mask(weights, mask, FeatureSpace::Avd)
}

/// Zero-shot heads expressed over the augmented feature space so they can be
/// evaluated and interpolated against learned augmented heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroShotKind {
    /// Descriptor averaging only: `[W_vd, 0]`.
    Vd,
    /// Class prompts only: `[0, I]`.
    Cp,
    /// Merged: `[W_vd, γ I]`.
    Avd,
}

pub fn zero_shot_avd_head(layout: &DescriptorLayout, kind: ZeroShotKind, gamma: f64) -> WeightMatrix {
    let vd = zero_shot_vd_weights(layout);
    let cp = zero_shot_cp_weights(layout.n_classes());
    let merged = match kind {
        ZeroShotKind::Vd => merge_zero_shot(&vd, &cp, 0.0),
        ZeroShotKind::Cp => merge_zero_shot(&vd.scaled(0.0), &cp, 1.0).map(|mut w| {
            w.mask.slice_mut(s![.., ..layout.n_descriptors()]).fill(false);
            w
        }),
        ZeroShotKind::Avd => merge_zero_shot(&vd, &cp, gamma),
    };
    merged.expect("zero-shot blocks share the layout")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Softmax classification at temperature `tau`; argmax ties go to the
/// lowest class index.
pub fn predict(weights: &WeightMatrix, features: &ArrayView2<f64>, tau: f64) -> Result<Prediction> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let logits = weights.logits(features)?;
    let labels = argmax_rows(&logits.view());
    let mut probabilities = &logits / tau;
    for row in probabilities.rows_mut() {
        softmax_in_place(row);
    }
    Ok(Prediction {
        logits,
        probabilities,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::array;

    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.normal())
    }

    fn layout_23() -> DescriptorLayout {
        DescriptorLayout::from_counts(vec![2, 3]).unwrap()
    }

    #[test]
    fn normalize_rows() {
        let out = l2_normalize_rows(&array![[3.0, 4.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(out, array![[0.6, 0.8], [1.0, 0.0]]);
        assert!(matches!(
            l2_normalize_rows(&array![[1.0, 0.0], [0.0, 0.0]].view()),
            Err(Error::ZeroRow { row: 1 })
        ));
    }

    #[test]
    fn grounding_shapes() {
        let mut rng = SeededRng::new(1);
        let layout = layout_23();
        let desc = EmbeddingMatrix::new(random(5, 8, &mut rng)).unwrap();
        let cp = EmbeddingMatrix::new(random(2, 8, &mut rng)).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        assert_eq!(g.matrix.dim(), (7, 8));
        let first = l2_normalize_rows(&desc.data.slice(s![0..1, ..])).unwrap();
        assert_eq!(g.matrix.row(0), first.row(0));
        for row in g.matrix.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }

        let short = EmbeddingMatrix::new(random(4, 8, &mut rng)).unwrap();
        assert!(matches!(build_grounding(&short, &cp, &layout), Err(Error::Shape(_))));
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let mut rng = SeededRng::new(2);
        let layout = layout_23();
        let desc = EmbeddingMatrix::new(random(5, 8, &mut rng)).unwrap();
        let cp = EmbeddingMatrix::new(random(2, 8, &mut rng)).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        let z = g.matrix.slice(s![3..4, ..]).to_owned();
        let h = compute_groundings(&g, &z.view()).unwrap();
        assert!((h.values[[0, 3]] - 1.0).abs() < 1e-9);

        let layout = DescriptorLayout::from_counts(vec![1]).unwrap();
        let desc = EmbeddingMatrix::new(array![[1.0, 0.0]]).unwrap();
        let cp = EmbeddingMatrix::new(array![[1.0, 1.0]]).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        let h = compute_groundings(&g, &array![[0.0, 1.0]].view()).unwrap();
        assert_eq!(h.values[[0, 0]], 0.0);
    }

    #[test]
    fn groundings_match_naive_triple_loop() {
        let mut rng = SeededRng::new(3);
        let layout = layout_23();
        let desc = EmbeddingMatrix::new(random(5, 8, &mut rng)).unwrap();
        let cp = EmbeddingMatrix::new(random(2, 8, &mut rng)).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        let z = l2_normalize_rows(&random(4, 8, &mut rng).view()).unwrap();
        let h = compute_groundings(&g, &z.view()).unwrap();
        for i in 0..4 {
            for j in 0..7 {
                let mut acc = 0.0;
                for k in 0..8 {
                    acc += z[[i, k]] * g.matrix[[j, k]];
                }
                assert!((h.values[[i, j]] - acc).abs() <= 1e-12);
                assert!(h.values[[i, j]].abs() <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn grounding_is_bilinear() {
        let mut rng = SeededRng::new(4);
        let layout = layout_23();
        let desc = EmbeddingMatrix::new(random(5, 6, &mut rng)).unwrap();
        let cp = EmbeddingMatrix::new(random(2, 6, &mut rng)).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        let (z1, z2) = (random(3, 6, &mut rng), random(3, 6, &mut rng));
        let combo = &z1 * 2.5 - &z2 * 0.75;
        let h = compute_groundings(&g, &combo.view()).unwrap().values;
        let h1 = compute_groundings(&g, &z1.view()).unwrap().values;
        let h2 = compute_groundings(&g, &z2.view()).unwrap().values;
        let expected = h1 * 2.5 - h2 * 0.75;
        assert!(h.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let layout = DescriptorLayout::from_counts(vec![1]).unwrap();
        let desc = EmbeddingMatrix::new(array![[1.0, 0.0]]).unwrap();
        let cp = EmbeddingMatrix::new(array![[0.0, 1.0]]).unwrap();
        let g = build_grounding(&desc, &cp, &layout).unwrap();
        assert!(compute_groundings(&g, &array![[1.0, 0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn vd_weights_block_diagonal() {
        let w = zero_shot_vd_weights(&layout_23());
        let third = 1.0 / 3.0;
        assert_eq!(
            w.weights,
            array![[0.5, 0.5, 0.0, 0.0, 0.0], [0.0, 0.0, third, third, third]]
        );
        assert_eq!(w.mask, w.weights.mapv(|v| v != 0.0));
        for row in w.weights.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vd_logits_equal_mean_descriptor_score() {
        let mut rng = SeededRng::new(5);
        let layout = DescriptorLayout::from_counts(vec![3, 1, 4, 2]).unwrap();
        let h = random(6, layout.n_descriptors(), &mut rng);
        let logits = zero_shot_vd_weights(&layout).logits(&h.view()).unwrap();
        for i in 0..6 {
            for c in 0..layout.n_classes() {
                let descriptors = layout.range(c);
                let n = descriptors.len() as f64;
                let score: f64 = descriptors.map(|j| h[[i, j]]).sum::<f64>() / n;
                assert!((logits[[i, c]] - score).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cp_identity_head() {
        let w = zero_shot_cp_weights(3);
        assert_eq!(w.weights, Array2::<f64>::eye(3));
        let h = array![[0.1, 0.7, 0.3], [0.9, -0.2, 0.0]];
        let p = predict(&w, &h.view(), 1.0).unwrap();
        assert_eq!(p.logits, h);
        assert_eq!(p.labels, vec![1, 0]);
    }

    #[test]
    fn merge_scales_cp_block() {
        let layout = layout_23();
        let vd = zero_shot_vd_weights(&layout);
        let cp = zero_shot_cp_weights(2);
        let w = merge_zero_shot(&vd, &cp, DEFAULT_GAMMA).unwrap();
        assert_eq!(w.space, FeatureSpace::Avd);
        assert_eq!(w.weights.dim(), (2, 7));
        assert_eq!(w.weights[[0, 5]], 5.0);
        assert_eq!(w.weights[[1, 6]], 5.0);
        assert_eq!(w.weights[[0, 6]], 0.0);

        let mut rng = SeededRng::new(6);
        let h = random(10, 7, &mut rng);
        let zero = merge_zero_shot(&vd, &cp, 0.0).unwrap();
        let full = zero.logits(&h.view()).unwrap();
        let block = vd.logits(&h.slice(s![.., ..5])).unwrap();
        assert_eq!(full, block);

        assert!(merge_zero_shot(&vd, &zero_shot_cp_weights(3), 1.0).is_err());
        assert!(merge_zero_shot(&cp, &vd, 1.0).is_err());
    }

    #[test]
    fn large_gamma_recovers_cp_argmax() {
        let layout = DescriptorLayout::from_counts(vec![4, 4, 4]).unwrap();
        let mut rng = SeededRng::new(7);
        let h = random(50, layout.n_augmented(), &mut rng);
        let merged = merge_zero_shot(
            &zero_shot_vd_weights(&layout),
            &zero_shot_cp_weights(3),
            1e6,
        )
        .unwrap();
        let a = predict(&merged, &h.view(), 1.0).unwrap().labels;
        let b = predict(&zero_shot_cp_weights(3), &h.slice(s![.., 12..]), 1.0)
            .unwrap()
            .labels;
        assert_eq!(a, b);
    }

    #[test]
    fn zero_shot_avd_heads() {
        let layout = layout_23();
        let vd = zero_shot_avd_head(&layout, ZeroShotKind::Vd, 5.0);
        assert_eq!(vd.weights.slice(s![.., 5..]).sum(), 0.0);
        assert_eq!(vd.mask.iter().filter(|&&m| m).count(), 5);
        let cp = zero_shot_avd_head(&layout, ZeroShotKind::Cp, 5.0);
        assert_eq!(cp.weights.slice(s![.., 5..]), Array2::<f64>::eye(2));
        assert_eq!(cp.mask.iter().filter(|&&m| m).count(), 2);
        let avd = zero_shot_avd_head(&layout, ZeroShotKind::Avd, 5.0);
        assert_eq!(avd.weights[[1, 6]], 5.0);
    }

    #[test]
    fn predict_contracts() {
        let w = WeightMatrix::zeros(4, 3, FeatureSpace::Avd);
        let mut rng = SeededRng::new(8);
        let h = random(5, 3, &mut rng);
        let p = predict(&w, &h.view(), 1.0).unwrap();
        assert!(p.probabilities.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(p.labels, vec![0; 5]);

        let w = WeightMatrix::dense(random(4, 3, &mut rng), FeatureSpace::Avd);
        let cold = predict(&w, &h.view(), 0.01).unwrap();
        let warm = predict(&w, &h.view(), 1.0).unwrap();
        assert_eq!(cold.labels, warm.labels);
        for row in cold.probabilities.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }

        let two = WeightMatrix::dense(array![[2.0], [1.0]], FeatureSpace::Cp);
        let p = predict(&two, &array![[1.0]].view(), 1.0).unwrap();
        assert!((p.probabilities[[0, 0]] - 0.7310585786300049).abs() < 1e-12);
        assert!((p.probabilities[[0, 1]] - 0.2689414213699951).abs() < 1e-12);

        assert!(predict(&two, &array![[1.0]].view(), 0.0).is_err());
        assert!(predict(&two, &array![[1.0]].view(), -1.0).is_err());
    }

    #[test]
    fn class_prompt_averaging() {
        let t = array![[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [4.0, 0.0]];
        let cp = average_class_prompts(&t.view(), 2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((cp[[0, 0]] - r).abs() < 1e-15 && (cp[[0, 1]] - r).abs() < 1e-15);
        assert_eq!(cp.row(1), array![1.0, 0.0]);
        assert!(average_class_prompts(&t.view(), 3).is_err());
    }
}
