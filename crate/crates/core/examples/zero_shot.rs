//! Grounding image embeddings against descriptor and class-prompt text
//! embeddings, then classifying with the three zero-shot heads.
//!
//!     cargo run --example zero_shot

use avd_core::eval::evaluate_accuracy;
use avd_core::grounding::{build_grounding, compute_groundings, l2_normalize_rows, zero_shot_avd_head, ZeroShotKind, DEFAULT_GAMMA};
use avd_core::rng::SeededRng;
use avd_core::tensor_io::ClassDescriptors;
use avd_core::{DescriptorSet, EmbeddingMatrix, LabelVector};
use ndarray::{Array1, Array2};

const DIM: usize = 32;

/// One row per owner, each `centers[owner] + spread · ε`.
fn cloud(centers: &[Array1<f64>], owners: &[usize], spread: f64, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = Array2::zeros((owners.len(), DIM));
    for (mut row, &c) in out.rows_mut().into_iter().zip(owners) {
        row.zip_mut_with(&centers[c], |v, &m| *v = m + spread * rng.normal());
    }
    out
}

fn main() -> avd_core::Result<()> {
    let mut rng = SeededRng::new(3);
    let names = ["heron", "egret", "stork"];
    let descriptors = DescriptorSet::new(
        names
            .iter()
            .map(|n| ClassDescriptors {
                name: n.to_string(),
                descriptors: (0..4).map(|i| format!("{n} trait {i}")).collect(),
            })
            .collect(),
        vec!["a photo of a {}.".into()],
    )?;
    let layout = descriptors.layout();

    // Stand-in embeddings: every text and image sits near its class center.
    let centers: Vec<Array1<f64>> = (0..names.len()).map(|_| Array1::from_shape_fn(DIM, |_| rng.normal())).collect();
    let owners: Vec<usize> = (0..layout.n_descriptors()).map(|j| layout.class_of(j).unwrap()).collect();
    let desc = cloud(&centers, &owners, 0.8, &mut rng);
    let prompts = cloud(&centers, &[0, 1, 2], 0.8, &mut rng);
    let y: Vec<usize> = (0..300).map(|i| i % names.len()).collect();
    let images = l2_normalize_rows(&cloud(&centers, &y, 1.5, &mut rng).view())?;
    let labels = LabelVector::with_classes(y, names.len())?;

    let grounding = build_grounding(&EmbeddingMatrix::new(desc)?, &EmbeddingMatrix::new(prompts)?, layout)?;
    let h = compute_groundings(&grounding, &images.view())?;
    println!("grounded features: {:?} ({} descriptors + {} class prompts)", h.values.dim(), layout.n_descriptors(), layout.n_classes());

    for kind in [ZeroShotKind::Vd, ZeroShotKind::Cp, ZeroShotKind::Avd] {
        let head = zero_shot_avd_head(layout, kind, DEFAULT_GAMMA);
        println!("{kind:?}: accuracy {:.3}", evaluate_accuracy(&head, &h.view(), &labels)?);
    }
    Ok(())
}
