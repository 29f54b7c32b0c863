//! Weight-space ensembling: a sparse head learned from a few shots is
//! interpolated with the zero-shot head, and α is swept over the
//! in-distribution images and a noisier copy of them.
//!
//!     cargo run --release --example frontier

use avd_core::eval::{default_alpha_grid, evaluate_accuracy, frontier_sweep, prior_alpha, EvalSet};
use avd_core::grounding::{build_grounding, compute_groundings, l2_normalize_rows, zero_shot_avd_head, ZeroShotKind, DEFAULT_GAMMA};
use avd_core::rng::SeededRng;
use avd_core::slr::{regularization_path, PathConfig, SolverConfig};
use avd_core::tensor_io::{sample_few_shot, DescriptorLayout};
use avd_core::{EmbeddingMatrix, LabelVector};
use ndarray::{Array1, Array2, Axis};

const DIM: usize = 32;
const CLASSES: usize = 4;

fn cloud(centers: &[Array1<f64>], owners: &[usize], spread: f64, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = Array2::zeros((owners.len(), DIM));
    for (mut row, &c) in out.rows_mut().into_iter().zip(owners) {
        row.zip_mut_with(&centers[c], |v, &m| *v = m + spread * rng.normal());
    }
    out
}

fn main() -> avd_core::Result<()> {
    let mut rng = SeededRng::new(21);
    let layout = DescriptorLayout::from_counts(vec![5; CLASSES])?;
    let centers: Vec<Array1<f64>> = (0..CLASSES).map(|_| Array1::from_shape_fn(DIM, |_| rng.normal())).collect();
    let owners: Vec<usize> = (0..layout.n_descriptors()).map(|j| layout.class_of(j).unwrap()).collect();
    let grounding = build_grounding(
        &EmbeddingMatrix::new(cloud(&centers, &owners, 1.0, &mut rng))?,
        &EmbeddingMatrix::new(cloud(&centers, &[0, 1, 2, 3], 1.0, &mut rng))?,
        &layout,
    )?;
    let y: Vec<usize> = (0..800).map(|i| i % CLASSES).collect();
    let labels = LabelVector::with_classes(y.clone(), CLASSES)?;
    let mut ground = |spread: f64| -> avd_core::Result<Array2<f64>> {
        let images = l2_normalize_rows(&cloud(&centers, &y, spread, &mut rng).view())?;
        Ok(compute_groundings(&grounding, &images.view())?.values)
    };
    let id = ground(2.0)?;
    let noisy = ground(3.5)?;

    // 8 shots per class to fit, 8 more to pick λ.
    let split = sample_few_shot(&labels, 8, 8, 1)?;
    let path = regularization_path(
        &id.select(Axis(0), &split.train).view(),
        &labels.select(&split.train),
        &id.select(Axis(0), &split.validation).view(),
        &labels.select(&split.validation),
        &PathConfig::default(),
        &SolverConfig { epochs: 200, ..SolverConfig::default() },
    )?;
    let learned = &path.selected_entry().weights;
    let zero_shot = zero_shot_avd_head(&layout, ZeroShotKind::Avd, DEFAULT_GAMMA);
    println!("learned head: {} nonzeros, zero-shot accuracy {:.3}", learned.nnz(0.0), evaluate_accuracy(&zero_shot, &id.view(), &labels)?);

    let id_set = EvalSet { name: "id".into(), features: id.view(), labels: &labels };
    let ood = [EvalSet { name: "noisy".into(), features: noisy.view(), labels: &labels }];
    let curve = frontier_sweep(learned, &zero_shot, &id_set, &ood, &default_alpha_grid())?;
    print!("{}", curve.to_csv());
    println!("prior-injection alpha at 8 shots: {}", prior_alpha(8));
    Ok(())
}
