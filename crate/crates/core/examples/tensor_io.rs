//! EMBF round trip and a seeded few-shot split.
//!
//!     cargo run --example tensor_io

use avd_core::rng::SeededRng;
use avd_core::tensor_io::{read_labels, read_matrix, sample_few_shot, write_labels, write_matrix, Dtype, HEADER_LEN};
use avd_core::{EmbeddingMatrix, LabelVector};
use ndarray::Array2;

fn main() -> avd_core::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut rng = SeededRng::new(7);

    // f32 on disk halves the size; values come back widened to f64.
    let data = Array2::from_shape_fn((60, 16), |_| rng.normal());
    let m = EmbeddingMatrix::with_dtype(data.clone(), Dtype::F32)?;
    let path = dir.path().join("images.embf");
    write_matrix(&m, &path)?;
    let back = read_matrix(&path)?;
    let bytes = std::fs::metadata(&path).unwrap().len();
    let max_err = (&back.data - &data).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("{}x{} f32 matrix: {bytes} bytes ({HEADER_LEN}-byte header), max rounding {max_err:.1e}", back.rows(), back.cols());

    // Labels are a one-column EMBF.
    let labels = LabelVector::with_classes((0..60).map(|i| i % 3).collect(), 3)?;
    write_labels(&labels, dir.path().join("labels.embf"))?;
    let labels = read_labels(dir.path().join("labels.embf"))?;

    let split = sample_few_shot(&labels, 4, 6, 42)?;
    println!("seed {}: train {:?}", split.seed, split.train);
    println!("         validation {:?}", split.validation);
    assert_eq!(split, sample_few_shot(&labels, 4, 6, 42)?);
    Ok(())
}
