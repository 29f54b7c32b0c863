//! How well single text prompts separate classes: per-class cosine
//! similarity summaries and pairwise rank AUCs.
//!
//!     cargo run --example separation_probe

use avd_core::eval::separation_probe;
use avd_core::rng::SeededRng;
use ndarray::{Array1, Array2};

fn main() -> avd_core::Result<()> {
    let mut rng = SeededRng::new(8);
    let dim = 24;
    let centers: Vec<Array1<f64>> = (0..3).map(|_| Array1::from_shape_fn(dim, |_| rng.normal())).collect();
    let samples: Vec<Array2<f64>> = centers
        .iter()
        .map(|c| Array2::from_shape_fn((150, dim), |(_, j)| c[j] + 2.0 * rng.normal()))
        .collect();
    // Prompt 0 points at class 0; prompt 1 is unrelated to every class.
    let prompts = ndarray::stack(ndarray::Axis(0), &[centers[0].view(), Array1::from_shape_fn(dim, |_| rng.normal()).view()]).unwrap();

    let views: Vec<_> = samples.iter().map(|s| s.view()).collect();
    let stats = separation_probe(&views, &prompts.view(), 10)?;
    print!("{}", stats.summary_csv());
    for p in &stats.prompts {
        for pair in &p.pairwise_auc {
            println!("prompt {} classes {} vs {}: AUC {:.3}", p.prompt, pair.class_a, pair.class_b, pair.auc);
        }
    }
    Ok(())
}
