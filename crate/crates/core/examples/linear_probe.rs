//! ℓ2-regularized logistic probe on unit-norm image embeddings, selected
//! over the default strength grid by validation accuracy.
//!
//!     cargo run --release --example linear_probe

use avd_core::eval::evaluate_accuracy;
use avd_core::grounding::l2_normalize_rows;
use avd_core::rng::SeededRng;
use avd_core::slr::{linear_probe, lp_default_grid, SolverConfig};
use avd_core::LabelVector;
use ndarray::{Array1, Array2, Axis};

fn main() -> avd_core::Result<()> {
    let (dim, classes, n) = (32, 5, 1000);
    let mut rng = SeededRng::new(5);
    let centers: Vec<Array1<f64>> = (0..classes).map(|_| Array1::from_shape_fn(dim, |_| rng.normal())).collect();
    let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let raw = Array2::from_shape_fn((n, dim), |(i, j)| centers[y[i]][j] + 2.5 * rng.normal());
    let h = l2_normalize_rows(&raw.view())?;
    let y = LabelVector::with_classes(y, classes)?;

    let rows = |r: std::ops::Range<usize>| -> Vec<usize> { r.collect() };
    let (fit, val, test) = (rows(0..40), rows(40..140), rows(140..n));
    let result = linear_probe(
        &h.select(Axis(0), &fit).view(),
        &y.select(&fit),
        &h.select(Axis(0), &val).view(),
        &y.select(&val),
        &lp_default_grid(),
        &SolverConfig::default(),
    )?;
    for i in (0..result.grid.len()).step_by(20) {
        println!("lambda {:.3}  val acc {:.3}", result.grid[i], result.val_accuracies[i]);
    }
    println!(
        "selected lambda {:.3}, held-out accuracy {:.3}",
        result.selected_lambda(),
        evaluate_accuracy(&result.weights, &h.select(Axis(0), &test).view(), &y.select(&test))?
    );
    Ok(())
}
