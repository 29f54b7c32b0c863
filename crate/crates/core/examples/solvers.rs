//! Proximal SAGA against the FISTA reference on the same ℓ1 problems.
//!
//!     cargo run --release --example solvers

use std::time::Instant;

use avd_core::slr::{fista_fit, lambda_max, prox_saga_fit, SolverConfig};
use avd_core::synthetic::random_problem;

fn main() -> avd_core::Result<()> {
    let (h, y) = random_problem(200, 50, 10, 1);
    let lmax = lambda_max(&h.view(), &y, false)?;
    println!("n=200 F=50 |C|=10, lambda_max {lmax:.4}");
    for frac in [0.5, 0.1, 0.01] {
        let lambda = frac * lmax;
        let t = Instant::now();
        let reference = fista_fit(&h.view(), &y, lambda, &SolverConfig { max_iter: 100_000, grad_tol: 1e-10, ..SolverConfig::default() })?;
        let fista_time = t.elapsed();
        let t = Instant::now();
        let saga = prox_saga_fit(&h.view(), &y, lambda, &SolverConfig { epochs: 50_000, tol: 1e-10, ..SolverConfig::default() })?;
        let saga_time = t.elapsed();
        println!(
            "{frac:>5} x lambda_max: FISTA {:.10} ({} it, {fista_time:.2?})  SAGA {:.10} ({} epochs, {saga_time:.2?})  gap {:.1e}",
            reference.objective,
            reference.iterations,
            saga.objective,
            saga.iterations,
            (saga.objective - reference.objective).abs() / reference.objective
        );
    }
    Ok(())
}
