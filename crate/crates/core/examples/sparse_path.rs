//! ℓ1 regularization path on a planted-support problem: how much of the
//! planted support the validation-selected head recovers, and what a
//! masked refit does to it.
//!
//!     cargo run --release --example sparse_path [seed]

use avd_core::eval::evaluate_accuracy;
use avd_core::slr::{extract_support, masked_refit, regularization_path, PathConfig, SolverConfig, DEFAULT_SUPPORT_TOL};
use avd_core::synthetic::{planted_support_problem, support_f1, PlantedConfig};

fn main() -> avd_core::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let p = planted_support_problem(&PlantedConfig::default(), seed);
    let solver = SolverConfig { seed, ..SolverConfig::default() };
    let path = regularization_path(&p.train.view(), &p.train_labels, &p.val.view(), &p.val_labels, &PathConfig::default(), &solver)?;

    println!("lambda_max {:.4}", path.lambda_max);
    for (i, e) in path.entries.iter().enumerate().step_by(11) {
        let f1 = support_f1(&extract_support(&e.weights, DEFAULT_SUPPORT_TOL), &p.support);
        println!("{i:3}  lambda {:.4}  nnz {:3}  val acc {:.3}  support F1 {f1:.3}", e.lambda, e.nnz, e.val_accuracy);
    }

    let (best_i, best_f1) = path
        .entries
        .iter()
        .map(|e| support_f1(&extract_support(&e.weights, DEFAULT_SUPPORT_TOL), &p.support))
        .enumerate()
        .fold((0, 0.0), |best, (i, f1)| if f1 > best.1 { (i, f1) } else { best });
    println!("best F1 on the path: {best_f1:.3} at #{best_i} (val acc {:.3})", path.entries[best_i].val_accuracy);

    let chosen = path.selected_entry();
    let support = extract_support(&chosen.weights, DEFAULT_SUPPORT_TOL);
    println!(
        "selected #{}: lambda {:.4}, nnz {} (planted 20), F1 {:.3}",
        path.selected,
        chosen.lambda,
        chosen.nnz,
        support_f1(&support, &p.support)
    );

    let refit = masked_refit(&p.train.view(), &p.train_labels, &support, &SolverConfig::default(), Some(&chosen.weights))?;
    println!(
        "masked refit: val acc {:.3} -> {:.3}",
        chosen.val_accuracy,
        evaluate_accuracy(&refit.weights, &p.val.view(), &p.val_labels)?
    );
    Ok(())
}
