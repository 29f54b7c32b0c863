use std::fmt::Write as _;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_accuracy, interpolate};
use crate::error::{Error, Result};
use crate::tensor_io::LabelVector;
use crate::weights::WeightMatrix;

/// The 21-point α grid: dense near the zero-shot end, then tenths.
pub fn default_alpha_grid() -> Vec<f64> {
    vec![
        0.0, 0.0001, 0.0002, 0.0004, 0.0008, 0.0016, 0.0032, 0.0063, 0.0126, 0.0251, 0.0501, 0.1,
        0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
    ]
}

/// 21 evenly spaced values `0, 0.05, ..., 1`.
pub fn uniform_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// One labelled evaluation dataset.
#[derive(Clone, Debug)]
pub struct EvalSet<'a> {
    pub name: String,
    pub features: ArrayView2<'a, f64>,
    pub labels: &'a LabelVector,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OodSeries {
    pub name: String,
    pub accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierCurve {
    pub alphas: Vec<f64>,
    pub id_name: String,
    pub id_accuracy: Vec<f64>,
    pub ood: Vec<OodSeries>,
    /// Unweighted mean over OOD datasets; absent without OOD data.
    pub ood_mean: Vec<Option<f64>>,
}

impl FrontierCurve {
    /// CSV with columns `alpha,id_acc,<dataset>_acc...,ood_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,id_acc");
        for series in &self.ood {
            write!(out, ",{}_acc", series.name).unwrap();
        }
        out.push_str(",ood_mean\n");
        for (i, alpha) in self.alphas.iter().enumerate() {
            write!(out, "{alpha},{}", self.id_accuracy[i]).unwrap();
            for series in &self.ood {
                write!(out, ",{}", series.accuracy[i]).unwrap();
            }
            match self.ood_mean[i] {
                Some(mean) => writeln!(out, ",{mean}").unwrap(),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Accuracy of `interpolate(learned, zero_shot, α)` for every α on the ID
/// set and each OOD set. Datasets are evaluated in parallel on the current
/// rayon pool.
pub fn frontier_sweep<'a>(
    learned: &WeightMatrix,
    zero_shot: &WeightMatrix,
    id: &EvalSet<'a>,
    ood: &[EvalSet<'a>],
    alphas: &[f64],
) -> Result<FrontierCurve> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("alpha grid must be ascending".into()));
    }
    let heads = alphas
        .iter()
        .map(|&a| interpolate(learned, zero_shot, a))
        .collect::<Result<Vec<_>>>()?;

    let sweep = |set: &EvalSet<'_>| -> Result<Vec<f64>> {
        heads
            .iter()
            .map(|w| evaluate_accuracy(w, &set.features, set.labels))
            .collect()
    };
    let mut all: Vec<&EvalSet<'a>> = vec![id];
    all.extend(ood.iter());
    let results = all.par_iter().map(|set| sweep(set)).collect::<Result<Vec<_>>>()?;
    let mut results = results.into_iter();
    let id_accuracy = results.next().expect("id set");
    let ood: Vec<OodSeries> = ood
        .iter()
        .zip(results)
        .map(|(set, accuracy)| OodSeries {
            name: set.name.clone(),
            accuracy,
        })
        .collect();
    let ood_mean = (0..alphas.len())
        .map(|i| {
            (!ood.is_empty())
                .then(|| ood.iter().map(|s| s.accuracy[i]).sum::<f64>() / ood.len() as f64)
        })
        .collect();
    Ok(FrontierCurve {
        alphas: alphas.to_vec(),
        id_name: id.name.clone(),
        id_accuracy,
        ood,
        ood_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::weights::FeatureSpace;
    use ndarray::Array2;

    #[test]
    fn grids() {
        let grid21 = default_alpha_grid();
        assert_eq!(grid21.len(), 21);
        assert_eq!(grid21[10], 0.0501);
        assert!(grid21.windows(2).all(|w| w[1] > w[0]));
        let uniform = uniform_alpha_grid();
        assert_eq!(uniform.len(), 21);
        assert_eq!(uniform[20], 1.0);
    }

    #[test]
    fn sweep_matches_direct_evaluation() {
        let mut rng = SeededRng::new(61);
        let learned = WeightMatrix::dense(Array2::from_shape_fn((3, 4), |_| rng.normal()), FeatureSpace::Avd);
        let zs = WeightMatrix::dense(Array2::from_shape_fn((3, 4), |_| rng.normal()), FeatureSpace::Avd);
        let mk = |rng: &mut SeededRng| {
            let h = Array2::from_shape_fn((30, 4), |_| rng.normal());
            let y = LabelVector::with_classes((0..30).map(|_| rng.below(3)).collect(), 3).unwrap();
            (h, y)
        };
        let (h_id, y_id) = mk(&mut rng);
        let (h_a, y_a) = mk(&mut rng);
        let (h_b, y_b) = mk(&mut rng);
        let id = EvalSet { name: "id".into(), features: h_id.view(), labels: &y_id };
        let ood = [
            EvalSet { name: "a".into(), features: h_a.view(), labels: &y_a },
            EvalSet { name: "b".into(), features: h_b.view(), labels: &y_b },
        ];
        let grid = default_alpha_grid();
        let curve = frontier_sweep(&learned, &zs, &id, &ood, &grid).unwrap();
        for (i, &alpha) in grid.iter().enumerate() {
            let w = interpolate(&learned, &zs, alpha).unwrap();
            assert_eq!(curve.id_accuracy[i], evaluate_accuracy(&w, &h_id.view(), &y_id).unwrap());
            let a = evaluate_accuracy(&w, &h_a.view(), &y_a).unwrap();
            let b = evaluate_accuracy(&w, &h_b.view(), &y_b).unwrap();
            assert_eq!(curve.ood[0].accuracy[i], a);
            assert_eq!(curve.ood_mean[i], Some((a + b) / 2.0));
        }
        let csv = curve.to_csv();
        assert!(csv.starts_with("alpha,id_acc,a_acc,b_acc,ood_mean\n"));
        assert_eq!(csv.lines().count(), 22);

        assert!(frontier_sweep(&learned, &zs, &id, &ood, &[]).is_err());
        assert!(frontier_sweep(&learned, &zs, &id, &ood, &[0.5, 0.1]).is_err());
    }
}
