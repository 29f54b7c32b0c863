use ndarray::{ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: usize,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub histogram: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairAuc {
    pub class_a: usize,
    pub class_b: usize,
    /// Probability that a random class-A sample is more similar to the
    /// prompt than a random class-B sample (ties count one half).
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PromptStats {
    pub prompt: usize,
    pub bin_edges: Vec<f64>,
    pub classes: Vec<ClassSummary>,
    pub pairwise_auc: Vec<PairAuc>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationStats {
    pub prompts: Vec<PromptStats>,
}

impl SeparationStats {
    /// Long-format CSV: `prompt,class,count,mean,std`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("prompt,class,count,mean,std\n");
        for p in &self.prompts {
            for c in &p.classes {
                out.push_str(&format!("{},{},{},{},{}\n", p.prompt, c.class, c.count, c.mean, c.std));
            }
        }
        out
    }
}

/// Area under the ROC curve for separating `positives` from `negatives`,
/// computed from the rank sum with average ranks for ties.
pub fn rank_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let (n_pos, n_neg) = (positives.len(), negatives.len());
    assert!(n_pos > 0 && n_neg > 0, "both groups must be nonempty");
    let mut pooled: Vec<(f64, bool)> = positives
        .iter()
        .map(|&v| (v, true))
        .chain(negatives.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    // ranks are 1-based; doubled so tied averages stay integral
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let doubled_avg = (i + 1 + j) as u128;
        let pos_in_run = pooled[i..j].iter().filter(|p| p.1).count() as u128;
        doubled_rank_sum += doubled_avg * pos_in_run;
        i = j;
    }
    let n_pos_u = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos_u * (n_pos_u + 1);
    (doubled_u as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

fn cosines(samples: &ArrayView2<f64>, prompt: ArrayView1<f64>, prompt_norm: f64) -> Result<Vec<f64>> {
    samples
        .rows()
        .into_iter()
        .enumerate()
        .map(|(row, z)| {
            let norm = z.dot(&z).sqrt();
            if norm == 0.0 {
                Err(Error::ZeroRow { row })
            } else {
                Ok(z.dot(&prompt) / (norm * prompt_norm))
            }
        })
        .collect()
}

/// Cosine similarity of every sample with every prompt, summarized per
/// class, plus the AUC for each ordered class pair `a < b`.
pub fn separation_probe(
    samples_by_class: &[ArrayView2<f64>],
    prompts: &ArrayView2<f64>,
    bins: usize,
) -> Result<SeparationStats> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if let Some(c) = samples_by_class.iter().position(|s| s.nrows() == 0) {
        return Err(Error::InvalidArgument(format!("class {c} has no samples")));
    }
    if let Some(s) = samples_by_class.iter().find(|s| s.ncols() != prompts.ncols()) {
        return Err(Error::Shape(format!(
            "sample dim {} != prompt dim {}",
            s.ncols(),
            prompts.ncols()
        )));
    }
    let mut out = Vec::with_capacity(prompts.nrows());
    for (p, prompt) in prompts.rows().into_iter().enumerate() {
        let norm = prompt.dot(&prompt).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow { row: p });
        }
        let sims = samples_by_class
            .iter()
            .map(|s| cosines(s, prompt, norm))
            .collect::<Result<Vec<_>>>()?;

        let lo = sims.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let hi = sims.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let bin_edges: Vec<f64> = (0..=bins)
            .map(|b| if b == bins { lo + width * bins as f64 } else { lo + width * b as f64 })
            .collect();

        let classes = sims
            .iter()
            .enumerate()
            .map(|(class, v)| {
                let count = v.len();
                let mean = v.iter().sum::<f64>() / count as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
                let mut histogram = vec![0; bins];
                for &x in v {
                    let b = (((x - lo) / width) as usize).min(bins - 1);
                    histogram[b] += 1;
                }
                ClassSummary {
                    class,
                    count,
                    mean,
                    std: var.sqrt(),
                    histogram,
                }
            })
            .collect();

        let mut pairwise_auc = Vec::new();
        for a in 0..sims.len() {
            for b in a + 1..sims.len() {
                pairwise_auc.push(PairAuc {
                    class_a: a,
                    class_b: b,
                    auc: rank_auc(&sims[a], &sims[b]),
                });
            }
        }
        out.push(PromptStats {
            prompt: p,
            bin_edges,
            classes,
            pairwise_auc,
        });
    }
    Ok(SeparationStats { prompts: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn pair_count(a: &[f64], b: &[f64]) -> f64 {
        let mut twice = 0u64;
        for &x in a {
            for &y in b {
                twice += if x > y { 2 } else if x == y { 1 } else { 0 };
            }
        }
        (twice as f64 / 2.0) / (a.len() as f64 * b.len() as f64)
    }

    #[test]
    fn perfect_and_reversed() {
        assert_eq!(rank_auc(&[3.0, 4.0], &[1.0, 2.0]), 1.0);
        assert_eq!(rank_auc(&[1.0, 2.0], &[3.0, 4.0]), 0.0);
        assert_eq!(rank_auc(&[1.0, 1.0], &[1.0]), 0.5);
    }

    #[test]
    fn probe_shapes_and_histograms() {
        let a = array![[1.0, 0.0], [0.9, 0.1], [0.8, 0.3]];
        let b = array![[0.0, 1.0], [0.2, 0.9]];
        let prompts = array![[1.0, 0.0], [0.0, 1.0]];
        let stats = separation_probe(&[a.view(), b.view()], &prompts.view(), 4).unwrap();
        assert_eq!(stats.prompts.len(), 2);
        let p0 = &stats.prompts[0];
        assert_eq!(p0.bin_edges.len(), 5);
        assert_eq!(p0.classes[0].histogram.iter().sum::<usize>(), 3);
        assert_eq!(p0.pairwise_auc[0].auc, 1.0);
        assert_eq!(stats.prompts[1].pairwise_auc[0].auc, 0.0);
    }

    #[test]
    fn probe_errors() {
        let a = array![[1.0, 0.0]];
        let empty = ndarray::Array2::<f64>::zeros((0, 2));
        let prompts = array![[1.0, 0.0]];
        assert!(separation_probe(&[a.view(), empty.view()], &prompts.view(), 4).is_err());
        assert!(separation_probe(&[a.view()], &array![[1.0, 0.0, 0.0]].view(), 4).is_err());
    }

    proptest! {
        #[test]
        fn matches_pair_count(
            a in proptest::collection::vec(-5i32..5, 1..30),
            b in proptest::collection::vec(-5i32..5, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(|v| v as f64 * 0.25).collect();
            let b: Vec<f64> = b.into_iter().map(|v| v as f64 * 0.25).collect();
            prop_assert_eq!(rank_auc(&a, &b), pair_count(&a, &b));
        }
    }
}
