use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor_io::DescriptorSet;
use crate::weights::{FeatureSpace, WeightMatrix};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedFeature {
    pub feature: usize,
    pub text: String,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassFeatures {
    pub class: String,
    pub features: Vec<RankedFeature>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureReport {
    pub k: usize,
    pub classes: Vec<ClassFeatures>,
}

impl FeatureReport {
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["class", "rank", "feature", "text", "coefficient"])
            .unwrap();
        for class in &self.classes {
            for (rank, f) in class.features.iter().enumerate() {
                wtr.write_record([
                    class.class.clone(),
                    (rank + 1).to_string(),
                    f.feature.to_string(),
                    f.text.clone(),
                    f.coefficient.to_string(),
                ])
                .unwrap();
            }
        }
        String::from_utf8(wtr.into_inner().unwrap()).unwrap()
    }

    /// Compact human-readable listing.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for class in &self.classes {
            writeln!(out, "{}:", class.class).unwrap();
            for f in &class.features {
                writeln!(out, "  {:+.4}  {}", f.coefficient, f.text).unwrap();
            }
        }
        out
    }
}

/// For each class, the `k` largest nonzero coefficients across the whole
/// feature axis (any class's descriptors, plus class prompts), mapped back
/// to their text. Equal coefficients are ordered by feature index.
pub fn top_features(weights: &WeightMatrix, descriptors: &DescriptorSet, k: usize) -> Result<FeatureReport> {
    let layout = descriptors.layout();
    let expected = match weights.space {
        FeatureSpace::Avd => layout.n_augmented(),
        FeatureSpace::Vd => layout.n_descriptors(),
        other => {
            return Err(Error::FeatureSpace {
                weights: other.to_string(),
                features: "avd or vd".into(),
            })
        }
    };
    if weights.n_features() != expected || weights.n_classes() != layout.n_classes() {
        return Err(Error::Shape(format!(
            "weights {:?} do not match descriptor layout ({}, {expected})",
            weights.weights.dim(),
            layout.n_classes()
        )));
    }
    let classes = weights
        .weights
        .rows()
        .into_iter()
        .zip(descriptors.class_names())
        .map(|(row, name)| {
            let mut ranked: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(j, &w)| (j, w))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(k);
            ClassFeatures {
                class: name.to_string(),
                features: ranked
                    .into_iter()
                    .map(|(feature, coefficient)| RankedFeature {
                        feature,
                        text: descriptors.feature_text(feature).unwrap_or_default(),
                        coefficient,
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(FeatureReport { k, classes })
}
