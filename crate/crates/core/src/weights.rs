use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which feature axis a weight matrix (or a feature matrix) lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    /// Descriptor groundings only (M columns).
    Vd,
    /// Class-prompt groundings only (|C| columns).
    Cp,
    /// Descriptors followed by class prompts (M + |C| columns).
    Avd,
    /// Raw image embeddings.
    Image,
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSpace::Vd => "vd",
            FeatureSpace::Cp => "cp",
            FeatureSpace::Avd => "avd",
            FeatureSpace::Image => "image",
        })
    }
}

impl FromStr for FeatureSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vd" => Ok(FeatureSpace::Vd),
            "cp" => Ok(FeatureSpace::Cp),
            "avd" => Ok(FeatureSpace::Avd),
            "image" => Ok(FeatureSpace::Image),
            other => Err(Error::InvalidArgument(format!("unknown feature space {other:?}"))),
        }
    }
}

/// A `|C| x F` linear head with an explicit sparsity mask.
///
/// Entries outside `mask` are exactly zero. The optional intercept is never
/// masked or penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    pub weights: Array2<f64>,
    pub mask: Array2<bool>,
    pub space: FeatureSpace,
    pub intercept: Option<Array1<f64>>,
}

impl WeightMatrix {
    /// Mask is the nonzero pattern of `weights`.
    pub fn dense(weights: Array2<f64>, space: FeatureSpace) -> Self {
        let mask = weights.mapv(|w| w != 0.0);
        Self {
            weights,
            mask,
            space,
            intercept: None,
        }
    }

    pub fn zeros(n_classes: usize, n_features: usize, space: FeatureSpace) -> Self {
        Self::dense(Array2::zeros((n_classes, n_features)), space)
    }

    pub fn with_mask(weights: Array2<f64>, mask: Array2<bool>, space: FeatureSpace) -> Result<Self> {
        if weights.dim() != mask.dim() {
            return Err(Error::Shape(format!(
                "weights {:?} vs mask {:?}",
                weights.dim(),
                mask.dim()
            )));
        }
        if let Some(((c, j), _)) = weights
            .indexed_iter()
            .find(|&(idx, &w)| w != 0.0 && !mask[idx])
        {
            return Err(Error::InvalidArgument(format!(
                "entry ({c}, {j}) is nonzero outside the mask"
            )));
        }
        Ok(Self {
            weights,
            mask,
            space,
            intercept: None,
        })
    }

    pub fn with_intercept(mut self, intercept: Option<Array1<f64>>) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn nnz(&self, tol: f64) -> usize {
        self.weights.iter().filter(|w| w.abs() > tol).count()
    }

    pub fn check_features(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "features have {} columns, weights expect {}",
                features.ncols(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// `features · Wᵀ (+ intercept)`, one row of class scores per sample.
    pub fn logits(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_features(features)?;
        let mut out = features.dot(&self.weights.t());
        if let Some(b) = &self.intercept {
            out += &b.view().insert_axis(Axis(0));
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: &self.weights * factor,
            mask: self.mask.clone(),
            space: self.space,
            intercept: self.intercept.as_ref().map(|b| b * factor),
        }
    }
}
