//! On-disk artifacts shared by the subcommands: digested inputs, JSON
//! sidecars that tag EMBF files with their feature space, and an output set
//! that is committed all at once.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor_io::{Dtype, EmbeddingMatrix, LabelVector};
use crate::weights::{FeatureSpace, WeightMatrix};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Reads every input through one place so the manifest digests exactly the
/// bytes that were parsed.
#[derive(Debug, Default)]
pub struct Inputs {
    pub digests: BTreeMap<String, InputDigest>,
}

impl Inputs {
    pub fn bytes(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.digests.insert(
            role.to_string(),
            InputDigest {
                path: path.display().to_string(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(bytes)
    }

    pub fn matrix(&mut self, role: &str, path: &Path) -> Result<EmbeddingMatrix> {
        let bytes = self.bytes(role, path)?;
        EmbeddingMatrix::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }

    pub fn labels(&mut self, role: &str, path: &Path) -> Result<LabelVector> {
        let matrix = self.matrix(role, path)?;
        LabelVector::from_matrix(&matrix).map_err(|e| e.in_file(path))
    }

    pub fn text(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = self.bytes(role, path)?;
        String::from_utf8(bytes).map_err(|e| Error::Cli(format!("{}: not UTF-8: {e}", path.display())))
    }

    /// Sidecar JSON next to an EMBF file, if present.
    fn sidecar<T: for<'de> Deserialize<'de>>(&mut self, role: &str, embf: &Path) -> Result<Option<T>> {
        let path = sidecar_path(embf);
        if !path.exists() {
            return Ok(None);
        }
        let text = self.text(role, &path)?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::from(e).in_file(&path))
    }

    /// Feature matrix plus its space tag. Untagged files are raw embeddings.
    pub fn features(&mut self, role: &str, path: &Path) -> Result<(EmbeddingMatrix, FeatureMeta)> {
        let matrix = self.matrix(role, path)?;
        let meta = self
            .sidecar::<FeatureMeta>(&format!("{role}.meta"), path)?
            .unwrap_or(FeatureMeta {
                kind: ArtifactKind::Features,
                space: FeatureSpace::Image,
                n_descriptors: None,
                n_classes: None,
            });
        if meta.kind != ArtifactKind::Features {
            return Err(Error::Cli(format!("{}: sidecar does not describe features", path.display())));
        }
        Ok((matrix, meta))
    }

    pub fn weights(&mut self, role: &str, path: &Path) -> Result<WeightMatrix> {
        let matrix = self.matrix(role, path)?;
        let meta: WeightMeta = self
            .sidecar(&format!("{role}.meta"), path)?
            .ok_or_else(|| Error::Cli(format!("{}: missing weights sidecar {}", path.display(), sidecar_path(path).display())))?;
        meta.into_weights(matrix.data).map_err(|e| e.in_file(path))
    }
}

/// `dir/name.embf` → `dir/name.json`.
pub fn sidecar_path(embf: &Path) -> PathBuf {
    embf.with_extension("json")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Features,
    Weights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub kind: ArtifactKind,
    pub space: FeatureSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_descriptors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
}

/// Weight sidecar. The mask is one `0`/`1` string per class row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMeta {
    pub kind: ArtifactKind,
    pub space: FeatureSpace,
    pub mask: Vec<String>,
    pub intercept: Option<Vec<f64>>,
}

impl WeightMeta {
    pub fn from_weights(w: &WeightMatrix) -> Self {
        let mask = w
            .mask
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|&m| if m { '1' } else { '0' }).collect())
            .collect();
        WeightMeta {
            kind: ArtifactKind::Weights,
            space: w.space,
            mask,
            intercept: w.intercept.as_ref().map(|b| b.to_vec()),
        }
    }

    pub fn into_weights(self, weights: Array2<f64>) -> Result<WeightMatrix> {
        if self.kind != ArtifactKind::Weights {
            return Err(Error::Cli("sidecar does not describe weights".into()));
        }
        let (rows, cols) = weights.dim();
        if self.mask.len() != rows || self.mask.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape(format!("mask does not match {rows}x{cols} weights")));
        }
        let mut mask = Array2::from_elem((rows, cols), false);
        for (i, row) in self.mask.iter().enumerate() {
            for (j, ch) in row.chars().enumerate() {
                mask[[i, j]] = match ch {
                    '1' => true,
                    '0' => false,
                    other => return Err(Error::Cli(format!("mask character {other:?} at row {i}"))),
                };
            }
        }
        if let Some(b) = &self.intercept {
            if b.len() != rows {
                return Err(Error::Shape(format!("intercept has {} entries for {rows} classes", b.len())));
            }
        }
        Ok(WeightMatrix::with_mask(weights, mask, self.space)?
            .with_intercept(self.intercept.map(Array1::from)))
    }
}

/// Outputs staged in memory and written together: each file goes to a
/// temporary name first and is renamed only after all writes succeed, so
/// a failed run leaves nothing behind.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    pub fn add_matrix(&mut self, name: impl Into<String>, data: Array2<f64>) -> Result<()> {
        let bytes = EmbeddingMatrix::with_dtype(data, Dtype::F64)?.to_bytes()?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_weights(&mut self, stem: &str, w: &WeightMatrix) -> Result<()> {
        self.add_matrix(format!("{stem}.embf"), w.weights.clone())?;
        self.add_json(format!("{stem}.json"), &WeightMeta::from_weights(w));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
            if let Err(e) = fs::write(&tmp, bytes) {
                let _ = fs::remove_file(&tmp);
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(Error::io(tmp, e));
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut done = Vec::with_capacity(staged.len());
        for (i, (tmp, dest)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dest) {
                for (t, _) in &staged[i..] {
                    let _ = fs::remove_file(t);
                }
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(Error::io(dest, e));
            }
            done.push(dest.clone());
        }
        Ok(done)
    }
}
