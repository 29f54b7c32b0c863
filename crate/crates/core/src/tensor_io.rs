//! Embedding matrices, labels, and descriptor sets on disk.
//!
//! Matrices use the EMBF container, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EMBF"
//! 4       1     format version (1)
//! 5       1     dtype (1 = f32, 2 = f64)
//! 6       3     reserved, zero
//! 9       8     rows (u64)
//! 17      8     cols (u64)
//! 25      ...   rows * cols values, row-major
//! ```
//!
//! Values are upcast to f64 on load. The on-disk dtype is remembered so a
//! loaded matrix writes back byte-for-byte.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MAGIC: [u8; 4] = *b"EMBF";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            tag => Err(Error::UnknownDtype { tag }),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Dense row-major matrix of embeddings (images, texts, or derived features).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub data: Array2<f64>,
    pub dtype: Dtype,
}

impl EmbeddingMatrix {
    /// Wraps `data` as an f64 matrix, rejecting non-finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        Self::with_dtype(data, Dtype::F64)
    }

    pub fn with_dtype(data: Array2<f64>, dtype: Dtype) -> Result<Self> {
        check_finite(&data)?;
        Ok(Self { data, dtype })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_finite(&self.data)?;
        let (rows, cols) = self.data.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * self.dtype.width());
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.dtype.tag());
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for (idx, &v) in self.data.iter().enumerate() {
            match self.dtype {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => {
                    let narrow = v as f32;
                    if !narrow.is_finite() {
                        return Err(Error::NonFiniteEntry {
                            value: f64::from(narrow),
                            row: idx / cols,
                            col: idx % cols,
                        });
                    }
                    out.extend_from_slice(&narrow.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            let n = bytes.len().min(4);
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(Error::BadMagic { found });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { version: bytes[4] });
        }
        let dtype = Dtype::from_tag(bytes[5])?;
        if let Some(i) = (6..9).find(|&i| bytes[i] != 0) {
            return Err(Error::ReservedByte { offset: i });
        }
        let rows = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[17..25].try_into().unwrap());
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(dtype.width() as u64))
            .and_then(|n| n.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::Shape(format!("{rows}x{cols} overflows")))?;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes { offset: expected });
        }
        let (rows, cols) = (rows as usize, cols as usize);
        let width = dtype.width();
        let mut values = Vec::with_capacity(rows * cols);
        for (idx, chunk) in bytes[HEADER_LEN..].chunks_exact(width).enumerate() {
            let value = match dtype {
                Dtype::F32 => f64::from(f32::from_le_bytes(chunk.try_into().unwrap())),
                Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    value,
                    offset: (HEADER_LEN + idx * width) as u64,
                    row: idx / cols,
                    col: idx % cols,
                });
            }
            values.push(value);
        }
        let data = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { data, dtype })
    }
}

fn check_finite(data: &Array2<f64>) -> Result<()> {
    for ((row, col), &value) in data.indexed_iter() {
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { value, row, col });
        }
    }
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_matrix(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = matrix.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Integer class labels, one per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabelVector {
    /// Class count is taken as `max(label) + 1`.
    pub fn new(labels: Vec<usize>) -> Self {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self { labels, n_classes }
    }

    pub fn with_classes(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                row,
                n_classes,
            });
        }
        Ok(Self { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn to_matrix(&self) -> EmbeddingMatrix {
        let data = Array2::from_shape_fn((self.labels.len(), 1), |(i, _)| self.labels[i] as f64);
        EmbeddingMatrix {
            data,
            dtype: Dtype::F64,
        }
    }

    pub fn from_matrix(matrix: &EmbeddingMatrix) -> Result<Self> {
        if matrix.cols() != 1 {
            return Err(Error::Shape(format!(
                "labels file must have 1 column, found {}",
                matrix.cols()
            )));
        }
        let labels = matrix
            .data
            .column(0)
            .iter()
            .enumerate()
            .map(|(row, &value)| {
                if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                    Err(Error::InvalidLabel { value, row })
                } else {
                    Ok(value as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(labels))
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    LabelVector::from_matrix(&read_matrix(path)?)
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    write_matrix(&labels.to_matrix(), path)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDescriptors {
    pub name: String,
    pub descriptors: Vec<String>,
}

/// Per-class descriptor index layout: class `c` owns the contiguous range
/// `offsets[c]..offsets[c] + counts[c]` of the descriptor axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptorLayout {
    counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl DescriptorLayout {
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::DescriptorSet("no classes".into()));
        }
        if let Some(c) = counts.iter().position(|&m| m == 0) {
            return Err(Error::DescriptorSet(format!("class {c} has no descriptors")));
        }
        let offsets = counts
            .iter()
            .scan(0, |acc, &m| {
                let start = *acc;
                *acc += m;
                Some(start)
            })
            .collect();
        Ok(Self { counts, offsets })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Total descriptor count M.
    pub fn n_descriptors(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Width of the augmented (descriptors + class prompts) feature space.
    pub fn n_augmented(&self) -> usize {
        self.n_descriptors() + self.n_classes()
    }

    pub fn count(&self, class: usize) -> usize {
        self.counts[class]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn range(&self, class: usize) -> Range<usize> {
        self.offsets[class]..self.offsets[class] + self.counts[class]
    }

    /// Class owning descriptor index `j`.
    pub fn class_of(&self, j: usize) -> Option<usize> {
        if j >= self.n_descriptors() {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= j) - 1)
    }
}

/// Class names, their LLM-generated descriptors, and class-prompt templates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptorSet {
    pub classes: Vec<ClassDescriptors>,
    pub templates: Vec<String>,
    layout: DescriptorLayout,
}

#[derive(Serialize, Deserialize)]
struct DescriptorSetFile {
    classes: Vec<ClassDescriptors>,
    #[serde(default)]
    templates: Vec<String>,
}

impl DescriptorSet {
    pub fn new(classes: Vec<ClassDescriptors>, templates: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for class in &classes {
            if !seen.insert(class.name.as_str()) {
                return Err(Error::DescriptorSet(format!(
                    "duplicate class name {:?}",
                    class.name
                )));
            }
            if class.descriptors.is_empty() {
                return Err(Error::DescriptorSet(format!(
                    "class {:?} has no descriptors",
                    class.name
                )));
            }
        }
        let layout = DescriptorLayout::from_counts(
            classes.iter().map(|c| c.descriptors.len()).collect(),
        )?;
        Ok(Self {
            classes,
            templates,
            layout,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DescriptorSetFile = serde_json::from_str(text)?;
        Self::new(file.classes, file.templates)
    }

    pub fn to_json(&self) -> String {
        let file = DescriptorSetFile {
            classes: self.classes.clone(),
            templates: self.templates.clone(),
        };
        serde_json::to_string_pretty(&file).expect("descriptor set serializes")
    }

    pub fn layout(&self) -> &DescriptorLayout {
        &self.layout
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.name.as_str())
    }

    /// Text for augmented feature `j`: a descriptor for `j < M`, otherwise
    /// the class prompt of class `j - M`.
    pub fn feature_text(&self, j: usize) -> Option<String> {
        let m = self.layout.n_descriptors();
        if let Some(c) = self.layout.class_of(j) {
            let local = j - self.layout.range(c).start;
            return Some(self.classes[c].descriptors[local].clone());
        }
        self.classes
            .get(j - m)
            .map(|c| format!("class prompt: {}", c.name))
    }
}

pub fn read_descriptor_set(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DescriptorSet::from_json(&text)
}

/// Disjoint per-class train/validation indices drawn from a label vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub k: usize,
    pub val_k: usize,
    pub seed: u64,
}

/// Draws `k` train and `val_k` validation indices per class without
/// replacement.
///
/// For each class in ascending order, the class's sample indices (ascending)
/// are partially Fisher-Yates shuffled for `k + val_k` positions using one
/// [`SeededRng`] stream; the first `k` go to train and the next `val_k` to
/// validation. Both outputs are returned sorted.
pub fn sample_few_shot(
    labels: &LabelVector,
    k: usize,
    val_k: usize,
    seed: u64,
) -> Result<FewShotSplit> {
    let need = k + val_k;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.n_classes];
    for (i, &y) in labels.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some((class, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < need) {
        return Err(Error::InsufficientSamples {
            class,
            available: members.len(),
            required: need,
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut train = Vec::with_capacity(k * labels.n_classes);
    let mut validation = Vec::with_capacity(val_k * labels.n_classes);
    for mut members in by_class {
        for i in 0..need {
            let j = i + rng.below(members.len() - i);
            members.swap(i, j);
        }
        train.extend_from_slice(&members[..k]);
        validation.extend_from_slice(&members[k..need]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(FewShotSplit {
        train,
        validation,
        k,
        val_k,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn decodes_f32_header_and_payload() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"EMBF");
        bytes.extend_from_slice(&[1, 1, 0, 0, 0]);
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let m = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(m.dtype, Dtype::F32);
        assert_eq!(m.data, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]]);
        assert_eq!(m.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn one_by_one_is_header_plus_one_f64() {
        let m = EmbeddingMatrix::new(array![[0.0]]).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 1 + 3 + 8 + 8 + 8);
        assert_eq!(&bytes[..4], b"EMBF");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let m = EmbeddingMatrix::new(Array2::zeros((0, 5))).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(back.data.dim(), (0, 5));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let m = EmbeddingMatrix::with_dtype(Array2::zeros((2, 3)), Dtype::F32).unwrap();
        let bytes = m.to_bytes().unwrap();
        let err = EmbeddingMatrix::from_bytes(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(
            err,
            Error::Truncated {
                expected: 49,
                actual: 45
            }
        ));
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut bytes = EmbeddingMatrix::new(array![[1.0]]).unwrap().to_bytes().unwrap();
        bytes.push(0);
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(Error::TrailingBytes { offset: 33 })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn non_finite_reports_offset() {
        let mut bytes = EmbeddingMatrix::new(array![[1.0, 2.0]]).unwrap().to_bytes().unwrap();
        bytes[33..41].copy_from_slice(&f64::NAN.to_le_bytes());
        match EmbeddingMatrix::from_bytes(&bytes) {
            Err(Error::NonFinite {
                offset, row, col, ..
            }) => assert_eq!((offset, row, col), (33, 0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected_before_write() {
        let data = array![[1.0, f64::INFINITY]];
        assert!(EmbeddingMatrix::new(data.clone()).is_err());
        let m = EmbeddingMatrix {
            data,
            dtype: Dtype::F64,
        };
        assert!(matches!(m.to_bytes(), Err(Error::NonFiniteEntry { col: 1, .. })));
    }

    #[test]
    fn labels_must_be_integers() {
        let m = EmbeddingMatrix::new(array![[0.0], [1.5]]).unwrap();
        assert!(matches!(
            LabelVector::from_matrix(&m),
            Err(Error::InvalidLabel { row: 1, .. })
        ));
        let m = EmbeddingMatrix::new(array![[0.0], [2.0]]).unwrap();
        let labels = LabelVector::from_matrix(&m).unwrap();
        assert_eq!(labels.n_classes, 3);
        assert!(LabelVector::with_classes(labels.labels, 2).is_err());
    }

    #[test]
    fn descriptor_layout_ranges() {
        let json = r#"{"classes":[{"name":"cat","descriptors":["a","b","c"]},
            {"name":"dog","descriptors":["d","e"]}],"templates":["a photo of a {}."]}"#;
        let set = DescriptorSet::from_json(json).unwrap();
        let layout = set.layout();
        assert_eq!(layout.n_descriptors(), 5);
        assert_eq!(layout.n_classes(), 2);
        assert_eq!(layout.range(0), 0..3);
        assert_eq!(layout.range(1), 3..5);
        assert_eq!(layout.class_of(2), Some(0));
        assert_eq!(layout.class_of(3), Some(1));
        assert_eq!(layout.class_of(5), None);
        assert_eq!(set.feature_text(4).unwrap(), "e");
        assert_eq!(set.feature_text(6).unwrap(), "class prompt: dog");
    }

    #[test]
    fn ten_class_file() {
        let classes: Vec<_> = (0..10)
            .map(|c| format!(r#"{{"name":"class{c}","descriptors":["x","y"]}}"#))
            .collect();
        let json = format!(r#"{{"classes":[{}],"templates":[]}}"#, classes.join(","));
        assert_eq!(DescriptorSet::from_json(&json).unwrap().n_classes(), 10);
    }

    #[test]
    fn descriptor_set_errors() {
        let empty = r#"{"classes":[{"name":"cat","descriptors":[]}],"templates":[]}"#;
        assert!(matches!(
            DescriptorSet::from_json(empty),
            Err(Error::DescriptorSet(_))
        ));
        let dup = r#"{"classes":[{"name":"cat","descriptors":["a"]},
            {"name":"cat","descriptors":["b"]}],"templates":[]}"#;
        assert!(matches!(
            DescriptorSet::from_json(dup),
            Err(Error::DescriptorSet(_))
        ));
    }

    #[test]
    fn few_shot_split_contract() {
        let labels = LabelVector::new(vec![0, 0, 1, 1]);
        let split = sample_few_shot(&labels, 1, 1, 7).unwrap();
        assert_eq!(split.train.len(), 2);
        assert_eq!(split.validation.len(), 2);
        for class in 0..2 {
            assert_eq!(split.train.iter().filter(|&&i| labels.labels[i] == class).count(), 1);
            assert_eq!(
                split.validation.iter().filter(|&&i| labels.labels[i] == class).count(),
                1
            );
        }
        assert!(split.train.iter().all(|i| !split.validation.contains(i)));
        assert_eq!(split, sample_few_shot(&labels, 1, 1, 7).unwrap());
    }

    #[test]
    fn few_shot_insufficient() {
        let labels = LabelVector::new(vec![0, 0, 1, 1, 1]);
        assert!(matches!(
            sample_few_shot(&labels, 3, 0, 0),
            Err(Error::InsufficientSamples {
                class: 0,
                available: 2,
                required: 3
            })
        ));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(rows in 0usize..6, cols in 1usize..6, f32_tag: bool, seed: u64) {
            let mut rng = SeededRng::new(seed);
            let dtype = if f32_tag { Dtype::F32 } else { Dtype::F64 };
            let data = Array2::from_shape_fn((rows, cols), |_| {
                let v = rng.normal() * 1e3;
                if f32_tag { f64::from(v as f32) } else { v }
            });
            let m = EmbeddingMatrix::with_dtype(data, dtype).unwrap();
            let bytes = m.to_bytes().unwrap();
            let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }

        #[test]
        fn split_is_pure_and_disjoint(
            counts in proptest::collection::vec(3usize..9, 1..5),
            k in 1usize..3,
            seed: u64,
        ) {
            let labels: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
                .collect();
            let labels = LabelVector::new(labels);
            let a = sample_few_shot(&labels, k, 1, seed).unwrap();
            let b = sample_few_shot(&labels, k, 1, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.train.len(), k * counts.len());
            prop_assert!(a.train.iter().all(|i| !a.validation.contains(i)));
        }

        #[test]
        fn layout_partitions_descriptor_axis(counts in proptest::collection::vec(1usize..6, 1..8)) {
            let layout = DescriptorLayout::from_counts(counts.clone()).unwrap();
            let mut next = 0;
            for (c, &count) in counts.iter().enumerate() {
                let r = layout.range(c);
                prop_assert_eq!(r.start, next);
                prop_assert_eq!(r.len(), count);
                next = r.end;
            }
            prop_assert_eq!(next, layout.n_descriptors());
        }
    }
}
