//! Toy pipeline inputs shared by the CLI and acceptance tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use avd_core::cli::{run_from_args, MANIFEST_NAME};
use avd_core::rng::SeededRng;
use avd_core::tensor_io::{write_labels, write_matrix, ClassDescriptors};
use avd_core::{DescriptorSet, EmbeddingMatrix, LabelVector};
use ndarray::Array2;
use tempfile::TempDir;

pub const DIM: usize = 8;

/// Two classes with 3 and 2 descriptors; images cluster around a class
/// direction that its descriptors share.
pub struct Toy {
    pub dir: TempDir,
}

impl Toy {
    pub fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let mut rng = SeededRng::new(3);
        let centers = [unit(0), unit(1)];
        let noisy = |rng: &mut SeededRng, c: &[f64; DIM], s: f64| -> Vec<f64> {
            c.iter().map(|v| v + s * rng.normal()).collect()
        };

        let mut desc = Vec::new();
        for (class, count) in [(0, 3), (1, 2)] {
            for _ in 0..count {
                desc.extend(noisy(&mut rng, &centers[class], 0.3));
            }
        }
        let mut templates = Vec::new();
        for center in &centers {
            for _ in 0..3 {
                templates.extend(noisy(&mut rng, center, 0.2));
            }
        }
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..80 {
            let class = i % 2;
            images.extend(noisy(&mut rng, &centers[class], 0.8));
            labels.push(class);
        }

        let toy = Toy { dir };
        write_matrix(&EmbeddingMatrix::new(Array2::from_shape_vec((5, DIM), desc).unwrap()).unwrap(), toy.path("desc.embf")).unwrap();
        write_matrix(&EmbeddingMatrix::new(Array2::from_shape_vec((6, DIM), templates).unwrap()).unwrap(), toy.path("templates.embf")).unwrap();
        write_matrix(&EmbeddingMatrix::new(Array2::from_shape_vec((80, DIM), images).unwrap()).unwrap(), toy.path("images.embf")).unwrap();
        write_labels(&LabelVector::new(labels), toy.path("labels.embf")).unwrap();
        let set = DescriptorSet::new(
            vec![
                ClassDescriptors {
                    name: "cat".into(),
                    descriptors: vec!["cat which has whiskers".into(), "cat which has slit pupils".into(), "cat which has fur".into()],
                },
                ClassDescriptors {
                    name: "dog".into(),
                    descriptors: vec!["dog which has a snout".into(), "dog which has floppy ears".into()],
                },
            ],
            vec!["a photo of a {}.".into(), "itap of a {}.".into(), "a bad photo of the {}.".into()],
        )
        .unwrap();
        fs::write(toy.path("descriptors.json"), set.to_json()).unwrap();
        toy
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn run(&self, args: &[&str]) -> avd_core::Result<avd_core::cli::RunReport> {
        let mut full = vec!["avd".to_string()];
        full.extend(args.iter().map(|a| a.to_string()));
        run_from_args(full)
    }

    pub fn ground(&self, out: &str) {
        self.run(&[
            "ground",
            "--images", &self.p("images.embf"),
            "--desc-emb", &self.p("desc.embf"),
            "--cp-emb", &self.p("templates.embf"),
            "--descriptors", &self.p("descriptors.json"),
            "--out", &self.p(out),
        ])
        .unwrap();
    }
}

pub fn unit(axis: usize) -> [f64; DIM] {
    let mut v = [0.0; DIM];
    v[axis] = 1.0;
    v
}

/// Every output except the manifest, whose timings vary between runs.
pub fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != MANIFEST_NAME)
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

