//! The full `avd` pipeline on generated inputs, driven through the same
//! entry point as the binary. Writes everything under `DIR` (default: a
//! temporary directory) so the files can be inspected afterwards.
//!
//!     cargo run --release --example cli_walkthrough [DIR]
//!
//! Each step is equivalent to `avd <args>` on the command line.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use avd_core::cli::run_from_args;
use avd_core::rng::SeededRng;
use avd_core::tensor_io::{write_labels, write_matrix, ClassDescriptors};
use avd_core::{DescriptorSet, EmbeddingMatrix, LabelVector};
use ndarray::Array2;

const DIM: usize = 16;
const TEMPLATES: [&str; 2] = ["a photo of a {}.", "a blurry photo of a {}."];

/// What the encoder side would hand over: text embeddings for every
/// descriptor and class-prompt template, image embeddings, labels, and the
/// descriptor JSON.
fn write_inputs(dir: &Path, tag: &str, images_per_class: usize, spread: f64, seed: u64) -> Result<(), Box<dyn Error>> {
    let classes = [
        ("finch", vec!["small conical beak", "streaked brown plumage", "perched on a seed head"]),
        ("gull", vec!["white and grey feathers", "webbed feet", "near the shoreline", "hooked yellow bill"]),
        ("owl", vec!["large forward-facing eyes", "facial disc", "mottled camouflage"]),
    ];
    // Class directions are shared across calls so every split sees the same task.
    let mut world = SeededRng::new(99);
    let centers = Array2::from_shape_fn((classes.len(), DIM), |_| world.normal());
    let mut rng = SeededRng::new(seed);
    let mut near = |c: usize, s: f64| -> Vec<f64> { centers.row(c).iter().map(|v| v + s * rng.normal()).collect() };

    let mut desc = Vec::new();
    let mut prompts = Vec::new();
    for (c, (_, ds)) in classes.iter().enumerate() {
        for _ in ds {
            desc.extend(near(c, 0.9));
        }
        for _ in TEMPLATES {
            prompts.extend(near(c, 0.6));
        }
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..images_per_class * classes.len() {
        images.extend(near(i % classes.len(), spread));
        labels.push(i % classes.len());
    }

    let matrix = |v: Vec<f64>| EmbeddingMatrix::new(Array2::from_shape_vec((v.len() / DIM, DIM), v).expect("whole rows"));
    write_matrix(&matrix(desc)?, dir.join("desc.embf"))?;
    write_matrix(&matrix(prompts)?, dir.join("prompts.embf"))?;
    write_matrix(&matrix(images)?, dir.join(format!("{tag}_images.embf")))?;
    write_labels(&LabelVector::new(labels), dir.join(format!("{tag}_labels.embf")))?;
    let set = DescriptorSet::new(
        classes
            .iter()
            .map(|(name, ds)| ClassDescriptors {
                name: name.to_string(),
                descriptors: ds.iter().map(|d| format!("{name}, which has {d}")).collect(),
            })
            .collect(),
        TEMPLATES.iter().map(|t| t.to_string()).collect(),
    )?;
    fs::write(dir.join("descriptors.json"), set.to_json())?;
    Ok(())
}

fn avd(args: &[&str]) -> avd_core::Result<()> {
    println!("$ avd {}", args.join(" "));
    let report = run_from_args(std::iter::once("avd").chain(args.iter().copied()))?;
    for line in report.summary.lines() {
        println!("  {line}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    let keep = std::env::args().nth(1).map(PathBuf::from);
    let temp = tempfile::tempdir().expect("temp dir");
    let root = keep.unwrap_or_else(|| temp.path().to_path_buf());
    fs::create_dir_all(&root)?;
    let p = |name: &str| root.join(name).display().to_string();

    write_inputs(&root, "id", 60, 1.6, 1)?;
    write_inputs(&root, "shift", 60, 2.6, 2)?;

    let ground = |tag: &str| {
        avd(&[
            "ground", "--images", &p(&format!("{tag}_images.embf")), "--desc-emb", &p("desc.embf"),
            "--cp-emb", &p("prompts.embf"), "--descriptors", &p("descriptors.json"), "--out", &p(&format!("{tag}_grounded")),
        ])
    };
    ground("id")?;
    ground("shift")?;
    let id = p("id_grounded/grounded.embf");
    let shift = p("shift_grounded/grounded.embf");

    avd(&["zeroshot", "--descriptors", &p("descriptors.json"), "--kind", "avd", "--out", &p("zeroshot")])?;
    avd(&[
        "fit", "--features", &id, "--labels", &p("id_labels.embf"), "--mode", "slr",
        "--shots", "8", "--val-shots", "8", "--seed", "3", "--epochs", "200", "--out", &p("slr"),
    ])?;
    avd(&[
        "fit", "--images", &p("id_images.embf"), "--labels", &p("id_labels.embf"), "--mode", "lp",
        "--shots", "8", "--val-shots", "8", "--seed", "3", "--out", &p("lp"),
    ])?;
    avd(&["eval", "--weights", &p("slr/weights.embf"), "--features", &id, "--labels", &p("id_labels.embf"), "--out", &p("eval")])?;
    avd(&[
        "frontier", "--weights", &p("slr/weights.embf"), "--zero-shot", &p("zeroshot/zeroshot.embf"),
        "--features", &id, "--labels", &p("id_labels.embf"),
        "--ood", &format!("shift={shift},{}", p("shift_labels.embf")), "--out", &p("frontier"),
    ])?;
    avd(&["features", "--weights", &p("slr/weights.embf"), "--descriptors", &p("descriptors.json"), "--k", "3", "--out", &p("features")])?;
    avd(&[
        "probe", "--images", &p("id_images.embf"), "--labels", &p("id_labels.embf"),
        "--prompts", &p("prompts.embf"), "--bins", "10", "--out", &p("probe"),
    ])?;
    println!("outputs under {}", root.display());
    Ok(())
}
