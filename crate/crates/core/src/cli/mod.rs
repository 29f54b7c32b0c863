//! The `avd` command line: one subcommand per pipeline stage, each writing
//! its artifacts plus a `manifest.json` into `--out`.
//!
//! Everything here is also callable from Rust through [`run`], which is how
//! the integration tests drive it.

mod artifacts;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;
use serde_json::json;

pub use artifacts::{sidecar_path, ArtifactKind, FeatureMeta, InputDigest, Inputs, OutputSet, WeightMeta};

use crate::error::{Error, Result};
use crate::eval::{
    evaluate_accuracy, frontier_sweep, default_alpha_grid, separation_probe, top_features, uniform_alpha_grid,
    EvalSet,
};
use crate::grounding::{
    average_class_prompts, build_grounding, compute_groundings, l2_normalize_rows, predict, zero_shot_avd_head,
    ZeroShotKind, DEFAULT_GAMMA,
};
use crate::slr::{
    linear_probe, lp_default_grid, regularization_path, standardize_columns, unstandardize_weights, PathConfig,
    SolverConfig,
};
use crate::tensor_io::{sample_few_shot, DescriptorSet, EmbeddingMatrix, LabelVector};
use crate::weights::{FeatureSpace, WeightMatrix};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "avd", version, about = "Sparse descriptor classifiers over embedding groundings")]
pub struct Cli {
    /// Worker threads for per-dataset evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project image embeddings onto descriptor and class-prompt embeddings.
    Ground(GroundArgs),
    /// Write a zero-shot head over the augmented feature space.
    Zeroshot(ZeroshotArgs),
    /// Few-shot split, then a sparse path (slr) or an l2 grid (lp).
    Fit(FitArgs),
    /// Accuracy and per-sample predictions of a head.
    Eval(EvalArgs),
    /// Accuracy along the learned/zero-shot interpolation for ID and OOD sets.
    Frontier(FrontierArgs),
    /// Top coefficients per class mapped back to descriptor text.
    Features(FeaturesArgs),
    /// Cosine-similarity separation of classes along prompt directions.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    /// Image embeddings (n x d EMBF).
    #[arg(long)]
    pub images: PathBuf,
    /// Descriptor text embeddings (M x d EMBF), class-major.
    #[arg(long)]
    pub desc_emb: PathBuf,
    /// Class-prompt embeddings: |C| rows, or |C| x T template rows to average.
    #[arg(long)]
    pub cp_emb: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Avd)]
    pub kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Vd,
    Cp,
    Avd,
}

impl From<KindArg> for ZeroShotKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Vd => ZeroShotKind::Vd,
            KindArg::Cp => ZeroShotKind::Cp,
            KindArg::Avd => ZeroShotKind::Avd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Slr,
    Lp,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Grounded features (slr) or image embeddings (lp).
    #[arg(long, visible_alias = "images")]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Slr)]
    pub mode: Mode,
    /// Training examples per class.
    #[arg(long)]
    pub shots: usize,
    /// Validation examples per class, disjoint from training.
    #[arg(long, default_value_t = 20)]
    pub val_shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SAGA epochs per path point.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// SAGA relative objective change stopping tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub intercept: bool,
    /// Rescale feature columns to unit RMS before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaGrid {
    Paper,
    Uniform21,
}

/// `name=features.embf,labels.embf`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OodSpec {
    pub name: String,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl FromStr for OodSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, paths) = s.split_once('=').ok_or("expected name=features,labels")?;
        let (features, labels) = paths.split_once(',').ok_or("expected name=features,labels")?;
        if name.is_empty() || name.contains(',') {
            return Err(format!("bad dataset name {name:?}"));
        }
        Ok(OodSpec {
            name: name.to_string(),
            features: features.into(),
            labels: labels.into(),
        })
    }
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// Learned head.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub zero_shot: PathBuf,
    /// In-distribution features and labels.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "id")]
    pub id_name: String,
    /// Repeatable: `--ood name=features.embf,labels.embf`.
    #[arg(long)]
    pub ood: Vec<OodSpec>,
    #[arg(long, value_enum, default_value_t = AlphaGrid::Paper)]
    pub alpha_grid: AlphaGrid,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Prompt embeddings (P x d EMBF).
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ground(_) => "ground",
            Command::Zeroshot(_) => "zeroshot",
            Command::Fit(_) => "fit",
            Command::Eval(_) => "eval",
            Command::Frontier(_) => "frontier",
            Command::Features(_) => "features",
            Command::Probe(_) => "probe",
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Command::Ground(a) => &a.out,
            Command::Zeroshot(a) => &a.out,
            Command::Fit(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Frontier(a) => &a.out,
            Command::Features(a) => &a.out,
            Command::Probe(a) => &a.out,
        }
    }
}

/// Provenance of one run. Rerunning with the same inputs and config
/// reproduces every other output file bitwise; only `timings_ms` varies.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Files written by a successful run, plus a one-line summary.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Staged {
    outputs: OutputSet,
    config: serde_json::Value,
    seed: Option<u64>,
    summary: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> Result<RunReport>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Cli(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Cli(format!("thread pool: {e}")))?;
    pool.install(|| run_command(&cli.command, cli.threads))
}

fn run_command(command: &Command, threads: usize) -> Result<RunReport> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let staged = match command {
        Command::Ground(a) => ground(a, &mut inputs),
        Command::Zeroshot(a) => zeroshot(a, &mut inputs),
        Command::Fit(a) => fit(a, &mut inputs),
        Command::Eval(a) => eval(a, &mut inputs),
        Command::Frontier(a) => frontier(a, &mut inputs),
        Command::Features(a) => features(a, &mut inputs),
        Command::Probe(a) => probe(a, &mut inputs),
    }?;
    let compute = start.elapsed();

    let Staged {
        mut outputs,
        mut config,
        seed,
        summary,
    } = staged;
    config["threads"] = json!(threads);
    let mut names = outputs.names();
    names.push(MANIFEST_NAME.to_string());
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        inputs: inputs.digests,
        outputs: names,
        timings_ms: BTreeMap::from([("total".to_string(), compute.as_secs_f64() * 1e3)]),
    };
    outputs.add_json(MANIFEST_NAME, &manifest);
    let files = outputs.commit(command.out_dir())?;
    Ok(RunReport { files, summary })
}

fn ground(a: &GroundArgs, inputs: &mut Inputs) -> Result<Staged> {
    let text = inputs.text("descriptors", &a.descriptors)?;
    let descriptors = DescriptorSet::from_json(&text).map_err(|e| e.in_file(&a.descriptors))?;
    let images = inputs.matrix("images", &a.images)?;
    let desc = inputs.matrix("desc_emb", &a.desc_emb)?;
    let cp_raw = inputs.matrix("cp_emb", &a.cp_emb)?;
    let layout = descriptors.layout();
    let n_classes = layout.n_classes();

    let templates_averaged = cp_raw.rows() != n_classes;
    let cp = if templates_averaged {
        let averaged = average_class_prompts(&cp_raw.data.view(), n_classes).map_err(|e| e.in_file(&a.cp_emb))?;
        EmbeddingMatrix::new(averaged)?
    } else {
        cp_raw
    };
    let grounding = build_grounding(&desc, &cp, layout)?;
    let z = l2_normalize_rows(&images.data.view()).map_err(|e| e.in_file(&a.images))?;
    let h = compute_groundings(&grounding, &z.view())?;

    let mut outputs = OutputSet::default();
    let (rows, cols) = h.values.dim();
    outputs.add_matrix("grounded.embf", h.values)?;
    outputs.add_json(
        "grounded.json",
        &FeatureMeta {
            kind: ArtifactKind::Features,
            space: FeatureSpace::Avd,
            n_descriptors: Some(layout.n_descriptors()),
            n_classes: Some(n_classes),
        },
    );
    Ok(Staged {
        outputs,
        config: json!({
            "normalize_images": true,
            "templates_averaged": templates_averaged,
            "n_descriptors": layout.n_descriptors(),
            "n_classes": n_classes,
            "embedding_dim": images.cols(),
        }),
        seed: None,
        summary: format!("grounded {rows} images onto {cols} features"),
    })
}

fn zeroshot(a: &ZeroshotArgs, inputs: &mut Inputs) -> Result<Staged> {
    let text = inputs.text("descriptors", &a.descriptors)?;
    let descriptors = DescriptorSet::from_json(&text).map_err(|e| e.in_file(&a.descriptors))?;
    if !a.gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be finite, got {}", a.gamma)));
    }
    let head = zero_shot_avd_head(descriptors.layout(), a.kind.into(), a.gamma);
    let mut outputs = OutputSet::default();
    outputs.add_weights("zeroshot", &head)?;
    Ok(Staged {
        outputs,
        config: json!({ "kind": a.kind, "gamma": a.gamma }),
        seed: None,
        summary: format!("{:?} zero-shot head, {} x {}", a.kind, head.n_classes(), head.n_features()).to_lowercase(),
    })
}

fn rows(m: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn fit(a: &FitArgs, inputs: &mut Inputs) -> Result<Staged> {
    let (features, meta) = inputs.features("features", &a.features)?;
    let labels = inputs.labels("labels", &a.labels)?;
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} has {} rows but {} has {} labels",
            a.features.display(),
            features.rows(),
            a.labels.display(),
            labels.len()
        )));
    }
    if a.shots == 0 {
        return Err(Error::InvalidArgument("--shots must be at least 1".into()));
    }
    let n_classes = meta.n_classes.unwrap_or(labels.n_classes).max(labels.n_classes);
    let labels = LabelVector::with_classes(labels.labels, n_classes)?;
    let split = sample_few_shot(&labels, a.shots, a.val_shots, a.seed)?;
    let view = features.data.view();
    let mut train = rows(&view, &split.train);
    let mut val = rows(&view, &split.validation);
    let train_y = labels.select(&split.train);
    let val_y = labels.select(&split.validation);
    let scales = a.standardize.then(|| {
        let (scaled, scales) = standardize_columns(&train.view());
        train = scaled;
        for (mut col, s) in val.axis_iter_mut(Axis(1)).zip(&scales) {
            col.mapv_inplace(|v| v / s);
        }
        scales
    });
    let solver = SolverConfig {
        epochs: a.epochs,
        tol: a.tol,
        seed: a.seed,
        intercept: a.intercept,
        ..SolverConfig::default()
    };

    let mut outputs = OutputSet::default();
    let (mut weights, report, summary) = match a.mode {
        Mode::Slr => {
            let path = PathConfig::default();
            let result = regularization_path(&train.view(), &train_y, &val.view(), &val_y, &path, &solver)?;
            let mut csv = String::from("index,lambda,nnz,train_loss,objective,val_acc,epochs,converged,selected\n");
            for (i, e) in result.entries.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{},{},{},{},{},{},{},{}\n",
                    e.lambda,
                    e.nnz,
                    e.train_loss,
                    e.objective,
                    e.val_accuracy,
                    e.epochs,
                    e.converged,
                    i == result.selected
                ));
            }
            outputs.add("path.csv", csv.into_bytes());
            let chosen = result.selected_entry();
            let summary = format!(
                "selected lambda {:.6e} (index {}), {} nonzeros, val acc {:.4}",
                chosen.lambda, result.selected, chosen.nnz, chosen.val_accuracy
            );
            let report = json!({
                "lambda_max": result.lambda_max,
                "selected": result.selected,
                "lambda": chosen.lambda,
                "nnz": chosen.nnz,
                "val_accuracy": chosen.val_accuracy,
            });
            (chosen.weights.clone(), report, summary)
        }
        Mode::Lp => {
            let grid = lp_default_grid();
            let result = linear_probe(&train.view(), &train_y, &val.view(), &val_y, &grid, &solver)?;
            let mut csv = String::from("index,lambda,objective,val_acc,selected\n");
            for i in 0..result.grid.len() {
                csv.push_str(&format!(
                    "{i},{},{},{},{}\n",
                    result.grid[i],
                    result.objectives[i],
                    result.val_accuracies[i],
                    i == result.selected
                ));
            }
            outputs.add("path.csv", csv.into_bytes());
            let summary = format!(
                "selected lambda {:.6e} (index {}), val acc {:.4}",
                result.selected_lambda(),
                result.selected,
                result.val_accuracies[result.selected]
            );
            let report = json!({
                "selected": result.selected,
                "lambda": result.selected_lambda(),
                "val_accuracy": result.val_accuracies[result.selected],
            });
            (result.weights, report, summary)
        }
    };
    if let Some(scales) = &scales {
        unstandardize_weights(&mut weights, scales);
    }
    weights.space = meta.space;
    outputs.add_weights("weights", &weights)?;
    outputs.add_json("split.json", &split);
    outputs.add_json("fit.json", &report);
    Ok(Staged {
        outputs,
        config: json!({
            "mode": a.mode,
            "shots": a.shots,
            "val_shots": a.val_shots,
            "standardize": a.standardize,
            "feature_space": meta.space,
            "n_classes": n_classes,
            "solver": solver,
            "path": PathConfig::default(),
        }),
        seed: Some(a.seed),
        summary,
    })
}

/// Weights and features must live on the same tagged axis.
fn check_compatible(w: &WeightMatrix, meta: &FeatureMeta, features: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if w.space != meta.space {
        return Err(Error::FeatureSpace {
            weights: w.space.to_string(),
            features: format!("{} ({})", meta.space, path.display()),
        });
    }
    w.check_features(&features.data.view()).map_err(|e| e.in_file(path))
}

fn eval(a: &EvalArgs, inputs: &mut Inputs) -> Result<Staged> {
    let w = inputs.weights("weights", &a.weights)?;
    let (features, meta) = inputs.features("features", &a.features)?;
    let labels = inputs.labels("labels", &a.labels)?;
    check_compatible(&w, &meta, &features, &a.features)?;
    let labels = LabelVector::with_classes(labels.labels, w.n_classes()).map_err(|e| e.in_file(&a.labels))?;
    let view = features.data.view();
    let accuracy = evaluate_accuracy(&w, &view, &labels)?;
    let prediction = predict(&w, &view, a.tau)?;

    let mut csv = String::from("index,label,predicted,probability\n");
    for (i, (&y, &p)) in labels.as_slice().iter().zip(&prediction.labels).enumerate() {
        csv.push_str(&format!("{i},{y},{p},{}\n", prediction.probabilities[[i, p]]));
    }
    let mut outputs = OutputSet::default();
    outputs.add_json(
        "eval.json",
        &json!({ "accuracy": accuracy, "n": labels.len(), "tau": a.tau, "space": w.space }),
    );
    outputs.add("predictions.csv", csv.into_bytes());
    Ok(Staged {
        outputs,
        config: json!({ "tau": a.tau }),
        seed: None,
        summary: format!("accuracy {accuracy:.4} on {} samples", labels.len()),
    })
}

fn frontier(a: &FrontierArgs, inputs: &mut Inputs) -> Result<Staged> {
    let learned = inputs.weights("weights", &a.weights)?;
    let zs = inputs.weights("zero_shot", &a.zero_shot)?;
    let load = |inputs: &mut Inputs, role: &str, f: &Path, l: &Path| -> Result<(EmbeddingMatrix, LabelVector)> {
        let (features, meta) = inputs.features(&format!("{role}.features"), f)?;
        check_compatible(&learned, &meta, &features, f)?;
        let labels = inputs.labels(&format!("{role}.labels"), l)?;
        let labels = LabelVector::with_classes(labels.labels, learned.n_classes()).map_err(|e| e.in_file(l))?;
        Ok((features, labels))
    };
    let id = load(inputs, &a.id_name, &a.features, &a.labels)?;
    let mut names = vec![a.id_name.clone()];
    let mut ood_data = Vec::with_capacity(a.ood.len());
    for spec in &a.ood {
        if names.contains(&spec.name) {
            return Err(Error::InvalidArgument(format!("duplicate dataset name {:?}", spec.name)));
        }
        names.push(spec.name.clone());
        ood_data.push(load(inputs, &spec.name, &spec.features, &spec.labels)?);
    }
    let alphas = match a.alpha_grid {
        AlphaGrid::Paper => default_alpha_grid(),
        AlphaGrid::Uniform21 => uniform_alpha_grid(),
    };
    let id_set = EvalSet {
        name: a.id_name.clone(),
        features: id.0.data.view(),
        labels: &id.1,
    };
    let ood_sets: Vec<EvalSet<'_>> = a
        .ood
        .iter()
        .zip(&ood_data)
        .map(|(spec, (f, l))| EvalSet {
            name: spec.name.clone(),
            features: f.data.view(),
            labels: l,
        })
        .collect();
    let curve = frontier_sweep(&learned, &zs, &id_set, &ood_sets, &alphas)?;

    let mut outputs = OutputSet::default();
    outputs.add("frontier.csv", curve.to_csv().into_bytes());
    outputs.add_json("frontier.json", &curve);
    let last = alphas.len() - 1;
    Ok(Staged {
        outputs,
        config: json!({ "alpha_grid": a.alpha_grid, "alphas": alphas, "datasets": names }),
        seed: None,
        summary: format!(
            "{} alphas; id acc {:.4} (zero-shot) -> {:.4} (learned)",
            alphas.len(),
            curve.id_accuracy[0],
            curve.id_accuracy[last]
        ),
    })
}

fn features(a: &FeaturesArgs, inputs: &mut Inputs) -> Result<Staged> {
    let w = inputs.weights("weights", &a.weights)?;
    let text = inputs.text("descriptors", &a.descriptors)?;
    let descriptors = DescriptorSet::from_json(&text).map_err(|e| e.in_file(&a.descriptors))?;
    let report = top_features(&w, &descriptors, a.k)?;
    let mut outputs = OutputSet::default();
    outputs.add("features.csv", report.to_csv().into_bytes());
    outputs.add_json("features.json", &report);
    Ok(Staged {
        outputs,
        config: json!({ "k": a.k }),
        seed: None,
        summary: report.to_text().trim_end().to_string(),
    })
}

fn probe(a: &ProbeArgs, inputs: &mut Inputs) -> Result<Staged> {
    let images = inputs.matrix("images", &a.images)?;
    let labels = inputs.labels("labels", &a.labels)?;
    let prompts = inputs.matrix("prompts", &a.prompts)?;
    if images.rows() != labels.len() {
        return Err(Error::Shape(format!("{} images vs {} labels", images.rows(), labels.len())));
    }
    let by_class: Vec<Array2<f64>> = (0..labels.n_classes)
        .map(|c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels.labels[i] == c).collect();
            images.data.select(Axis(0), &idx)
        })
        .collect();
    let views: Vec<ArrayView2<'_, f64>> = by_class.iter().map(|m| m.view()).collect();
    let stats = separation_probe(&views, &prompts.data.view(), a.bins)?;
    let mut outputs = OutputSet::default();
    outputs.add("probe.csv", stats.summary_csv().into_bytes());
    outputs.add_json("probe.json", &stats);
    Ok(Staged {
        outputs,
        config: json!({ "bins": a.bins }),
        seed: None,
        summary: format!("{} prompts x {} classes", stats.prompts.len(), by_class.len()),
    })
}
