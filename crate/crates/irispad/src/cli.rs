//! The `irispad` command-line interface.
//!
//! One subcommand per pipeline stage: `synth`, `train`, `score`, `metrics`,
//! `matrix`, `cam`, `report`. Every output directory receives the resolved
//! configuration, tool version, and seed before any work starts, so a run
//! can be reproduced bit-compatibly on the same platform.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cam::{overlay, score_cam, write_overlay, TargetLayer};
use crate::checkpoint::{load_model, save_model};
use crate::data::synth::{synthesize_dataset, ClassCounts, SynthSpec};
use crate::data::{balance_by_undersampling, load_manifest, FilterExpr, SampleRecord};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, DEFAULT_BPCER_TARGET, DEFAULT_THRESHOLD};
use crate::model::{ModelConfig, PadModel, Variant};
use crate::report::{
    histogram, histogram_csv, matrix_csv, matrix_text, metrics_text, run_protocol_matrix,
    MatrixSpec,
};
use crate::scores::{aggregate_by_video, read_scores, write_scores};
use crate::train::{train, write_train_log, TrainConfig, DEFAULT_FRAME_STRIDE};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "irispad",
    version,
    about = "Attention-based pixel-wise binary supervision for iris presentation attack detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic iris PAD dataset with manifest and geometry.
    Synth(SynthArgs),
    /// Train a model variant on the train split of a manifest.
    Train(TrainArgs),
    /// Score a manifest selection with a trained checkpoint.
    Score(ScoreArgs),
    /// Print the metric block for a score file.
    Metrics(MetricsArgs),
    /// Evaluate a cross-database / cross-spectrum grid of score files.
    Matrix(MatrixArgs),
    /// Render Score-CAM saliency overlays for images.
    Cam(CamArgs),
    /// Write metrics and score histograms for a score file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional TOML file with the full dataset spec; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub train_bona_fide: Option<usize>,
    #[arg(long)]
    pub train_lens: Option<usize>,
    #[arg(long)]
    pub train_print: Option<usize>,
    #[arg(long)]
    pub train_replay: Option<usize>,
    #[arg(long)]
    pub test_bona_fide: Option<usize>,
    #[arg(long)]
    pub test_lens: Option<usize>,
    #[arg(long)]
    pub test_print: Option<usize>,
    #[arg(long)]
    pub test_replay: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TOML file with `[model]` and `[train]` sections; flags
    /// override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Record filter selecting the training set.
    #[arg(long, default_value = "split=train")]
    pub filter: String,
    /// Skip class balancing by undersampling.
    #[arg(long)]
    pub no_balance: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output score CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Expected variant; scoring fails if the checkpoint differs.
    #[arg(long)]
    pub variant: Option<String>,
    /// Record filter selecting what to score.
    #[arg(long, default_value = "split=test")]
    pub filter: String,
    /// Video frame stride.
    #[arg(long, default_value_t = DEFAULT_FRAME_STRIDE)]
    pub stride: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BPCER_TARGET)]
    pub bpcer_target: f64,
    /// Collapse per-frame scores to per-video means first.
    #[arg(long)]
    pub by_video: bool,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Matrix spec TOML (cells with train/test names and score files).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for matrix.csv / matrix.txt; prints to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BPCER_TARGET)]
    pub bpcer_target: f64,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Images to visualize (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    pub image: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Target activations: stem | transition1 | transition2.
    #[arg(long, default_value = "transition2")]
    pub layer: String,
    #[arg(long, default_value_t = 0.5)]
    pub opacity: f32,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BPCER_TARGET)]
    pub bpcer_target: f64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub by_video: bool,
}

/// The provenance record written to every output directory before work
/// begins.
#[derive(Debug, Serialize)]
struct Provenance<T: Serialize> {
    version: String,
    command: String,
    seed: Option<u64>,
    params: T,
}

fn write_provenance<T: Serialize>(
    out_dir: &Path,
    command: &str,
    seed: Option<u64>,
    params: T,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let record = Provenance {
        version: VERSION.to_string(),
        command: command.to_string(),
        seed,
        params,
    };
    let text = toml::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out_dir.join("run.toml"), text)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args),
        Command::Score(args) => run_score(args),
        Command::Metrics(args) => run_metrics(args),
        Command::Matrix(args) => run_matrix(args),
        Command::Cam(args) => run_cam(args),
        Command::Report(args) => run_report(args),
    }
}

fn default_synth_spec() -> SynthSpec {
    SynthSpec {
        train: ClassCounts {
            bona_fide: 300,
            textured_lens: 150,
            printout: 150,
            replay: 0,
        },
        test: ClassCounts {
            bona_fide: 100,
            textured_lens: 50,
            printout: 50,
            replay: 0,
        },
        ..Default::default()
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => default_synth_spec(),
    };
    let set = |target: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *target = v;
        }
    };
    set(&mut spec.image_size, args.image_size);
    set(&mut spec.subjects_per_split, args.subjects);
    set(&mut spec.train.bona_fide, args.train_bona_fide);
    set(&mut spec.train.textured_lens, args.train_lens);
    set(&mut spec.train.printout, args.train_print);
    set(&mut spec.train.replay, args.train_replay);
    set(&mut spec.test.bona_fide, args.test_bona_fide);
    set(&mut spec.test.textured_lens, args.test_lens);
    set(&mut spec.test.printout, args.test_print);
    set(&mut spec.test.replay, args.test_replay);

    write_provenance(&args.out, "synth", Some(args.seed), &spec)?;
    let output = synthesize_dataset(&spec, args.seed, &args.out)?;
    println!(
        "wrote {} samples, manifest {}",
        output.records.len(),
        output.manifest_path.display()
    );
    Ok(())
}

/// The optional TOML config for `train`: `[model]` and `[train]` sections.
#[derive(Debug, Default, serde::Deserialize)]
struct TrainFileConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

/// The resolved experiment record serialized into the output directory.
#[derive(Debug, Serialize)]
struct ExperimentConfig {
    manifest: PathBuf,
    filter: String,
    balance: bool,
    model: ModelConfig,
    train: TrainConfig,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let file: TrainFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => TrainFileConfig::default(),
    };
    let mut model_config = file
        .model
        .unwrap_or_else(|| ModelConfig::new(Variant::Apbs));
    if let Some(v) = &args.variant {
        model_config.variant = Variant::parse(v)?;
    }
    if let Some(s) = args.input_size {
        model_config.input_size = s;
    }
    let mut train_config = file.train.unwrap_or_default();
    if let Some(e) = args.epochs {
        train_config.epochs_max = e;
    }
    if let Some(b) = args.batch_size {
        train_config.batch_size = b;
    }
    if let Some(lr) = args.lr {
        train_config.lr_init = lr;
    }
    if let Some(l) = args.lambda {
        train_config.lambda = l;
    }
    if let Some(seed) = args.seed {
        train_config.seed = seed;
    }
    model_config.validate()?;

    let manifest = load_manifest(&args.manifest)?;
    let filter = FilterExpr::parse(&args.filter)?;
    let mut records: Vec<SampleRecord> = manifest
        .records
        .iter()
        .filter(|r| filter.matches(r))
        .cloned()
        .collect();
    if !args.no_balance {
        records = balance_by_undersampling(&records, train_config.seed)?;
    }

    write_provenance(
        &args.out,
        "train",
        Some(train_config.seed),
        ExperimentConfig {
            manifest: args.manifest.clone(),
            filter: args.filter.clone(),
            balance: !args.no_balance,
            model: model_config.clone(),
            train: train_config.clone(),
        },
    )?;

    let model = PadModel::build(&model_config, train_config.seed)?;
    let log = train(&model, &manifest.dir, &records, &train_config)?;
    write_train_log(args.out.join("train_log.jsonl"), &log)?;
    let checkpoint = args.out.join("model.safetensors");
    save_model(&model, &checkpoint)?;
    println!(
        "trained {} on {} records for {} epochs, checkpoint {}",
        model_config.variant.as_str(),
        records.len(),
        log.len(),
        checkpoint.display()
    );
    Ok(())
}

fn run_score(args: ScoreArgs) -> Result<()> {
    let expected = args.variant.as_deref().map(Variant::parse).transpose()?;
    let model = load_model(&args.checkpoint, expected)?;
    let manifest = load_manifest(&args.manifest)?;
    let filter = FilterExpr::parse(&args.filter)?;
    let records: Vec<SampleRecord> = manifest
        .records
        .iter()
        .filter(|r| filter.matches(r))
        .cloned()
        .collect();
    let scores = crate::train::score(
        &model,
        &manifest.dir,
        &records,
        args.stride,
        args.batch_size,
    )?;
    write_scores(&args.out, &scores)?;
    println!("wrote {} scores to {}", scores.len(), args.out.display());
    Ok(())
}

fn load_scores_maybe_by_video(path: &Path, by_video: bool) -> Result<Vec<crate::scores::ScoreRecord>> {
    let scores = read_scores(path)?;
    Ok(if by_video {
        aggregate_by_video(&scores)
    } else {
        scores
    })
}

fn run_metrics(args: MetricsArgs) -> Result<()> {
    let scores = load_scores_maybe_by_video(&args.scores, args.by_video)?;
    let report = MetricsReport::compute(&scores, args.threshold, args.bpcer_target);
    print!("{}", metrics_text(&report));
    Ok(())
}

fn run_matrix(args: MatrixArgs) -> Result<()> {
    let spec = MatrixSpec::from_toml_file(&args.config)?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let cells = run_protocol_matrix(&spec, &base, args.threshold, args.bpcer_target);
    let text = matrix_text(&spec.name, &cells);
    match &args.out {
        Some(dir) => {
            write_provenance(dir, "matrix", None, &spec)?;
            std::fs::write(dir.join("matrix.csv"), matrix_csv(&cells))?;
            std::fs::write(dir.join("matrix.txt"), &text)?;
            println!("wrote {} cells to {}", cells.len(), dir.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_cam(args: CamArgs) -> Result<()> {
    let layer = TargetLayer::parse(&args.layer)?;
    let model = load_model(&args.checkpoint, None)?;
    let size = model.config().input_size;
    write_provenance(
        &args.out,
        "cam",
        None,
        std::collections::BTreeMap::from([
            ("checkpoint".to_string(), args.checkpoint.display().to_string()),
            ("layer".to_string(), layer.as_str().to_string()),
            ("opacity".to_string(), args.opacity.to_string()),
        ]),
    )?;
    for path in &args.image {
        let chw = crate::data::load_image_chw(path, size)?;
        let saliency = score_cam(&model, &chw, layer)?;
        let source = image::open(path).map_err(|e| Error::Scoring {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        let blended = overlay(&source, &saliency, args.opacity)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "image".into());
        let out_path = args.out.join(format!(
            "{stem}_{}_{}.png",
            model.config().variant.as_str(),
            layer.as_str()
        ));
        write_overlay(&out_path, &blended)?;
        println!("wrote {}", out_path.display());
    }
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let scores = load_scores_maybe_by_video(&args.scores, args.by_video)?;
    write_provenance(
        &args.out,
        "report",
        None,
        std::collections::BTreeMap::from([
            ("scores".to_string(), args.scores.display().to_string()),
            ("threshold".to_string(), args.threshold.to_string()),
            ("bpcer_target".to_string(), args.bpcer_target.to_string()),
            ("bins".to_string(), args.bins.to_string()),
        ]),
    )?;
    let report = MetricsReport::compute(&scores, args.threshold, args.bpcer_target);
    let text = metrics_text(&report);
    std::fs::write(args.out.join("metrics.txt"), &text)?;
    let hist = histogram(&scores, args.bins)?;
    std::fs::write(args.out.join("histogram.csv"), histogram_csv(&hist))?;
    print!("{text}");
    Ok(())
}
