//! Command-line driver. Stage subcommands run the pipeline up to and
//! including the named stage; `run` goes all the way to the report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use statepipe_core::exec;
use statepipe_core::features::read_feature_file;
use statepipe_core::labels::read_ground_truth;
use statepipe_core::metrics::{
    changeit_precision, evaluate_states, PhaseGroundTruth, PhaseScores, Pooling,
};
use statepipe_core::pipeline::{run_pipeline, PipelineConfig, RunSummary, Stage};
use statepipe_core::synth::{generate_synthetic, SyntheticSpec};
use statepipe_core::types::StateVocabulary;

#[derive(Parser)]
#[command(name = "statepipe", version, about = "Narration-driven object-state labeling pipeline")]
struct Cli {
    /// Worker threads for parallel sections (0 keeps the library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run all parallel sections sequentially.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a self-contained synthetic fixture tree.
    Synth(SynthArgs),
    /// Curate transcripts against the vocabulary and verb lexicon.
    Curate(StageArgs),
    /// Run the prompt chain over curated transcripts.
    Label(StageArgs),
    /// Ground chain verdicts onto frames.
    Align(StageArgs),
    /// Train the teacher models on aligned pseudo-labels.
    Train(StageArgs),
    /// Refine teachers into students by ensemble self-training.
    Selftrain(StageArgs),
    /// Score predictions: through the pipeline with --config, or standalone
    /// from saved prediction files.
    Eval(EvalArgs),
    /// Causal precision@1 over saved three-phase predictions.
    EvalChangeit(ChangeItArgs),
    /// Run every stage and write the evaluation report.
    Run(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Re-run every stage even when inputs are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the fixture tree.
    #[arg(long)]
    out: PathBuf,
    /// Spec file (JSON); omitted fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Fraction of cells hidden behind Ambiguous verdicts.
    #[arg(long)]
    mask_rate: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Pipeline configuration; runs stages through eval.
    #[arg(long, conflicts_with_all = ["pred", "gt", "vocab", "out"])]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    /// Directory of prediction .fsq files (standalone mode).
    #[arg(long, requires = "gt", requires = "vocab", requires = "out")]
    pred: Option<PathBuf>,
    /// Directory of ground-truth label files.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// State vocabulary (for the object and state names).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Where to write the report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pooling: per-category or per-video.
    #[arg(long, default_value = "per-category")]
    pooling: String,
}

#[derive(Args)]
struct ChangeItArgs {
    /// Directory of .fsq files with three columns: initial, action, end.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of {video}.json phase masks.
    #[arg(long)]
    gt: PathBuf,
    /// Where to write the report JSON.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        exec::configure_threads(cli.threads);
    }
    if cli.deterministic {
        exec::set_parallel(false);
    }
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Curate(args) => stage(args, Stage::Curate),
        Command::Label(args) => stage(args, Stage::Label),
        Command::Align(args) => stage(args, Stage::Align),
        Command::Train(args) => stage(args, Stage::Train),
        Command::Selftrain(args) => stage(args, Stage::SelfTrain),
        Command::Eval(args) => eval(args),
        Command::EvalChangeit(args) => eval_changeit(args),
        Command::Run(args) => stage(args, Stage::Eval),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => SyntheticSpec::read(path)
            .with_context(|| format!("reading spec {}", path.display()))?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(videos) = args.videos {
        spec.videos = videos;
    }
    if let Some(frames) = args.frames {
        spec.frames = frames;
    }
    if let Some(mask_rate) = args.mask_rate {
        spec.mask_rate = mask_rate;
    }
    let world = generate_synthetic(&spec, &args.out)?;
    println!(
        "synth: {} videos x {} frames x {} states -> {}",
        world.video_ids.len(),
        spec.frames,
        spec.num_states,
        args.out.display()
    );
    Ok(())
}

fn stage(args: StageArgs, until: Stage) -> Result<()> {
    let cfg = PipelineConfig::from_file(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let summary = run_pipeline(&cfg, until, args.force)?;
    print_summary(&summary);
    if until == Stage::Eval {
        print_report(&cfg.workdir.join("report.json"))?;
    }
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    for name in &summary.skipped {
        println!("stage {name}: fresh, skipped");
    }
    for name in &summary.executed {
        println!("stage {name}: ran");
    }
}

fn print_report(path: &Path) -> Result<()> {
    let value: serde_json::Value = serde_json::from_slice(
        &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    let grab = |key: &str| value.get(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    println!(
        "report: mean F1 {:.4}, mAP {:.4} ({})",
        grab("mean_f1"),
        grab("map"),
        path.display()
    );
    Ok(())
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .{ext} files in {}", dir.display());
    }
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn eval(args: EvalArgs) -> Result<()> {
    if let Some(config) = args.config {
        return stage(
            StageArgs {
                config,
                force: args.force,
            },
            Stage::Eval,
        );
    }
    let (Some(pred), Some(gt), Some(vocab_path), Some(out)) =
        (args.pred, args.gt, args.vocab, args.out)
    else {
        bail!("eval needs either --config or all of --pred, --gt, --vocab, --out");
    };
    let pooling = match args.pooling.as_str() {
        "per-category" => Pooling::PerCategory,
        "per-video" => Pooling::PerVideo,
        other => bail!("unknown pooling {other:?}; expected per-category or per-video"),
    };
    let vocab: StateVocabulary = serde_json::from_slice(
        &fs::read(&vocab_path).with_context(|| format!("reading {}", vocab_path.display()))?,
    )?;
    vocab.validate()?;
    let state_names: Vec<String> = vocab.states.iter().map(|s| s.name.clone()).collect();
    let mut per_video = Vec::new();
    for path in sorted_files(&pred, "fsq")? {
        let preds = read_feature_file(&path)?;
        let truth = read_ground_truth(&gt.join(format!("{}.json", stem_of(&path))))?;
        if truth.num_frames != preds.num_frames || truth.num_states != preds.feat_dim {
            bail!(
                "{}: prediction is {} x {} but ground truth is {} x {}",
                stem_of(&path),
                preds.num_frames,
                preds.feat_dim,
                truth.num_frames,
                truth.num_states
            );
        }
        let scores: Vec<f64> = preds.data.iter().map(|&p| p as f64).collect();
        per_video.push((scores, truth.values));
    }
    let report = evaluate_states(
        &vocab.object_primary_name,
        &state_names,
        &per_video,
        state_names.len(),
        pooling,
    )?;
    write_json(&out, &report)?;
    println!(
        "report: mean F1 {:.4}, mAP {:.4} over {} videos ({})",
        report.mean_f1,
        report.map,
        report.videos_evaluated,
        out.display()
    );
    Ok(())
}

/// Phase masks for one video, frame-indexed.
#[derive(Deserialize)]
struct PhaseFile {
    initial: Vec<bool>,
    action: Vec<bool>,
    end: Vec<bool>,
}

fn eval_changeit(args: ChangeItArgs) -> Result<()> {
    let mut videos = Vec::new();
    for path in sorted_files(&args.pred, "fsq")? {
        let preds = read_feature_file(&path)?;
        if preds.feat_dim != 3 {
            bail!(
                "{}: causal predictions need 3 columns (initial, action, end), got {}",
                stem_of(&path),
                preds.feat_dim
            );
        }
        let col = |c: usize| -> Vec<f64> {
            (0..preds.num_frames).map(|t| preds.frame(t)[c] as f64).collect()
        };
        let scores = PhaseScores {
            initial: col(0),
            action: col(1),
            end: col(2),
        };
        let gt_path = args.gt.join(format!("{}.json", stem_of(&path)));
        let phases: PhaseFile = serde_json::from_slice(
            &fs::read(&gt_path).with_context(|| format!("reading {}", gt_path.display()))?,
        )?;
        for (name, mask) in [
            ("initial", &phases.initial),
            ("action", &phases.action),
            ("end", &phases.end),
        ] {
            if mask.len() != preds.num_frames {
                bail!(
                    "{}: {name} mask covers {} frames, predictions cover {}",
                    stem_of(&path),
                    mask.len(),
                    preds.num_frames
                );
            }
        }
        videos.push((
            scores,
            PhaseGroundTruth {
                initial: phases.initial,
                action: phases.action,
                end: phases.end,
            },
        ));
    }
    let report = changeit_precision(&videos)?;
    write_json(&args.out, &report)?;
    println!(
        "causal precision@1 over {} videos: initial {:.4}, action {:.4}, end {:.4}, state {:.4}",
        report.videos,
        report.initial_precision,
        report.action_precision,
        report.end_precision,
        report.state_precision
    );
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
