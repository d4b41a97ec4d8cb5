//! Command-line front end. Each invocation writes its outputs and a
//! `manifest.json` with the resolved arguments into `--out`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::agreement;
use crate::eval::{self, Split, SplitSpec};
use crate::features::{self, CorpusConfig, GeneratorConfig, StreamMask, SyntheticCorpus};
use crate::models::{self, Checkpoint, Model, ModelKind, SvrConfig, TrainConfig};
use crate::numerics::{AdamConfig, Matrix};
use crate::ratings::{self, OriSeries, RatingSets};

#[derive(Debug, Parser, Serialize)]
#[command(name = "readiness", version, about = "Take-over readiness pipeline")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for outputs and the manifest.
    #[arg(long, global = true, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic corpus: features, ground truth, ratings, ORI, splits.
    Gen(GenArgs),
    /// Build lookup tables from the common set and normalize all ratings.
    Normalize(RatingsArgs),
    /// Intraclass correlations for the common and expansion sets.
    Icc(IccArgs),
    /// Per-frame readiness index from segment ratings.
    Ori(IccArgs),
    /// Train a model on a generated corpus.
    Train(TrainArgs),
    /// Score a checkpoint and write per-frame predictions.
    Eval(EvalArgs),
    /// Feature-stream ablation grid.
    Ablate(AblateArgs),
    /// Frame-wise correlation of every feature with readiness.
    Correlate(DataArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Normalize(_) => "normalize",
            Command::Icc(_) => "icc",
            Command::Ori(_) => "ori",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Correlate(_) => "correlate",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Total clips (split 172/32/56 proportionally). Defaults to 260.
    #[arg(long, value_parser = clap::value_parser!(u32).range(3..))]
    pub clips: Option<u32>,
    /// Raters in the panel. Defaults to 5.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub raters: Option<u32>,
    /// Generator configuration (JSON); flags override its corpus and panel.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RatingsArgs {
    /// Ratings CSV: clip_id,segment_index,rater_id,value
    #[arg(long)]
    pub ratings: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IccArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Normalize with lookup tables built from the common set.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// ORI built from the simulated ratings.
    Ori,
    /// Latent ground-truth readiness.
    GroundTruth,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Directory written by `gen`.
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = TargetKind::Ori)]
    pub target: TargetKind,
}

#[derive(Debug, Args, Serialize)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Train on every n-th window of each clip.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Score every n-th window during validation and testing.
    #[arg(long, default_value_t = 1)]
    pub eval_stride: usize,
}

impl HyperArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            seed,
            sample_stride: self.stride,
            eval_stride: self.eval_stride,
            svr: SvrConfig::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "keyframe")]
    pub model: ModelKind,
    /// Comma-separated streams: gaze, hand, hand_cam, hand_depth, pose, foot.
    #[arg(long, default_value = "gaze,hand,pose,foot")]
    pub streams: StreamMask,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Table2,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Grid::Table2)]
    pub grid: Grid,
    /// Models to train per stream set, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "keyframe")]
    pub model: Vec<ModelKind>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    args: &'a Cli,
    outputs: Vec<String>,
}

/// Collects output files of one run.
struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
    ) -> anyhow::Result<()> {
        let path = self.root.join(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_str(&mut self, name: &str, s: &str) -> anyhow::Result<()> {
        self.write_with(name, |w| {
            w.write_all(s.as_bytes())?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    fn finish(mut self, cli: &Cli) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool: "readiness",
            version: env!("CARGO_PKG_VERSION"),
            command: cli.command.name(),
            seed: cli.seed,
            args: cli,
            outputs: self.outputs.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        self.write_str("manifest.json", &json)
    }
}

/// Runs one subcommand.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut out = RunDir::create(&cli.out)?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli.seed, a, &mut out)?,
        Command::Normalize(a) => cmd_normalize(a, &mut out)?,
        Command::Icc(a) => cmd_icc(a, &mut out)?,
        Command::Ori(a) => cmd_ori(a, &mut out)?,
        Command::Train(a) => cmd_train(cli.seed, a, &mut out)?,
        Command::Eval(a) => cmd_eval(a, &mut out)?,
        Command::Ablate(a) => cmd_ablate(cli.seed, a, &mut out)?,
        Command::Correlate(a) => cmd_correlate(a, &mut out)?,
    }
    out.finish(cli)
}

fn cmd_gen(seed: u64, a: &GenArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => GeneratorConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GeneratorConfig::default(),
    };
    cfg.seed = seed;
    if let Some(n) = a.clips {
        cfg.corpus = CorpusConfig::with_total(n as usize)?;
    }
    if let Some(k) = a.raters {
        cfg.raters = features::rater_panel(k as usize)?;
    }
    let corpus = SyntheticCorpus::generate(&cfg)?;
    let clips: Vec<(String, &Matrix)> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), &c.features))
        .collect();
    out.write_with("features.jsonl", |w| features::write_features_jsonl(w, &clips))?;
    out.write_with("ground_truth.csv", |w| ratings::write_ori_csv(w, &corpus.ground_truth()))?;
    out.write_with("ratings.csv", |w| ratings::write_ratings_csv(w, &corpus.ratings))?;
    let ori = corpus.rated_ori()?;
    out.write_with("ori.csv", |w| ratings::write_ori_csv(w, &ori))?;
    out.write_str("splits.json", &corpus.splits.to_json()?)?;
    out.write_str("config.json", &serde_json::to_string_pretty(&cfg)?)?;
    println!(
        "generated {} clips, {} ratings from {} raters",
        corpus.clips.len(),
        corpus.ratings.len(),
        cfg.raters.len()
    );
    Ok(())
}

fn cmd_normalize(a: &RatingsArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let rs = ratings::load_ratings(&a.ratings)?;
    let sets = RatingSets::partition(&rs)?;
    let tables = ratings::build_lookup_tables(&RatingSets::select(&rs, &sets.common))?;
    let scored = tables.normalize_all(&rs)?;
    out.write_str("lookup_tables.json", &tables.to_json()?)?;
    out.write_with("normalized.csv", |w| ratings::write_scored_csv(w, &scored))?;
    println!(
        "normalized {} ratings with tables from {} common clips",
        scored.len(),
        sets.common.len()
    );
    Ok(())
}

fn cmd_icc(a: &IccArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let rs = ratings::load_ratings(&a.ratings)?;
    let rows = agreement::icc_table(&rs, a.normalized)?;
    let json = serde_json::to_string_pretty(&rows)?;
    out.write_str("icc.json", &json)?;
    println!("{json}");
    Ok(())
}

fn cmd_ori(a: &IccArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let rs = ratings::load_ratings(&a.ratings)?;
    let tables = if a.normalized {
        let sets = RatingSets::partition(&rs)?;
        Some(ratings::build_lookup_tables(&RatingSets::select(&rs, &sets.common))?)
    } else {
        None
    };
    let ori = ratings::build_ori(&rs, tables.as_ref())?;
    out.write_with("ori.csv", |w| ratings::write_ori_csv(w, &ori))?;
    println!("wrote readiness series for {} clips", ori.len());
    Ok(())
}

struct Corpus {
    clips: Vec<(String, Matrix)>,
    targets: Vec<OriSeries>,
    splits: SplitSpec,
}

fn load_corpus(a: &DataArgs) -> anyhow::Result<Corpus> {
    let clips = features::load_features(&a.data.join("features.jsonl"))
        .with_context(|| format!("loading features from {}", a.data.display()))?;
    let target_file = match a.target {
        TargetKind::Ori => "ori.csv",
        TargetKind::GroundTruth => "ground_truth.csv",
    };
    let targets = ratings::load_ori(&a.data.join(target_file))?;
    let splits = SplitSpec::load(&a.data.join("splits.json"))?;
    Ok(Corpus {
        clips,
        targets,
        splits,
    })
}

fn cmd_train(seed: u64, a: &TrainArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.data)?;
    let data = eval::build_datasets(&corpus.clips, &corpus.targets, &corpus.splits, a.streams)?;
    let cfg = a.hyper.config(seed);
    let outcome = models::train(a.model, &data.train, &data.val, &cfg)?;
    out.write_str("checkpoint.json", &outcome.model.to_checkpoint(a.streams, seed).to_json()?)?;
    out.write_with("training_log.csv", |w| models::write_training_log(w, &outcome.log))?;
    println!(
        "{} on {}: best validation MAE {:.4} at epoch {}",
        a.model, a.streams, outcome.best_val_mae, outcome.best_epoch
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    model: &'a str,
    streams: String,
    split: &'a str,
    mae: f64,
    smoothness: f64,
}

fn cmd_eval(a: &EvalArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let model = Model::from_checkpoint(&ck)?;
    let corpus = load_corpus(&a.data)?;
    let data = eval::build_datasets(&corpus.clips, &corpus.targets, &corpus.splits, ck.streams)?;
    let split: Split = a.split.into();
    let ds = data.get(split);
    if ds.is_empty() {
        bail!("{} split is empty", split.name());
    }
    let mae = eval::evaluate_mae(&model, ds, 1)?;
    let smooth = eval::dataset_smoothness(&model, ds)?;
    let preds = eval::prediction_rows(&model, ds)?;
    let row = MetricsRow {
        model: model.kind().name(),
        streams: ck.streams.to_string(),
        split: split.name(),
        mae,
        smoothness: smooth,
    };
    out.write_with("metrics.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.serialize(&row)?;
        wr.flush()?;
        Ok(())
    })?;
    out.write_with("predictions.csv", |w| eval::write_predictions_csv(w, &preds))?;
    println!("{} {} MAE: {mae:.4} (smoothness {smooth:.5})", model.kind(), split.name());
    Ok(())
}

fn cmd_ablate(seed: u64, a: &AblateArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.data)?;
    let Grid::Table2 = a.grid;
    let specs = eval::ablation_specs(&a.model);
    let rows = eval::run_ablation(
        &specs,
        &corpus.clips,
        &corpus.targets,
        &corpus.splits,
        &a.hyper.config(seed),
        a.hyper.eval_stride,
    )?;
    out.write_with("ablation.csv", |w| eval::write_ablation_csv(w, &rows))?;
    for r in &rows {
        println!(
            "gaze={} hand={} pose={} foot={} {:<8} MAE {:.4}",
            r.gaze, r.hand, r.pose, r.foot, r.model, r.mae
        );
    }
    Ok(())
}

fn cmd_correlate(a: &DataArgs, out: &mut RunDir) -> anyhow::Result<()> {
    let corpus = load_corpus(a)?;
    let (frames, ys) = eval::stack_frames(&corpus.clips, &corpus.targets)?;
    let rows = eval::correlate_features(&frames, &ys, &StreamMask::ALL.labels())?;
    out.write_with("correlations.csv", |w| eval::write_correlations_csv(w, &rows))?;
    println!("correlated {} features over {} frames", rows.len(), ys.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_zero_is_usage_error() {
        let e = Cli::try_parse_from(["readiness", "gen", "--clips", "0"]).unwrap_err();
        assert_eq!(e.kind(), clap::error::ErrorKind::ValueValidation);
    }

    #[test]
    fn parses_streams_and_models() {
        let cli = Cli::try_parse_from([
            "readiness", "train", "--model", "simple", "--streams", "gaze,hand", "--seed", "4",
        ])
        .unwrap();
        let Command::Train(t) = &cli.command else { panic!() };
        assert_eq!(t.model, ModelKind::Simple);
        assert_eq!(t.streams.dim(), 9 + 23);
        assert_eq!(cli.seed, 4);
        let cli = Cli::try_parse_from(["readiness", "ablate", "--model", "linear,keyframe"]).unwrap();
        let Command::Ablate(a) = &cli.command else { panic!() };
        assert_eq!(a.model, vec![ModelKind::Linear, ModelKind::Keyframe]);
        assert!(Cli::try_parse_from(["readiness", "train", "--streams", "wheel"]).is_err());
    }
}
