//! Command-line front end: `synth`, `fit`, `calibrate`, `score`, `eval`,
//! `train`. Exit codes: 0 success, 2 usage, 3 data/format, 4 numeric.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{probabilities, CalibrationParams, DEFAULT_BETA, DEFAULT_GAMMA};
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::io::container::{ModelContainer, Provenance, StoredModel};
use crate::io::manifest::{Dataset, FAR_OOD, NEAR_OOD, TEST_ID, TRAIN_ID, VAL_ID};
use crate::io::synth::{generate_synthetic, write_synthetic, SynthConfig};
use crate::io::{self, FileFormat};
use crate::metrics::{evaluate, render_table, EvalReport, InlierOutputs};
use crate::mixup::{train_reference_mlp, TrainConfig};
use crate::scorers::{
    default_principal_dim, fit_knn, fit_mds, fit_vim, scaled_logits, FittedScorer, ScorerKind,
    DEFAULT_K,
};
use crate::softmax::Temperature;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "oodkit",
    version,
    about = "Post-hoc OOD scoring, calibration and evaluation"
)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, env = "OODKIT_SEED")]
    seed: Option<u64>,

    /// Output matrix format; defaults to the output file's extension.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Npy,
    Csv,
}

impl From<FormatArg> for FileFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Npy => FileFormat::Npy,
            FormatArg::Csv => FileFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScorerArg {
    Vim,
    Mds,
    Knn,
    Msp,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Vim => ScorerKind::Vim,
            ScorerArg::Mds => ScorerKind::Mds,
            ScorerArg::Knn => ScorerKind::Knn,
            ScorerArg::Msp => ScorerKind::Msp,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic long-tailed benchmark.
    Synth(SynthArgs),
    /// Fit a scorer on the `train_id` split.
    Fit(FitArgs),
    /// Fit temperature scaling and class-quantity vectors into a model.
    Calibrate(CalibrateArgs),
    /// Score one split and write the scores.
    Score(ScoreArgs),
    /// Evaluate `test_id` against the near/far OOD splits.
    Eval(EvalArgs),
    /// Train the reference MLP on `train_id`.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_per_class: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.4)]
    tail_ratio: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(value_enum)]
    scorer: ScorerArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// ViM principal dimension (default: half the feature width, at most 256).
    #[arg(long)]
    dim: Option<usize>,
    /// KNN neighbour rank (default: min(50, n)).
    #[arg(long)]
    k: Option<usize>,
    /// KNN: compare raw rather than unit-normalized features.
    #[arg(long)]
    no_normalize: bool,
    /// MDS covariance ridge (default: 1e-6 · trace / d).
    #[arg(long)]
    ridge: Option<f64>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    s_base: f64,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// JSON report path.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON training config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

struct Ctx {
    seed: Option<u64>,
    format: Option<FileFormat>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let ctx = Ctx {
        seed: cli.seed,
        format: cli.format.map(Into::into),
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Train(a) => train(&ctx, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: ctx.seed.unwrap_or(DEFAULT_SEED),
        n_per_class: a.n_per_class,
        class_count: a.classes,
        dim: a.dim,
        tail_ratio: a.tail_ratio,
    };
    let data = generate_synthetic(&cfg)?;
    let manifest = write_synthetic(&data, &a.out, ctx.format.unwrap_or_default())?;
    ctx.say(format!("wrote {}", manifest.display()));
    Ok(())
}

fn provenance(ctx: &Ctx, command: String, files: &[PathBuf]) -> Result<Provenance> {
    Ok(Provenance {
        seed: ctx.seed.unwrap_or(DEFAULT_SEED),
        command,
        inputs: files
            .iter()
            .map(|p| Provenance::digest_file(p))
            .collect::<Result<_>>()?,
    })
}

fn fit(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let kind = ScorerKind::from(a.scorer);
    let data = Dataset::load(&a.manifest)?;
    let train = data.split(TRAIN_ID)?;
    let scorer = match kind {
        ScorerKind::Vim => FittedScorer::Vim(fit_vim(
            train,
            a.dim.unwrap_or_else(|| default_principal_dim(train.dim())),
        )?),
        ScorerKind::Mds => FittedScorer::Mds(fit_mds(train, a.ridge)?),
        ScorerKind::Knn => FittedScorer::Knn(fit_knn(
            train,
            a.k.unwrap_or(DEFAULT_K.min(train.len())),
            !a.no_normalize,
        )?),
        ScorerKind::Msp => {
            train.require_logits()?;
            FittedScorer::Msp
        }
    };
    let mut files = vec![a.manifest.clone()];
    files.extend(data.split_files(TRAIN_ID));
    let container = ModelContainer::new(
        StoredModel::Scorer(scorer),
        provenance(ctx, format!("fit {kind}"), &files)?,
    );
    container.save(&a.out)?;
    ctx.say(format!(
        "fitted {kind} on {} rows -> {}",
        train.len(),
        a.out.display()
    ));
    Ok(())
}

/// The split as the stored model sees it: MLP models replace the exported
/// logits with their own.
fn model_view(model: &StoredModel, split: &FeatureSet<f64>) -> Result<FeatureSet<f64>> {
    match model {
        StoredModel::Mlp(m) => split.with_logits(m.logits_batch(split.features())?),
        StoredModel::Scorer(_) => Ok(split.clone()),
    }
}

fn score_split(container: &ModelContainer, split: &FeatureSet<f64>) -> Result<Vec<f64>> {
    let temp: Option<Temperature<f64>> = container.calibration.as_ref().map(|c| c.temperature());
    let view = model_view(&container.model, split)?;
    let scores = match &container.model {
        StoredModel::Scorer(s) => s.score(&view, temp.as_ref())?,
        StoredModel::Mlp(_) => FittedScorer::Msp.score(&view, temp.as_ref())?,
    };
    Ok(scores.into_vec())
}

fn calibrate(ctx: &Ctx, a: CalibrateArgs) -> Result<()> {
    let data = Dataset::load(&a.manifest)?;
    let mut container = ModelContainer::load(&a.model)?;
    let train = model_view(&container.model, data.split(TRAIN_ID)?)?;
    let val = model_view(&container.model, data.split(VAL_ID)?)?;
    let params = CalibrationParams::fit(&train, &val, a.beta, a.s_base, a.gamma)?;
    if let StoredModel::Scorer(FittedScorer::Vim(vim)) = &mut container.model {
        vim.refit_alpha(&scaled_logits(&train, &params.temperature())?)?;
    }
    ctx.say(format!("T_opt = {:.4}", params.t_opt));
    container.calibration = Some(params);
    container.save(&a.model)?;
    Ok(())
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let container = ModelContainer::load(&a.model)?;
    let data = Dataset::load(&a.manifest)?;
    let scores = score_split(&container, data.split(&a.split)?)?;
    let format = ctx.format.unwrap_or_else(|| FileFormat::from_path(&a.out));
    match format {
        FileFormat::Npy => io::npy::save_npy_vector(&scores, &a.out)?,
        FileFormat::Csv => io::csv::save_csv_vector(&scores, &a.out)?,
    }
    ctx.say(format!(
        "scored {} rows of `{}` -> {}",
        scores.len(),
        a.split,
        a.out.display()
    ));
    Ok(())
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let container = ModelContainer::load(&a.model)?;
    let data = Dataset::load(&a.manifest)?;
    let id = data.split(TEST_ID)?;
    let ood_names: Vec<&str> = [NEAR_OOD, FAR_OOD]
        .into_iter()
        .filter(|n| data.get(n).is_some())
        .collect();
    if ood_names.is_empty() {
        return Err(Error::Manifest(format!(
            "manifest has neither `{NEAR_OOD}` nor `{FAR_OOD}`"
        )));
    }

    let id_scores = score_split(&container, id)?;
    let id_view = model_view(&container.model, id)?;
    let temp = container
        .calibration
        .as_ref()
        .map(|c| c.temperature())
        .unwrap_or_else(Temperature::one);
    let probs = match id_view.logits() {
        Some(z) if id_view.labels().is_some() => Some(probabilities(z, &temp)?),
        _ => None,
    };
    let inliers = match (id_view.logits(), id_view.labels()) {
        (Some(logits), Some(labels)) => Some(InlierOutputs {
            logits,
            labels,
            probabilities: probs.as_ref(),
        }),
        _ => None,
    };

    let name = container.model.kind_name();
    let mut reports = Vec::new();
    for split in ood_names {
        let ood_scores = score_split(&container, data.split(split)?)?;
        reports.push(evaluate(name, split, &id_scores, &ood_scores, inliers)?);
    }
    write_report(&reports, &a.report)?;
    ctx.say(render_table(&reports));
    Ok(())
}

fn write_report(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(reports).expect("reports serialize");
    text.push('\n');
    io::atomic_write(path, text.as_bytes())
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            let text = String::from_utf8(io::read_file(p)?)
                .map_err(|_| Error::Format(format!("{} is not UTF-8", p.display())))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let data = Dataset::load(&a.manifest)?;
    let train = data.split(TRAIN_ID)?;
    let (model, log) = train_reference_mlp(train, &config)?;
    if let Some(p) = &a.log {
        io::atomic_write(p, log.to_csv().as_bytes())?;
    }
    let mut files = vec![a.manifest.clone()];
    files.extend(a.config.iter().cloned());
    files.extend(data.split_files(TRAIN_ID));
    let mut prov = provenance(ctx, "train".into(), &files)?;
    prov.seed = config.seed;
    ModelContainer::new(StoredModel::Mlp(model), prov).save(&a.out)?;
    if let Some(last) = log.epochs.last() {
        ctx.say(format!(
            "epoch {}: loss {:.4}, accuracy {:.4}, ece {:.4}",
            last.epoch, last.loss, last.accuracy, last.ece
        ));
    }
    Ok(())
}
