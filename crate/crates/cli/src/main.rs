//! `fraudgan`: data preparation, adversarial training, generation,
//! detection and experiment sweeps.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fraudgan_core::corpus::{convert_csv, write_corpus, CsvLayout, Review, ReviewRecord};
use fraudgan_core::discriminator::FeatureFlags;
use fraudgan_core::eval::{
    accuracy, auc, average_precision, run_experiment, ExperimentKind, ExperimentOptions, MetricsReport, Prediction,
};
use fraudgan_core::numeric::Rng;
use fraudgan_core::trainer::{config_corpus, Models, TrainConfig, Trainer};

/// Field that `detect` writes and `evaluate` reads.
const PROB_FIELD: &str = "fraud_probability";
const TAG_GENERATE: u64 = 11;

#[derive(Parser, Debug)]
#[command(name = "fraudgan", version, about = "Score-conditioned adversarial fraud-review generation and detection")]
struct Cli {
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labeled corpus as JSONL.
    SynthData(SynthArgs),
    /// Pretrain and run adversarial training; writes metrics and a checkpoint.
    Train(TrainArgs),
    /// Sample reviews from a trained generator.
    Generate(GenerateArgs),
    /// Add D_g fraud probabilities to a JSONL file.
    Detect(DetectArgs),
    /// Compute AP, AUC and accuracy from a scored JSONL file.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid over the config's seeds.
    Experiment(ExperimentArgs),
    /// Convert an external CSV dataset to canonical JSONL.
    ConvertDataset(ConvertArgs),
}

/// Config file plus command-line overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the corpus used for training.
    #[arg(long)]
    supervision: Option<f64>,
    /// Regularizer weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Monte-Carlo rollouts per action.
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    no_regularizer: bool,
    #[arg(long)]
    no_score_in_g: bool,
    #[arg(long)]
    no_score_in_d: bool,
    /// D_g inputs, e.g. `WE+score+MNR+RL+SE+SR`; `WE` alone is text only.
    #[arg(long)]
    features: Option<String>,
    /// Training corpus (JSONL); the synthetic corpus is used otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.seeds = vec![seed];
        }
        if let Some(r) = self.supervision {
            cfg.train_ratio = r;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(n) = self.rollouts {
            cfg.rollouts = n;
        }
        if self.no_regularizer {
            cfg.regularizer = false;
        }
        if self.no_score_in_g {
            cfg.score_in_g = false;
        }
        if let Some(list) = &self.features {
            cfg.set("features", list)?;
        }
        if self.no_score_in_d {
            cfg.score_in_d = false;
            if cfg.features.score {
                cfg.features = FeatureFlags {
                    score: false,
                    ..cfg.features
                };
            }
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of reviews (overrides `synth_size`).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for `metrics.csv`, `config.cfg` and `checkpoint.sgan`.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Resume from this checkpoint instead of starting fresh. The
    /// checkpoint's own config is used; only `--iterations` applies.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Total outer iterations (overrides `outer_iters`; extends a resumed run).
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Score to condition on (1-5, or -1/1 for binary data). Every score
    /// when omitted.
    #[arg(long, allow_hyphen_values = true)]
    score: Option<i32>,
    /// Reviews per score.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSONL reviews to score.
    input: PathBuf,
    /// Output JSONL; must differ from the input.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// JSONL with `label` and `fraud_probability` fields.
    input: PathBuf,
    /// Probability at or above which a review is called fraud.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// One of: ablation-score, behavioral-combos, regularization-convergence,
    /// supervision-sweep, cross-dataset, generated-vs-human-only.
    kind: String,
    #[command(flatten)]
    config: ConfigArgs,
    /// Second corpus for the cross-dataset grid.
    #[arg(long)]
    cross_data: Option<PathBuf>,
    /// Output directory for the CSV tables.
    #[arg(long, default_value = "experiments")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// CSV input.
    input: PathBuf,
    /// `yelp` or `tripadvisor`.
    #[arg(long)]
    layout: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting the worker pool")?;
    match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
        Command::ConvertDataset(a) => convert_dataset(a),
    }
}

/// Refuses to write over an input file.
fn check_distinct(input: &Path, out: &Path) -> Result<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        bail!("output {} would overwrite the input", out.display());
    }
    Ok(())
}

fn synth_data(a: SynthArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    cfg.data = None;
    if let Some(n) = a.n {
        cfg.synth_size = n;
    }
    // The trainer's own corpus, so `--data` on this file reproduces a run
    // on the built-in synthetic data.
    let reviews = config_corpus(&cfg)?;
    write_corpus(&a.out, &reviews).with_context(|| format!("writing {}", a.out.display()))?;
    log::info!("wrote {} reviews to {}", reviews.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut trainer = match &a.checkpoint {
        Some(path) => {
            let mut t = Trainer::resume(path).with_context(|| format!("resuming from {}", path.display()))?;
            if let Some(n) = a.iterations {
                t.set_outer_iters(n);
            }
            t
        }
        None => {
            let mut cfg = a.config.resolve()?;
            if let Some(n) = a.iterations {
                cfg.outer_iters = n;
            }
            Trainer::new(cfg)?
        }
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("config.cfg"), trainer.config().to_text())?;
    let metrics_path = a.out.join("metrics.csv");
    let ckpt = a.out.join("checkpoint.sgan");
    // On resume, earlier rows are kept and new ones appended.
    let keep_existing = a.checkpoint.is_some() && metrics_path.exists();
    let mut metrics = if keep_existing {
        BufWriter::new(fs::OpenOptions::new().append(true).open(&metrics_path)?)
    } else {
        let mut w = BufWriter::new(File::create(&metrics_path)?);
        writeln!(w, "{}", MetricsReport::CSV_HEADER)?;
        w
    };
    if trainer.is_finished() {
        log::info!("checkpoint has already finished its schedule");
    }
    while !trainer.is_finished() {
        let report = if trainer.is_pretrained() {
            trainer.outer_iteration()?
        } else {
            trainer.pretrain()?
        };
        writeln!(metrics, "{}", report.csv_row())?;
        metrics.flush()?;
        trainer.save_checkpoint(&ckpt)?;
        log::info!(
            "iteration {:>3}: auc {:.4}  ap {:.4}  acc {:.4}",
            report.iteration,
            report.auc,
            report.ap,
            report.accuracy
        );
    }
    Ok(())
}

fn write_jsonl(out: Option<&Path>, reviews: &[Review]) -> Result<()> {
    match out {
        Some(path) => write_corpus(path, reviews).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            for r in reviews {
                serde_json::to_writer(&mut w, &ReviewRecord::from(r))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let models = Models::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let categories: Vec<usize> = match a.score {
        Some(s) => vec![models.scale.category(s)?],
        None => (0..models.scale.categories()).collect(),
    };
    let mut out = Vec::new();
    for c in categories {
        let mut rng = Rng::derive(a.seed, &[TAG_GENERATE, c as u64]);
        out.extend(models.generate(c, a.n, &mut rng)?);
    }
    write_jsonl(a.out.as_deref(), &out)
}

/// Reads JSONL as raw objects, keeping every field.
fn read_objects(path: &Path) -> Result<Vec<serde_json::Map<String, serde_json::Value>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed JSON", path.display(), i + 1))?;
        let serde_json::Value::Object(map) = v else {
            bail!("{}:{}: expected a JSON object", path.display(), i + 1);
        };
        out.push(map);
    }
    Ok(out)
}

fn detect(a: DetectArgs) -> Result<()> {
    check_distinct(&a.input, &a.out)?;
    let models = Models::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let mut objects = read_objects(&a.input)?;
    let mut reviews = Vec::with_capacity(objects.len());
    for (i, obj) in objects.iter().enumerate() {
        let mut rec = obj.clone();
        rec.remove(PROB_FIELD);
        let rec: ReviewRecord = serde_json::from_value(serde_json::Value::Object(rec))
            .with_context(|| format!("{}: record {}", a.input.display(), i + 1))?;
        reviews.push(
            rec.into_review(i + 1)
                .with_context(|| format!("{}: record {}", a.input.display(), i + 1))?,
        );
    }
    let probs = models.fraud_probabilities(&reviews)?;
    let mut w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    for (obj, p) in objects.iter_mut().zip(probs) {
        obj.insert(PROB_FIELD.to_string(), serde_json::json!(p));
        serde_json::to_writer(&mut w, obj)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut preds = Vec::new();
    for (i, obj) in read_objects(&a.input)?.iter().enumerate() {
        let Some(p) = obj.get(PROB_FIELD).and_then(|v| v.as_f64()) else {
            bail!("{}: record {} has no numeric `{PROB_FIELD}`", a.input.display(), i + 1);
        };
        let Some(label) = obj.get("label").and_then(|v| v.as_str()) else {
            bail!("{}: record {} has no `label`", a.input.display(), i + 1);
        };
        let label: fraudgan_core::corpus::Label = label.parse()?;
        preds.push(Prediction::new(p, label.is_fraud()));
    }
    let n_pos = preds.iter().filter(|p| p.fraud).count();
    let summary = serde_json::json!({
        "n": preds.len(),
        "n_pos": n_pos,
        "n_neg": preds.len() - n_pos,
        "threshold": a.threshold,
        "ap": average_precision(&preds)?,
        "auc": auc(&preds)?,
        "accuracy": accuracy(&preds, a.threshold)?,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    match &a.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let kind: ExperimentKind = a.kind.parse()?;
    let base = a.config.resolve()?;
    let options = ExperimentOptions {
        cross_data: a.cross_data.clone(),
        ..ExperimentOptions::default()
    };
    let report = run_experiment(kind, &base, &options)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for path in report.write(&a.out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn convert_dataset(a: ConvertArgs) -> Result<()> {
    check_distinct(&a.input, &a.out)?;
    let layout: CsvLayout = a.layout.parse()?;
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let records = convert_csv(file, layout)?;
    let mut w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    for r in &records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    log::info!("converted {} records", records.len());
    Ok(())
}
