//! Ranking metrics and the experiment harness.

mod metrics;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

pub use metrics::{accuracy, auc, average_precision, MetricsReport, Prediction};

use crate::corpus::{load_corpus, split, synth_corpus, Review};
use crate::discriminator::FeatureFlags;
use crate::error::{bail, Error, Result};
use crate::numeric::derive_seed;
use crate::trainer::{config_split, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    AblationScore,
    BehavioralCombos,
    RegularizationConvergence,
    SupervisionSweep,
    CrossDataset,
    GeneratedVsHumanOnly,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::AblationScore,
        ExperimentKind::BehavioralCombos,
        ExperimentKind::RegularizationConvergence,
        ExperimentKind::SupervisionSweep,
        ExperimentKind::CrossDataset,
        ExperimentKind::GeneratedVsHumanOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AblationScore => "ablation-score",
            ExperimentKind::BehavioralCombos => "behavioral-combos",
            ExperimentKind::RegularizationConvergence => "regularization-convergence",
            ExperimentKind::SupervisionSweep => "supervision-sweep",
            ExperimentKind::CrossDataset => "cross-dataset",
            ExperimentKind::GeneratedVsHumanOnly => "generated-vs-human-only",
        }
    }

    /// Grid columns of this kind's report, in order.
    pub fn param_columns(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::AblationScore => &["score_in_g", "score_in_d"],
            ExperimentKind::BehavioralCombos => &["features"],
            ExperimentKind::RegularizationConvergence => &["regularizer"],
            ExperimentKind::SupervisionSweep => &["train_ratio"],
            ExperimentKind::CrossDataset => &["train_dataset", "test_dataset"],
            ExperimentKind::GeneratedVsHumanOnly => &["dg_generated_negatives"],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOptions {
    /// Second corpus for the cross-dataset grid. Without it, a shifted
    /// synthetic corpus stands in.
    pub cross_data: Option<PathBuf>,
    /// AUC that counts as converged for `iterations_to_converge`.
    pub converge_auc: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            cross_data: None,
            converge_auc: 0.85,
        }
    }
}

/// Where a cell's training and test reviews come from.
#[derive(Clone, Debug, PartialEq)]
enum Source {
    Own,
    Cross { train: Corpus, test: Corpus },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Corpus {
    Base,
    Other,
}

/// One grid point for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: String,
    pub seed: u64,
    /// Grid values, aligned with the kind's parameter columns.
    pub params: Vec<String>,
    pub config: TrainConfig,
    source: Source,
}

fn dataset_name(path: Option<&Path>) -> String {
    path.and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".to_string())
}

/// Expands the base config over the kind's grid, once per seed in
/// `base.seeds`. Cells of one seed differ only in the grid variables.
pub fn expand(kind: ExperimentKind, base: &TrainConfig) -> Result<Vec<Cell>> {
    base.validate()?;
    let mut cells = Vec::new();
    for &seed in &base.seeds {
        let seeded = TrainConfig { seed, ..base.clone() };
        let mut push = |id: String, params: Vec<String>, config: TrainConfig, source: Source| {
            cells.push(Cell {
                id,
                seed,
                params,
                config,
                source,
            })
        };
        match kind {
            ExperimentKind::AblationScore => {
                for (g, d) in [(false, false), (true, false), (false, true), (true, true)] {
                    let cfg = TrainConfig {
                        score_in_g: g,
                        score_in_d: d,
                        ..seeded.clone()
                    };
                    let id = format!("G{}score/D{}score", if g { "+" } else { "-" }, if d { "+" } else { "-" });
                    push(id, vec![g.to_string(), d.to_string()], cfg, Source::Own);
                }
            }
            ExperimentKind::BehavioralCombos => {
                for list in ["WE", "WE+score", "WE+score+MNR", "WE+score+MNR+RL", "WE+score+MNR+RL+SE", "WE+score+MNR+RL+SE+SR"] {
                    let f = FeatureFlags::parse(list)?;
                    let cfg = TrainConfig {
                        score_in_d: f.score,
                        features: FeatureFlags { score: false, ..f },
                        ..seeded.clone()
                    };
                    push(list.to_string(), vec![list.to_string()], cfg, Source::Own);
                }
            }
            ExperimentKind::RegularizationConvergence => {
                for on in [false, true] {
                    let cfg = TrainConfig {
                        regularizer: on,
                        ..seeded.clone()
                    };
                    let id = if on { "regularized" } else { "unregularized" };
                    push(id.to_string(), vec![on.to_string()], cfg, Source::Own);
                }
            }
            ExperimentKind::SupervisionSweep => {
                for ratio in [0.7, 0.5, 0.3, 0.1] {
                    let cfg = TrainConfig {
                        train_ratio: ratio,
                        ..seeded.clone()
                    };
                    push(format!("train{ratio}"), vec![ratio.to_string()], cfg, Source::Own);
                }
            }
            ExperimentKind::CrossDataset => {
                for (a, b) in [
                    (Corpus::Base, Corpus::Base),
                    (Corpus::Base, Corpus::Other),
                    (Corpus::Other, Corpus::Other),
                    (Corpus::Other, Corpus::Base),
                ] {
                    let name = |c| if c == Corpus::Base { "base" } else { "other" };
                    push(
                        format!("{}->{}", name(a), name(b)),
                        vec![name(a).to_string(), name(b).to_string()],
                        seeded.clone(),
                        Source::Cross { train: a, test: b },
                    );
                }
            }
            ExperimentKind::GeneratedVsHumanOnly => {
                for on in [false, true] {
                    let cfg = TrainConfig {
                        dg_generated_negatives: on,
                        ..seeded.clone()
                    };
                    let id = if on { "human+generated" } else { "human-only" };
                    push(id.to_string(), vec![on.to_string()], cfg, Source::Own);
                }
            }
        }
    }
    Ok(cells)
}

/// One cell's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub cell: Cell,
    /// Metrics after the last iteration.
    pub last: MetricsReport,
    pub iterations_to_converge: Option<usize>,
    pub trace: Vec<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub dataset: String,
    pub rows: Vec<ExperimentRow>,
}

/// The "other" corpus of the cross-dataset grid.
fn other_corpus(config: &TrainConfig, options: &ExperimentOptions) -> Result<Vec<Review>> {
    match &options.cross_data {
        Some(path) => Ok(load_corpus(path, config.max_len)?.reviews),
        None => {
            // Same vocabulary, weaker score signal and some bot-style fraud.
            let spec = crate::corpus::SynthSpec {
                rho: config.synth_rho / 2.0,
                bot_fraction: 0.3,
                ..config.synth_spec()
            };
            synth_corpus(&spec, derive_seed(config.seed, &[0x0c05]))
        }
    }
}

fn run_cell(cell: &Cell, options: &ExperimentOptions) -> Result<ExperimentRow> {
    let cfg = &cell.config;
    let mut trainer = match &cell.source {
        Source::Own => Trainer::new(cfg.clone())?,
        Source::Cross { train, test } => {
            let base = config_split(cfg)?;
            let other = split(&other_corpus(cfg, options)?, cfg.train_ratio, derive_seed(cfg.seed, &[0x0c06]))?;
            let pick = |c: &Corpus| if *c == Corpus::Base { &base } else { &other };
            Trainer::with_split(cfg.clone(), &pick(train).0, &pick(test).1)?
        }
    };
    let trace = trainer.run(|_| Ok(()))?;
    let last = trace.last().cloned().expect("pretraining always reports");
    let iterations_to_converge = trace.iter().find(|r| r.auc >= options.converge_auc).map(|r| r.iteration);
    Ok(ExperimentRow {
        cell: cell.clone(),
        last,
        iterations_to_converge,
        trace,
    })
}

/// Runs every cell of the kind's grid. Cells are independent and may run
/// in parallel; rows come back in grid order.
pub fn run_experiment(kind: ExperimentKind, base: &TrainConfig, options: &ExperimentOptions) -> Result<ExperimentReport> {
    let cells = expand(kind, base)?;
    let rows = cells
        .par_iter()
        .map(|c| run_cell(c, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        kind,
        dataset: dataset_name(base.data.as_deref()),
        rows,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = crate::numeric::compensated_sum(v.iter().copied()) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss = crate::numeric::compensated_sum(v.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1.0)).sqrt())
}

impl ExperimentReport {
    pub fn header(&self) -> String {
        let mut cols = vec!["experiment", "dataset", "seed", "cell"];
        cols.extend(self.kind.param_columns());
        cols.extend(["ap", "auc", "accuracy", "iterations_to_converge"]);
        cols.join(",")
    }

    /// One row per cell and seed.
    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.kind.name(),
                self.dataset,
                r.cell.seed,
                r.cell.id,
                r.cell.params.join(","),
                r.last.ap,
                r.last.auc,
                r.last.accuracy,
                r.iterations_to_converge.map(|i| i.to_string()).unwrap_or_default()
            );
        }
        s
    }

    /// Per-iteration plot data: `cell,seed,iteration,metric,value`.
    pub fn traces_csv(&self) -> String {
        let mut s = String::from("cell,seed,iteration,metric,value\n");
        for r in &self.rows {
            for m in &r.trace {
                for (name, v) in [("ap", m.ap), ("auc", m.auc), ("accuracy", m.accuracy)] {
                    let _ = writeln!(s, "{},{},{},{},{}", r.cell.id, r.cell.seed, m.iteration, name, v);
                }
            }
        }
        s
    }

    /// Mean and sample standard deviation over seeds for each cell.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("experiment,dataset,cell,n_seeds,ap_mean,ap_std,auc_mean,auc_std,accuracy_mean,accuracy_std\n");
        let mut ids: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.cell.id.as_str()) {
                ids.push(&r.cell.id);
            }
        }
        for id in ids {
            let rows: Vec<&ExperimentRow> = self.rows.iter().filter(|r| r.cell.id == id).collect();
            let col = |f: fn(&MetricsReport) -> f64| mean_std(&rows.iter().map(|r| f(&r.last)).collect::<Vec<_>>());
            let (am, asd) = col(|m| m.ap);
            let (um, usd) = col(|m| m.auc);
            let (cm, csd) = col(|m| m.accuracy);
            let _ = writeln!(
                s,
                "{},{},{},{},{am},{asd},{um},{usd},{cm},{csd}",
                self.kind.name(),
                self.dataset,
                id,
                rows.len()
            );
        }
        s
    }

    /// Writes `<kind>.csv`, `<kind>_traces.csv` and `<kind>_summary.csv`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        if !dir.is_dir() {
            bail!(Argument, "`{}` is not a directory", dir.display());
        }
        let name = self.kind.name();
        let files = [
            (dir.join(format!("{name}.csv")), self.to_csv()),
            (dir.join(format!("{name}_traces.csv")), self.traces_csv()),
            (dir.join(format!("{name}_summary.csv")), self.summary_csv()),
        ];
        let mut out = Vec::new();
        for (path, text) in files {
            std::fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }
}
