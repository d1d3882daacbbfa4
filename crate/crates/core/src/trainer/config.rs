//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default; an
//! unknown key is an error. A `preset` line, if present, must come first and
//! resets every key to that preset's values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ScoreScale, SynthSpec};
use crate::discriminator::FeatureFlags;
use crate::error::{bail, Error, Result};

/// Named default sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small enough for one laptop core in minutes.
    Desk,
    /// Iteration counts and rates of the full-scale setup.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: Preset,
    pub seed: u64,
    /// Seeds for experiment sweeps.
    pub seeds: Vec<u64>,
    pub max_len: usize,
    pub scale: ScoreScale,
    pub train_ratio: f64,
    pub min_freq: usize,
    /// Regularizer weight.
    pub lambda: f64,
    /// Generator policy-gradient step size.
    pub gamma: f64,
    pub rollouts: usize,
    pub gen_inner: usize,
    pub disc_inner: usize,
    pub pretrain_gen_epochs: usize,
    pub pretrain_disc_epochs: usize,
    pub outer_iters: usize,
    pub gen_batch: usize,
    pub disc_batch: usize,
    /// Adam rate for generator MLE pretraining.
    pub gen_lr: f64,
    pub disc_lr: f64,
    /// Subtract the batch-mean reward before the policy step.
    pub baseline: bool,
    pub score_in_g: bool,
    pub score_in_d: bool,
    pub regularizer: bool,
    /// Train `D_f`'s auxiliary head.
    pub q_loss: bool,
    /// Use generated reviews as extra fraud examples for `D_g`.
    pub dg_generated_negatives: bool,
    /// Behavioral inputs of `D_g` (score is governed by `score_in_d`).
    pub features: FeatureFlags,
    pub gen_embed: usize,
    pub gen_hidden: usize,
    pub noise_dim: usize,
    pub score_dim: usize,
    pub disc_embed: usize,
    pub windows: Vec<usize>,
    pub filters: Vec<usize>,
    /// Pretrained word vectors; random when absent.
    pub embeddings: Option<PathBuf>,
    /// JSONL corpus; the synthetic corpus below when absent.
    pub data: Option<PathBuf>,
    pub synth_size: usize,
    pub synth_vocab: usize,
    pub synth_min_len: usize,
    pub synth_max_len: usize,
    pub synth_fraud: f64,
    pub synth_rho: f64,
    pub synth_bot: f64,
    /// Stop after this many iterations without a held-out AUC gain; 0 = off.
    pub early_stop_patience: usize,
}

/// Every key with a one-line description, in canonical order.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "desk | paper; resets all keys, must come first"),
    ("seed", "seed of every random stream"),
    ("seeds", "comma-separated seeds for experiment sweeps"),
    ("max_len", "maximum review length T in tokens"),
    ("scale", "score scale: five | binary"),
    ("train_ratio", "fraction of each class used for training"),
    ("min_freq", "minimum token count to enter the vocabulary"),
    ("lambda", "regularizer weight"),
    ("gamma", "generator policy-gradient step size"),
    ("rollouts", "Monte-Carlo completions per prefix"),
    ("gen_inner", "generator steps per outer iteration"),
    ("disc_inner", "discriminator epochs per outer iteration"),
    ("pretrain_gen_epochs", "generator MLE epochs"),
    ("pretrain_disc_epochs", "discriminator pretraining epochs"),
    ("outer_iters", "adversarial outer iterations"),
    ("gen_batch", "generated sequences per generator step"),
    ("disc_batch", "discriminator batch size (half per side)"),
    ("gen_lr", "Adam rate for generator pretraining"),
    ("disc_lr", "Adam rate for both discriminators"),
    ("baseline", "subtract the mean reward in each generator batch"),
    ("score_in_g", "condition the generator on the score"),
    ("score_in_d", "feed the score to D_g"),
    ("regularizer", "information-gain regularizer on"),
    ("q_loss", "train D_f's auxiliary score head"),
    ("dg_generated_negatives", "generated reviews count as fraud for D_g"),
    ("features", "D_g behavioral inputs, e.g. MNR+RL+SE+SR"),
    ("gen_embed", "generator embedding width"),
    ("gen_hidden", "generator LSTM width"),
    ("noise_dim", "generator noise width"),
    ("score_dim", "generator score-embedding width"),
    ("disc_embed", "discriminator word-vector width"),
    ("windows", "comma-separated convolution widths"),
    ("filters", "comma-separated filter counts, one per width"),
    ("embeddings", "word-vector text file; empty for random vectors"),
    ("data", "JSONL corpus; empty for the synthetic corpus"),
    ("synth_size", "synthetic corpus size"),
    ("synth_vocab", "synthetic vocabulary size"),
    ("synth_min_len", "shortest synthetic review"),
    ("synth_max_len", "longest synthetic review"),
    ("synth_fraud", "synthetic fraud fraction"),
    ("synth_rho", "synthetic score/sentiment correlation"),
    ("synth_bot", "fraction of synthetic fraud drawn bot-style"),
    ("early_stop_patience", "iterations without AUC gain before stopping; 0 = off"),
];

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!(Config, "`{key}`: expected a boolean, got `{value}`"),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            preset,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            max_len: 32,
            scale: ScoreScale::Five,
            train_ratio: 0.7,
            min_freq: 1,
            lambda: 1.0,
            gamma: 0.05,
            rollouts: 4,
            gen_inner: 5,
            disc_inner: 3,
            pretrain_gen_epochs: 20,
            pretrain_disc_epochs: 3,
            outer_iters: 30,
            gen_batch: 16,
            disc_batch: 64,
            gen_lr: 0.01,
            disc_lr: 1e-3,
            baseline: true,
            score_in_g: true,
            score_in_d: true,
            regularizer: true,
            q_loss: true,
            dg_generated_negatives: true,
            features: FeatureFlags::default(),
            gen_embed: 32,
            gen_hidden: 32,
            noise_dim: 16,
            score_dim: 8,
            disc_embed: 50,
            windows: vec![1, 2, 3],
            filters: vec![16, 16, 16],
            embeddings: None,
            data: None,
            synth_size: 2000,
            synth_vocab: 200,
            synth_min_len: 8,
            synth_max_len: 24,
            synth_fraud: 0.3,
            synth_rho: 0.8,
            synth_bot: 0.0,
            early_stop_patience: 0,
        };
        match preset {
            Preset::Desk => desk,
            Preset::Paper => Self {
                gamma: 1.0,
                rollouts: 16,
                pretrain_gen_epochs: 100,
                pretrain_disc_epochs: 50,
                outer_iters: 120,
                gen_batch: 50,
                disc_lr: 1e-4,
                baseline: false,
                max_len: 64,
                gen_embed: 64,
                gen_hidden: 64,
                windows: vec![1, 2, 3, 4, 5],
                filters: vec![100, 100, 100, 100, 100],
                ..desk
            },
        }
    }

    /// Parses a config file's text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut first = true;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(Config, "line {}: expected `key = value`", n + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            if key == "preset" {
                if !first {
                    bail!(Config, "line {}: `preset` must be the first key", n + 1);
                }
                cfg = Self::preset(value.parse()?);
            } else {
                cfg.set(key, value)
                    .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            }
            first = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "preset" => bail!(Config, "`preset` can only be set in a file's first line"),
            "seed" => self.seed = parse_num(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "max_len" => self.max_len = parse_num(key, value)?,
            "scale" => self.scale = value.parse()?,
            "train_ratio" => self.train_ratio = parse_num(key, value)?,
            "min_freq" => self.min_freq = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "rollouts" => self.rollouts = parse_num(key, value)?,
            "gen_inner" => self.gen_inner = parse_num(key, value)?,
            "disc_inner" => self.disc_inner = parse_num(key, value)?,
            "pretrain_gen_epochs" => self.pretrain_gen_epochs = parse_num(key, value)?,
            "pretrain_disc_epochs" => self.pretrain_disc_epochs = parse_num(key, value)?,
            "outer_iters" => self.outer_iters = parse_num(key, value)?,
            "gen_batch" => self.gen_batch = parse_num(key, value)?,
            "disc_batch" => self.disc_batch = parse_num(key, value)?,
            "gen_lr" => self.gen_lr = parse_num(key, value)?,
            "disc_lr" => self.disc_lr = parse_num(key, value)?,
            "baseline" => self.baseline = parse_bool(key, value)?,
            "score_in_g" => self.score_in_g = parse_bool(key, value)?,
            "score_in_d" => self.score_in_d = parse_bool(key, value)?,
            "regularizer" => self.regularizer = parse_bool(key, value)?,
            "q_loss" => self.q_loss = parse_bool(key, value)?,
            "dg_generated_negatives" => self.dg_generated_negatives = parse_bool(key, value)?,
            "features" => {
                let f = FeatureFlags::parse(value).map_err(|e| Error::Config(e.to_string()))?;
                self.features = FeatureFlags { score: false, ..f };
                if f.score {
                    self.score_in_d = true;
                }
            }
            "gen_embed" => self.gen_embed = parse_num(key, value)?,
            "gen_hidden" => self.gen_hidden = parse_num(key, value)?,
            "noise_dim" => self.noise_dim = parse_num(key, value)?,
            "score_dim" => self.score_dim = parse_num(key, value)?,
            "disc_embed" => self.disc_embed = parse_num(key, value)?,
            "windows" => self.windows = parse_list(key, value)?,
            "filters" => self.filters = parse_list(key, value)?,
            "embeddings" => self.embeddings = opt_path(value),
            "data" => self.data = opt_path(value),
            "synth_size" => self.synth_size = parse_num(key, value)?,
            "synth_vocab" => self.synth_vocab = parse_num(key, value)?,
            "synth_min_len" => self.synth_min_len = parse_num(key, value)?,
            "synth_max_len" => self.synth_max_len = parse_num(key, value)?,
            "synth_fraud" => self.synth_fraud = parse_num(key, value)?,
            "synth_rho" => self.synth_rho = parse_num(key, value)?,
            "synth_bot" => self.synth_bot = parse_num(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse_num(key, value)?,
            other => bail!(Config, "unknown key `{other}`"),
        }
        Ok(())
    }

    /// Text form of one key, as accepted by [`TrainConfig::set`].
    pub fn get(&self, key: &str) -> Result<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Ok(match key {
            "preset" => format!("{:?}", self.preset).to_lowercase(),
            "seed" => self.seed.to_string(),
            "seeds" => join(&self.seeds),
            "max_len" => self.max_len.to_string(),
            "scale" => format!("{:?}", self.scale).to_lowercase(),
            "train_ratio" => self.train_ratio.to_string(),
            "min_freq" => self.min_freq.to_string(),
            "lambda" => self.lambda.to_string(),
            "gamma" => self.gamma.to_string(),
            "rollouts" => self.rollouts.to_string(),
            "gen_inner" => self.gen_inner.to_string(),
            "disc_inner" => self.disc_inner.to_string(),
            "pretrain_gen_epochs" => self.pretrain_gen_epochs.to_string(),
            "pretrain_disc_epochs" => self.pretrain_disc_epochs.to_string(),
            "outer_iters" => self.outer_iters.to_string(),
            "gen_batch" => self.gen_batch.to_string(),
            "disc_batch" => self.disc_batch.to_string(),
            "gen_lr" => self.gen_lr.to_string(),
            "disc_lr" => self.disc_lr.to_string(),
            "baseline" => self.baseline.to_string(),
            "score_in_g" => self.score_in_g.to_string(),
            "score_in_d" => self.score_in_d.to_string(),
            "regularizer" => self.regularizer.to_string(),
            "q_loss" => self.q_loss.to_string(),
            "dg_generated_negatives" => self.dg_generated_negatives.to_string(),
            "features" => self.features.label(),
            "gen_embed" => self.gen_embed.to_string(),
            "gen_hidden" => self.gen_hidden.to_string(),
            "noise_dim" => self.noise_dim.to_string(),
            "score_dim" => self.score_dim.to_string(),
            "disc_embed" => self.disc_embed.to_string(),
            "windows" => join(&self.windows),
            "filters" => join(&self.filters),
            "embeddings" => path(&self.embeddings),
            "data" => path(&self.data),
            "synth_size" => self.synth_size.to_string(),
            "synth_vocab" => self.synth_vocab.to_string(),
            "synth_min_len" => self.synth_min_len.to_string(),
            "synth_max_len" => self.synth_max_len.to_string(),
            "synth_fraud" => self.synth_fraud.to_string(),
            "synth_rho" => self.synth_rho.to_string(),
            "synth_bot" => self.synth_bot.to_string(),
            "early_stop_patience" => self.early_stop_patience.to_string(),
            other => bail!(Config, "unknown key `{other}`"),
        })
    }

    /// Canonical text: every key in documented order. Parses back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, doc) in KEYS {
            let value = self.get(key).expect("every documented key is known");
            let _ = writeln!(s, "# {doc}\n{key} = {value}");
        }
        s
    }

    /// Keys whose values differ from `other`'s.
    pub fn diff(&self, other: &Self) -> Vec<&'static str> {
        KEYS.iter()
            .map(|(k, _)| *k)
            .filter(|k| self.get(k).ok() != other.get(k).ok())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_len", self.max_len),
            ("rollouts", self.rollouts),
            ("gen_inner", self.gen_inner),
            ("disc_inner", self.disc_inner),
            ("gen_batch", self.gen_batch),
            ("disc_batch", self.disc_batch),
            ("min_freq", self.min_freq),
            ("noise_dim", self.noise_dim),
            ("gen_embed", self.gen_embed),
            ("gen_hidden", self.gen_hidden),
            ("score_dim", self.score_dim),
            ("disc_embed", self.disc_embed),
        ];
        for (k, v) in counts {
            if v == 0 {
                bail!(Config, "`{k}` must be at least 1");
            }
        }
        if self.disc_batch < 2 {
            bail!(Config, "`disc_batch` must be at least 2");
        }
        if self.seeds.is_empty() {
            bail!(Config, "`seeds` must list at least one seed");
        }
        for (k, v) in [("lambda", self.lambda), ("gamma", self.gamma), ("gen_lr", self.gen_lr), ("disc_lr", self.disc_lr)] {
            if !(v.is_finite() && v >= 0.0) {
                bail!(Config, "`{k}` must be finite and >= 0");
            }
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            bail!(Config, "`train_ratio` must lie in (0, 1)");
        }
        if self.windows.is_empty() || self.windows.len() != self.filters.len() {
            bail!(Config, "`windows` and `filters` need the same nonzero length");
        }
        if self.windows.iter().any(|&u| u == 0 || u > 20 || u > self.max_len) {
            bail!(Config, "window widths must lie in 1..=min(20, max_len)");
        }
        if self.filters.contains(&0) {
            bail!(Config, "filter counts must be positive");
        }
        Ok(())
    }

    /// Synthetic corpus described by the `synth_*` keys.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            vocab_size: self.synth_vocab,
            min_len: self.synth_min_len,
            max_len: self.synth_max_len,
            size: self.synth_size,
            fraud_fraction: self.synth_fraud,
            rho: self.synth_rho,
            scale: self.scale,
            bot_fraction: self.synth_bot,
            ..SynthSpec::default()
        }
    }

    /// `D_g` inputs implied by the flags.
    pub fn dg_features(&self) -> FeatureFlags {
        FeatureFlags {
            score: self.score_in_d,
            ..self.features
        }
    }
}
