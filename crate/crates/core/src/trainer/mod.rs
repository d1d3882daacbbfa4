//! The adversarial training loop: generator MLE pretraining, discriminator
//! pretraining, then outer iterations of rollout-rewarded policy steps and
//! discriminator epochs, with held-out evaluation after each iteration.
//!
//! Every random draw comes from a stream derived from the run seed and the
//! position in the schedule, and all model state is rounded to `f32` at the
//! end of each stage, so a run resumed from a checkpoint continues exactly
//! as the uninterrupted run would have.

mod archive;
mod config;
mod reward;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use archive::{Archive, MAGIC, VERSION};
pub use config::{Preset, TrainConfig, KEYS};
pub use reward::RewardContext;

use crate::corpus::{
    behavioral_vectors, build_vocab, decode, encode, load_corpus, load_embeddings, split, synth_corpus,
    EmbeddingTable, FeatureNormalizer, Label, Review, ScoreScale, TokenSeq, Vocab,
};
use crate::discriminator::{
    DiscConfig, DiscKind, DiscRunner, Discriminator, Example, FeatureFlags, BOT, FRAUD, GENUINE, HUMAN,
};
use crate::error::{bail, Error, Result};
use crate::eval::{accuracy, auc, average_precision, MetricsReport, Prediction};
use crate::generator::{Generator, GeneratorConfig, Reward, SampledSequence};
use crate::igm::igm_regularizer_estimate;
use crate::numeric::{compensated_sum, derive_seed, Optimizer, ParamSet, Rng, Tensor};

const TAG_SYNTH: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_PRETRAIN: u64 = 4;
const TAG_ITER: u64 = 5;

/// Reviews a config points at: its JSONL file, or its synthetic corpus.
pub fn config_corpus(config: &TrainConfig) -> Result<Vec<Review>> {
    match &config.data {
        Some(path) => Ok(load_corpus(path, config.max_len)?.reviews),
        None => synth_corpus(&config.synth_spec(), derive_seed(config.seed, &[TAG_SYNTH])),
    }
}

/// The config's stratified train/test split.
pub fn config_split(config: &TrainConfig) -> Result<(Vec<Review>, Vec<Review>)> {
    let corpus = config_corpus(config)?;
    split(&corpus, config.train_ratio, derive_seed(config.seed, &[TAG_SPLIT]))
}

/// An encoded review.
#[derive(Clone, Debug)]
struct Item {
    seq: TokenSeq,
    category: usize,
    features: [f64; 4],
    fraud: bool,
}

impl Item {
    fn example(&self, label: usize) -> Example {
        Example {
            seq: self.seq.clone(),
            category: self.category,
            features: Some(self.features),
            label,
        }
    }
}

/// Everything needed to generate and detect, without training data.
#[derive(Clone, Debug)]
pub struct Models {
    pub config: TrainConfig,
    pub scale: ScoreScale,
    pub vocab: Vocab,
    pub emb: EmbeddingTable,
    pub normalizer: FeatureNormalizer,
    pub gen: Generator,
    pub dg: Discriminator,
    pub df: Discriminator,
}

impl Models {
    fn encode_items(&self, reviews: &[Review], truncate: bool) -> Result<Vec<Item>> {
        let vecs = behavioral_vectors(reviews, self.scale);
        reviews
            .iter()
            .zip(vecs)
            .map(|(r, b)| {
                let seq = if truncate && r.tokens.len() >= self.config.max_len {
                    let ids: Vec<usize> = r.tokens[..self.config.max_len - 1]
                        .iter()
                        .map(|t| self.vocab.id(t))
                        .collect();
                    TokenSeq::padded(&ids, self.config.max_len)?
                } else {
                    encode(r, &self.vocab, self.config.max_len)?
                };
                let category = self
                    .scale
                    .category(r.score)
                    .map_err(|_| Error::Dataset(format!("review `{}` has score {} outside the {:?} scale", r.review_id, r.score, self.scale)))?;
                Ok(Item {
                    seq,
                    category,
                    features: self.normalizer.apply(&b),
                    fraud: r.label.is_fraud(),
                })
            })
            .collect()
    }

    /// `D_g`'s fraud probability for each review. Behavioral features are
    /// computed over `reviews` as a whole; reviews longer than the model's
    /// sequence length are truncated.
    pub fn fraud_probabilities(&self, reviews: &[Review]) -> Result<Vec<f64>> {
        let items = self.encode_items(reviews, true)?;
        let runner = DiscRunner::new(&self.dg, &self.emb)?;
        items
            .iter()
            .map(|it| runner.positive_prob(&it.seq, it.category, Some(&it.features)))
            .collect()
    }

    /// `n` generated reviews for score category `category`.
    pub fn generate(&self, category: usize, n: usize, rng: &mut Rng) -> Result<Vec<Review>> {
        let score = self.scale.score(category)?;
        let samples = self.gen.sample(category, n, rng)?;
        Ok(samples
            .iter()
            .enumerate()
            .map(|(i, s)| Review {
                review_id: format!("gen-{score}-{i}"),
                item_id: None,
                user_id: None,
                date: None,
                tokens: decode(&s.seq, &self.vocab),
                score,
                label: Label::FraudBot,
            })
            .collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(read_checkpoint(path)?.0)
    }
}

fn quantized(emb: EmbeddingTable) -> Result<EmbeddingTable> {
    let data = emb.data().iter().map(|&x| x as f32 as f64).collect();
    EmbeddingTable::new(emb.rows(), emb.dim(), data)
}

/// Summary of one generator phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GenPhase {
    /// Mean discriminator reward per action, before the regularizer and
    /// baseline.
    pub reward: f64,
    /// Mean regularizer estimate over the phase's batches.
    pub igm: f64,
}

/// Resumable progress counters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Progress {
    pretrained: bool,
    /// Completed outer iterations.
    iteration: usize,
    best_auc_bits: u64,
    since_best: usize,
    stopped: bool,
}

pub struct Trainer {
    models: Models,
    gen_opt: Optimizer,
    dg_opt: Optimizer,
    df_opt: Optimizer,
    genuine: Vec<Item>,
    fraud: Vec<Item>,
    test: Vec<Item>,
    progress: Progress,
}

impl Trainer {
    /// Trainer over the config's own corpus and split.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let (train, test) = config_split(&config)?;
        Self::with_split(config, &train, &test)
    }

    /// Trainer over an explicit split. The vocabulary comes from `train`.
    pub fn with_split(config: TrainConfig, train: &[Review], test: &[Review]) -> Result<Self> {
        config.validate()?;
        let scale = config.scale;
        let c = scale.categories();
        let vocab = build_vocab(train, config.min_freq)?;
        let mut rng = Rng::derive(config.seed, &[TAG_INIT]);
        let emb = match &config.embeddings {
            Some(path) => load_embeddings(path, &vocab, config.disc_embed, &mut rng)?,
            None => EmbeddingTable::random(vocab.len(), config.disc_embed, &mut rng)?,
        };
        let emb = quantized(emb)?;
        let train_vecs = behavioral_vectors(train, scale);
        let normalizer = FeatureNormalizer::fit(&train_vecs);
        let gen_config = GeneratorConfig {
            vocab_size: vocab.len(),
            embed_dim: config.gen_embed,
            hidden_dim: config.gen_hidden,
            noise_dim: config.noise_dim,
            score_dim: config.score_dim,
            categories: c,
            max_len: config.max_len,
            score_in_g: config.score_in_g,
        };
        let disc = |kind, features| DiscConfig {
            kind,
            embed_dim: config.disc_embed,
            windows: config.windows.clone(),
            filters: config.filters.clone(),
            categories: c,
            max_len: config.max_len,
            features,
        };
        let mut gen = Generator::new(gen_config, &mut rng)?;
        let mut dg = Discriminator::new(disc(DiscKind::Dg, config.dg_features()), &mut rng)?;
        let mut df = Discriminator::new(disc(DiscKind::Df, FeatureFlags::default()), &mut rng)?;
        for p in [gen.params_mut(), dg.params_mut(), df.params_mut()] {
            p.quantize_f32();
        }
        let models = Models {
            scale,
            vocab,
            emb,
            normalizer,
            gen,
            dg,
            df,
            config,
        };
        // Behavioral features see the whole corpus: a user's activity is a
        // property of the data set, not of the split.
        let mut all = train.to_vec();
        all.extend_from_slice(test);
        let items = models.encode_items(&all, false)?;
        let (train_items, test) = items.split_at(train.len());
        let (fraud, genuine): (Vec<Item>, Vec<Item>) = train_items.iter().cloned().partition(|it| it.fraud);
        if fraud.is_empty() {
            bail!(Dataset, "training split has no fraud reviews");
        }
        if genuine.is_empty() {
            bail!(Dataset, "training split has no genuine reviews");
        }
        let cfg = &models.config;
        Ok(Self {
            gen_opt: Optimizer::adam(cfg.gen_lr),
            dg_opt: Optimizer::adam(cfg.disc_lr),
            df_opt: Optimizer::adam(cfg.disc_lr),
            models,
            genuine,
            fraud,
            test: test.to_vec(),
            progress: Progress {
                pretrained: false,
                iteration: 0,
                best_auc_bits: f64::NEG_INFINITY.to_bits(),
                since_best: 0,
                stopped: false,
            },
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.models.config
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn into_models(self) -> Models {
        self.models
    }

    /// Completed outer iterations.
    pub fn iteration(&self) -> usize {
        self.progress.iteration
    }

    pub fn is_pretrained(&self) -> bool {
        self.progress.pretrained
    }

    /// True once the schedule (or the plateau rule) has ended the run.
    pub fn is_finished(&self) -> bool {
        self.progress.pretrained && (self.progress.stopped || self.progress.iteration >= self.config().outer_iters)
    }

    /// Changes the number of outer iterations, e.g. to extend a resumed
    /// run. Every other setting stays as trained.
    pub fn set_outer_iters(&mut self, n: usize) {
        self.models.config.outer_iters = n;
    }

    fn seed(&self) -> u64 {
        self.models.config.seed
    }

    fn quantize_all(&mut self) {
        let m = &mut self.models;
        for p in [m.gen.params_mut(), m.dg.params_mut(), m.df.params_mut()] {
            p.quantize_f32();
        }
        for o in [&mut self.gen_opt, &mut self.dg_opt, &mut self.df_opt] {
            o.quantize_f32();
        }
    }

    fn generate_items(&self, n: usize, rng: &mut Rng) -> Result<Vec<Item>> {
        let m = &self.models;
        let ctx = RewardContext::new(&m.df, &m.dg, &m.emb, m.normalizer, m.scale)?;
        let sampler = m.gen.sampler();
        let c = m.scale.categories();
        (0..n)
            .map(|_| {
                let s = sampler.sample_one(rng.below(c), rng);
                Ok(Item {
                    features: ctx.generated_features(&s.seq, s.category)?,
                    seq: s.seq,
                    category: s.category,
                    fraud: true,
                })
            })
            .collect()
    }

    /// Balanced batches: each side cycles through a fresh permutation of
    /// itself; an epoch is enough batches to cover the larger side once.
    fn balanced_batches(&self, pos: usize, neg: usize, rng: &mut Rng) -> Vec<(Vec<usize>, Vec<usize>)> {
        let half = self.config().disc_batch / 2;
        let mut p: Vec<usize> = (0..pos).collect();
        let mut n: Vec<usize> = (0..neg).collect();
        rng.shuffle(&mut p);
        rng.shuffle(&mut n);
        let batches = pos.max(neg).div_ceil(half);
        (0..batches)
            .map(|b| {
                let take = |v: &[usize]| (0..half).map(|k| v[(b * half + k) % v.len()]).collect::<Vec<_>>();
                (take(&p), take(&n))
            })
            .collect()
    }

    /// One `D_f` epoch: human fraud (positive) against generated (negative).
    fn df_epoch(&mut self, generated: &[Item], rng: &mut Rng) -> Result<f64> {
        let batches = self.balanced_batches(self.fraud.len(), generated.len(), rng);
        let q_loss = self.config().q_loss;
        let mut losses = Vec::with_capacity(batches.len());
        for (pi, ni) in batches {
            let pos: Vec<Example> = pi.iter().map(|&i| self.fraud[i].example(HUMAN)).collect();
            let neg: Vec<Example> = ni.iter().map(|&i| generated[i].example(BOT)).collect();
            let m = &mut self.models;
            losses.push(m.df.train_df_step(&mut self.df_opt, &m.emb, &pos, &neg, q_loss)?.loss);
        }
        Ok(compensated_sum(losses.iter().copied()) / losses.len() as f64)
    }

    /// One `D_g` epoch: genuine (positive side of the batch) against fraud,
    /// optionally including generated reviews.
    fn dg_epoch(&mut self, generated: &[Item], igm: f64, rng: &mut Rng) -> Result<f64> {
        let mut negatives: Vec<&Item> = self.fraud.iter().collect();
        if self.config().dg_generated_negatives {
            negatives.extend(generated);
        }
        let batches = self.balanced_batches(self.genuine.len(), negatives.len(), rng);
        let lambda = if self.config().regularizer { self.config().lambda } else { 0.0 };
        let mut losses = Vec::with_capacity(batches.len());
        for (pi, ni) in batches {
            let pos: Vec<Example> = pi.iter().map(|&i| self.genuine[i].example(GENUINE)).collect();
            let neg: Vec<Example> = ni.iter().map(|&i| negatives[i].example(FRAUD)).collect();
            let m = &mut self.models;
            losses.push(m.dg.train_dg_step(&mut self.dg_opt, &m.emb, &pos, &neg, igm, lambda)?.loss);
        }
        Ok(compensated_sum(losses.iter().copied()) / losses.len() as f64)
    }

    fn fraud_training_pairs(&self) -> Vec<(TokenSeq, usize)> {
        self.fraud.iter().map(|it| (it.seq.clone(), it.category)).collect()
    }

    /// Pretrains all three models and reports held-out metrics as
    /// iteration 0.
    pub fn pretrain(&mut self) -> Result<MetricsReport> {
        if self.progress.pretrained {
            bail!(Usage, "models are already pretrained");
        }
        let mut rng = Rng::derive(self.seed(), &[TAG_PRETRAIN]);
        let data = self.fraud_training_pairs();
        let cfg = self.config().clone();
        if cfg.pretrain_gen_epochs > 0 {
            self.models
                .gen
                .mle_pretrain(&data, cfg.pretrain_gen_epochs, cfg.gen_batch, &mut self.gen_opt, &mut rng)?;
        }
        self.quantize_all();
        let generated = self.generate_items(self.fraud.len(), &mut rng)?;
        let (mut df_loss, mut dg_loss) = (0.0, 0.0);
        for _ in 0..cfg.pretrain_disc_epochs {
            df_loss = self.df_epoch(&generated, &mut rng)?;
        }
        for _ in 0..cfg.pretrain_disc_epochs {
            dg_loss = self.dg_epoch(&generated, 0.0, &mut rng)?;
        }
        self.quantize_all();
        self.progress.pretrained = true;
        let report = self.report(GenPhase::default(), dg_loss, df_loss)?;
        self.track(&report);
        Ok(report)
    }

    /// Per-action rewards for a batch of samples, each from its own stream.
    fn batch_rewards(&self, samples: &[SampledSequence], base_seed: u64) -> Result<Vec<Vec<f64>>> {
        let m = &self.models;
        let ctx = RewardContext::new(&m.df, &m.dg, &m.emb, m.normalizer, m.scale)?;
        let sampler = m.gen.sampler();
        let n = self.config().rollouts;
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| ctx.step_rewards(&sampler, s, n, &mut Rng::derive(base_seed, &[i as u64])))
            .collect()
    }

    /// One policy-gradient step; returns (mean discriminator reward per
    /// action, regularizer estimate).
    fn generator_step(&mut self, iteration: usize, step: usize) -> Result<(f64, f64)> {
        let cfg = self.config().clone();
        let k = iteration as u64;
        let mut rng = Rng::derive(self.seed(), &[TAG_ITER, k, 0, step as u64]);
        let est = {
            let m = &self.models;
            let df = DiscRunner::new(&m.df, &m.emb)?;
            igm_regularizer_estimate(&m.gen, &df, cfg.gen_batch, &mut rng)?
        };
        let mut rewards = self.batch_rewards(&est.samples, derive_seed(self.seed(), &[TAG_ITER, k, 1, step as u64]))?;
        let disc_mean = compensated_sum(rewards.iter().flatten().copied()) / rewards.iter().map(Vec::len).sum::<usize>() as f64;
        if cfg.regularizer {
            for (r, bonus) in rewards.iter_mut().zip(est.rewards(cfg.lambda, self.models.scale.categories())) {
                for x in r.iter_mut() {
                    *x += bonus;
                }
            }
        }
        if cfg.baseline {
            let n: usize = rewards.iter().map(Vec::len).sum();
            let mean = compensated_sum(rewards.iter().flatten().copied()) / n as f64;
            for x in rewards.iter_mut().flatten() {
                *x -= mean;
            }
        }
        let value = est.value;
        let batch: Vec<(SampledSequence, Reward)> = est.samples.into_iter().zip(rewards.into_iter().map(Reward::PerStep)).collect();
        self.models.gen.policy_update(&batch, cfg.gamma)?;
        Ok((disc_mean, value))
    }

    /// One outer iteration: generator phase, fresh generated negatives,
    /// discriminator epochs, evaluation.
    pub fn outer_iteration(&mut self) -> Result<MetricsReport> {
        if !self.progress.pretrained {
            bail!(Usage, "pretrain before adversarial iterations");
        }
        let cfg = self.config().clone();
        let k = self.progress.iteration as u64 + 1;
        let mut phase = GenPhase::default();
        let (mut rewards, mut igms) = (Vec::new(), Vec::new());
        for step in 0..cfg.gen_inner {
            let (r, v) = self.generator_step(k as usize, step)?;
            rewards.push(r);
            igms.push(v);
        }
        self.quantize_all();
        phase.reward = compensated_sum(rewards.iter().copied()) / rewards.len() as f64;
        if cfg.regularizer {
            phase.igm = compensated_sum(igms.iter().copied()) / igms.len() as f64;
        }
        let mut rng = Rng::derive(self.seed(), &[TAG_ITER, k, 2]);
        let generated = self.generate_items(self.fraud.len(), &mut rng)?;
        let (mut df_loss, mut dg_loss) = (0.0, 0.0);
        for _ in 0..cfg.disc_inner {
            df_loss = self.df_epoch(&generated, &mut rng)?;
            dg_loss = self.dg_epoch(&generated, phase.igm, &mut rng)?;
        }
        self.quantize_all();
        self.progress.iteration += 1;
        let report = self.report(phase, dg_loss, df_loss)?;
        self.track(&report);
        Ok(report)
    }

    fn track(&mut self, report: &MetricsReport) {
        let p = &mut self.progress;
        if report.auc > f64::from_bits(p.best_auc_bits) {
            p.best_auc_bits = report.auc.to_bits();
            p.since_best = 0;
        } else {
            p.since_best += 1;
        }
        let patience = self.models.config.early_stop_patience;
        if patience > 0 && p.since_best >= patience {
            p.stopped = true;
        }
    }

    /// Held-out `D_g` fraud probabilities with their labels.
    pub fn test_predictions(&self) -> Result<Vec<Prediction>> {
        let m = &self.models;
        let runner = DiscRunner::new(&m.dg, &m.emb)?;
        self.test
            .iter()
            .map(|it| Ok(Prediction::new(runner.positive_prob(&it.seq, it.category, Some(&it.features))?, it.fraud)))
            .collect()
    }

    fn report(&self, phase: GenPhase, dg_loss: f64, df_loss: f64) -> Result<MetricsReport> {
        let preds = self.test_predictions()?;
        let cfg = self.config();
        let n_pos = preds.iter().filter(|p| p.fraud).count();
        Ok(MetricsReport {
            iteration: self.progress.iteration,
            ap: average_precision(&preds)?,
            auc: auc(&preds)?,
            accuracy: accuracy(&preds, 0.5)?,
            n_pos,
            n_neg: preds.len() - n_pos,
            seed: cfg.seed,
            supervision: cfg.train_ratio,
            score_in_g: cfg.score_in_g,
            score_in_d: cfg.score_in_d,
            regularizer: cfg.regularizer,
            features: cfg.dg_features().label(),
            gen_reward: phase.reward,
            igm: phase.igm,
            dg_loss,
            df_loss,
        })
    }

    /// Runs the rest of the schedule, handing each report to `sink` as it
    /// is produced.
    pub fn run(&mut self, mut sink: impl FnMut(&MetricsReport) -> Result<()>) -> Result<Vec<MetricsReport>> {
        let mut out = Vec::new();
        if !self.progress.pretrained {
            let r = self.pretrain()?;
            sink(&r)?;
            out.push(r);
        }
        while !self.is_finished() {
            let r = self.outer_iteration()?;
            log::info!("iteration {}: auc {:.4} ap {:.4}", r.iteration, r.auc, r.ap);
            sink(&r)?;
            out.push(r);
        }
        Ok(out)
    }

    /// Saves models, optimizer state and progress.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let m = &self.models;
        let mut tensors = Vec::new();
        let mut push_set = |prefix: &str, set: &ParamSet| {
            for (name, t) in set.iter() {
                tensors.push((format!("{prefix}/{name}"), t.clone()));
            }
        };
        push_set("gen", m.gen.params());
        push_set("dg", m.dg.params());
        push_set("df", m.df.params());
        let mut steps = BTreeMap::new();
        for (key, opt) in [("gen", &self.gen_opt), ("dg", &self.dg_opt), ("df", &self.df_opt)] {
            let (step, mo, vo) = opt.state();
            steps.insert(key.to_string(), step);
            for (slot, (a, b)) in mo.iter().zip(vo).enumerate() {
                tensors.push((format!("opt.{key}.m/{slot}"), Tensor::new(vec![a.len()], a.clone())?));
                tensors.push((format!("opt.{key}.v/{slot}"), Tensor::new(vec![b.len()], b.clone())?));
            }
        }
        tensors.push(("embeddings".to_string(), m.emb.to_tensor()));
        let meta = Meta {
            config: m.config.clone(),
            scale: m.scale,
            vocab: m.vocab.clone(),
            normalizer: m.normalizer,
            gen: m.gen.config().clone(),
            dg: m.dg.config().clone(),
            df: m.df.config().clone(),
            progress: self.progress,
            optimizer_steps: steps,
        };
        Archive {
            tensors,
            meta: serde_json::to_string(&meta)?,
        }
        .save(path)
    }

    /// Resumes from a checkpoint over the config's own corpus.
    pub fn resume(path: &Path) -> Result<Self> {
        let (models, _, _) = read_checkpoint(path)?;
        let (train, test) = config_split(&models.config)?;
        Self::resume_with_split(path, &train, &test)
    }

    /// Resumes from a checkpoint over an explicit split, which must be the
    /// one the checkpoint was trained on.
    pub fn resume_with_split(path: &Path, train: &[Review], test: &[Review]) -> Result<Self> {
        let (models, meta, mut opt_tensors) = read_checkpoint(path)?;
        let mut t = Self::with_split(models.config.clone(), train, test)?;
        if t.models.vocab != models.vocab {
            bail!(Dataset, "corpus does not match the checkpoint's vocabulary");
        }
        for (key, opt) in [("gen", &mut t.gen_opt), ("dg", &mut t.dg_opt), ("df", &mut t.df_opt)] {
            let step = meta.optimizer_steps.get(key).copied().unwrap_or(0);
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for slot in 0.. {
                let (Some(a), Some(b)) = (
                    opt_tensors.remove(&format!("opt.{key}.m/{slot}")),
                    opt_tensors.remove(&format!("opt.{key}.v/{slot}")),
                ) else {
                    break;
                };
                m.push(a.into_data());
                v.push(b.into_data());
            }
            opt.restore(step, m, v);
        }
        t.models = models;
        t.progress = meta.progress;
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    scale: ScoreScale,
    vocab: Vocab,
    normalizer: FeatureNormalizer,
    gen: GeneratorConfig,
    dg: DiscConfig,
    df: DiscConfig,
    progress: Progress,
    optimizer_steps: BTreeMap<String, u64>,
}

/// Models, metadata and the remaining (optimizer) tensors by name.
fn read_checkpoint(path: &Path) -> Result<(Models, Meta, BTreeMap<String, Tensor>)> {
    let archive = Archive::load(path)?;
    let meta: Meta =
        serde_json::from_str(&archive.meta).map_err(|e| Error::CheckpointCorrupt(format!("metadata: {e}")))?;
    let mut sets: BTreeMap<&str, ParamSet> = ["gen", "dg", "df"].into_iter().map(|k| (k, ParamSet::new())).collect();
    let mut rest = BTreeMap::new();
    let mut emb = None;
    for (name, t) in archive.tensors {
        match name.split_once('/') {
            Some((prefix @ ("gen" | "dg" | "df"), local)) => {
                sets.get_mut(prefix).expect("known prefix").insert(local, t)?;
            }
            _ if name == "embeddings" => emb = Some(t),
            _ => {
                rest.insert(name, t);
            }
        }
    }
    let Some(emb) = emb else {
        bail!(CheckpointCorrupt, "no embedding table");
    };
    let corrupt = |e: Error| Error::CheckpointCorrupt(e.to_string());
    let emb = EmbeddingTable::new(emb.rows(), emb.cols(), emb.into_data()).map_err(corrupt)?;
    let gen = Generator::from_params(meta.gen.clone(), sets.remove("gen").expect("present")).map_err(corrupt)?;
    let dg = Discriminator::from_params(meta.dg.clone(), sets.remove("dg").expect("present")).map_err(corrupt)?;
    let df = Discriminator::from_params(meta.df.clone(), sets.remove("df").expect("present")).map_err(corrupt)?;
    let models = Models {
        config: meta.config.clone(),
        scale: meta.scale,
        vocab: meta.vocab.clone(),
        emb,
        normalizer: meta.normalizer,
        gen,
        dg,
        df,
    };
    Ok((models, meta, rest))
}

/// Pretrains and runs the full schedule of `config` on its own corpus.
pub fn adversarial_train(config: TrainConfig) -> Result<(Trainer, Vec<MetricsReport>)> {
    let mut t = Trainer::new(config)?;
    let reports = t.run(|_| Ok(()))?;
    Ok((t, reports))
}
