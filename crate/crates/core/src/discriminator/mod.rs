//! Convolutional text discriminators.
//!
//! Tokens are embedded with a fixed table, every configured window width
//! slides a bank of filters with ReLU over the sequence, each filter is
//! max-pooled over positions, and the pooled vector `f` (plus any enabled
//! extra inputs) feeds a softmax head `P` over two labels. `D_f` carries a
//! second head `Q` over the score categories.
//!
//! Label index 1 is the "positive" class in both models: fraud for `D_g`,
//! human-written for `D_f`.

mod run;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, TokenSeq};
use crate::error::{bail, Result};
use crate::numeric::{Direction, Optimizer, ParamSet, Rng, Tape, Tensor, Var};

pub use run::DiscRunner;

pub const GENUINE: usize = 0;
pub const FRAUD: usize = 1;
pub const BOT: usize = 0;
pub const HUMAN: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscKind {
    Dg,
    Df,
}

/// Extra inputs appended to the pooled vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub score: bool,
    pub mnr: bool,
    pub rl: bool,
    pub se: bool,
    pub sr: bool,
}

impl FeatureFlags {
    pub fn any_behavioral(&self) -> bool {
        self.mnr || self.rl || self.se || self.sr
    }

    pub fn dim(&self) -> usize {
        [self.score, self.mnr, self.rl, self.se, self.sr]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Parses a `+`/`,`-separated list such as `WE+score+MNR`. `WE` (the
    /// word embeddings) is always on and may be omitted.
    pub fn parse(list: &str) -> Result<Self> {
        let mut f = Self::default();
        for part in list.split(['+', ',']).map(str::trim).filter(|s| !s.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "we" => {}
                "score" => f.score = true,
                "mnr" => f.mnr = true,
                "rl" => f.rl = true,
                "se" => f.se = true,
                "sr" => f.sr = true,
                other => bail!(Argument, "unknown feature `{other}`"),
            }
        }
        Ok(f)
    }

    pub fn label(&self) -> String {
        let mut s = String::from("WE");
        for (on, name) in [
            (self.score, "score"),
            (self.mnr, "MNR"),
            (self.rl, "RL"),
            (self.se, "SE"),
            (self.sr, "SR"),
        ] {
            if on {
                s.push('+');
                s.push_str(name);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscConfig {
    pub kind: DiscKind,
    pub embed_dim: usize,
    pub windows: Vec<usize>,
    /// Filter count per window width.
    pub filters: Vec<usize>,
    pub categories: usize,
    pub max_len: usize,
    pub features: FeatureFlags,
}

impl DiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.windows.len() != self.filters.len() {
            bail!(Config, "need one filter count per window width");
        }
        for (&u, &f) in self.windows.iter().zip(&self.filters) {
            if !(1..=20).contains(&u) || u > self.max_len {
                bail!(Config, "window width {u} outside 1..=min(20, T={})", self.max_len);
            }
            if f == 0 {
                bail!(Config, "filter count must be positive");
            }
        }
        if self.embed_dim == 0 || self.categories < 2 {
            bail!(Config, "bad embedding dim or category count");
        }
        if self.kind == DiscKind::Df && self.features != FeatureFlags::default() {
            bail!(Config, "D_f takes no extra inputs");
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        self.filters.iter().sum()
    }
}

/// One discriminator input.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub seq: TokenSeq,
    /// Score category (the intended one for generated reviews).
    pub category: usize,
    /// Normalized `[mnr, rl, se, sr]`, required when any behavioral flag is on.
    pub features: Option<[f64; 4]>,
    pub label: usize,
}

/// Head outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscOutput {
    pub p: Vec<f64>,
    pub q: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub p_loss: f64,
    pub q_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    config: DiscConfig,
    params: ParamSet,
    /// Forces the taped convolution strategy (tests only).
    project_override: Option<bool>,
}

fn uniform_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_range(-s, s)).collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

impl Discriminator {
    pub fn new(config: DiscConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let e = config.embed_dim;
        let mut params = ParamSet::new();
        for (&u, &f) in config.windows.iter().zip(&config.filters) {
            params.insert(format!("conv{u}.w"), uniform_tensor(u * e, f, rng))?;
            params.insert(format!("conv{u}.b"), Tensor::zeros(vec![1, f]))?;
        }
        let pooled = config.pooled_dim();
        params.insert("p.w", uniform_tensor(pooled + config.features.dim(), 2, rng))?;
        params.insert("p.b", Tensor::zeros(vec![1, 2]))?;
        if config.kind == DiscKind::Df {
            params.insert("q.w", uniform_tensor(pooled, config.categories, rng))?;
            params.insert("q.b", Tensor::zeros(vec![1, config.categories]))?;
        }
        Ok(Self {
            config,
            params,
            project_override: None,
        })
    }

    pub fn from_params(config: DiscConfig, params: ParamSet) -> Result<Self> {
        let reference = Self::new(config.clone(), &mut Rng::new(0))?;
        if reference.params.names() != params.names() {
            bail!(Config, "discriminator parameter names do not match the config");
        }
        for ((name, a), (_, b)) in reference.params.iter().zip(params.iter()) {
            if a.shape() != b.shape() {
                bail!(Config, "discriminator parameter `{name}` has the wrong shape");
            }
        }
        Ok(Self {
            config,
            params,
            project_override: None,
        })
    }

    pub fn config(&self) -> &DiscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    #[cfg(test)]
    pub(crate) fn force_projection(&mut self, on: bool) {
        self.project_override = Some(on);
    }

    pub fn kind(&self) -> DiscKind {
        self.config.kind
    }

    /// Extra inputs for one example, in the order score, MNR, RL, SE, SR.
    pub(crate) fn extras(&self, category: usize, features: Option<&[f64; 4]>) -> Result<Vec<f64>> {
        let fl = &self.config.features;
        let mut v = Vec::with_capacity(fl.dim());
        if fl.score {
            if category >= self.config.categories {
                bail!(Config, "score category {category} outside 0..{}", self.config.categories);
            }
            v.push(category as f64 / (self.config.categories - 1) as f64);
        }
        if fl.any_behavioral() {
            let Some(b) = features else {
                bail!(Config, "behavioral features enabled but none supplied");
            };
            for (on, x) in [fl.mnr, fl.rl, fl.se, fl.sr].into_iter().zip(b) {
                if on {
                    v.push(*x);
                }
            }
        }
        Ok(v)
    }

    pub(crate) fn check_input(&self, emb: &EmbeddingTable, seq: &TokenSeq) -> Result<()> {
        if seq.max_len() != self.config.max_len {
            bail!(Config, "sequence length {} does not match T = {}", seq.max_len(), self.config.max_len);
        }
        if emb.dim() != self.config.embed_dim {
            bail!(Config, "embedding dim {} does not match {}", emb.dim(), self.config.embed_dim);
        }
        if let Some(&bad) = seq.ids().iter().find(|&&t| t >= emb.rows()) {
            bail!(Config, "token id {bad} has no embedding row");
        }
        Ok(())
    }

    /// Single forward pass.
    pub fn d_forward(
        &self,
        emb: &EmbeddingTable,
        seq: &TokenSeq,
        category: usize,
        features: Option<&[f64; 4]>,
    ) -> Result<DiscOutput> {
        DiscRunner::direct(self, emb)?.forward(seq, category, features)
    }

    /// Records the batched forward pass; returns log-softmax outputs of
    /// `P` and, for `D_f`, `Q`.
    fn taped_forward(&self, tape: &mut Tape, emb: &EmbeddingTable, batch: &[&Example]) -> Result<(Var, Option<Var>)> {
        let cfg = &self.config;
        let (t, e, b) = (cfg.max_len, cfg.embed_dim, batch.len());
        // With a small vocabulary it is cheaper to project every embedding
        // row through each kernel offset and gather, than to unfold windows.
        let project = self.project_override.unwrap_or(emb.rows() <= b * t);
        let mut x = Vec::with_capacity(if project { 0 } else { b * t * e });
        let mut extra = Vec::new();
        for ex in batch {
            self.check_input(emb, &ex.seq)?;
            if !project {
                for &id in ex.seq.ids() {
                    x.extend_from_slice(emb.row(id));
                }
            }
            extra.extend(self.extras(ex.category, ex.features.as_ref())?);
        }
        let x = if project { None } else { Some(tape.constant(b * t, e, x)) };
        let table = if project { Some(tape.constant(emb.rows(), e, emb.data().to_vec())) } else { None };
        let mut pooled = Vec::with_capacity(cfg.windows.len());
        for &u in &cfg.windows {
            let w = tape.param(&self.params, &format!("conv{u}.w"))?;
            let bias = tape.param(&self.params, &format!("conv{u}.b"))?;
            let positions = t - u + 1;
            let m = match (x, table) {
                (Some(x), _) => {
                    let win = tape.unfold(x, t, u);
                    tape.matmul(win, w)
                }
                (None, Some(table)) => {
                    let mut acc = None;
                    for j in 0..u {
                        let kj = tape.slice_rows(w, j * e, (j + 1) * e);
                        let proj = tape.matmul(table, kj);
                        let index: Vec<usize> = batch
                            .iter()
                            .flat_map(|ex| ex.seq.ids()[j..j + positions].iter().copied())
                            .collect();
                        let g = tape.gather_rows(proj, &index);
                        acc = Some(match acc {
                            None => g,
                            Some(a) => tape.add(a, g),
                        });
                    }
                    acc.expect("window width >= 1")
                }
                _ => unreachable!(),
            };
            let m = tape.add_row(m, bias);
            let m = tape.relu(m);
            pooled.push(tape.segment_max(m, positions));
        }
        let f = if pooled.len() == 1 { pooled[0] } else { tape.concat_cols(&pooled) };
        let fe = if cfg.features.dim() > 0 {
            let ex = tape.constant(b, cfg.features.dim(), extra);
            tape.concat_cols(&[f, ex])
        } else {
            f
        };
        let pw = tape.param(&self.params, "p.w")?;
        let pb = tape.param(&self.params, "p.b")?;
        let pl = tape.matmul(fe, pw);
        let pl = tape.add_row(pl, pb);
        let p = tape.log_softmax(pl);
        let q = if cfg.kind == DiscKind::Df {
            let qw = tape.param(&self.params, "q.w")?;
            let qb = tape.param(&self.params, "q.b")?;
            let ql = tape.matmul(f, qw);
            let ql = tape.add_row(ql, qb);
            Some(tape.log_softmax(ql))
        } else {
            None
        };
        Ok((p, q))
    }

    /// Accumulates gradients of `w_p * P-loss + w_q * Q-loss` into the
    /// parameter grads.
    ///
    /// The `P` loss is `-(mean_pos log P(label) + mean_neg log P(label))`
    /// when `balanced`, else the mean over all items; the `Q` loss is the
    /// mean cross-entropy of `Q` against each item's category.
    pub fn accumulate_loss_gradient(
        &mut self,
        emb: &EmbeddingTable,
        batch: &[&Example],
        n_pos: usize,
        balanced: bool,
        w_p: f64,
        w_q: f64,
    ) -> Result<StepStats> {
        if batch.is_empty() {
            bail!(Usage, "empty discriminator batch");
        }
        let mut tape = Tape::new();
        let (p, q) = self.taped_forward(&mut tape, emb, batch)?;
        let labels: Vec<usize> = batch.iter().map(|ex| ex.label).collect();
        if labels.iter().any(|&l| l > 1) {
            bail!(Argument, "labels must be 0 or 1");
        }
        let n = batch.len();
        let n_neg = n - n_pos;
        let pw: Vec<f64> = (0..n)
            .map(|i| {
                if balanced {
                    -1.0 / if i < n_pos { n_pos } else { n_neg } as f64
                } else {
                    -1.0 / n as f64
                }
            })
            .collect();
        let picked = tape.pick(p, &labels);
        let p_loss = tape.weighted_sum(picked, &pw);
        let pv = tape.value(p);
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| {
                let pred = usize::from(pv[2 * i + 1] > pv[2 * i]);
                pred == l
            })
            .count();
        let mut stats = StepStats {
            p_loss: tape.scalar(p_loss),
            accuracy: correct as f64 / n as f64,
            ..StepStats::default()
        };
        let mut total = tape.scale(p_loss, w_p);
        if let Some(q) = q {
            let cats: Vec<usize> = batch.iter().map(|ex| ex.category).collect();
            if cats.iter().any(|&c| c >= self.config.categories) {
                bail!(Argument, "score category outside 0..{}", self.config.categories);
            }
            let picked = tape.pick(q, &cats);
            let q_loss = tape.weighted_sum(picked, &vec![-1.0 / n as f64; n]);
            stats.q_loss = tape.scalar(q_loss);
            if w_q != 0.0 {
                let sq = tape.scale(q_loss, w_q);
                total = tape.add(total, sq);
            }
        }
        stats.loss = tape.scalar(total);
        tape.backward(total)?.accumulate_into(&mut self.params);
        Ok(stats)
    }

    fn labelled<'a>(pos: &'a [Example], neg: &'a [Example]) -> Result<Vec<&'a Example>> {
        if pos.is_empty() || neg.is_empty() {
            bail!(Usage, "both batches must be nonempty");
        }
        Ok(pos.iter().chain(neg).collect())
    }

    /// One step on `D_g`: ascent on `E_pos[log P(genuine)] + E_neg[log
    /// P(fraud)] + lambda * igm_term`. The regularizer value does not depend
    /// on `D_g`'s parameters, so it shifts the objective without adding
    /// gradient. Returns the loss (the negated objective).
    pub fn train_dg_step(
        &mut self,
        opt: &mut Optimizer,
        emb: &EmbeddingTable,
        pos: &[Example],
        neg: &[Example],
        igm_term: f64,
        lambda: f64,
    ) -> Result<StepStats> {
        if self.config.kind != DiscKind::Dg {
            bail!(Usage, "train_dg_step needs a D_g model");
        }
        if lambda < 0.0 || !lambda.is_finite() {
            bail!(Argument, "lambda must be finite and >= 0, got {lambda}");
        }
        if !igm_term.is_finite() {
            bail!(Numeric, "regularizer value is {igm_term}");
        }
        check_labels(pos, GENUINE, neg, FRAUD)?;
        let batch = Self::labelled(pos, neg)?;
        self.params.zero_grads();
        let mut stats = self.accumulate_loss_gradient(emb, &batch, pos.len(), true, 1.0, 0.0)?;
        stats.loss -= lambda * igm_term;
        opt.step(&mut self.params, Direction::Descend)?;
        Ok(stats)
    }

    /// One descent step on `D_f`: `P` cross-entropy over human (positive)
    /// vs bot (negative), plus, when `q_loss`, the `Q` cross-entropy against
    /// every item's score category.
    pub fn train_df_step(
        &mut self,
        opt: &mut Optimizer,
        emb: &EmbeddingTable,
        pos: &[Example],
        neg: &[Example],
        q_loss: bool,
    ) -> Result<StepStats> {
        if self.config.kind != DiscKind::Df {
            bail!(Usage, "train_df_step needs a D_f model");
        }
        check_labels(pos, HUMAN, neg, BOT)?;
        let batch = Self::labelled(pos, neg)?;
        self.params.zero_grads();
        let stats =
            self.accumulate_loss_gradient(emb, &batch, pos.len(), false, 1.0, if q_loss { 1.0 } else { 0.0 })?;
        opt.step(&mut self.params, Direction::Descend)?;
        Ok(stats)
    }
}

fn check_labels(pos: &[Example], pos_label: usize, neg: &[Example], neg_label: usize) -> Result<()> {
    if pos.iter().any(|e| e.label != pos_label) || neg.iter().any(|e| e.label != neg_label) {
        bail!(Argument, "batch labels do not match their side");
    }
    Ok(())
}
