//! Score-conditioned LSTM generator.
//!
//! The initial cell and hidden state come from `tanh([z, e_c] W + b)`, where
//! `z` is Gaussian noise drawn per sequence and `e_c` a learned embedding of
//! the score category. Each step feeds the previous token (the `END`
//! embedding at the first step) through an LSTM cell and a softmax over the
//! vocabulary. Generation stops after `END` or `max_len` tokens.

mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSeq, END_ID};
use crate::error::{bail, Result};
use crate::numeric::{affine_row, sigmoid, softmax_in_place, ParamSet, Rng, Tensor};

pub use train::{Reward, TeacherItem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub noise_dim: usize,
    pub score_dim: usize,
    /// Number of score categories `C`.
    pub categories: usize,
    /// Maximum sequence length `T`.
    pub max_len: usize,
    /// When off, the score embedding input is replaced by zeros.
    pub score_in_g: bool,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            bail!(Config, "generator vocabulary needs END, UNK and one token");
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("noise_dim", self.noise_dim),
            ("score_dim", self.score_dim),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                bail!(Config, "generator {name} must be positive");
            }
        }
        if self.categories < 2 {
            bail!(Config, "need at least two score categories");
        }
        Ok(())
    }
}

/// One generated review.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSequence {
    pub seq: TokenSeq,
    pub category: usize,
    pub noise: Vec<f64>,
    /// Log-probability of every action, including the terminating `END`;
    /// the length is `seq.n_actions()`.
    pub stepwise_logprob: Vec<f64>,
}

impl SampledSequence {
    pub fn log_prob(&self) -> f64 {
        self.stepwise_logprob.iter().sum()
    }

    /// Action sequence: content tokens, then `END` unless the sequence is full.
    pub fn actions(&self) -> Vec<usize> {
        actions_of(&self.seq)
    }
}

pub(crate) fn actions_of(seq: &TokenSeq) -> Vec<usize> {
    let mut a = seq.content().to_vec();
    if a.len() < seq.max_len() {
        a.push(END_ID);
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
}

fn uniform_tensor(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform_range(-scale, scale)).collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    uniform_tensor(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
}

impl Generator {
    pub fn new(config: GeneratorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let GeneratorConfig {
            vocab_size: v,
            embed_dim: e,
            hidden_dim: h,
            noise_dim: z,
            score_dim: s,
            categories: c,
            ..
        } = config;
        let mut params = ParamSet::new();
        params.insert("emb", uniform_tensor(v, e, 0.1, rng))?;
        params.insert("score_emb", uniform_tensor(c, s, 0.5, rng))?;
        params.insert("init.w", xavier(z + s, 2 * h, rng))?;
        params.insert("init.b", Tensor::zeros(vec![1, 2 * h]))?;
        params.insert("lstm.wx", xavier(e, 4 * h, rng))?;
        params.insert("lstm.wh", xavier(h, 4 * h, rng))?;
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].fill(1.0);
        params.insert("lstm.b", Tensor::matrix(1, 4 * h, b)?)?;
        params.insert("out.w", xavier(h, v, rng))?;
        params.insert("out.b", Tensor::zeros(vec![1, v]))?;
        Ok(Self { config, params })
    }

    /// Rebuilds a generator from stored parameters, checking every shape.
    pub fn from_params(config: GeneratorConfig, params: ParamSet) -> Result<Self> {
        let reference = Self::new(config.clone(), &mut Rng::new(0))?;
        if reference.params.names() != params.names() {
            bail!(Config, "generator parameter names do not match the config");
        }
        for ((name, a), (_, b)) in reference.params.iter().zip(params.iter()) {
            if a.shape() != b.shape() {
                bail!(Config, "generator parameter `{name}` has shape {:?}, expected {:?}", b.shape(), a.shape());
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_category(&self, category: usize) -> Result<()> {
        if category >= self.config.categories {
            bail!(
                Argument,
                "score category {category} outside 0..{}",
                self.config.categories
            );
        }
        Ok(())
    }

    fn draw_noise(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.config.noise_dim).map(|_| rng.normal()).collect()
    }

    /// Precomputed tables for fast tape-free stepping.
    pub fn sampler(&self) -> Sampler<'_> {
        Sampler::new(self)
    }

    /// Draws `n` sequences conditioned on `category`.
    pub fn sample(&self, category: usize, n: usize, rng: &mut Rng) -> Result<Vec<SampledSequence>> {
        self.check_category(category)?;
        if n == 0 {
            bail!(Argument, "sample count must be at least 1");
        }
        let s = self.sampler();
        Ok((0..n).map(|_| s.sample_one(category, rng)).collect())
    }

    /// Log-probability of each action of `seq` under `category` and `noise`.
    pub fn log_prob(&self, seq: &TokenSeq, category: usize, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_category(category)?;
        self.check_seq(seq)?;
        self.check_noise(noise)?;
        Ok(self.sampler().score_actions(&actions_of(seq), category, noise))
    }

    /// Next-token distribution after `prefix` (which holds no `END`).
    pub fn next_token_probs(&self, prefix: &[usize], category: usize, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_category(category)?;
        self.check_noise(noise)?;
        self.check_prefix(prefix)?;
        let s = self.sampler();
        let mut st = s.init_state(noise, category);
        let mut prev = END_ID;
        for &tok in prefix {
            s.advance(&mut st, prev);
            prev = tok;
        }
        s.advance(&mut st, prev);
        let mut p = vec![0.0; self.config.vocab_size];
        s.logits(&st, &mut p);
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Completes `prefix` `n` times with the generator's own policy.
    ///
    /// Without `noise`, every completion draws fresh noise first, consuming
    /// the random stream exactly as [`Generator::sample`] does.
    pub fn rollout_complete(
        &self,
        prefix: &[usize],
        category: usize,
        noise: Option<&[f64]>,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Vec<TokenSeq>> {
        self.check_category(category)?;
        if prefix.len() >= self.config.max_len {
            bail!(
                Usage,
                "prefix of length {} leaves nothing to roll out (T = {})",
                prefix.len(),
                self.config.max_len
            );
        }
        self.check_prefix(prefix)?;
        if let Some(z) = noise {
            self.check_noise(z)?;
        }
        let s = self.sampler();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z = match noise {
                Some(z) => z.to_vec(),
                None => self.draw_noise(rng),
            };
            let mut st = s.init_state(&z, category);
            let mut prev = END_ID;
            for &tok in prefix {
                s.advance(&mut st, prev);
                prev = tok;
            }
            out.push(s.continue_from(st, prefix.to_vec(), prev, rng));
        }
        Ok(out)
    }

    fn check_noise(&self, noise: &[f64]) -> Result<()> {
        if noise.len() != self.config.noise_dim {
            bail!(Argument, "noise has {} values, expected {}", noise.len(), self.config.noise_dim);
        }
        Ok(())
    }

    fn check_prefix(&self, prefix: &[usize]) -> Result<()> {
        if let Some(&bad) = prefix
            .iter()
            .find(|&&t| t == END_ID || t >= self.config.vocab_size)
        {
            bail!(Argument, "prefix token {bad} is END or outside the vocabulary");
        }
        Ok(())
    }

    fn check_seq(&self, seq: &TokenSeq) -> Result<()> {
        if seq.max_len() != self.config.max_len {
            bail!(Argument, "sequence length {} does not match T = {}", seq.max_len(), self.config.max_len);
        }
        if seq.content().iter().any(|&t| t >= self.config.vocab_size) {
            bail!(Argument, "token id outside the generator vocabulary");
        }
        Ok(())
    }
}

/// LSTM state of one sequence.
#[derive(Clone, Debug)]
pub struct State {
    h: Vec<f64>,
    c: Vec<f64>,
}

/// Tape-free stepping with the input projection of every token cached.
pub struct Sampler<'a> {
    gen: &'a Generator,
    /// `emb * W_x + b`, one `4H` row per token.
    xw: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(gen: &'a Generator) -> Self {
        let cfg = &gen.config;
        let h4 = 4 * cfg.hidden_dim;
        let emb = gen.params.expect("emb").data();
        let wx = gen.params.expect("lstm.wx").data();
        let b = gen.params.expect("lstm.b").data();
        let mut xw = vec![0.0; cfg.vocab_size * h4];
        for (v, row) in xw.chunks_mut(h4).enumerate() {
            affine_row(&emb[v * cfg.embed_dim..(v + 1) * cfg.embed_dim], wx, b, row);
        }
        Self { gen, xw }
    }

    pub fn generator(&self) -> &Generator {
        self.gen
    }

    pub fn init_state(&self, noise: &[f64], category: usize) -> State {
        let cfg = &self.gen.config;
        let p = &self.gen.params;
        let mut input = noise.to_vec();
        if cfg.score_in_g {
            input.extend_from_slice(p.expect("score_emb").row(category));
        } else {
            input.resize(cfg.noise_dim + cfg.score_dim, 0.0);
        }
        let mut hc = vec![0.0; 2 * cfg.hidden_dim];
        affine_row(&input, p.expect("init.w").data(), p.expect("init.b").data(), &mut hc);
        for v in &mut hc {
            *v = v.tanh();
        }
        let c = hc.split_off(cfg.hidden_dim);
        State { h: hc, c }
    }

    /// Feeds `token` through the cell.
    pub fn advance(&self, st: &mut State, token: usize) {
        let h = self.gen.config.hidden_dim;
        let wh = self.gen.params.expect("lstm.wh").data();
        let mut gates = self.xw[token * 4 * h..(token + 1) * 4 * h].to_vec();
        for (p, &x) in st.h.iter().enumerate() {
            let row = &wh[p * 4 * h..(p + 1) * 4 * h];
            for (g, &w) in gates.iter_mut().zip(row) {
                *g += x * w;
            }
        }
        for k in 0..h {
            let i = sigmoid(gates[k]);
            let f = sigmoid(gates[h + k]);
            let g = gates[2 * h + k].tanh();
            let o = sigmoid(gates[3 * h + k]);
            st.c[k] = f * st.c[k] + i * g;
            st.h[k] = o * st.c[k].tanh();
        }
    }

    pub fn logits(&self, st: &State, out: &mut [f64]) {
        let p = &self.gen.params;
        affine_row(&st.h, p.expect("out.w").data(), p.expect("out.b").data(), out);
    }

    pub fn sample_one(&self, category: usize, rng: &mut Rng) -> SampledSequence {
        let noise = self.gen.draw_noise(rng);
        let st = self.init_state(&noise, category);
        let (seq, lp) = self.run(st, Vec::new(), END_ID, rng, true);
        SampledSequence {
            seq,
            category,
            noise,
            stepwise_logprob: lp,
        }
    }

    fn continue_from(&self, st: State, prefix: Vec<usize>, prev: usize, rng: &mut Rng) -> TokenSeq {
        self.run(st, prefix, prev, rng, false).0
    }

    /// Samples until `END` or `T`, starting after `content` with `prev` not
    /// yet fed to the cell.
    fn run(
        &self,
        mut st: State,
        mut content: Vec<usize>,
        mut prev: usize,
        rng: &mut Rng,
        track: bool,
    ) -> (TokenSeq, Vec<f64>) {
        let t_max = self.gen.config.max_len;
        let mut probs = vec![0.0; self.gen.config.vocab_size];
        let mut lp = Vec::new();
        while content.len() < t_max {
            self.advance(&mut st, prev);
            self.logits(&st, &mut probs);
            softmax_in_place(&mut probs);
            let a = rng.categorical(&probs);
            if track {
                lp.push(probs[a].ln());
            }
            if a == END_ID {
                break;
            }
            content.push(a);
            prev = a;
        }
        let seq = TokenSeq::padded(&content, t_max).expect("content within T and free of END");
        (seq, lp)
    }

    /// Log-probability of each action under the given conditioning.
    pub fn score_actions(&self, actions: &[usize], category: usize, noise: &[f64]) -> Vec<f64> {
        let mut st = self.init_state(noise, category);
        let mut logits = vec![0.0; self.gen.config.vocab_size];
        let mut prev = END_ID;
        actions
            .iter()
            .map(|&a| {
                self.advance(&mut st, prev);
                self.logits(&st, &mut logits);
                crate::numeric::log_softmax_in_place(&mut logits);
                prev = a;
                logits[a]
            })
            .collect()
    }

    /// `n` completions of every incomplete prefix of `sample`.
    ///
    /// Entry `t - 1` holds the completions of the first `t` actions, for
    /// `t = 1 .. n_actions - 1`; the full sequence needs no rollout.
    pub fn rollouts(&self, sample: &SampledSequence, n: usize, rng: &mut Rng) -> Vec<Vec<TokenSeq>> {
        let actions = sample.actions();
        let mut st = self.init_state(&sample.noise, sample.category);
        let mut out = Vec::with_capacity(actions.len().saturating_sub(1));
        let mut prev = END_ID;
        for t in 1..actions.len() {
            self.advance(&mut st, prev);
            prev = actions[t - 1];
            let prefix = &actions[..t];
            out.push(
                (0..n)
                    .map(|_| self.continue_from(st.clone(), prefix.to_vec(), prev, rng))
                    .collect(),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests;
