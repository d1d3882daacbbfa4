//! Teacher-forced likelihood on the tape: MLE pretraining and the
//! policy-gradient surrogate.

use super::{actions_of, Generator, SampledSequence};
use crate::corpus::{TokenSeq, END_ID};
use crate::error::{bail, Result};
use crate::numeric::{grad_step, Direction, Optimizer, Rng, Tape, Var};

/// One conditioned action sequence for teacher forcing.
#[derive(Clone, Debug)]
pub struct TeacherItem {
    pub actions: Vec<usize>,
    pub category: usize,
    pub noise: Vec<f64>,
}

/// Reward attached to a sampled sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum Reward {
    /// One value credited to every action.
    Sequence(f64),
    /// One value per action (`n_actions` entries).
    PerStep(Vec<f64>),
}

impl Reward {
    fn per_step(&self, n: usize) -> Result<Vec<f64>> {
        let v = match self {
            Reward::Sequence(r) => vec![*r; n],
            Reward::PerStep(r) => {
                if r.len() != n {
                    bail!(Argument, "{} step rewards for {n} actions", r.len());
                }
                r.clone()
            }
        };
        if v.iter().any(|r| !r.is_finite()) {
            bail!(Numeric, "non-finite reward");
        }
        Ok(v)
    }
}

impl Generator {
    /// Records the batched teacher-forced forward pass and returns the
    /// weighted log-likelihood `sum_i sum_t w[i][t] log G(a_it | ...)`.
    fn weighted_log_likelihood(&self, tape: &mut Tape, items: &[TeacherItem], weights: &[Vec<f64>]) -> Result<Var> {
        let cfg = &self.config;
        let (b, h) = (items.len(), cfg.hidden_dim);
        let steps = items.iter().map(|it| it.actions.len()).max().unwrap_or(0);
        let p = &self.params;
        let emb = tape.param(p, "emb")?;
        let init_w = tape.param(p, "init.w")?;
        let init_b = tape.param(p, "init.b")?;
        let wx = tape.param(p, "lstm.wx")?;
        let wh = tape.param(p, "lstm.wh")?;
        let lb = tape.param(p, "lstm.b")?;
        let out_w = tape.param(p, "out.w")?;
        let out_b = tape.param(p, "out.b")?;

        let noise: Vec<f64> = items.iter().flat_map(|it| it.noise.iter().copied()).collect();
        let z = tape.constant(b, cfg.noise_dim, noise);
        let s = if cfg.score_in_g {
            let se = tape.param(p, "score_emb")?;
            let cats: Vec<usize> = items.iter().map(|it| it.category).collect();
            tape.gather_rows(se, &cats)
        } else {
            tape.constant(b, cfg.score_dim, vec![0.0; b * cfg.score_dim])
        };
        let zs = tape.concat_cols(&[z, s]);
        let hc = tape.matmul(zs, init_w);
        let hc = tape.add_row(hc, init_b);
        let hc = tape.tanh(hc);
        let mut hs = tape.slice_cols(hc, 0, h);
        let mut cs = tape.slice_cols(hc, h, 2 * h);

        let mut terms = Vec::with_capacity(steps);
        let mut prev = vec![END_ID; b];
        for t in 0..steps {
            let x = tape.gather_rows(emb, &prev);
            let gx = tape.matmul(x, wx);
            let gh = tape.matmul(hs, wh);
            let g = tape.add(gx, gh);
            let g = tape.add_row(g, lb);
            let i = tape.slice_cols(g, 0, h);
            let f = tape.slice_cols(g, h, 2 * h);
            let gg = tape.slice_cols(g, 2 * h, 3 * h);
            let o = tape.slice_cols(g, 3 * h, 4 * h);
            let i = tape.sigmoid(i);
            let f = tape.sigmoid(f);
            let gg = tape.tanh(gg);
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, cs);
            let ig = tape.mul(i, gg);
            cs = tape.add(fc, ig);
            let tc = tape.tanh(cs);
            hs = tape.mul(o, tc);
            let logits = tape.matmul(hs, out_w);
            let logits = tape.add_row(logits, out_b);
            let lp = tape.log_softmax(logits);
            let acts: Vec<usize> = items
                .iter()
                .map(|it| it.actions.get(t).copied().unwrap_or(END_ID))
                .collect();
            let picked = tape.pick(lp, &acts);
            let w: Vec<f64> = weights.iter().map(|w| w.get(t).copied().unwrap_or(0.0)).collect();
            terms.push(tape.weighted_sum(picked, &w));
            prev = acts;
        }
        let all = tape.concat_cols(&terms);
        Ok(tape.sum(all))
    }

    fn check_items(&self, items: &[TeacherItem]) -> Result<()> {
        for it in items {
            self.check_category(it.category)?;
            self.check_noise(&it.noise)?;
            if it.actions.is_empty() || it.actions.len() > self.config.max_len {
                bail!(Argument, "action count {} outside 1..={}", it.actions.len(), self.config.max_len);
            }
            if it.actions.iter().any(|&a| a >= self.config.vocab_size) {
                bail!(Argument, "action outside the generator vocabulary");
            }
        }
        Ok(())
    }

    /// Adds the gradient of the weighted log-likelihood to the parameter
    /// grads and returns its value.
    pub fn accumulate_weighted_gradient(&mut self, items: &[TeacherItem], weights: &[Vec<f64>]) -> Result<f64> {
        if items.is_empty() {
            bail!(Usage, "empty batch");
        }
        self.check_items(items)?;
        let mut tape = Tape::new();
        let obj = self.weighted_log_likelihood(&mut tape, items, weights)?;
        let value = tape.scalar(obj);
        tape.backward(obj)?.accumulate_into(&mut self.params);
        Ok(value)
    }

    /// Accumulates the gradient of the REINFORCE surrogate
    /// `(1/B) sum_i sum_t r_it log G(a_it | a_<t, c_i, z_i)`.
    pub fn accumulate_policy_gradient(&mut self, batch: &[(SampledSequence, Reward)]) -> Result<f64> {
        if batch.is_empty() {
            bail!(Usage, "policy update on an empty batch");
        }
        let scale = 1.0 / batch.len() as f64;
        let mut items = Vec::with_capacity(batch.len());
        let mut weights = Vec::with_capacity(batch.len());
        for (s, r) in batch {
            let actions = s.actions();
            weights.push(r.per_step(actions.len())?.into_iter().map(|v| v * scale).collect());
            items.push(TeacherItem {
                actions,
                category: s.category,
                noise: s.noise.clone(),
            });
        }
        self.accumulate_weighted_gradient(&items, &weights)
    }

    /// One ascent step of size `rate` on the policy-gradient surrogate.
    pub fn policy_update(&mut self, batch: &[(SampledSequence, Reward)], rate: f64) -> Result<()> {
        self.params.zero_grads();
        self.accumulate_policy_gradient(batch)?;
        grad_step(&mut self.params, rate, Direction::Ascend)
    }

    /// Maximum-likelihood pretraining on `(sequence, category)` pairs.
    ///
    /// Fresh noise is drawn for every item in every epoch. Returns the mean
    /// per-token negative log-likelihood seen during each epoch.
    pub fn mle_pretrain(
        &mut self,
        data: &[(TokenSeq, usize)],
        epochs: usize,
        batch_size: usize,
        opt: &mut Optimizer,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            bail!(Usage, "MLE pretraining needs data");
        }
        if batch_size == 0 {
            bail!(Argument, "batch size must be positive");
        }
        for (seq, c) in data {
            self.check_seq(seq)?;
            self.check_category(*c)?;
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            let (mut nll, mut tokens) = (0.0, 0usize);
            for chunk in order.chunks(batch_size) {
                let items: Vec<TeacherItem> = chunk
                    .iter()
                    .map(|&i| TeacherItem {
                        actions: actions_of(&data[i].0),
                        category: data[i].1,
                        noise: self.draw_noise(rng),
                    })
                    .collect();
                let n: usize = items.iter().map(|it| it.actions.len()).sum();
                let weights: Vec<Vec<f64>> = items
                    .iter()
                    .map(|it| vec![1.0 / n as f64; it.actions.len()])
                    .collect();
                self.params.zero_grads();
                let ll = self.accumulate_weighted_gradient(&items, &weights)?;
                opt.step(&mut self.params, Direction::Ascend)?;
                nll -= ll * n as f64;
                tokens += n;
            }
            history.push(nll / tokens as f64);
        }
        Ok(history)
    }

    /// Mean per-token negative log-likelihood of `data`, averaged over one
    /// noise draw per item.
    pub fn mean_nll(&self, data: &[(TokenSeq, usize)], rng: &mut Rng) -> Result<f64> {
        if data.is_empty() {
            bail!(Usage, "no data");
        }
        let s = self.sampler();
        let (mut nll, mut tokens) = (0.0, 0usize);
        for (seq, c) in data {
            self.check_seq(seq)?;
            self.check_category(*c)?;
            let z = self.draw_noise(rng);
            let lp = s.score_actions(&actions_of(seq), *c, &z);
            tokens += lp.len();
            nll -= lp.iter().sum::<f64>();
        }
        Ok(nll / tokens as f64)
    }
}
