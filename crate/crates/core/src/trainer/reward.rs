//! Discriminator rewards for generated sequences.

use crate::corpus::{BehavioralVector, EmbeddingTable, FeatureNormalizer, ScoreScale, TokenSeq, END_ID};
use crate::discriminator::{DiscKind, DiscRunner, Discriminator, FRAUD, HUMAN};
use crate::error::{bail, Result};
use crate::generator::{Generator, SampledSequence, Sampler};
use crate::numeric::{compensated_sum, Rng};

/// Both discriminators, ready to score generated sequences.
pub struct RewardContext<'a> {
    df: DiscRunner<'a>,
    dg: DiscRunner<'a>,
    normalizer: FeatureNormalizer,
    scale: ScoreScale,
}

impl<'a> RewardContext<'a> {
    pub fn new(
        df: &'a Discriminator,
        dg: &'a Discriminator,
        emb: &'a EmbeddingTable,
        normalizer: FeatureNormalizer,
        scale: ScoreScale,
    ) -> Result<Self> {
        if df.kind() != DiscKind::Df || dg.kind() != DiscKind::Dg {
            bail!(Usage, "reward needs a D_f and a D_g model, in that order");
        }
        Ok(Self {
            df: DiscRunner::new(df, emb)?,
            dg: DiscRunner::new(dg, emb)?,
            normalizer,
            scale,
        })
    }

    pub fn df_runner(&self) -> &DiscRunner<'a> {
        &self.df
    }

    pub fn dg_runner(&self) -> &DiscRunner<'a> {
        &self.dg
    }

    /// Normalized behavioral inputs of a generated review.
    pub fn generated_features(&self, seq: &TokenSeq, category: usize) -> Result<[f64; 4]> {
        let score = self.scale.score(category)?;
        Ok(self
            .normalizer
            .apply(&BehavioralVector::for_generated(seq.true_length(), score, self.scale)))
    }

    /// `D_f(human | x) + D_g(fraud | x)` for a complete sequence.
    pub fn seq_reward(&self, seq: &TokenSeq, category: usize) -> Result<f64> {
        let feats = self.generated_features(seq, category)?;
        let f = self.df.forward(seq, category, None)?.p[HUMAN];
        let g = self.dg.forward(seq, category, Some(&feats))?.p[FRAUD];
        Ok(f + g)
    }

    fn mean_reward(&self, seqs: &[TokenSeq], category: usize) -> Result<f64> {
        let r = seqs
            .iter()
            .map(|s| self.seq_reward(s, category))
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(r) / seqs.len() as f64)
    }

    /// Reward of the action ending `prefix`.
    ///
    /// A prefix that is complete (length `T`, or ending in `END`) is scored
    /// directly; otherwise the reward is the mean over `n` completions
    /// sampled from `gen` under the same noise and score.
    pub fn mc_reward(
        &self,
        gen: &Generator,
        prefix: &[usize],
        category: usize,
        noise: &[f64],
        n: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        if prefix.is_empty() {
            bail!(Usage, "reward of an empty prefix: no action taken yet");
        }
        if n == 0 {
            bail!(Argument, "rollout count must be at least 1");
        }
        let t_max = gen.config().max_len;
        if let Some(p) = prefix.iter().position(|&a| a == END_ID) {
            if p + 1 != prefix.len() {
                bail!(Argument, "END may only be the last action");
            }
            return self.seq_reward(&TokenSeq::padded(&prefix[..p], t_max)?, category);
        }
        if prefix.len() > t_max {
            bail!(Argument, "prefix longer than T = {t_max}");
        }
        if prefix.len() == t_max {
            return self.seq_reward(&TokenSeq::padded(prefix, t_max)?, category);
        }
        let completions = gen.rollout_complete(prefix, category, Some(noise), n, rng)?;
        self.mean_reward(&completions, category)
    }

    /// Reward of every action of `sample`: rollouts for each incomplete
    /// prefix and the direct score for the last action.
    pub fn step_rewards(&self, sampler: &Sampler<'_>, sample: &SampledSequence, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if n == 0 {
            bail!(Argument, "rollout count must be at least 1");
        }
        let mut out = Vec::with_capacity(sample.stepwise_logprob.len());
        for completions in sampler.rollouts(sample, n, rng) {
            out.push(self.mean_reward(&completions, sample.category)?);
        }
        out.push(self.seq_reward(&sample.seq, sample.category)?);
        Ok(out)
    }
}
