//! Deterministic synthetic review corpora.
//!
//! The vocabulary `w0 .. w{V-1}` is cut into blocks: one sentiment block per
//! score category, a genuine-style block, a fraud-style block and a shared
//! common block. Each review picks a sentiment block uniformly; its score is
//! that block's category with probability `rho` and a uniform category
//! otherwise. The first token always comes from the sentiment block; later
//! tokens are drawn from a class-specific mixture over the blocks
//! (Zipf-weighted inside a block), and with probability `bigram_bias` a
//! token instead is the successor of the previous token inside its block.
//!
//! With two categories this gives `P(high score | high-sentiment tokens) =
//! (1 + rho) / 2`.

use std::ops::Range;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::review::{Label, Review, ScoreScale};
use crate::error::{bail, Result};
use crate::numeric::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub size: usize,
    pub fraud_fraction: f64,
    /// Score/sentiment correlation in `[0, 1]`.
    pub rho: f64,
    pub scale: ScoreScale,
    /// Fraction of fraud reviews drawn from the bot-style distribution.
    pub bot_fraction: f64,
    /// Attach user ids and dates (bot-style reviews never get them).
    pub with_users: bool,
    pub bigram_bias: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            min_len: 8,
            max_len: 24,
            size: 2000,
            fraud_fraction: 0.3,
            rho: 0.8,
            scale: ScoreScale::Five,
            bot_fraction: 0.0,
            with_users: true,
            bigram_bias: 0.3,
        }
    }
}

/// Which tokens belong to which block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthLayout {
    pub sentiment: Vec<Range<usize>>,
    pub genuine: Range<usize>,
    pub fraud: Range<usize>,
    pub common: Range<usize>,
}

impl SynthLayout {
    pub fn new(vocab_size: usize, categories: usize) -> Self {
        let s = (vocab_size / (4 * categories)).max(1);
        let k = (vocab_size / 10).max(1);
        let sentiment: Vec<Range<usize>> = (0..categories).map(|c| c * s..(c + 1) * s).collect();
        let g0 = categories * s;
        Self {
            sentiment,
            genuine: g0..g0 + k,
            fraud: g0 + k..g0 + 2 * k,
            common: g0 + 2 * k..vocab_size,
        }
    }

    /// Sentiment category of a token id, if it belongs to a sentiment block.
    pub fn sentiment_of(&self, id: usize) -> Option<usize> {
        self.sentiment.iter().position(|r| r.contains(&id))
    }

    fn block_of(&self, id: usize) -> Range<usize> {
        if let Some(c) = self.sentiment_of(id) {
            return self.sentiment[c].clone();
        }
        [&self.genuine, &self.fraud, &self.common]
            .into_iter()
            .find(|r| r.contains(&id))
            .cloned()
            .unwrap_or(0..1)
    }

    pub fn token_id(token: &str) -> Option<usize> {
        token.strip_prefix('w')?.parse().ok()
    }
}

pub fn token_name(id: usize) -> String {
    format!("w{id}")
}

#[derive(Clone, Copy)]
enum Style {
    Genuine,
    Fraud,
    Bot,
}

fn zipf_pick(rng: &mut Rng, block: &Range<usize>) -> usize {
    let weights: Vec<f64> = (0..block.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
    block.start + rng.categorical(&weights)
}

fn draw_token(rng: &mut Rng, layout: &SynthLayout, style: Style, sentiment: usize, vocab: usize) -> usize {
    // Mixture weights over: common, genuine, fraud, sentiment, uniform.
    let mix: [f64; 5] = match style {
        Style::Genuine => [0.5, 0.25, 0.0, 0.25, 0.0],
        Style::Fraud => [0.5, 0.0, 0.25, 0.25, 0.0],
        Style::Bot => [0.45, 0.1, 0.1, 0.2, 0.15],
    };
    match rng.categorical(&mix) {
        0 => zipf_pick(rng, &layout.common),
        1 => zipf_pick(rng, &layout.genuine),
        2 => zipf_pick(rng, &layout.fraud),
        3 => zipf_pick(rng, &layout.sentiment[sentiment]),
        _ => rng.below(vocab),
    }
}

/// Generates a corpus; fully determined by `spec` and `seed`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Vec<Review>> {
    if spec.vocab_size < 10 {
        bail!(Argument, "synthetic vocabulary needs at least 10 tokens");
    }
    if spec.min_len == 0 || spec.max_len < spec.min_len {
        bail!(Argument, "bad length range {}..={}", spec.min_len, spec.max_len);
    }
    for (name, v) in [
        ("fraud_fraction", spec.fraud_fraction),
        ("rho", spec.rho),
        ("bot_fraction", spec.bot_fraction),
        ("bigram_bias", spec.bigram_bias),
    ] {
        if !(0.0..=1.0).contains(&v) {
            bail!(Argument, "{name} must lie in [0, 1], got {v}");
        }
    }
    let categories = spec.scale.categories();
    let layout = SynthLayout::new(spec.vocab_size, categories);
    let mut rng = Rng::new(seed);

    let n_fraud = (spec.size as f64 * spec.fraud_fraction).round() as usize;
    let n_bot = (n_fraud as f64 * spec.bot_fraction).round() as usize;
    let mut order: Vec<usize> = (0..spec.size).collect();
    rng.shuffle(&mut order);
    let mut style = vec![Style::Genuine; spec.size];
    for (k, &i) in order.iter().take(n_fraud).enumerate() {
        style[i] = if k < n_bot { Style::Bot } else { Style::Fraud };
    }

    let base = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let fraud_users = (n_fraud / 4).max(1);
    let mut out = Vec::with_capacity(spec.size);
    for (i, &st) in style.iter().enumerate() {
        let sentiment = rng.below(categories);
        let category = if rng.uniform() < spec.rho {
            sentiment
        } else {
            rng.below(categories)
        };
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let mut ids: Vec<usize> = Vec::with_capacity(len);
        for t in 0..len {
            let id = if t == 0 {
                zipf_pick(&mut rng, &layout.sentiment[sentiment])
            } else if rng.uniform() < spec.bigram_bias {
                let prev = ids[t - 1];
                let block = layout.block_of(prev);
                block.start + (prev - block.start + 1) % block.len()
            } else {
                draw_token(&mut rng, &layout, st, sentiment, spec.vocab_size)
            };
            ids.push(id);
        }
        let (label, user, date) = match st {
            Style::Genuine => (
                Label::Genuine,
                Some(format!("g{}", rng.below(spec.size))),
                Some(base + Days::new(rng.below(365) as u64)),
            ),
            Style::Fraud => (
                Label::FraudHuman,
                Some(format!("f{}", rng.below(fraud_users))),
                Some(base + Days::new(rng.below(20) as u64)),
            ),
            Style::Bot => (Label::FraudBot, None, None),
        };
        let (user, date) = if spec.with_users { (user, date) } else { (None, None) };
        out.push(Review {
            review_id: format!("s{i}"),
            item_id: Some(format!("i{}", rng.below(50))),
            user_id: user,
            date,
            tokens: ids.into_iter().map(token_name).collect(),
            score: spec.scale.score(category)?,
            label,
        });
    }
    Ok(out)
}
