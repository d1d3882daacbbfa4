use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::review::{Review, ScoreScale};

/// Metadata features of one review.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehavioralVector {
    /// Most reviews the author wrote on any single day.
    pub mnr: f64,
    /// Review length in tokens.
    pub rl: f64,
    /// Low (extreme) score.
    pub se: bool,
    /// The author's only review.
    pub sr: bool,
}

impl BehavioralVector {
    /// Features of a machine-generated review, which carries no user trail.
    pub fn for_generated(length: usize, score: i32, scale: ScoreScale) -> Self {
        Self {
            mnr: 0.0,
            rl: length as f64,
            se: scale.is_low(score),
            sr: true,
        }
    }
}

/// Per-review behavioral features, aligned with `corpus`.
///
/// Only reviews with both a user and a date count towards a user's
/// activity; reviews without them get `mnr = 0` and `sr = true`.
pub fn behavioral_vectors(corpus: &[Review], scale: ScoreScale) -> Vec<BehavioralVector> {
    let mut per_user: HashMap<&str, usize> = HashMap::new();
    let mut per_user_day: HashMap<(&str, NaiveDate), usize> = HashMap::new();
    for r in corpus {
        if let (Some(u), Some(d)) = (&r.user_id, r.date) {
            *per_user.entry(u).or_default() += 1;
            *per_user_day.entry((u, d)).or_default() += 1;
        }
    }
    let mut max_per_day: HashMap<&str, usize> = HashMap::new();
    for (&(u, _), &n) in &per_user_day {
        let m = max_per_day.entry(u).or_default();
        *m = (*m).max(n);
    }
    corpus
        .iter()
        .map(|r| {
            let (mnr, sr) = match (&r.user_id, r.date) {
                (Some(u), Some(_)) => (max_per_day[u.as_str()] as f64, per_user[u.as_str()] == 1),
                _ => (0.0, true),
            };
            BehavioralVector {
                mnr,
                rl: r.tokens.len() as f64,
                se: scale.is_low(r.score),
                sr,
            }
        })
        .collect()
}

/// Behavioral features keyed by review id.
pub fn extract_behavioral(corpus: &[Review], scale: ScoreScale) -> BTreeMap<String, BehavioralVector> {
    corpus
        .iter()
        .zip(behavioral_vectors(corpus, scale))
        .map(|(r, v)| (r.review_id.clone(), v))
        .collect()
}

/// Min-max scaling of the real-valued features, fitted on training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mnr_min: f64,
    pub mnr_max: f64,
    pub rl_min: f64,
    pub rl_max: f64,
}

impl Default for FeatureNormalizer {
    fn default() -> Self {
        Self {
            mnr_min: 0.0,
            mnr_max: 1.0,
            rl_min: 1.0,
            rl_max: 2.0,
        }
    }
}

fn scale01(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl FeatureNormalizer {
    pub fn fit(vectors: &[BehavioralVector]) -> Self {
        if vectors.is_empty() {
            return Self::default();
        }
        let fold = |f: fn(&BehavioralVector) -> f64| {
            vectors.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let (mnr_min, mnr_max) = fold(|v| v.mnr);
        let (rl_min, rl_max) = fold(|v| v.rl);
        Self {
            mnr_min,
            mnr_max,
            rl_min,
            rl_max,
        }
    }

    /// `[mnr, rl, se, sr]`, each in `[0, 1]`.
    pub fn apply(&self, v: &BehavioralVector) -> [f64; 4] {
        [
            scale01(v.mnr, self.mnr_min, self.mnr_max),
            scale01(v.rl, self.rl_min, self.rl_max),
            f64::from(u8::from(v.se)),
            f64::from(u8::from(v.sr)),
        ]
    }
}
