use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// One scored review: fraud probability and true label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub fraud: bool,
}

impl Prediction {
    pub fn new(score: f64, fraud: bool) -> Self {
        Self { score, fraud }
    }
}

fn check_finite(preds: &[Prediction]) -> Result<()> {
    if preds.iter().any(|p| !p.score.is_finite()) {
        bail!(Numeric, "prediction scores must be finite");
    }
    Ok(())
}

/// Non-interpolated average precision: the mean, over positives in
/// descending-score order, of the precision at each positive's rank. Ties
/// keep their input order.
pub fn average_precision(preds: &[Prediction]) -> Result<f64> {
    check_finite(preds)?;
    let n_pos = preds.iter().filter(|p| p.fraud).count();
    if n_pos == 0 {
        bail!(UndefinedMetric, "average precision needs at least one fraud item");
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if preds[i].fraud {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Mann-Whitney AUC: the fraction of (fraud, genuine) pairs ranked
/// correctly, ties counting one half. Exact up to the final division.
pub fn auc(preds: &[Prediction]) -> Result<f64> {
    check_finite(preds)?;
    let n_pos = preds.iter().filter(|p| p.fraud).count() as u128;
    let n_neg = preds.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        bail!(UndefinedMetric, "AUC needs both fraud and genuine items");
    }
    let mut sorted: Vec<&Prediction> = preds.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // Twice the Mann-Whitney U statistic, kept integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].fraud {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Fraction of items whose call (`score >= threshold` means fraud) is right.
pub fn accuracy(preds: &[Prediction], threshold: f64) -> Result<f64> {
    check_finite(preds)?;
    if preds.is_empty() {
        bail!(Argument, "accuracy of no predictions");
    }
    let right = preds
        .iter()
        .filter(|p| (p.score >= threshold) == p.fraud)
        .count();
    Ok(right as f64 / preds.len() as f64)
}

/// Held-out detection metrics plus run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iteration: usize,
    pub ap: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
    pub supervision: f64,
    pub score_in_g: bool,
    pub score_in_d: bool,
    pub regularizer: bool,
    pub features: String,
    /// Mean per-step generator reward in this iteration (0 for pretraining).
    pub gen_reward: f64,
    /// Regularizer estimate on generated samples (0 when off).
    pub igm: f64,
    pub dg_loss: f64,
    pub df_loss: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "iteration,ap,auc,accuracy,n_pos,n_neg,seed,supervision,score_in_g,score_in_d,regularizer,features,gen_reward,igm,dg_loss,df_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.ap,
            self.auc,
            self.accuracy,
            self.n_pos,
            self.n_neg,
            self.seed,
            self.supervision,
            self.score_in_g,
            self.score_in_d,
            self.regularizer,
            self.features,
            self.gen_reward,
            self.igm,
            self.dg_loss,
            self.df_loss
        )
    }
}
