//! Ranking metrics against brute-force definitions.

use fraudgan_core::eval::{accuracy, auc, average_precision, Prediction};
use fraudgan_core::numeric::Rng;

/// Scores on a coarse grid so ties are common.
fn random_set(rng: &mut Rng) -> Vec<Prediction> {
    let n = 2 + rng.below(15);
    let grid = 1 + rng.below(12);
    let mut v: Vec<Prediction> = (0..n)
        .map(|_| Prediction::new(rng.below(grid + 1) as f64 / grid as f64, rng.uniform() < 0.4))
        .collect();
    // Both classes present.
    v[0].fraud = true;
    v[1].fraud = false;
    rng.shuffle(&mut v);
    v
}

/// Position in the descending ranking; earlier input wins ties.
fn rank(preds: &[Prediction], i: usize) -> usize {
    1 + (0..preds.len())
        .filter(|&j| preds[j].score > preds[i].score || (preds[j].score == preds[i].score && j < i))
        .count()
}

fn ap_oracle(preds: &[Prediction]) -> f64 {
    let mut pos: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].fraud).map(|i| rank(preds, i)).collect();
    pos.sort_unstable();
    let mut total = 0.0;
    for (k, &r) in pos.iter().enumerate() {
        // k + 1 positives sit at or above rank r.
        total += (k + 1) as f64 / r as f64;
    }
    total / pos.len() as f64
}

fn auc_oracle(preds: &[Prediction]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for p in preds.iter().filter(|p| p.fraud) {
        for n in preds.iter().filter(|p| !p.fraud) {
            pairs += 1;
            twice += if p.score > n.score {
                2
            } else if p.score == n.score {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn accuracy_oracle(preds: &[Prediction], threshold: f64) -> f64 {
    let mut right = 0;
    for p in preds {
        let call = p.score >= threshold;
        if call == p.fraud {
            right += 1;
        }
    }
    right as f64 / preds.len() as f64
}

pub fn match_brute_force_oracles() {
    let mut rng = Rng::new(0xa0c);
    for case in 0..1000 {
        let preds = random_set(&mut rng);
        assert_eq!(average_precision(&preds).unwrap(), ap_oracle(&preds), "AP case {case}: {preds:?}");
        assert_eq!(auc(&preds).unwrap(), auc_oracle(&preds), "AUC case {case}: {preds:?}");
        for threshold in [0.0, 0.5, 0.75, 1.0] {
            assert_eq!(
                accuracy(&preds, threshold).unwrap(),
                accuracy_oracle(&preds, threshold),
                "accuracy case {case}"
            );
        }
    }
}

pub fn all_tied_auc_is_one_half() {
    let preds: Vec<Prediction> = (0..9).map(|i| Prediction::new(0.42, i % 3 == 0)).collect();
    assert_eq!(auc(&preds).unwrap(), 0.5);
}

pub fn hand_examples() {
    // Ranked labels 1 0 1 0 1: (1 + 2/3 + 3/5) / 3.
    let preds: Vec<Prediction> = [(0.9, true), (0.8, false), (0.7, true), (0.6, false), (0.5, true)]
        .iter()
        .map(|&(s, f)| Prediction::new(s, f))
        .collect();
    assert!((average_precision(&preds).unwrap() - 34.0 / 45.0).abs() < 1e-15);
    // Fraud beats genuine in 3 of 6 pairs.
    assert_eq!(auc(&preds).unwrap(), 0.5);
    assert_eq!(accuracy(&preds, 0.65).unwrap(), 0.6);
}

pub const CASES: &[(&str, fn())] = &[
    ("match_brute_force_oracles", match_brute_force_oracles),
    ("all_tied_auc_is_one_half", all_tied_auc_is_one_half),
    ("hand_examples", hand_examples),
];
