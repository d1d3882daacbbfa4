use super::review::Review;
use crate::error::{bail, Result};
use crate::numeric::Rng;

/// Stratified train/test indices over binary class flags.
///
/// Each class contributes `round(ratio * n)` members to the training side,
/// clamped so both sides keep at least one member of every class. Indices
/// come back in ascending order.
pub fn split_indices(is_positive: &[bool], train_ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        bail!(Argument, "train ratio must lie in (0, 1), got {train_ratio}");
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [false, true] {
        let mut members: Vec<usize> = (0..is_positive.len())
            .filter(|&i| is_positive[i] == class)
            .collect();
        let name = if class { "fraud" } else { "genuine" };
        if members.len() < 2 {
            bail!(
                Stratification,
                "class `{name}` has {} member(s), need at least 2",
                members.len()
            );
        }
        rng.shuffle(&mut members);
        let n = members.len();
        let k = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified split on the fraud/genuine label, deterministic per seed.
pub fn split(corpus: &[Review], train_ratio: f64, seed: u64) -> Result<(Vec<Review>, Vec<Review>)> {
    let flags: Vec<bool> = corpus.iter().map(|r| r.label.is_fraud()).collect();
    let (tr, te) = split_indices(&flags, train_ratio, seed)?;
    Ok((
        tr.into_iter().map(|i| corpus[i].clone()).collect(),
        te.into_iter().map(|i| corpus[i].clone()).collect(),
    ))
}
