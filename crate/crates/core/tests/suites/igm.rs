//! Variational information bound on exact discrete tables, and the
//! Monte-Carlo regularizer estimate.

use fraudgan_core::discriminator::{DiscConfig, DiscKind, DiscRunner, Discriminator, FeatureFlags};
use fraudgan_core::corpus::EmbeddingTable;
use fraudgan_core::generator::{Generator, GeneratorConfig};
use fraudgan_core::igm::{
    igm_regularizer_estimate, lemma_expectation_check, mutual_information, variational_lower_bound, AuxiliaryQ,
    DiscreteJoint,
};
use fraudgan_core::numeric::Rng;

const TOL: f64 = 1e-10;

/// Random table with a few exact zeros, normalized to sum 1.
fn random_weights(rng: &mut Rng, n: usize, zeros: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if zeros && rng.uniform() < 0.15 {
                0.0
            } else {
                rng.uniform().powi(2) + 1e-4
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn random_joint(rng: &mut Rng) -> (usize, usize, Vec<f64>) {
    let r = 1 + rng.below(6);
    let c = 1 + rng.below(6);
    (r, c, random_weights(rng, r * c, true))
}

/// Strictly positive `q(c | x)`, row-major by `c`.
fn random_q(rng: &mut Rng, r: usize, c: usize) -> Vec<f64> {
    let mut q = vec![0.0; r * c];
    for x in 0..c {
        let col = random_weights(rng, r, false);
        for k in 0..r {
            q[k * c + x] = col[k];
        }
    }
    q
}

/// `E_x KL(p(. | x) || q(. | x))`, straight from the definition.
fn expected_kl(r: usize, c: usize, p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for x in 0..c {
        let px: f64 = (0..r).map(|k| p[k * c + x]).sum();
        if px == 0.0 {
            continue;
        }
        for k in 0..r {
            let pj = p[k * c + x];
            if pj > 0.0 {
                total += pj * ((pj / px) / q[k * c + x]).ln();
            }
        }
    }
    total
}

pub fn bound_gap_is_expected_kl() {
    let mut rng = Rng::new(0x16e);
    for case in 0..200 {
        let (r, c, p) = random_joint(&mut rng);
        let q = random_q(&mut rng, r, c);
        let joint = DiscreteJoint::new(r, c, p.clone()).unwrap();
        let aux = AuxiliaryQ::new(r, c, q.clone()).unwrap();
        let mi = mutual_information(&joint);
        let lb = variational_lower_bound(&joint, &aux).unwrap();
        assert!(lb <= mi + TOL, "case {case}: L {lb} > I {mi}");
        let kl = expected_kl(r, c, &p, &q);
        assert!(
            ((mi - lb) - kl).abs() <= TOL,
            "case {case} ({r}x{c}): gap {} vs KL {kl}",
            mi - lb
        );
    }
}

pub fn posterior_makes_the_bound_tight() {
    let mut rng = Rng::new(0x717);
    for case in 0..200 {
        let (r, c, p) = random_joint(&mut rng);
        let joint = DiscreteJoint::new(r, c, p).unwrap();
        let mi = mutual_information(&joint);
        let lb = variational_lower_bound(&joint, &joint.posterior()).unwrap();
        assert!((mi - lb).abs() <= TOL, "case {case}: I {mi} vs L {lb}");
    }
}

pub fn resampling_lemma_holds() {
    let mut rng = Rng::new(0x1e3);
    for case in 0..100 {
        let (nx, ny, p) = random_joint(&mut rng);
        let f: Vec<f64> = (0..nx * ny).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let joint = DiscreteJoint::new(nx, ny, p.clone()).unwrap();
        let (lhs, rhs) = lemma_expectation_check(&f, &joint).unwrap();
        let direct: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= TOL, "case {case}: {lhs} vs {rhs}");
        assert!((lhs - direct).abs() <= TOL, "case {case}: {lhs} vs direct {direct}");
    }
}

fn models(seed: u64, categories: usize) -> (Generator, Discriminator, EmbeddingTable) {
    let mut rng = Rng::new(seed);
    let gen = Generator::new(
        GeneratorConfig {
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 4,
            noise_dim: 2,
            score_dim: 2,
            categories,
            max_len: 6,
            score_in_g: true,
        },
        &mut rng,
    )
    .unwrap();
    let df = Discriminator::new(
        DiscConfig {
            kind: DiscKind::Df,
            embed_dim: 3,
            windows: vec![1, 2],
            filters: vec![3, 3],
            categories,
            max_len: 6,
            features: FeatureFlags::default(),
        },
        &mut rng,
    )
    .unwrap();
    let emb = EmbeddingTable::random(7, 3, &mut rng).unwrap();
    (gen, df, emb)
}

pub fn uninformative_q_gives_zero_estimate() {
    let (gen, mut df, emb) = models(5, 5);
    for name in ["q.w", "q.b"] {
        df.params_mut().get_mut(name).unwrap().data_mut().fill(0.0);
    }
    let runner = DiscRunner::new(&df, &emb).unwrap();
    let est = igm_regularizer_estimate(&gen, &runner, 64, &mut Rng::new(6)).unwrap();
    assert!(est.value.abs() < 1e-12, "{}", est.value);
    assert!(est.rewards(2.0, 5).iter().all(|r| r.abs() < 1e-12));
}

pub fn estimate_is_the_mean_of_its_terms() {
    let (gen, df, emb) = models(7, 3);
    let runner = DiscRunner::new(&df, &emb).unwrap();
    let est = igm_regularizer_estimate(&gen, &runner, 40, &mut Rng::new(8)).unwrap();
    assert_eq!(est.samples.len(), 40);
    let h = 3f64.ln();
    let mean = est.log_q.iter().sum::<f64>() / 40.0 + h;
    assert!((est.value - mean).abs() < 1e-12);
    // log Q <= 0, so the estimate never exceeds H(c) = ln C.
    assert!(est.value <= h);
    let rewards = est.rewards(0.5, 3);
    for (r, l) in rewards.iter().zip(&est.log_q) {
        assert!((r - 0.5 * (l + h)).abs() < 1e-15);
    }
    let again = igm_regularizer_estimate(&gen, &runner, 40, &mut Rng::new(8)).unwrap();
    assert_eq!(again.log_q, est.log_q);
}

pub fn rejects_bad_inputs() {
    let (gen, df, emb) = models(9, 3);
    let runner = DiscRunner::new(&df, &emb).unwrap();
    assert!(igm_regularizer_estimate(&gen, &runner, 0, &mut Rng::new(1)).is_err());
    assert!(DiscreteJoint::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).is_err());
    assert!(AuxiliaryQ::new(2, 1, vec![0.3, 0.3]).is_err());
}

pub const CASES: &[(&str, fn())] = &[
    ("bound_gap_is_expected_kl", bound_gap_is_expected_kl),
    ("posterior_makes_the_bound_tight", posterior_makes_the_bound_tight),
    ("resampling_lemma_holds", resampling_lemma_holds),
    ("uninformative_q_gives_zero_estimate", uninformative_q_gives_zero_estimate),
    ("estimate_is_the_mean_of_its_terms", estimate_is_the_mean_of_its_terms),
    ("rejects_bad_inputs", rejects_bad_inputs),
];
