//! Monte-Carlo rollout reward against exhaustive enumeration on a tiny
//! vocabulary.

use fraudgan_core::corpus::{EmbeddingTable, FeatureNormalizer, ScoreScale, TokenSeq, END_ID};
use fraudgan_core::discriminator::{DiscConfig, DiscKind, Discriminator, FeatureFlags};
use fraudgan_core::generator::{Generator, GeneratorConfig};
use fraudgan_core::numeric::Rng;
use fraudgan_core::trainer::RewardContext;

const V: usize = 3;
const T: usize = 3;

struct Instance {
    gen: Generator,
    df: Discriminator,
    dg: Discriminator,
    emb: EmbeddingTable,
}

fn disc(kind: DiscKind, rng: &mut Rng) -> Discriminator {
    Discriminator::new(
        DiscConfig {
            kind,
            embed_dim: 3,
            windows: vec![1, 2],
            filters: vec![3, 2],
            categories: 2,
            max_len: T,
            features: FeatureFlags {
                score: kind == DiscKind::Dg,
                ..FeatureFlags::default()
            },
        },
        rng,
    )
    .unwrap()
}

fn instance(seed: u64) -> Instance {
    let mut rng = Rng::derive(seed, &[0x5e1]);
    let mut gen = Generator::new(
        GeneratorConfig {
            vocab_size: V,
            embed_dim: 3,
            hidden_dim: 4,
            noise_dim: 2,
            score_dim: 2,
            categories: 2,
            max_len: T,
            score_in_g: true,
        },
        &mut rng,
    )
    .unwrap();
    // Wider weights than the default init so instances differ visibly.
    for (_, t) in gen.params_mut().iter_mut() {
        for x in t.data_mut() {
            *x = 1.5 * rng.normal();
        }
    }
    let mut df = disc(DiscKind::Df, &mut rng);
    let mut dg = disc(DiscKind::Dg, &mut rng);
    for d in [&mut df, &mut dg] {
        for (_, t) in d.params_mut().iter_mut() {
            for x in t.data_mut() {
                *x = rng.normal();
            }
        }
    }
    let emb = EmbeddingTable::random(V, 3, &mut rng).unwrap();
    Instance { gen, df, dg, emb }
}

/// Mean and variance of the sequence reward over every completion of
/// `prefix`, each weighted by its exact probability under the generator.
fn enumerate(inst: &Instance, ctx: &RewardContext<'_>, prefix: &[usize], c: usize, noise: &[f64]) -> (f64, f64) {
    let (mut m1, mut m2, mut mass) = (0.0, 0.0, 0.0);
    let mut stack = vec![(prefix.to_vec(), 1.0)];
    while let Some((content, p)) = stack.pop() {
        let probs = inst.gen.next_token_probs(&content, c, noise).unwrap();
        assert_eq!(probs.len(), V);
        for (a, &pa) in probs.iter().enumerate() {
            let q = p * pa;
            let mut next = content.clone();
            if a != END_ID {
                next.push(a);
            }
            if a == END_ID || next.len() == T {
                let r = ctx.seq_reward(&TokenSeq::padded(&next, T).unwrap(), c).unwrap();
                m1 += q * r;
                m2 += q * r * r;
                mass += q;
            } else {
                stack.push((next, q));
            }
        }
    }
    assert!((mass - 1.0).abs() < 1e-12, "completion mass {mass}");
    (m1, m2 - m1 * m1)
}

/// Runs `instances` random models and returns the largest deviation in
/// standard errors.
pub fn max_z_score(instances: u64, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..instances {
        let inst = instance(k);
        let ctx = RewardContext::new(&inst.df, &inst.dg, &inst.emb, FeatureNormalizer::default(), ScoreScale::Binary)
            .unwrap();
        let mut rng = Rng::derive(k, &[0x5e2]);
        let c = rng.below(2);
        let noise = [rng.normal(), rng.normal()];
        let prefix = [1 + rng.below(V - 1)];
        let (mean, var) = enumerate(&inst, &ctx, &prefix, c, &noise);
        let est = ctx.mc_reward(&inst.gen, &prefix, c, &noise, n, &mut rng).unwrap();
        let se = (var / n as f64).sqrt();
        let z = if se > 0.0 { (est - mean).abs() / se } else { 0.0 };
        assert!(
            se > 0.0 || (est - mean).abs() < 1e-12,
            "instance {k}: degenerate reward but estimate {est} != {mean}"
        );
        worst = worst.max(z);
    }
    worst
}

pub fn mc_estimate_matches_enumeration() {
    let z = max_z_score(20, 50_000);
    assert!(z <= 3.0, "worst deviation {z:.2} standard errors");
}

pub fn complete_prefix_is_exact() {
    let inst = instance(99);
    let ctx =
        RewardContext::new(&inst.df, &inst.dg, &inst.emb, FeatureNormalizer::default(), ScoreScale::Binary).unwrap();
    let noise = [0.3, -0.2];
    for prefix in [&[1, 2, 2][..], &[2, END_ID], &[END_ID]] {
        let (mean, var) = enumerate_complete(&ctx, prefix);
        let est = ctx.mc_reward(&inst.gen, prefix, 1, &noise, 5, &mut Rng::new(1)).unwrap();
        assert_eq!(est, mean);
        assert_eq!(var, 0.0);
    }
}

fn enumerate_complete(ctx: &RewardContext<'_>, prefix: &[usize]) -> (f64, f64) {
    let content: Vec<usize> = prefix.iter().copied().filter(|&a| a != END_ID).collect();
    (ctx.seq_reward(&TokenSeq::padded(&content, T).unwrap(), 1).unwrap(), 0.0)
}

pub const CASES: &[(&str, fn())] = &[
    ("mc_estimate_matches_enumeration", mc_estimate_matches_enumeration),
    ("complete_prefix_is_exact", complete_prefix_is_exact),
];
