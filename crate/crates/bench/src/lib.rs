//! Desk-sized model fixtures shared by the benchmarks.

use fraudgan_core::corpus::{EmbeddingTable, TokenSeq};
use fraudgan_core::discriminator::{DiscConfig, DiscKind, Discriminator, FeatureFlags};
use fraudgan_core::generator::{Generator, GeneratorConfig};
use fraudgan_core::numeric::Rng;

pub const VOCAB: usize = 200;
pub const T: usize = 32;
pub const CATEGORIES: usize = 5;

pub struct Fixture {
    pub gen: Generator,
    pub df: Discriminator,
    pub dg: Discriminator,
    pub emb: EmbeddingTable,
}

fn disc(kind: DiscKind, rng: &mut Rng) -> Discriminator {
    let features = FeatureFlags {
        score: kind == DiscKind::Dg,
        ..FeatureFlags::default()
    };
    let cfg = DiscConfig {
        kind,
        embed_dim: 50,
        windows: vec![1, 2, 3],
        filters: vec![16, 16, 16],
        categories: CATEGORIES,
        max_len: T,
        features,
    };
    Discriminator::new(cfg, rng).expect("valid config")
}

/// Models with the desk preset's shapes and random weights.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = Rng::new(seed);
    let gen = Generator::new(
        GeneratorConfig {
            vocab_size: VOCAB,
            embed_dim: 32,
            hidden_dim: 32,
            noise_dim: 16,
            score_dim: 8,
            categories: CATEGORIES,
            max_len: T,
            score_in_g: true,
        },
        &mut rng,
    )
    .expect("valid config");
    let df = disc(DiscKind::Df, &mut rng);
    let dg = disc(DiscKind::Dg, &mut rng);
    let emb = EmbeddingTable::random(VOCAB, 50, &mut rng).expect("valid table");
    Fixture { gen, df, dg, emb }
}

/// Random full-length-ish sequences over the non-special tokens.
pub fn sequences(n: usize, seed: u64) -> Vec<TokenSeq> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let len = 8 + rng.below(16);
            let ids: Vec<usize> = (0..len).map(|_| 2 + rng.below(VOCAB - 2)).collect();
            TokenSeq::padded(&ids, T).expect("fits")
        })
        .collect()
}
