use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fraudgan_bench::{fixture, sequences, CATEGORIES};
use fraudgan_core::corpus::{FeatureNormalizer, ScoreScale};
use fraudgan_core::discriminator::{DiscRunner, Example, BOT, HUMAN};
use fraudgan_core::eval::{auc, average_precision, Prediction};
use fraudgan_core::generator::Reward;
use fraudgan_core::numeric::{ParamSet, Rng, Tape, Tensor};
use fraudgan_core::trainer::RewardContext;

fn tape(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let mut set = ParamSet::new();
    for name in ["a", "b"] {
        let data = (0..64 * 64).map(|_| rng.normal()).collect();
        set.insert(name, Tensor::matrix(64, 64, data).unwrap()).unwrap();
    }
    c.bench_function("tape/matmul_tanh_backward_64", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let (x, y) = (t.param(&set, "a").unwrap(), t.param(&set, "b").unwrap());
            let z = t.matmul(x, y);
            let z = t.tanh(z);
            let l = t.mean(z);
            black_box(t.backward(l).unwrap());
        })
    });
}

fn generator(c: &mut Criterion) {
    let f = fixture(2);
    let sampler = f.gen.sampler();
    let mut rng = Rng::new(3);
    c.bench_function("generator/sample_one", |b| b.iter(|| black_box(sampler.sample_one(2, &mut rng))));

    let mut gen = f.gen.clone();
    let batch: Vec<_> = (0..16)
        .map(|i| (sampler.sample_one(i % CATEGORIES, &mut rng), Reward::Sequence(0.5)))
        .collect();
    c.bench_function("generator/policy_gradient_batch16", |b| {
        b.iter(|| {
            gen.params_mut().zero_grads();
            black_box(gen.accumulate_policy_gradient(&batch).unwrap())
        })
    });
}

fn discriminator(c: &mut Criterion) {
    let f = fixture(4);
    let seqs = sequences(64, 5);
    let runner = DiscRunner::new(&f.dg, &f.emb).unwrap();
    let feats = [0.2, 0.5, 1.0, 0.0];
    c.bench_function("discriminator/dg_forward", |b| {
        b.iter(|| black_box(runner.forward(&seqs[0], 3, Some(&feats)).unwrap()))
    });

    let batch: Vec<Example> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| Example {
            seq: s.clone(),
            category: i % CATEGORIES,
            features: None,
            label: if i < 32 { HUMAN } else { BOT },
        })
        .collect();
    let refs: Vec<&Example> = batch.iter().collect();
    let mut df = f.df.clone();
    c.bench_function("discriminator/df_loss_gradient_batch64", |b| {
        b.iter(|| {
            df.params_mut().zero_grads();
            black_box(df.accumulate_loss_gradient(&f.emb, &refs, 32, true, 1.0, 1.0).unwrap())
        })
    });
}

fn rewards(c: &mut Criterion) {
    let f = fixture(6);
    let ctx = RewardContext::new(&f.df, &f.dg, &f.emb, FeatureNormalizer::default(), ScoreScale::Five).unwrap();
    let sampler = f.gen.sampler();
    let mut rng = Rng::new(7);
    let sample = sampler.sample_one(4, &mut rng);
    let mut g = c.benchmark_group("reward");
    g.sample_size(20);
    g.bench_function("step_rewards_4_rollouts", |b| {
        b.iter(|| black_box(ctx.step_rewards(&sampler, &sample, 4, &mut rng).unwrap()))
    });
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = Rng::new(8);
    let preds: Vec<Prediction> = (0..10_000)
        .map(|_| Prediction::new(rng.uniform(), rng.uniform() < 0.3))
        .collect();
    c.bench_function("metrics/auc_10k", |b| b.iter(|| black_box(auc(&preds).unwrap())));
    c.bench_function("metrics/average_precision_10k", |b| {
        b.iter(|| black_box(average_precision(&preds).unwrap()))
    });
}

criterion_group!(benches, tape, generator, discriminator, rewards, metrics);
criterion_main!(benches);
