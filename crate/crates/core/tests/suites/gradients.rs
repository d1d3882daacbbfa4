//! Reverse-mode gradients against central finite differences.

use fraudgan_core::corpus::{EmbeddingTable, TokenSeq};
use fraudgan_core::discriminator::{DiscConfig, DiscKind, Discriminator, Example, FeatureFlags, BOT, HUMAN};
use fraudgan_core::generator::{Generator, GeneratorConfig, Reward, SampledSequence};
use fraudgan_core::numeric::{ParamSet, Rng, Tape, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares `analytic` with central differences of `f` over every entry of
/// every parameter in `set`.
fn compare_fd(set: &mut ParamSet, analytic: &[f64], mut f: impl FnMut(&ParamSet) -> f64, what: &str) {
    let names = set.names().to_vec();
    let mut k = 0;
    let mut worst = 0.0f64;
    for name in names {
        for j in 0..set.expect(&name).len() {
            let orig = set.expect(&name).data()[j];
            set.get_mut(&name).unwrap().data_mut()[j] = orig + EPS;
            let up = f(set);
            set.get_mut(&name).unwrap().data_mut()[j] = orig - EPS;
            let down = f(set);
            set.get_mut(&name).unwrap().data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let e = rel_err(analytic[k], numeric);
            worst = worst.max(e);
            assert!(
                e <= TOL,
                "{what}: {name}[{j}] autodiff {} vs numeric {numeric} (rel {e:.2e})",
                analytic[k]
            );
            k += 1;
        }
    }
    assert_eq!(k, analytic.len());
    assert!(worst.is_finite());
}

/// Builds a scalar loss on a fresh tape from `set`, checks autodiff
/// against finite differences.
fn check_tape(mut set: ParamSet, build: impl Fn(&mut Tape, &ParamSet) -> Var, what: &str) {
    let mut tape = Tape::new();
    let loss = build(&mut tape, &set);
    assert_eq!(tape.shape(loss), (1, 1), "{what}: loss must be scalar");
    set.zero_grads();
    tape.backward(loss).unwrap().accumulate_into(&mut set);
    let analytic = set.flat_grads();
    compare_fd(
        &mut set,
        &analytic,
        |s| {
            let mut t = Tape::new();
            let l = build(&mut t, s);
            t.scalar(l)
        },
        what,
    );
}

fn random_set(shapes: &[(&str, usize, usize)], seed: u64) -> ParamSet {
    let mut rng = Rng::new(seed);
    let mut set = ParamSet::new();
    for &(name, r, c) in shapes {
        let data = (0..r * c).map(|_| rng.normal()).collect();
        set.insert(name, Tensor::matrix(r, c, data).unwrap()).unwrap();
    }
    set
}

/// Fixed random projection so every output entry reaches the loss with a
/// distinct weight.
fn project(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(v);
    let mut rng = Rng::new(seed);
    let w: Vec<f64> = (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    tape.weighted_sum(v, &w)
}

fn p(tape: &mut Tape, set: &ParamSet, name: &str) -> Var {
    tape.param(set, name).unwrap()
}

pub fn matmul() {
    let set = random_set(&[("a", 3, 4), ("b", 4, 2)], 1);
    check_tape(
        set,
        |t, s| {
            let (a, b) = (p(t, s, "a"), p(t, s, "b"));
            let y = t.matmul(a, b);
            project(t, y, 10)
        },
        "matmul",
    );
}

pub fn elementwise_binary() {
    let set = random_set(&[("a", 2, 3), ("b", 2, 3), ("r", 1, 3)], 2);
    check_tape(
        set,
        |t, s| {
            let (a, b, r) = (p(t, s, "a"), p(t, s, "b"), p(t, s, "r"));
            let x = t.add(a, b);
            let y = t.sub(x, b);
            let y = t.mul(y, b);
            let z = t.add_row(y, r);
            let z = t.scale(z, -1.7);
            project(t, z, 11)
        },
        "add/sub/mul/add_row/scale",
    );
}

pub fn activations() {
    let set = random_set(&[("a", 3, 3)], 3);
    for (i, what) in ["sigmoid", "tanh", "relu"].into_iter().enumerate() {
        check_tape(
            set.clone(),
            |t, s| {
                let a = p(t, s, "a");
                let y = match i {
                    0 => t.sigmoid(a),
                    1 => t.tanh(a),
                    _ => t.relu(a),
                };
                project(t, y, 12)
            },
            what,
        );
    }
}

pub fn concatenation_and_slicing() {
    let set = random_set(&[("a", 3, 2), ("b", 3, 3)], 4);
    check_tape(
        set,
        |t, s| {
            let (a, b) = (p(t, s, "a"), p(t, s, "b"));
            let c = t.concat_cols(&[a, b, a]);
            let d = t.slice_cols(c, 1, 6);
            let e = t.slice_rows(d, 1, 3);
            project(t, e, 13)
        },
        "concat/slice",
    );
}

pub fn gather_unfold_and_max_pool() {
    // Convolution window: embedding lookup, sliding windows, filter
    // matmul, ReLU, max over positions.
    let mut set = random_set(&[("emb", 6, 3), ("k", 6, 4), ("u", 1, 4)], 5);
    // Spread the lookup rows so the max-pool argmax is stable under EPS.
    for (i, x) in set.get_mut("emb").unwrap().data_mut().iter_mut().enumerate() {
        *x += 0.37 * i as f64;
    }
    check_tape(
        set,
        |t, s| {
            let (emb, k, u) = (p(t, s, "emb"), p(t, s, "k"), p(t, s, "u"));
            let x = t.gather_rows(emb, &[1, 4, 2, 2, 0, 5, 3, 1]);
            let w = t.unfold(x, 4, 2);
            let h = t.matmul(w, k);
            let h = t.add_row(h, u);
            let h = t.relu(h);
            let m = t.segment_max(h, 3);
            project(t, m, 14)
        },
        "convolution window",
    );
}

pub fn softmax_heads_and_cross_entropy() {
    let set = random_set(&[("x", 4, 5)], 6);
    check_tape(
        set.clone(),
        |t, s| {
            let x = p(t, s, "x");
            let y = t.softmax(x);
            project(t, y, 15)
        },
        "softmax",
    );
    check_tape(
        set,
        |t, s| {
            let x = p(t, s, "x");
            let l = t.log_softmax(x);
            let picked = t.pick(l, &[0, 4, 2, 2]);
            let nll = t.mean(picked);
            let total = t.sum(l);
            let total = t.scale(total, 0.01);
            t.sub(total, nll)
        },
        "log_softmax/pick/mean/sum",
    );
}

pub fn recurrent_cell() {
    // One LSTM step written out on the tape.
    let set = random_set(&[("x", 2, 3), ("h", 2, 4), ("c", 2, 4), ("wx", 3, 16), ("wh", 4, 16), ("b", 1, 16)], 7);
    check_tape(
        set,
        |t, s| {
            let (x, h, c) = (p(t, s, "x"), p(t, s, "h"), p(t, s, "c"));
            let (wx, wh, b) = (p(t, s, "wx"), p(t, s, "wh"), p(t, s, "b"));
            let zx = t.matmul(x, wx);
            let zh = t.matmul(h, wh);
            let z = t.add(zx, zh);
            let z = t.add_row(z, b);
            let gi = t.slice_cols(z, 0, 4);
            let i = t.sigmoid(gi);
            let gf = t.slice_cols(z, 4, 8);
            let f = t.sigmoid(gf);
            let go = t.slice_cols(z, 8, 12);
            let o = t.sigmoid(go);
            let gg = t.slice_cols(z, 12, 16);
            let g = t.tanh(gg);
            let fc = t.mul(f, c);
            let ig = t.mul(i, g);
            let c2 = t.add(fc, ig);
            let tc = t.tanh(c2);
            let h2 = t.mul(o, tc);
            let both = t.concat_cols(&[h2, c2]);
            project(t, both, 16)
        },
        "LSTM cell",
    );
}

fn df_config() -> DiscConfig {
    DiscConfig {
        kind: DiscKind::Df,
        embed_dim: 4,
        windows: vec![1, 2, 3],
        filters: vec![3, 2, 2],
        categories: 5,
        max_len: 7,
        features: FeatureFlags::default(),
    }
}

pub fn full_df_loss() {
    let emb = EmbeddingTable::random(12, 4, &mut Rng::new(20)).unwrap();
    let batch: Vec<Example> = [
        (&[2usize, 3, 4, 5][..], 0, HUMAN),
        (&[6, 7], 3, HUMAN),
        (&[8, 9, 10, 11, 2, 3], 4, BOT),
        (&[5, 5, 7], 1, BOT),
        (&[11], 2, BOT),
    ]
    .iter()
    .map(|&(content, category, label)| Example {
        seq: TokenSeq::padded(content, 7).unwrap(),
        category,
        features: None,
        label,
    })
    .collect();
    let refs: Vec<&Example> = batch.iter().collect();
    let mut d = Discriminator::new(df_config(), &mut Rng::new(21)).unwrap();
    d.params_mut().zero_grads();
    d.accumulate_loss_gradient(&emb, &refs, 2, true, 1.0, 0.7).unwrap();
    let analytic = d.params().flat_grads();
    let mut set = d.params().clone();
    compare_fd(
        &mut set,
        &analytic,
        |s| {
            let mut probe = Discriminator::from_params(df_config(), s.clone()).unwrap();
            probe.accumulate_loss_gradient(&emb, &refs, 2, true, 1.0, 0.7).unwrap().loss
        },
        "D_f loss",
    );
}

fn gen_config() -> GeneratorConfig {
    GeneratorConfig {
        vocab_size: 6,
        embed_dim: 3,
        hidden_dim: 4,
        noise_dim: 2,
        score_dim: 2,
        categories: 3,
        max_len: 5,
        score_in_g: true,
    }
}

pub fn full_policy_surrogate() {
    let mut g = Generator::new(gen_config(), &mut Rng::new(30)).unwrap();
    let mut rng = Rng::new(31);
    let mut batch: Vec<(SampledSequence, Reward)> = Vec::new();
    for c in 0..3 {
        for s in g.sample(c, 2, &mut rng).unwrap() {
            let n = s.seq.n_actions();
            let r: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 2.0)).collect();
            batch.push((s, Reward::PerStep(r)));
        }
    }
    g.params_mut().zero_grads();
    g.accumulate_policy_gradient(&batch).unwrap();
    let analytic = g.params().flat_grads();
    let mut set = g.params().clone();
    compare_fd(
        &mut set,
        &analytic,
        |s| {
            let mut probe = Generator::from_params(gen_config(), s.clone()).unwrap();
            probe.accumulate_policy_gradient(&batch).unwrap()
        },
        "policy surrogate",
    );
}

pub const CASES: &[(&str, fn())] = &[
    ("matmul", matmul),
    ("elementwise_binary", elementwise_binary),
    ("activations", activations),
    ("concatenation_and_slicing", concatenation_and_slicing),
    ("gather_unfold_and_max_pool", gather_unfold_and_max_pool),
    ("softmax_heads_and_cross_entropy", softmax_heads_and_cross_entropy),
    ("recurrent_cell", recurrent_cell),
    ("full_df_loss", full_df_loss),
    ("full_policy_surrogate", full_policy_surrogate),
];
