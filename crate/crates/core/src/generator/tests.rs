use super::*;
use crate::corpus::{synth_corpus, ScoreScale, SynthSpec};
use crate::numeric::{Optimizer, Rng};

pub(crate) fn tiny_config(vocab: usize, t: usize) -> GeneratorConfig {
    GeneratorConfig {
        vocab_size: vocab,
        embed_dim: 3,
        hidden_dim: 4,
        noise_dim: 2,
        score_dim: 2,
        categories: 2,
        max_len: t,
        score_in_g: true,
    }
}

/// Every action sequence of a model with vocabulary `v` and length `t`.
pub(crate) fn enumerate_sequences(v: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![];
    let mut stack = vec![vec![]];
    while let Some(prefix) = stack.pop() {
        for a in 0..v {
            let mut s: Vec<usize> = prefix.clone();
            s.push(a);
            if a == END_ID || s.len() == t {
                out.push(s);
            } else {
                stack.push(s);
            }
        }
    }
    out.sort();
    out
}

fn seq_from_actions(actions: &[usize], t: usize) -> TokenSeq {
    let content: Vec<usize> = actions.iter().copied().filter(|&a| a != END_ID).collect();
    TokenSeq::padded(&content, t).unwrap()
}

#[test]
fn rejects_out_of_range_score() {
    let g = Generator::new(tiny_config(5, 4), &mut Rng::new(0)).unwrap();
    assert!(matches!(g.sample(2, 1, &mut Rng::new(0)), Err(crate::Error::Argument(_))));
}

#[test]
fn sampling_is_deterministic() {
    let g = Generator::new(tiny_config(6, 8), &mut Rng::new(1)).unwrap();
    let a = g.sample(1, 20, &mut Rng::new(5)).unwrap();
    let b = g.sample(1, 20, &mut Rng::new(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stepwise_logprob_matches_rescoring() {
    let g = Generator::new(tiny_config(7, 10), &mut Rng::new(2)).unwrap();
    for s in g.sample(0, 50, &mut Rng::new(3)).unwrap() {
        assert_eq!(s.stepwise_logprob.len(), s.seq.n_actions());
        assert!(s.stepwise_logprob.iter().all(|&l| l <= 0.0));
        let again: f64 = g.log_prob(&s.seq, 0, &s.noise).unwrap().iter().sum();
        assert!((again - s.log_prob()).abs() < 1e-9);
    }
}

#[test]
fn next_token_probs_sum_to_one() {
    let g = Generator::new(tiny_config(7, 10), &mut Rng::new(2)).unwrap();
    let p = g.next_token_probs(&[2, 3], 1, &[0.3, -0.2]).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn dominant_logit_is_sampled() {
    let mut g = Generator::new(tiny_config(6, 1), &mut Rng::new(4)).unwrap();
    let p = g.params_mut();
    p.get_mut("out.w").unwrap().data_mut().fill(0.0);
    p.get_mut("out.b").unwrap().data_mut()[3] = 10.0;
    let draws = g.sample(0, 10_000, &mut Rng::new(8)).unwrap();
    let hits = draws.iter().filter(|s| s.seq.content() == [3]).count();
    assert!(hits as f64 / 10_000.0 >= 0.99, "{hits}");
}

#[test]
fn first_step_frequencies_match_softmax() {
    let mut g = Generator::new(tiny_config(5, 1), &mut Rng::new(6)).unwrap();
    // Make the first step noise-independent so one softmax describes it.
    g.params_mut().get_mut("init.w").unwrap().data_mut().fill(0.0);
    g.params_mut().get_mut("out.b").unwrap().data_mut().copy_from_slice(&[0.2, -0.5, 0.9, 0.0, 0.4]);
    let exact = g.next_token_probs(&[], 1, &[0.0, 0.0]).unwrap();
    let n = 100_000;
    let mut counts = [0usize; 5];
    for s in g.sample(1, n, &mut Rng::new(9)).unwrap() {
        counts[s.actions()[0]] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn rollout_of_almost_full_prefix() {
    let g = Generator::new(tiny_config(6, 5), &mut Rng::new(1)).unwrap();
    let prefix = [2, 3, 4, 5];
    for c in g.rollout_complete(&prefix, 0, None, 30, &mut Rng::new(2)).unwrap() {
        assert_eq!(&c.content()[..4], &prefix);
        assert!(c.true_length() >= 4);
    }
    assert!(matches!(
        g.rollout_complete(&[2, 3, 4, 5, 2], 0, None, 1, &mut Rng::new(2)),
        Err(crate::Error::Usage(_))
    ));
}

#[test]
fn empty_prefix_rollout_equals_sampling() {
    let g = Generator::new(tiny_config(6, 6), &mut Rng::new(1)).unwrap();
    let sampled: Vec<TokenSeq> = g
        .sample(1, 25, &mut Rng::new(77))
        .unwrap()
        .into_iter()
        .map(|s| s.seq)
        .collect();
    let rolled = g.rollout_complete(&[], 1, None, 25, &mut Rng::new(77)).unwrap();
    assert_eq!(sampled, rolled);
    assert_eq!(rolled, g.rollout_complete(&[], 1, None, 25, &mut Rng::new(77)).unwrap());
}

#[test]
fn rollout_distribution_matches_enumeration() {
    let g = Generator::new(tiny_config(3, 3), &mut Rng::new(12)).unwrap();
    let noise = [0.4, -1.1];
    let prefix = [2usize];
    // Exact conditional distribution of completions.
    let mut exact: Vec<(Vec<usize>, f64)> = vec![];
    let p2 = g.next_token_probs(&prefix, 1, &noise).unwrap();
    for a2 in 0..3 {
        if a2 == END_ID {
            exact.push((vec![2], p2[0]));
            continue;
        }
        let p3 = g.next_token_probs(&[2, a2], 1, &noise).unwrap();
        for a3 in 0..3 {
            let content = if a3 == END_ID { vec![2, a2] } else { vec![2, a2, a3] };
            exact.push((content, p2[a2] * p3[a3]));
        }
    }
    let n = 50_000;
    let draws = g
        .rollout_complete(&prefix, 1, Some(&noise), n, &mut Rng::new(4))
        .unwrap();
    let mut tv = 0.0;
    for (content, p) in &exact {
        let f = draws.iter().filter(|s| s.content() == content.as_slice()).count() as f64 / n as f64;
        tv += (f - p).abs();
    }
    assert!(tv / 2.0 < 0.02, "total variation {}", tv / 2.0);
}

#[test]
fn sampler_rollouts_cover_incomplete_prefixes() {
    let g = Generator::new(tiny_config(6, 6), &mut Rng::new(3)).unwrap();
    let s = g.sampler();
    for seq in g.sample(0, 10, &mut Rng::new(1)).unwrap() {
        let r = s.rollouts(&seq, 3, &mut Rng::new(2));
        let acts = seq.actions();
        assert_eq!(r.len(), acts.len() - 1);
        for (t, comps) in r.iter().enumerate() {
            assert_eq!(comps.len(), 3);
            for c in comps {
                assert_eq!(&c.content()[..t + 1], &acts[..t + 1]);
            }
        }
    }
}

#[test]
fn mle_learns_a_repeated_sequence() {
    let mut g = Generator::new(tiny_config(5, 4), &mut Rng::new(0)).unwrap();
    let seq = TokenSeq::padded(&[2, 3], 4).unwrap();
    let data = vec![(seq, 0usize); 32];
    let mut opt = Optimizer::adam(0.05);
    let hist = g.mle_pretrain(&data, 50, 16, &mut opt, &mut Rng::new(1)).unwrap();
    assert_eq!(hist.len(), 50);
    assert!(hist[49] <= hist[0]);
    let nll = g.mean_nll(&data, &mut Rng::new(2)).unwrap();
    assert!(nll < 0.05, "nll {nll}");
}

#[test]
fn mle_zero_epochs_and_empty_data() {
    let mut g = Generator::new(tiny_config(5, 4), &mut Rng::new(0)).unwrap();
    let before = g.clone();
    let data = vec![(TokenSeq::padded(&[2], 4).unwrap(), 1usize)];
    let mut opt = Optimizer::adam(0.05);
    assert!(g.mle_pretrain(&data, 0, 4, &mut opt, &mut Rng::new(1)).unwrap().is_empty());
    assert_eq!(g.params(), before.params());
    assert!(matches!(
        g.mle_pretrain(&[], 1, 4, &mut opt, &mut Rng::new(1)),
        Err(crate::Error::Usage(_))
    ));
}

#[test]
fn pretraining_learns_score_conditioning() {
    let spec = SynthSpec {
        size: 400,
        vocab_size: 60,
        min_len: 4,
        max_len: 8,
        rho: 1.0,
        scale: ScoreScale::Binary,
        fraud_fraction: 0.5,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec, 3).unwrap();
    let vocab = crate::corpus::Vocab::from_tokens((0..60).map(crate::corpus::token_name)).unwrap();
    let data: Vec<(TokenSeq, usize)> = corpus
        .iter()
        .map(|r| {
            let seq = crate::corpus::encode(r, &vocab, 10).unwrap();
            (seq, ScoreScale::Binary.category(r.score).unwrap())
        })
        .collect();
    let cfg = GeneratorConfig {
        vocab_size: vocab.len(),
        embed_dim: 16,
        hidden_dim: 16,
        noise_dim: 4,
        score_dim: 4,
        categories: 2,
        max_len: 10,
        score_in_g: true,
    };
    let mut g = Generator::new(cfg, &mut Rng::new(5)).unwrap();
    let mut opt = Optimizer::adam(0.02);
    let hist = g.mle_pretrain(&data, 15, 32, &mut opt, &mut Rng::new(6)).unwrap();
    assert!(hist.last().unwrap() < &hist[0]);
    let swapped: Vec<(TokenSeq, usize)> = data.iter().map(|(s, c)| (s.clone(), 1 - c)).collect();
    let matched = g.mean_nll(&data, &mut Rng::new(7)).unwrap();
    let mismatched = g.mean_nll(&swapped, &mut Rng::new(7)).unwrap();
    assert!(matched < mismatched, "{matched} vs {mismatched}");
}

#[test]
fn zero_rewards_leave_params_unchanged() {
    let mut g = Generator::new(tiny_config(5, 4), &mut Rng::new(0)).unwrap();
    let batch: Vec<(SampledSequence, Reward)> = g
        .sample(0, 4, &mut Rng::new(1))
        .unwrap()
        .into_iter()
        .map(|s| (s, Reward::Sequence(0.0)))
        .collect();
    let before = g.params().clone();
    g.policy_update(&batch, 1.0).unwrap();
    assert_eq!(g.params(), &before);
}

#[test]
fn positive_reward_raises_log_prob() {
    let mut g = Generator::new(tiny_config(4, 2), &mut Rng::new(10)).unwrap();
    let s = g.sample(1, 1, &mut Rng::new(2)).unwrap().remove(0);
    let before = s.log_prob();
    g.policy_update(&[(s.clone(), Reward::Sequence(1.0))], 0.1).unwrap();
    let after: f64 = g.log_prob(&s.seq, 1, &s.noise).unwrap().iter().sum();
    assert!(after > before, "{after} <= {before}");
}

#[test]
fn rejects_bad_rewards() {
    let mut g = Generator::new(tiny_config(4, 3), &mut Rng::new(10)).unwrap();
    let s = g.sample(1, 1, &mut Rng::new(2)).unwrap().remove(0);
    assert!(matches!(
        g.policy_update(&[(s.clone(), Reward::Sequence(f64::NAN))], 0.1),
        Err(crate::Error::Numeric(_))
    ));
    assert!(matches!(g.policy_update(&[], 0.1), Err(crate::Error::Usage(_))));
}

#[test]
fn doubled_rewards_double_the_gradient() {
    let mut g = Generator::new(tiny_config(5, 5), &mut Rng::new(3)).unwrap();
    let samples = g.sample(0, 6, &mut Rng::new(4)).unwrap();
    let grad = |g: &mut Generator, k: f64| {
        let batch: Vec<_> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), Reward::Sequence(k * (i as f64 - 2.5))))
            .collect();
        g.params_mut().zero_grads();
        g.accumulate_policy_gradient(&batch).unwrap();
        g.params().flat_grads()
    };
    let g1 = grad(&mut g, 1.0);
    let g2 = grad(&mut g, 2.0);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

/// Expected reward over the whole sequence space at fixed noise.
fn expected_reward(g: &Generator, seqs: &[Vec<usize>], reward: &[f64], noise: &[f64]) -> f64 {
    let s = g.sampler();
    seqs.iter()
        .zip(reward)
        .map(|(a, r)| s.score_actions(a, 0, noise).iter().sum::<f64>().exp() * r)
        .sum()
}

#[test]
fn surrogate_gradient_matches_expected_reward_derivative() {
    let cfg = GeneratorConfig {
        vocab_size: 3,
        embed_dim: 1,
        hidden_dim: 1,
        noise_dim: 1,
        score_dim: 1,
        categories: 2,
        max_len: 2,
        score_in_g: true,
    };
    let mut g = Generator::new(cfg, &mut Rng::new(21)).unwrap();
    let noise = [0.7];
    let seqs = enumerate_sequences(3, 2);
    assert_eq!(seqs.len(), 7);
    let reward: Vec<f64> = (0..seqs.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
    let sampler_probs: Vec<f64> = {
        let s = g.sampler();
        seqs.iter().map(|a| s.score_actions(a, 0, &noise).iter().sum::<f64>().exp()).collect()
    };
    assert!((sampler_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // sum_x p(x) R(x) grad log p(x) through the surrogate, weights detached.
    let n = seqs.len() as f64;
    let batch: Vec<(SampledSequence, Reward)> = seqs
        .iter()
        .zip(&reward)
        .zip(&sampler_probs)
        .map(|((a, r), p)| {
            let seq = seq_from_actions(a, 2);
            (
                SampledSequence {
                    stepwise_logprob: vec![0.0; seq.n_actions()],
                    seq,
                    category: 0,
                    noise: noise.to_vec(),
                },
                Reward::Sequence(n * p * r),
            )
        })
        .collect();
    g.params_mut().zero_grads();
    g.accumulate_policy_gradient(&batch).unwrap();
    let analytic = g.params().flat_grads();

    let eps = 1e-5;
    let mut k = 0;
    let names: Vec<String> = g.params().names().to_vec();
    for name in names {
        let len = g.params().expect(&name).len();
        for j in 0..len {
            let orig = g.params().expect(&name).data()[j];
            g.params_mut().get_mut(&name).unwrap().data_mut()[j] = orig + eps;
            let up = expected_reward(&g, &seqs, &reward, &noise);
            g.params_mut().get_mut(&name).unwrap().data_mut()[j] = orig - eps;
            let down = expected_reward(&g, &seqs, &reward, &noise);
            g.params_mut().get_mut(&name).unwrap().data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = analytic[k];
            let rel = (a - fd).abs() / (a.abs().max(fd.abs()).max(1e-6));
            assert!(rel < 1e-3, "{name}[{j}]: analytic {a} vs fd {fd}");
            k += 1;
        }
    }
}
