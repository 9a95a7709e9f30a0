//! Randomized invariants of the tensor engine, model, trainer and metrics.

use dpage_core::metrics::{
    confusion_matrix, distinct_n, jeffreys_divergence, kl_divergence, multi_ref_bleu, word_distribution,
    WordDistribution, KL_EPSILON,
};
use dpage_core::model::probabilities;
use dpage_core::tensor::softmax;
use dpage_core::trainer::min_loss_assign;
use dpage_core::vocab::BOS;
use dpage_core::{Conditioning, Graph, Mode, ModelConfig, Seq2Seq, Tensor};
use proptest::prelude::*;

fn vec_in(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn toy(mode: Mode, k: usize, seed: u64) -> Seq2Seq {
    let mut cfg = ModelConfig::new(mode, 7, k, seed);
    cfg.embed_dim = 3;
    cfg.hidden_dim = 4;
    cfg.pattern_dim = 2;
    Seq2Seq::new(cfg).unwrap()
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..8)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn corpus(lines: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(sentence(), lines)
}

fn distribution() -> impl Strategy<Value = WordDistribution> {
    prop::collection::vec(0.01f64..1.0, 4).prop_map(|w| {
        let total: f64 = w.iter().sum();
        ["a", "b", "c", "d"].iter().zip(w).map(|(k, v)| (k.to_string(), v / total)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_normalized_and_shift_invariant(x in vec_in(1..12), c in -50.0f64..50.0) {
        let p = softmax(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = Tensor::matrix(m, k, a.clone()).unwrap().matmul(&Tensor::matrix(k, n, b.clone()).unwrap()).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                prop_assert!((got.data()[i * n + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_split_round_trip(a in vec_in(0..6), b in vec_in(0..6)) {
        let (ta, tb) = (Tensor::vector(a.clone()), Tensor::vector(b.clone()));
        let joined = Tensor::concat(&[&ta, &tb], 0).unwrap();
        let parts = joined.split(0, &[a.len(), b.len()]).unwrap();
        prop_assert_eq!(parts[0].data(), &a[..]);
        prop_assert_eq!(parts[1].data(), &b[..]);
    }

    #[test]
    fn attention_and_output_are_distributions(seed in 0u64..1000, src in prop::collection::vec(3usize..7, 1..6)) {
        let m = toy(Mode::Dpage, 2, seed);
        let mut g = Graph::new(m.params());
        let enc = m.encode(&mut g, &src).unwrap();
        prop_assert_eq!(enc.states.len(), src.len());
        let pattern = m.pattern_input(&mut g, &Conditioning::Pattern(1)).unwrap();
        let mut state = m.initial_state(&mut g, &enc, &Conditioning::Pattern(1)).unwrap();
        let mut prev = BOS;
        for step in 0..3 {
            let h = state.layers.last().unwrap().0;
            let att = m.attend(&mut g, h, &enc).unwrap();
            let w = g.value(att.weights).data();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let out = m.decode_step(&mut g, &state, prev, pattern, &enc).unwrap();
            let p = probabilities(g.value(out.logits));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            state = out.state;
            prev = 4 + step;
        }
    }

    #[test]
    fn loss_is_deterministic_and_positive(seed in 0u64..1000, tgt in prop::collection::vec(3usize..7, 1..5)) {
        let m = toy(Mode::Dpage, 3, seed);
        let a = m.loss(&[4, 5], &tgt, &Conditioning::Pattern(2)).unwrap();
        let b = m.loss(&[4, 5], &tgt, &Conditioning::Pattern(2)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert!(a > 0.0);
    }

    #[test]
    fn assignment_is_a_minimum(seed in 0u64..1000, tgt in prop::collection::vec(3usize..7, 1..5)) {
        let m = toy(Mode::Dpage, 4, seed);
        let (k, loss) = min_loss_assign(&m, &[5, 6, 4], &tgt).unwrap();
        for j in 0..4 {
            let lj = m.loss(&[5, 6, 4], &tgt, &Conditioning::Pattern(j)).unwrap();
            prop_assert!(loss <= lj);
            if j < k {
                prop_assert!(lj > loss);
            }
        }
    }

    #[test]
    fn bleu_self_identity(c in corpus(1..6)) {
        let refs: Vec<Vec<Vec<String>>> = c.iter().map(|l| vec![l.clone()]).collect();
        prop_assert_eq!(multi_ref_bleu(&c, &refs, 4).unwrap(), 1.0);
    }

    #[test]
    fn distinct_ignores_line_order(c in corpus(1..8), n in 1usize..3) {
        let mut rev = c.clone();
        rev.reverse();
        match (distinct_n(&c, n), distinct_n(&rev, n)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(a.is_err() && b.is_err()),
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_on_equal(p in distribution(), q in distribution()) {
        prop_assert!(kl_divergence(&p, &q, KL_EPSILON) >= 0.0);
        prop_assert!(kl_divergence(&p, &p, KL_EPSILON).abs() < 1e-9);
        if p != q {
            prop_assert!(kl_divergence(&p, &q, KL_EPSILON) > 0.0);
        }
    }

    #[test]
    fn jd_permutation_invariant(ds in prop::collection::vec(distribution(), 2..5)) {
        let jd = jeffreys_divergence(&ds, KL_EPSILON).unwrap();
        let mut rev = ds.clone();
        rev.reverse();
        prop_assert!(jd >= 0.0);
        prop_assert!((jd - jeffreys_divergence(&rev, KL_EPSILON).unwrap()).abs() < 1e-12);
        let copies = vec![ds[0].clone(); ds.len()];
        prop_assert!(jeffreys_divergence(&copies, KL_EPSILON).unwrap().abs() < 1e-9);
    }

    #[test]
    fn distribution_normalized(c in corpus(1..6)) {
        let d = word_distribution(&c).unwrap();
        prop_assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_entries_are_independent(
        outs in prop::collection::vec(corpus(4), 3),
        refs in prop::collection::vec(corpus(4), 3),
        other in corpus(4),
    ) {
        let m = confusion_matrix(&outs, &refs).unwrap();
        prop_assert!(m.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        // replacing decoder 2 and reference set 2 leaves entry (0, 1) unchanged
        let mut outs2 = outs.clone();
        let mut refs2 = refs.clone();
        outs2[2] = other.clone();
        refs2[2] = other;
        let m2 = confusion_matrix(&outs2, &refs2).unwrap();
        prop_assert_eq!(m[0][1], m2[0][1]);
        prop_assert_eq!(m[1][0], m2[1][0]);
        let single = confusion_matrix(&outs[..1], &refs[1..2]).unwrap();
        prop_assert_eq!(m[0][1], single[0][0]);
    }
}
