//! Fixtures shared by the benchmarks.

use dpage_core::datagen::{build_vocab, gen_syn_scale, SynConfig, SynDataset};
use dpage_core::trainer::IdPair;
use dpage_core::{Mode, ModelConfig, Seq2Seq, Tensor, Vocabulary};

/// Deterministic pseudo-random values in [-1, 1) without pulling in an RNG.
pub fn filled(shape: &[usize], salt: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n as u64)
        .map(|i| {
            let x = (i.wrapping_add(salt)).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 11;
            x as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

pub struct ScaleFixture {
    pub data: SynDataset,
    pub vocab: Vocabulary,
    pub pairs: Vec<IdPair>,
    pub test: Vec<Vec<usize>>,
}

/// A small Syn-Scale corpus: `inputs` training inputs, 20 test inputs.
pub fn scale_fixture(inputs: usize) -> ScaleFixture {
    let mut cfg = SynConfig::with_seed(7);
    cfg.train_inputs = inputs;
    cfg.test_inputs = 20;
    let data = gen_syn_scale(&cfg).expect("valid config");
    let vocab = build_vocab(&data.train, 1);
    let ids = |t: &[String]| vocab.encode(t).expect("known tokens").ids().to_vec();
    let pairs = data.train.iter().map(|p| (ids(&p.source), ids(&p.target))).collect();
    let test = data.test_inputs.iter().map(|t| ids(t)).collect();
    ScaleFixture {
        data,
        vocab,
        pairs,
        test,
    }
}

/// Default-sized model (embed 32, hidden 64, pattern 8) for `vocab`.
pub fn model(mode: Mode, vocab: usize, k: usize) -> Seq2Seq {
    Seq2Seq::new(ModelConfig::new(mode, vocab, k, 7)).expect("valid config")
}
