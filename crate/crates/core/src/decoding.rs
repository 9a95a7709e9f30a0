//! Beam search and greedy decoding, and the K-output decoding schemes.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::model::{Conditioning, DecoderState, Mode, Seq2Seq};
use crate::tensor::{self, Tensor};
use crate::trainer::make_noise_bank;
use crate::vocab::{BOS, EOS, PAD};

pub const DEFAULT_BEAM: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 30;

/// A finished or partial output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, excluding the final EOS.
    pub tokens: Vec<usize>,
    /// Sum of the per-step log probabilities, including EOS once finished.
    pub log_prob: f64,
    pub finished: bool,
}

/// Ranking used everywhere: higher score first, then lexicographic tokens.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn emittable(token: usize) -> bool {
    token != PAD && token != BOS
}

struct Live {
    tokens: Vec<usize>,
    log_prob: f64,
    state: DecoderState,
    prev: usize,
}

/// Beam search with raw cumulative log-probability scores.
///
/// At each step every live hypothesis is expanded over all tokens except PAD
/// and BOS and the best `beam` candidates are kept (ties: earlier hypothesis,
/// then lower token id). Candidates ending in EOS retire to the finished pool.
/// A hypothesis holding `max_len` tokens can only emit EOS. Returns every
/// finished hypothesis, best first.
pub fn beam_search(
    model: &Seq2Seq,
    source: &[usize],
    beam: usize,
    cond: &Conditioning,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if beam == 0 || max_len == 0 {
        return Err(Error::Config("beam size and max_len must be at least 1".into()));
    }
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, source)?;
    let pattern = model.pattern_input(&mut g, cond)?;
    let state = model.initial_state(&mut g, &enc, cond)?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        prev: BOS,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        // (score, hypothesis index, token, step log-probs index)
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let out = model.decode_step(&mut g, &hyp.state, hyp.prev, pattern, &enc)?;
            let logp = tensor::log_softmax(g.value(out.logits).data());
            if hyp.tokens.len() >= max_len {
                candidates.push((hyp.log_prob + logp[EOS], h, EOS));
            } else {
                for (tok, lp) in logp.iter().enumerate() {
                    if emittable(tok) {
                        candidates.push((hyp.log_prob + lp, h, tok));
                    }
                }
            }
            next_states.push(out.state);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(beam);
        let mut next = Vec::with_capacity(candidates.len());
        for (score, h, tok) in candidates {
            let parent = &live[h];
            if tok == EOS {
                pool.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    log_prob: score,
                    finished: true,
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                next.push(Live {
                    tokens,
                    log_prob: score,
                    state: next_states[h].clone(),
                    prev: tok,
                });
            }
        }
        live = next;
    }
    pool.sort_by(rank);
    pool.dedup_by(|a, b| a.tokens == b.tokens);
    Ok(pool)
}

/// Greedy decoding: the most probable emittable token at each step (ties to
/// the lower id), EOS forced after `max_len` tokens.
pub fn greedy(model: &Seq2Seq, source: &[usize], cond: &Conditioning, max_len: usize) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, source)?;
    let pattern = model.pattern_input(&mut g, cond)?;
    let mut state = model.initial_state(&mut g, &enc, cond)?;
    let mut prev = BOS;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    loop {
        let out = model.decode_step(&mut g, &state, prev, pattern, &enc)?;
        let logp = tensor::log_softmax(g.value(out.logits).data());
        let tok = if tokens.len() >= max_len {
            EOS
        } else {
            let mut best = EOS;
            for (t, &lp) in logp.iter().enumerate() {
                if emittable(t) && (lp > logp[best] || (lp == logp[best] && t < best)) {
                    best = t;
                }
            }
            best
        };
        log_prob += logp[tok];
        if tok == EOS {
            return Ok(Hypothesis {
                tokens,
                log_prob,
                finished: true,
            });
        }
        tokens.push(tok);
        state = out.state;
        prev = tok;
    }
}

/// Log probability of emitting exactly `tokens` then EOS.
pub fn sequence_log_prob(model: &Seq2Seq, source: &[usize], tokens: &[usize], cond: &Conditioning) -> Result<f64> {
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, source)?;
    let pattern = model.pattern_input(&mut g, cond)?;
    let mut state = model.initial_state(&mut g, &enc, cond)?;
    let mut prev = BOS;
    let mut total = 0.0;
    for &tok in tokens.iter().chain(std::iter::once(&EOS)) {
        let out = model.decode_step(&mut g, &state, prev, pattern, &enc)?;
        total += tensor::log_softmax(g.value(out.logits).data())[tok];
        state = out.state;
        prev = tok;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Dpage,
    Beam,
    Noise,
    Vae,
    Greedy,
}

impl DecodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodeMode::Dpage => "dpage",
            DecodeMode::Beam => "beam",
            DecodeMode::Noise => "noise",
            DecodeMode::Vae => "vae",
            DecodeMode::Greedy => "greedy",
        }
    }

    /// Training mode a checkpoint must have for this decoding scheme.
    pub fn model_mode(self) -> Mode {
        match self {
            DecodeMode::Dpage => Mode::Dpage,
            DecodeMode::Noise => Mode::Noise,
            DecodeMode::Vae => Mode::Vae,
            DecodeMode::Beam | DecodeMode::Greedy => Mode::Seq2seq,
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpage" => Ok(DecodeMode::Dpage),
            "beam" => Ok(DecodeMode::Beam),
            "noise" => Ok(DecodeMode::Noise),
            "vae" => Ok(DecodeMode::Vae),
            "greedy" => Ok(DecodeMode::Greedy),
            other => Err(Error::Config(format!("unknown decode mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam: usize,
    pub k: usize,
    pub max_len: usize,
    pub noise_seed: u64,
}

impl DecodeConfig {
    pub fn new(mode: DecodeMode, k: usize, noise_seed: u64) -> Self {
        Self {
            mode,
            beam: DEFAULT_BEAM,
            k,
            max_len: DEFAULT_MAX_LEN,
            noise_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 || self.k == 0 || self.max_len == 0 {
            return Err(Error::Config("beam, k and max_len must be at least 1".into()));
        }
        if self.mode == DecodeMode::Beam && self.k > self.beam {
            return Err(Error::Config(format!(
                "beam mode needs k <= beam, got k = {} and beam = {}",
                self.k, self.beam
            )));
        }
        Ok(())
    }
}

fn require_mode(model: &Seq2Seq, mode: Mode) -> Result<()> {
    if model.config().mode != mode {
        return Err(Error::Contract(format!(
            "decoding needs a {mode} model, this one was built for {}",
            model.config().mode
        )));
    }
    Ok(())
}

fn top1(model: &Seq2Seq, source: &[usize], beam: usize, cond: &Conditioning, max_len: usize) -> Result<Vec<usize>> {
    let hyps = beam_search(model, source, beam, cond, max_len)?;
    Ok(hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default())
}

/// One beam search per pattern embedding; output `k` comes from pattern `k`.
pub fn dpage_decode_k(model: &Seq2Seq, source: &[usize], beam: usize, max_len: usize) -> Result<Vec<Vec<usize>>> {
    require_mode(model, Mode::Dpage)?;
    (0..model.config().k)
        .map(|k| top1(model, source, beam, &Conditioning::Pattern(k), max_len))
        .collect()
}

/// The `k` best distinct hypotheses of a single beam.
pub fn beam_topk_decode(model: &Seq2Seq, source: &[usize], beam: usize, k: usize, max_len: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > beam {
        return Err(Error::Config(format!("beam top-k needs 1 <= k <= beam, got k = {k}, beam = {beam}")));
    }
    let hyps = beam_search(model, source, beam, &Conditioning::None, max_len)?;
    Ok(hyps.into_iter().take(k).map(|h| h.tokens).collect())
}

/// Top-1 beam output under each of `k` fixed standard-normal vectors,
/// fed to the decoder input (noise) or added to the encoder final state (vae).
pub fn noise_decode_k(
    model: &Seq2Seq,
    source: &[usize],
    beam: usize,
    k: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let bank = decode_noise_bank(model, Mode::Noise, k, seed)?;
    bank.into_iter()
        .map(|z| top1(model, source, beam, &Conditioning::Input(z), max_len))
        .collect()
}

pub fn vae_decode_k(
    model: &Seq2Seq,
    source: &[usize],
    beam: usize,
    k: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let bank = decode_noise_bank(model, Mode::Vae, k, seed)?;
    bank.into_iter()
        .map(|z| top1(model, source, beam, &Conditioning::StateOffset(z), max_len))
        .collect()
}

fn decode_noise_bank(model: &Seq2Seq, mode: Mode, k: usize, seed: u64) -> Result<Vec<Tensor>> {
    require_mode(model, mode)?;
    make_noise_bank(k, model.config().noise_dim(), seed)
}

/// K outputs for one input under `config`.
pub fn decode_k(model: &Seq2Seq, source: &[usize], config: &DecodeConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    let (b, k, len) = (config.beam, config.k, config.max_len);
    match config.mode {
        DecodeMode::Dpage => {
            if k != model.config().k {
                return Err(Error::Config(format!(
                    "model has {} patterns, {k} outputs requested",
                    model.config().k
                )));
            }
            dpage_decode_k(model, source, b, len)
        }
        DecodeMode::Beam => {
            require_mode(model, Mode::Seq2seq)?;
            beam_topk_decode(model, source, b, k, len)
        }
        DecodeMode::Noise => noise_decode_k(model, source, b, k, config.noise_seed, len),
        DecodeMode::Vae => vae_decode_k(model, source, b, k, config.noise_seed, len),
        DecodeMode::Greedy => {
            require_mode(model, Mode::Seq2seq)?;
            let h = greedy(model, source, &Conditioning::None, len)?;
            Ok(vec![h.tokens; k])
        }
    }
}

/// Decodes every input; result is indexed `[decoder][input]`. Beam mode may
/// yield fewer than K distinct hypotheses; missing slots are empty lines.
pub fn decode_corpus(model: &Seq2Seq, inputs: &[Vec<usize>], config: &DecodeConfig) -> Result<Vec<Vec<Vec<usize>>>> {
    let mut out = vec![Vec::with_capacity(inputs.len()); config.k];
    for src in inputs {
        let mut outputs = decode_k(model, src, config)?;
        outputs.resize(config.k, Vec::new());
        for (slot, seq) in out.iter_mut().zip(outputs) {
            slot.push(seq);
        }
    }
    Ok(out)
}
