//! Attentional LSTM encoder-decoder with an optional pattern slot at the decoder input.
//!
//! Every LSTM gate is `act(W · [x, h_prev, 1])`; the trailing constant folds the
//! bias into `W`. The decoder reads `[embedding(y_prev), pattern]` at each step,
//! attends over the top-layer encoder states with a dot-product score and
//! predicts the next token from `W_out · [tanh(W_c · [context, h, 1]), 1]`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};
use crate::vocab::{BOS, EOS, PAD};

/// Initialization range for every parameter: uniform in `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 0.1;

/// How the decoder is conditioned, which also fixes the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// K trainable pattern embeddings concatenated to the decoder input.
    Dpage,
    /// Plain encoder-decoder.
    Seq2seq,
    /// Standard-normal noise concatenated to the decoder input.
    Noise,
    /// Standard-normal noise added to the encoder's final hidden states.
    Vae,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dpage => "dpage",
            Mode::Seq2seq => "seq2seq",
            Mode::Noise => "noise",
            Mode::Vae => "vae",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpage" => Ok(Mode::Dpage),
            "seq2seq" => Ok(Mode::Seq2seq),
            "noise" => Ok(Mode::Noise),
            "vae" => Ok(Mode::Vae),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Width of the pattern (or noise) vector in the decoder input.
    pub pattern_dim: usize,
    /// Number of decoders: pattern embeddings for `dpage`, fixed noise
    /// vectors for `noise`/`vae`; always 1 for `seq2seq`.
    pub k: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults: embed 32, hidden 64, one layer, pattern width 8.
    pub fn new(mode: Mode, vocab_size: usize, k: usize, seed: u64) -> Self {
        Self {
            mode,
            vocab_size,
            embed_dim: 32,
            hidden_dim: 64,
            num_layers: 1,
            pattern_dim: 8,
            k: if mode == Mode::Seq2seq { 1 } else { k },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 5 {
            return fail(format!("vocab_size must be at least 5, got {}", self.vocab_size));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return fail("embed_dim, hidden_dim and num_layers must be positive".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.mode == Mode::Seq2seq && self.k != 1 {
            return fail("seq2seq mode has exactly one decoder".into());
        }
        if self.mode == Mode::Dpage && self.pattern_dim == 0 {
            return fail("dpage mode needs pattern_dim >= 1".into());
        }
        Ok(())
    }

    /// Width of the extra decoder input (zero when there is none).
    pub fn pattern_slot(&self) -> usize {
        match self.mode {
            Mode::Dpage | Mode::Noise => self.pattern_dim,
            Mode::Seq2seq | Mode::Vae => 0,
        }
    }

    /// Width of the noise vectors drawn per decoder for `noise` and `vae` modes.
    pub fn noise_dim(&self) -> usize {
        match self.mode {
            Mode::Noise => self.pattern_dim,
            Mode::Vae => self.hidden_dim,
            Mode::Dpage | Mode::Seq2seq => 0,
        }
    }
}

/// Parameter ids of one LSTM cell; each matrix is `hidden x (input + hidden + 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmCell {
    pub w_i: ParamId,
    pub w_f: ParamId,
    pub w_o: ParamId,
    pub w_u: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    /// Registers the four gate matrices as `{prefix}.w_i` etc., filled by `init`.
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        mut init: impl FnMut() -> f64,
    ) -> Result<Self> {
        let cols = input_dim + hidden_dim + 1;
        let mut mat = |name: &str| -> Result<ParamId> {
            let data = (0..hidden_dim * cols).map(|_| init()).collect();
            params.add(format!("{prefix}.{name}"), Tensor::matrix(hidden_dim, cols, data)?)
        };
        Ok(Self {
            w_i: mat("w_i")?,
            w_f: mat("w_f")?,
            w_o: mat("w_o")?,
            w_u: mat("w_u")?,
            input_dim,
            hidden_dim,
        })
    }
}

/// One LSTM step:
/// `i,f,o = σ(W·[x,h,1])`, `u = tanh(W_u·[x,h,1])`, `c' = f⊙c + i⊙u`, `h' = o⊙tanh(c')`.
pub fn lstm_step(g: &mut Graph, cell: &LstmCell, h_prev: Var, c_prev: Var, x: Var) -> Result<(Var, Var)> {
    let (xn, hn, cn) = (
        g.value(x).numel(),
        g.value(h_prev).numel(),
        g.value(c_prev).numel(),
    );
    if xn != cell.input_dim || hn != cell.hidden_dim || cn != cell.hidden_dim {
        return Err(Error::Dimension(format!(
            "lstm cell expects input {} and hidden {}, got input {xn}, h {hn}, c {cn}",
            cell.input_dim, cell.hidden_dim
        )));
    }
    let one = g.constant(Tensor::vector(vec![1.0]));
    let xh = g.concat(&[x, h_prev, one], 0)?;
    let gate = |g: &mut Graph, w: ParamId, tanh: bool| -> Result<Var> {
        let wv = g.param(w);
        let z = g.matmul(wv, xh)?;
        if tanh {
            g.tanh(z)
        } else {
            g.sigmoid(z)
        }
    };
    let i = gate(g, cell.w_i, false)?;
    let f = gate(g, cell.w_f, false)?;
    let o = gate(g, cell.w_o, false)?;
    let u = gate(g, cell.w_u, true)?;
    let fc = g.mul(f, c_prev)?;
    let iu = g.mul(i, u)?;
    let c = g.add(fc, iu)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Per-layer `(h, c)` pairs.
pub type LayerStates = Vec<(Var, Var)>;

pub struct EncoderOutput {
    /// Top-layer hidden state at every source position.
    pub states: Vec<Var>,
    /// `states` stacked as an `N x hidden` matrix, and its transpose.
    pub memory: Var,
    pub memory_t: Var,
    /// Final `(h, c)` of every layer.
    pub finals: LayerStates,
}

#[derive(Clone)]
pub struct DecoderState {
    pub layers: LayerStates,
    pub step: usize,
}

pub struct Attention {
    pub context: Var,
    pub weights: Var,
}

pub struct StepOutput {
    pub logits: Var,
    pub state: DecoderState,
}

/// Extra conditioning for one decoder run.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    None,
    /// Trainable pattern embedding `k` (dpage).
    Pattern(usize),
    /// Fixed vector concatenated to every decoder input (noise).
    Input(Tensor),
    /// Fixed vector added to each layer's final encoder `h` (vae).
    StateOffset(Tensor),
}

#[derive(Debug, Clone)]
struct ParamIds {
    enc_embedding: ParamId,
    enc_layers: Vec<LstmCell>,
    dec_embedding: ParamId,
    dec_layers: Vec<LstmCell>,
    attn_combine: ParamId,
    output: ParamId,
    patterns: Vec<ParamId>,
}

/// Encoder-decoder model: configuration plus its parameter set.
#[derive(Debug, Clone)]
pub struct Seq2Seq {
    config: ModelConfig,
    params: ParamSet,
    ids: ParamIds,
}

impl Seq2Seq {
    /// A freshly initialized model, uniform in `[-0.1, 0.1]` from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = || rng.random_range(-INIT_RANGE..INIT_RANGE);
        let mut params = ParamSet::new();
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);

        let table = |params: &mut ParamSet, name: &str, rows: usize, cols: usize, init: &mut dyn FnMut() -> f64| {
            let data = (0..rows * cols).map(|_| init()).collect();
            params.add(name, Tensor::matrix(rows, cols, data)?)
        };

        let enc_embedding = table(&mut params, "encoder.embedding", v, e, &mut init)?;
        let mut enc_layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let input = if l == 0 { e } else { h };
            enc_layers.push(LstmCell::register(&mut params, &format!("encoder.layer{l}"), input, h, &mut init)?);
        }
        let dec_embedding = table(&mut params, "decoder.embedding", v, e, &mut init)?;
        let mut dec_layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let input = if l == 0 { e + config.pattern_slot() } else { h };
            dec_layers.push(LstmCell::register(&mut params, &format!("decoder.layer{l}"), input, h, &mut init)?);
        }
        let attn_combine = table(&mut params, "decoder.attention.w_c", h, 2 * h + 1, &mut init)?;
        let output = table(&mut params, "decoder.output.w", v, h + 1, &mut init)?;
        let mut patterns = Vec::new();
        if config.mode == Mode::Dpage {
            for k in 0..config.k {
                let data = (0..config.pattern_dim).map(|_| init()).collect();
                patterns.push(params.add(format!("decoder.pattern.{k}"), Tensor::vector(data))?);
            }
        }
        Ok(Self {
            config,
            params,
            ids: ParamIds {
                enc_embedding,
                enc_layers,
                dec_embedding,
                dec_layers,
                attn_combine,
                output,
                patterns,
            },
        })
    }

    /// Rebuilds a model from stored parameter values; names and shapes must match
    /// the layout implied by `config` exactly.
    pub fn from_params(config: ModelConfig, values: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::new(config)?;
        if values.len() != model.params.len() {
            return Err(Error::Data(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                values.len()
            )));
        }
        for (name, value) in values {
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Data(format!("unknown parameter `{name}`")))?;
            let slot = model.params.value_mut(id);
            if slot.shape() != value.shape() {
                return Err(Error::Data(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn pattern_param(&self, k: usize) -> Option<ParamId> {
        self.ids.patterns.get(k).copied()
    }

    pub fn encoder_cells(&self) -> &[LstmCell] {
        &self.ids.enc_layers
    }

    pub fn decoder_cells(&self) -> &[LstmCell] {
        &self.ids.dec_layers
    }

    fn check_ids(&self, ids: &[usize], what: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Contract(format!("{what} sequence is empty")));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.config.vocab_size || id == PAD) {
            return Err(Error::Contract(format!(
                "{what} token id {bad} out of range for vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Runs the stacked encoder left to right from a zero state.
    pub fn encode(&self, g: &mut Graph, source: &[usize]) -> Result<EncoderOutput> {
        self.check_ids(source, "source")?;
        let h = self.config.hidden_dim;
        let mut layers: LayerStates = (0..self.config.num_layers)
            .map(|_| {
                let h0 = g.constant(Tensor::zeros(&[h]));
                let c0 = g.constant(Tensor::zeros(&[h]));
                (h0, c0)
            })
            .collect();
        let table = g.param(self.ids.enc_embedding);
        let mut states = Vec::with_capacity(source.len());
        for &tok in source {
            let mut x = g.row(table, tok)?;
            for (cell, state) in self.ids.enc_layers.iter().zip(layers.iter_mut()) {
                let (nh, nc) = lstm_step(g, cell, state.0, state.1, x)?;
                *state = (nh, nc);
                x = nh;
            }
            states.push(x);
        }
        let memory = g.stack(&states)?;
        let memory_t = g.transpose(memory)?;
        Ok(EncoderOutput {
            states,
            memory,
            memory_t,
            finals: layers,
        })
    }

    /// Global attention with a dot-product score.
    pub fn attend(&self, g: &mut Graph, h_dec: Var, enc: &EncoderOutput) -> Result<Attention> {
        attend(g, h_dec, enc)
    }

    /// Decoder start state: the encoder's final per-layer states, with an
    /// optional offset added to each layer's `h`.
    pub fn initial_state(&self, g: &mut Graph, enc: &EncoderOutput, cond: &Conditioning) -> Result<DecoderState> {
        let layers = match cond {
            Conditioning::StateOffset(z) if z.numel() > 0 => {
                if z.numel() != self.config.hidden_dim {
                    return Err(Error::Dimension(format!(
                        "state offset has {} values, hidden size is {}",
                        z.numel(),
                        self.config.hidden_dim
                    )));
                }
                let zv = g.constant(z.clone());
                enc.finals
                    .iter()
                    .map(|&(h, c)| Ok((g.add(h, zv)?, c)))
                    .collect::<Result<_>>()?
            }
            _ => enc.finals.clone(),
        };
        Ok(DecoderState { layers, step: 0 })
    }

    /// The graph node fed into the decoder's pattern slot for `cond`, if any.
    pub fn pattern_input(&self, g: &mut Graph, cond: &Conditioning) -> Result<Option<Var>> {
        let slot = self.config.pattern_slot();
        let var = match cond {
            Conditioning::Pattern(k) => {
                let id = self.pattern_param(*k).ok_or_else(|| {
                    Error::Contract(format!(
                        "pattern {k} requested from a {} model with {} patterns",
                        self.config.mode,
                        self.ids.patterns.len()
                    ))
                })?;
                Some(g.param(id))
            }
            Conditioning::Input(v) => Some(g.constant(v.clone())),
            Conditioning::None | Conditioning::StateOffset(_) => None,
        };
        match var {
            Some(v) if g.value(v).numel() != slot => Err(Error::Dimension(format!(
                "pattern input has {} values, decoder slot is {slot}",
                g.value(v).numel()
            ))),
            None if slot > 0 => Err(Error::Contract(format!(
                "{} model needs a pattern input of width {slot}",
                self.config.mode
            ))),
            _ => Ok(var),
        }
    }

    /// One decoder step; returns the logits over the vocabulary and the next state.
    pub fn decode_step(
        &self,
        g: &mut Graph,
        state: &DecoderState,
        y_prev: usize,
        pattern: Option<Var>,
        enc: &EncoderOutput,
    ) -> Result<StepOutput> {
        if y_prev >= self.config.vocab_size {
            return Err(Error::Contract(format!("previous token {y_prev} out of range")));
        }
        let slot = self.config.pattern_slot();
        let table = g.param(self.ids.dec_embedding);
        let emb = g.row(table, y_prev)?;
        let mut x = match pattern {
            Some(p) => {
                if g.value(p).numel() != slot {
                    return Err(Error::Dimension(format!(
                        "pattern vector has {} values, decoder slot is {slot}",
                        g.value(p).numel()
                    )));
                }
                g.concat(&[emb, p], 0)?
            }
            None if slot > 0 => {
                return Err(Error::Contract(format!(
                    "{} model needs a pattern input of width {slot}",
                    self.config.mode
                )))
            }
            None => emb,
        };
        let mut layers = Vec::with_capacity(state.layers.len());
        for (cell, &(h, c)) in self.ids.dec_layers.iter().zip(&state.layers) {
            let (nh, nc) = lstm_step(g, cell, h, c, x)?;
            layers.push((nh, nc));
            x = nh;
        }
        let att = attend(g, x, enc)?;
        let one = g.constant(Tensor::vector(vec![1.0]));
        let ch = g.concat(&[att.context, x, one], 0)?;
        let wc = g.param(self.ids.attn_combine);
        let pre = g.matmul(wc, ch)?;
        let attn_h = g.tanh(pre)?;
        let hb = g.concat(&[attn_h, one], 0)?;
        let wo = g.param(self.ids.output);
        let logits = g.matmul(wo, hb)?;
        Ok(StepOutput {
            logits,
            state: DecoderState {
                layers,
                step: state.step + 1,
            },
        })
    }

    /// Teacher-forced `-Σ_t log p(y_t | y_<t, X)` over `target` followed by EOS,
    /// starting from BOS. Summed, not averaged.
    pub fn sequence_nll(&self, g: &mut Graph, enc: &EncoderOutput, target: &[usize], cond: &Conditioning) -> Result<Var> {
        self.check_ids(target, "target")?;
        let pattern = self.pattern_input(g, cond)?;
        let mut state = self.initial_state(g, enc, cond)?;
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(target.len() + 1);
        for &y in target.iter().chain(std::iter::once(&EOS)) {
            let out = self.decode_step(g, &state, prev, pattern, enc)?;
            terms.push(g.nll(out.logits, y)?);
            state = out.state;
            prev = y;
        }
        g.add_all(&terms)
    }

    /// Encoder plus [`Seq2Seq::sequence_nll`] on a fresh graph; returns the loss value.
    pub fn loss(&self, source: &[usize], target: &[usize], cond: &Conditioning) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, source)?;
        let loss = self.sequence_nll(&mut g, &enc, target, cond)?;
        g.value(loss).item()
    }
}

/// `a(s) = softmax_s(h_dec · h_s)`, `context = Σ_s a(s) h_s`.
pub fn attend(g: &mut Graph, h_dec: Var, enc: &EncoderOutput) -> Result<Attention> {
    if enc.states.is_empty() {
        return Err(Error::Contract("attention over an empty encoder output".into()));
    }
    let scores = g.matmul(enc.memory, h_dec)?;
    let weights = g.softmax(scores)?;
    let context = g.matmul(enc.memory_t, weights)?;
    Ok(Attention { context, weights })
}

/// Probabilities from logits (max-subtracted softmax).
pub fn probabilities(logits: &Tensor) -> Vec<f64> {
    tensor::softmax(logits.data())
}
