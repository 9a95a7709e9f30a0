//! Min-loss hard-assignment training of K pattern embeddings, and the
//! single-decoder, noise and vae training modes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, GradStore, Graph};
use crate::error::{Error, Result};
use crate::model::{Conditioning, Mode, Seq2Seq};
use crate::tensor::Tensor;

/// Number of leading batches whose assignment counts are logged individually.
pub const LOGGED_BATCHES: usize = 10;

/// A training pair as token ids (no BOS/EOS; EOS is appended by the loss).
pub type IdPair = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied once per epoch after `decay_start`.
    pub lr_decay: f64,
    pub decay_start: usize,
    pub clip: f64,
    pub seed: u64,
}

impl TrainingConfig {
    /// Ten epochs of batch 32 at lr 0.5, halved after epoch 5, clip 5.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            epochs: 10,
            batch_size: 32,
            lr: 0.5,
            lr_decay: 0.5,
            decay_start: 5,
            clip: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        // NaN fails too
        let positive = |v: f64| v.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater);
        if !positive(self.lr) || !positive(self.clip) || !positive(self.lr_decay) {
            return Err(Error::Config("lr, lr_decay and clip must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for the 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(self.decay_start);
        self.lr * self.lr_decay.powi(decays as i32)
    }
}

/// How many training pairs each decoder won.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentStats {
    pub per_epoch: Vec<Vec<usize>>,
    /// Counts for the first [`LOGGED_BATCHES`] batches of the first epoch.
    pub first_batches: Vec<Vec<usize>>,
}

impl AssignmentStats {
    /// Fractions of the final epoch's pairs won by each decoder.
    pub fn final_fractions(&self) -> Option<Vec<f64>> {
        self.per_epoch.last().map(|c| fractions(c))
    }
}

pub fn fractions(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean winning loss per pair, per epoch.
    pub epoch_loss: Vec<f64>,
    pub epoch_lr: Vec<f64>,
    pub assignments: AssignmentStats,
}

/// Index and value of the smallest loss; ties go to the lowest index.
pub fn argmin(losses: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &l) in losses.iter().enumerate() {
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((k, l));
        }
    }
    best
}

/// Per-pattern losses of one pair and the winning pattern.
pub fn min_loss_assign(model: &Seq2Seq, source: &[usize], target: &[usize]) -> Result<(usize, f64)> {
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, source)?;
    let mut losses = Vec::with_capacity(model.config().k);
    for cond in branch_conditions(model, None) {
        let l = model.sequence_nll(&mut g, &enc, target, &cond)?;
        losses.push(g.value(l).item()?);
    }
    argmin(&losses).ok_or_else(|| Error::Contract("model has no decoders".into()))
}

/// The conditioning of every branch trained on a pair. `noise` is the pair's
/// fresh draw in noise and vae modes.
fn branch_conditions(model: &Seq2Seq, noise: Option<Tensor>) -> Vec<Conditioning> {
    let cfg = model.config();
    match cfg.mode {
        Mode::Dpage => (0..cfg.k).map(Conditioning::Pattern).collect(),
        Mode::Seq2seq => vec![Conditioning::None],
        Mode::Noise => vec![noise.map_or(Conditioning::None, Conditioning::Input)],
        Mode::Vae => vec![noise.map_or(Conditioning::None, Conditioning::StateOffset)],
    }
}

pub fn standard_normal(dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::vector((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}

/// K fixed standard-normal vectors, deterministic per `(k, dim, seed)`.
pub fn make_noise_bank(k: usize, dim: usize, seed: u64) -> Result<Vec<Tensor>> {
    if k == 0 {
        return Err(Error::Config("noise bank needs k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k).map(|_| standard_normal(dim, &mut rng)).collect())
}

fn draw_noise(model: &Seq2Seq, rng: &mut ChaCha8Rng) -> Option<Tensor> {
    let dim = model.config().noise_dim();
    (dim > 0).then(|| standard_normal(dim, rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub mean_loss: f64,
    pub counts: Vec<usize>,
    pub grad_norm: f64,
}

/// Accumulates the batch gradient into `grads` without updating parameters.
///
/// Each pair's encoder runs once; every branch is built on the same tape and
/// only the winner's loss, scaled by `1 / batch`, is backpropagated.
pub fn accumulate_batch(
    model: &Seq2Seq,
    batch: &[IdPair],
    grads: &mut GradStore,
    noise_rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<usize>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut counts = vec![0; model.config().k];
    let mut total = 0.0;
    for (source, target) in batch {
        let noise = draw_noise(model, noise_rng);
        let mut g = Graph::new(model.params());
        let enc = model.encode(&mut g, source)?;
        let mut branches = Vec::new();
        let mut losses = Vec::new();
        for cond in branch_conditions(model, noise) {
            let l = model.sequence_nll(&mut g, &enc, target, &cond)?;
            losses.push(g.value(l).item()?);
            branches.push(l);
        }
        let (k, loss) = argmin(&losses).expect("at least one branch");
        counts[k] += 1;
        total += loss;
        let scaled = g.scale(branches[k], scale);
        g.backward(scaled, grads)?;
    }
    Ok((total * scale, counts))
}

/// One mini-batch update.
pub fn train_step(
    model: &mut Seq2Seq,
    batch: &[IdPair],
    lr: f64,
    clip: f64,
    noise_rng: &mut ChaCha8Rng,
) -> Result<StepResult> {
    let mut grads = model.params().zero_grads();
    let (mean_loss, counts) = accumulate_batch(model, batch, &mut grads, noise_rng)?;
    let grad_norm = sgd_step(model.params_mut(), &mut grads, lr, clip);
    Ok(StepResult {
        mean_loss,
        counts,
        grad_norm,
    })
}

/// Full training run. Fully deterministic given the model, corpus and config.
pub fn train(model: &mut Seq2Seq, corpus: &[IdPair], config: &TrainingConfig) -> Result<TrainingLog> {
    train_with(model, corpus, config, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with `(epoch, log)`.
pub fn train_with(
    model: &mut Seq2Seq,
    corpus: &[IdPair],
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, &TrainingLog),
) -> Result<TrainingLog> {
    config.validate()?;
    if config.mode != model.config().mode {
        return Err(Error::Config(format!(
            "training mode {} does not match model mode {}",
            config.mode,
            model.config().mode
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e6f697365);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = TrainingLog::default();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let lr = config.lr_at(epoch);
        let mut counts = vec![0; model.config().k];
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| corpus[i].clone()));
            let step = train_step(model, &batch, lr, config.clip, &mut noise_rng)?;
            loss_sum += step.mean_loss * batch.len() as f64;
            for (c, s) in counts.iter_mut().zip(&step.counts) {
                *c += s;
            }
            if epoch == 1 && b < LOGGED_BATCHES {
                log.assignments.first_batches.push(step.counts);
            }
        }
        log.epoch_loss.push(loss_sum / corpus.len() as f64);
        log.epoch_lr.push(lr);
        log.assignments.per_epoch.push(counts);
        on_epoch(epoch, &log);
    }
    Ok(log)
}

fn require_mode(model: &Seq2Seq, config: &TrainingConfig, mode: Mode) -> Result<()> {
    if model.config().mode != mode || config.mode != mode {
        return Err(Error::Config(format!(
            "expected {mode} model and config, got {} and {}",
            model.config().mode,
            config.mode
        )));
    }
    Ok(())
}

pub fn train_noise(model: &mut Seq2Seq, corpus: &[IdPair], config: &TrainingConfig) -> Result<TrainingLog> {
    require_mode(model, config, Mode::Noise)?;
    train(model, corpus, config)
}

pub fn train_vae(model: &mut Seq2Seq, corpus: &[IdPair], config: &TrainingConfig) -> Result<TrainingLog> {
    require_mode(model, config, Mode::Vae)?;
    train(model, corpus, config)
}

/// Mean per-pair loss on held-out pairs: the minimum over patterns for dpage,
/// a fresh seeded noise draw per pair for noise and vae.
pub fn evaluate_loss(model: &Seq2Seq, pairs: &[IdPair], noise_seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("no evaluation pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut total = 0.0;
    for (source, target) in pairs {
        let noise = draw_noise(model, &mut rng);
        let mut g = Graph::new(model.params());
        let enc = model.encode(&mut g, source)?;
        let mut best = f64::INFINITY;
        for cond in branch_conditions(model, noise) {
            let l = model.sequence_nll(&mut g, &enc, target, &cond)?;
            best = best.min(g.value(l).item()?);
        }
        total += best;
    }
    Ok(total / pairs.len() as f64)
}
