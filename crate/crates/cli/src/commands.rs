use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dpage_core::checkpoint::{load_checkpoint, save_checkpoint};
use dpage_core::datagen::{self, SynConfig, Tokens};
use dpage_core::decoding::decode_corpus;
use dpage_core::metrics::{
    best_assignment, confusion_matrix, distinct_n, jd_word_contributions, jeffreys_divergence, length_report,
    max_matching, multi_ref_bleu, sari, word_distribution, WordDistribution, KL_EPSILON, MAX_ORDER,
};
use dpage_core::trainer::{fractions, train_with, IdPair};
use dpage_core::{DecodeConfig, DecodeMode, Mode, ModelConfig, Seq2Seq, TrainingConfig, TrainingLog};
use serde::Serialize;

use crate::args::{Dataset, DecodeArgs, EvalArgs, GenDataArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::report::{self, ConfusionSection, DecoderReport, DecoderWords, RunReport, WordContribution};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAINING_LOG_FILE: &str = "training_log.json";
pub const DECODE_META_FILE: &str = "decode_meta.json";
pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";

/// BLEU a decoder needs against a reference set to count as having captured it.
pub const MATCH_BLEU: f64 = 0.95;

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn decoder_file(k: usize) -> String {
    format!("decoder_{k}.txt")
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let mut cfg = SynConfig::with_seed(a.seed);
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(n) = a.train_size {
        cfg.train_inputs = n;
    }
    if let Some(n) = a.test_size {
        cfg.test_inputs = n;
    }
    if let Some(v) = a.source_vocab {
        cfg.source_vocab = v;
    }
    let data = match a.dataset {
        Dataset::SynSub => datagen::gen_syn_sub(&cfg)?,
        Dataset::SynScale => datagen::gen_syn_scale(&cfg)?,
    };
    datagen::write_dataset(&a.out, &data)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EpochRecord {
    epoch: usize,
    lr: f64,
    loss: f64,
    assignment_counts: Vec<usize>,
    assignment_fractions: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TrainingLogFile<'a> {
    model: &'a ModelConfig,
    training: &'a TrainingConfig,
    pairs: usize,
    epochs: Vec<EpochRecord>,
    /// Assignment counts of the first batches of epoch 1.
    first_batches: &'a [Vec<usize>],
}

fn log_file<'a>(model: &'a ModelConfig, training: &'a TrainingConfig, pairs: usize, log: &'a TrainingLog) -> TrainingLogFile<'a> {
    let epochs = log
        .epoch_loss
        .iter()
        .zip(&log.epoch_lr)
        .zip(&log.assignments.per_epoch)
        .enumerate()
        .map(|(i, ((&loss, &lr), counts))| EpochRecord {
            epoch: i + 1,
            lr,
            loss,
            assignment_counts: counts.clone(),
            assignment_fractions: fractions(counts),
        })
        .collect();
    TrainingLogFile {
        model,
        training,
        pairs,
        epochs,
        first_batches: &log.assignments.first_batches,
    }
}

pub fn parse_train_mode(s: &str) -> CliResult<Mode> {
    if s == "beam" || s == "greedy" {
        return Err(CliError::Config(format!(
            "`{s}` is a decoding mode; train a seq2seq model and decode it with --mode {s}"
        )));
    }
    Ok(Mode::from_str(s)?)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let mode = parse_train_mode(&a.mode)?;
    let k = if mode == Mode::Seq2seq { 1 } else { a.k };
    let path = a.data.join("train.tsv");
    let corpus = datagen::load_tsv_corpus(&path)?;
    if let Some(first) = corpus.errors.first() {
        return Err(CliError::Data(format!(
            "{}: line {}: {} ({} malformed lines)",
            path.display(),
            first.line,
            first.message,
            corpus.errors.len()
        )));
    }
    if corpus.pairs.is_empty() {
        return Err(CliError::Data(format!("{} has no training pairs", path.display())));
    }
    let vocab = datagen::build_vocab(&corpus.pairs, a.min_freq);
    let ids = corpus
        .pairs
        .iter()
        .map(|p| Ok((vocab.encode(&p.source)?.ids().to_vec(), vocab.encode(&p.target)?.ids().to_vec())))
        .collect::<CliResult<Vec<IdPair>>>()?;

    let mut mc = ModelConfig::new(mode, vocab.len(), k, a.seed);
    let m = &a.model;
    mc.hidden_dim = m.hidden.unwrap_or(mc.hidden_dim);
    mc.embed_dim = m.embed.unwrap_or(mc.embed_dim);
    mc.pattern_dim = m.pattern_dim.unwrap_or(mc.pattern_dim);
    mc.num_layers = m.layers.unwrap_or(mc.num_layers);
    let mut tc = TrainingConfig::new(mode, a.seed);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.lr = a.lr.unwrap_or(tc.lr);
    tc.lr_decay = a.lr_decay.unwrap_or(tc.lr_decay);
    tc.decay_start = a.decay_start.unwrap_or(tc.decay_start);
    tc.batch_size = a.batch.unwrap_or(tc.batch_size);
    tc.clip = a.clip.unwrap_or(tc.clip);
    tc.validate()?;

    let mut model = Seq2Seq::new(mc)?;
    let log = train_with(&mut model, &ids, &tc, |epoch, log| {
        eprintln!(
            "epoch {epoch}/{} lr {} loss {:.4} assignments {:?}",
            tc.epochs,
            log.epoch_lr[epoch - 1],
            log.epoch_loss[epoch - 1],
            log.assignments.per_epoch[epoch - 1]
        );
    })?;
    create_dir(&a.out)?;
    save_checkpoint(&a.out.join(CHECKPOINT_FILE), &model, &vocab, Some(&tc))?;
    write_json(
        &a.out.join(TRAINING_LOG_FILE),
        &log_file(model.config(), &tc, ids.len(), &log),
    )
}

#[derive(Debug, Clone, Serialize)]
struct DecodeMeta<'a> {
    mode: DecodeMode,
    k: usize,
    beam: usize,
    max_len: usize,
    seed: u64,
    checkpoint: String,
    input: String,
    model: &'a ModelConfig,
    training: Option<&'a TrainingConfig>,
}

fn default_decode_mode(mode: Mode) -> DecodeMode {
    match mode {
        Mode::Dpage => DecodeMode::Dpage,
        Mode::Seq2seq => DecodeMode::Beam,
        Mode::Noise => DecodeMode::Noise,
        Mode::Vae => DecodeMode::Vae,
    }
}

pub fn decode(a: &DecodeArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let model_mode = ck.model.config().mode;
    let mode = match &a.mode {
        Some(s) => DecodeMode::from_str(s)?,
        None => default_decode_mode(model_mode),
    };
    if mode.model_mode() != model_mode {
        return Err(CliError::Contract(format!(
            "decode mode `{mode}` needs a {} checkpoint, but {} holds a {model_mode} model",
            mode.model_mode(),
            a.checkpoint.display()
        )));
    }
    let trained_k = ck.model.config().k;
    let k = a.k.unwrap_or(match mode {
        DecodeMode::Beam => trained_k.max(5).min(a.beam),
        DecodeMode::Greedy => 1,
        _ => trained_k,
    });
    if mode == DecodeMode::Dpage && k != trained_k {
        return Err(CliError::Contract(format!(
            "the checkpoint has {trained_k} pattern embeddings, --k asks for {k}"
        )));
    }
    let cfg = DecodeConfig {
        mode,
        beam: a.beam,
        k,
        max_len: a.max_len,
        noise_seed: a.seed,
    };
    cfg.validate()?;

    let lines = datagen::read_lines(&a.input)?;
    let inputs = lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.is_empty() {
                return Err(CliError::Data(format!("{}: line {} is empty", a.input.display(), i + 1)));
            }
            Ok(ck.vocab.encode(l)?.ids().to_vec())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let outputs = decode_corpus(&ck.model, &inputs, &cfg)?;

    create_dir(&a.out)?;
    for (i, out) in outputs.iter().enumerate() {
        let decoded: Vec<Tokens> = out.iter().map(|ids| ck.vocab.decode(ids)).collect();
        datagen::write_lines(&a.out.join(decoder_file(i)), &decoded)?;
    }
    let meta = DecodeMeta {
        mode,
        k,
        beam: a.beam,
        max_len: a.max_len,
        seed: a.seed,
        checkpoint: a.checkpoint.display().to_string(),
        input: a.input.display().to_string(),
        model: ck.model.config(),
        training: ck.training.as_ref(),
    };
    write_json(&a.out.join(DECODE_META_FILE), &meta)
}

fn read_aligned(path: &Path, expected: usize, src: &Path) -> CliResult<Vec<Tokens>> {
    let lines = datagen::read_lines(path)?;
    if lines.len() != expected {
        return Err(CliError::Data(format!(
            "{} has {} lines but {} has {expected}",
            path.display(),
            lines.len(),
            src.display()
        )));
    }
    Ok(lines)
}

/// `decoder_0.txt`, `decoder_1.txt`, ... up to the first missing index.
fn decoder_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let files: Vec<PathBuf> = (0..)
        .map(|k| dir.join(decoder_file(k)))
        .take_while(|p| p.is_file())
        .collect();
    if files.is_empty() {
        return Err(CliError::Data(format!("no {} in {}", decoder_file(0), dir.display())));
    }
    Ok(files)
}

fn distinct_or_zero(corpus: &[Tokens], n: usize) -> CliResult<f64> {
    if corpus.iter().all(|l| l.len() < n) {
        return Ok(0.0);
    }
    Ok(distinct_n(corpus, n)?)
}

fn distribution(corpus: &[Tokens]) -> CliResult<WordDistribution> {
    if corpus.iter().all(Vec::is_empty) {
        return Ok(WordDistribution::new());
    }
    Ok(word_distribution(corpus)?)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn eval(a: &EvalArgs, invocation: &[String]) -> CliResult<RunReport> {
    let sources = datagen::read_lines(&a.src)?;
    if sources.is_empty() {
        return Err(CliError::Data(format!("{} is empty", a.src.display())));
    }
    let n = sources.len();
    let files = decoder_files(&a.outputs)?;
    let outputs = files.iter().map(|f| read_aligned(f, n, &a.src)).collect::<CliResult<Vec<_>>>()?;
    let refs = a.refs.iter().map(|f| read_aligned(f, n, &a.src)).collect::<CliResult<Vec<_>>>()?;
    let ref_names: Vec<String> = a.refs.iter().map(|p| file_name(p)).collect();

    let meta_path = a.outputs.join(DECODE_META_FILE);
    let config: serde_json::Value = if meta_path.is_file() {
        let text = fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
        serde_json::from_str(&text)?
    } else {
        serde_json::Value::Null
    };
    let seed = a.seed.or_else(|| config.get("seed").and_then(serde_json::Value::as_u64));

    // every line is scored against all reference sets
    let per_line: Vec<Vec<Tokens>> = (0..n).map(|i| refs.iter().map(|r| r[i].clone()).collect()).collect();
    let mut decoders = Vec::with_capacity(outputs.len());
    for (i, (out, file)) in outputs.iter().zip(&files).enumerate() {
        decoders.push(DecoderReport {
            index: i,
            file: file_name(file),
            bleu: multi_ref_bleu(out, &per_line, MAX_ORDER)?,
            sari: sari(&sources, out, &per_line)?,
            distinct_1: distinct_or_zero(out, 1)?,
            distinct_2: distinct_or_zero(out, 2)?,
            avg_length: out.iter().map(Vec::len).sum::<usize>() as f64 / n as f64,
        });
    }

    let dists = outputs.iter().map(|o| distribution(o)).collect::<CliResult<Vec<_>>>()?;
    let (jd, jd_top_words) = if dists.len() >= 2 {
        let words = jd_word_contributions(&dists, a.top_words, KL_EPSILON)?
            .into_iter()
            .enumerate()
            .map(|(decoder, ws)| DecoderWords {
                decoder,
                words: ws
                    .into_iter()
                    .map(|(word, contribution)| WordContribution { word, contribution })
                    .collect(),
            })
            .collect();
        (jeffreys_divergence(&dists, KL_EPSILON)?, words)
    } else {
        (0.0, Vec::new())
    };

    let matrix = confusion_matrix(&outputs, &refs)?;
    // Extra decoders beyond the reference count are matched to zero columns
    // whose index is past the last reference.
    let padded: Vec<Vec<f64>> = matrix
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.resize(row.len().max(matrix.len()), 0.0);
            r
        })
        .collect();
    let assignment = best_assignment(&padded)?;
    let matched = max_matching(&matrix, MATCH_BLEU);
    let lengths = length_report(&sources, &outputs)?;

    let k = decoders.len() as f64;
    let pooled: Vec<Tokens> = outputs.iter().flatten().cloned().collect();
    let mut metrics = BTreeMap::new();
    metrics.insert("bleu_mean".to_string(), decoders.iter().map(|d| d.bleu).sum::<f64>() / k);
    metrics.insert("sari_mean".to_string(), decoders.iter().map(|d| d.sari).sum::<f64>() / k);
    metrics.insert("distinct_1".to_string(), distinct_or_zero(&pooled, 1)?);
    metrics.insert("distinct_2".to_string(), distinct_or_zero(&pooled, 2)?);
    metrics.insert("jd".to_string(), jd);
    metrics.insert("assignment_mean_bleu".to_string(), assignment.mean);
    metrics.insert("matched_decoders".to_string(), matched as f64);
    metrics.insert("length_delta".to_string(), lengths.delta);

    let report = RunReport {
        schema_version: report::SCHEMA_VERSION,
        run_id: report::run_id(invocation, seed),
        invocation: invocation.to_vec(),
        seed,
        config,
        metrics,
        decoders,
        jd,
        jd_top_words,
        lengths,
        confusion: ConfusionSection {
            path: CONFUSION_FILE.to_string(),
            references: ref_names.clone(),
            matrix: matrix.clone(),
            assignment,
            matched,
        },
    };
    let value = serde_json::to_value(&report)?;
    report::validate_report(&value)?;

    let out = a.out.as_deref().unwrap_or(&a.outputs);
    create_dir(out)?;
    let csv_path = out.join(CONFUSION_FILE);
    fs::write(&csv_path, report::confusion_csv(&ref_names, &matrix)).map_err(|e| CliError::io(&csv_path, e))?;
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}
