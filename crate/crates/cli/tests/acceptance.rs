//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Trains four desk-scale models (about 20 minutes on one core in the test
//! profile) and shares them between the criteria that need them.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dpage_core::checkpoint::{from_bytes, to_bytes};
use dpage_core::datagen::{build_vocab, gen_syn_scale, gen_syn_sub, SynConfig, SynDataset, Tokens};
use dpage_core::decoding::{beam_search, beam_topk_decode, decode_corpus, greedy, sequence_log_prob};
use dpage_core::gradcheck::{grad_check, DEFAULT_STEP};
use dpage_core::metrics::{
    best_assignment, confusion_matrix, distinct_n, jeffreys_divergence, kl_divergence, max_matching,
    multi_ref_bleu, word_distribution, KL_EPSILON, MAX_ORDER,
};
use dpage_core::model::{attend, lstm_step, EncoderOutput, LstmCell};
use dpage_core::trainer::{train, IdPair};
use dpage_core::{
    Conditioning, DecodeConfig, DecodeMode, Mode, ModelConfig, ParamSet, Seq2Seq, Tensor, TrainingConfig,
    TrainingLog, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;
const K: usize = 5;
const GRAD_TOL: f64 = 1e-4;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

/// The shared training budget: 4 epochs at lr 0.5, halved for the last one.
fn budget(mode: Mode) -> TrainingConfig {
    let mut c = TrainingConfig::new(mode, SEED);
    c.epochs = 4;
    c.decay_start = 3;
    c
}

struct Trained {
    model: Seq2Seq,
    log: TrainingLog,
    /// Test outputs, `[decoder][input]`.
    outputs: Vec<Vec<Tokens>>,
    matrix: Vec<Vec<f64>>,
    jd: f64,
}

struct Corpus {
    data: SynDataset,
    vocab: Vocabulary,
    train: Vec<IdPair>,
    test: Vec<Vec<usize>>,
}

fn corpus(data: SynDataset) -> Corpus {
    let vocab = build_vocab(&data.train, 1);
    let ids = |t: &Tokens| vocab.encode(t).unwrap().ids().to_vec();
    let train = data.train.iter().map(|p| (ids(&p.source), ids(&p.target))).collect();
    let test = data.test_inputs.iter().map(ids).collect();
    Corpus {
        data,
        vocab,
        train,
        test,
    }
}

fn decode_mode(mode: Mode) -> DecodeMode {
    match mode {
        Mode::Dpage => DecodeMode::Dpage,
        Mode::Noise => DecodeMode::Noise,
        Mode::Vae => DecodeMode::Vae,
        Mode::Seq2seq => DecodeMode::Beam,
    }
}

fn decode_text(model: &Seq2Seq, c: &Corpus) -> Vec<Vec<Tokens>> {
    let cfg = DecodeConfig::new(decode_mode(model.config().mode), K, SEED);
    decode_corpus(model, &c.test, &cfg)
        .unwrap()
        .iter()
        .map(|d| d.iter().map(|ids| c.vocab.decode(ids)).collect())
        .collect()
}

fn train_and_decode(c: &Corpus, mode: Mode, label: &str) -> Trained {
    let t = Instant::now();
    let mut model = Seq2Seq::new(ModelConfig::new(mode, c.vocab.len(), K, SEED)).unwrap();
    let log = train(&mut model, &c.train, &budget(mode)).unwrap();
    let outputs = decode_text(&model, c);
    let matrix = confusion_matrix(&outputs, &c.data.references).unwrap();
    let dists: Vec<_> = outputs.iter().map(|o| word_distribution(o).unwrap()).collect();
    let jd = jeffreys_divergence(&dists, KL_EPSILON).unwrap();
    println!(
        "  [{label}] trained and decoded in {:.0}s; epoch losses {:?}",
        t.elapsed().as_secs_f64(),
        log.epoch_loss.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>()
    );
    for row in &matrix {
        println!("    {}", row.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "));
    }
    Trained {
        model,
        log,
        outputs,
        matrix,
        jd,
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut errors = Vec::new();

    let mut ps = ParamSet::new();
    let w = ps.add("w", uniform(&mut rng, &[5, 4])).unwrap();
    let x = ps.add("x", uniform(&mut rng, &[3])).unwrap();
    let linear = grad_check(
        &mut ps,
        |g| {
            let one = g.constant(Tensor::vector(vec![1.0]));
            let (wv, xv) = (g.param(w), g.param(x));
            let xb = g.concat(&[xv, one], 0)?;
            let z = g.matmul(wv, xb)?;
            g.nll(z, 2)
        },
        DEFAULT_STEP,
        GRAD_TOL,
    )
    .unwrap();
    errors.push(("linear+softmax+nll", linear.max_rel_error));

    let mut ps = ParamSet::new();
    let cell = LstmCell::register(&mut ps, "cell", 3, 4, || rng.random_range(-2.0..2.0)).unwrap();
    let x = ps.add("x", uniform(&mut rng, &[3])).unwrap();
    let h = ps.add("h", uniform(&mut rng, &[4])).unwrap();
    let c = ps.add("c", uniform(&mut rng, &[4])).unwrap();
    let proj = uniform(&mut rng, &[8]);
    let lstm = grad_check(
        &mut ps,
        |g| {
            let (xv, hv, cv) = (g.param(x), g.param(h), g.param(c));
            let (h2, c2) = lstm_step(g, &cell, hv, cv, xv)?;
            let both = g.concat(&[h2, c2], 0)?;
            let p = g.constant(proj.clone());
            let weighted = g.mul(both, p)?;
            Ok(g.sum(weighted))
        },
        DEFAULT_STEP,
        GRAD_TOL,
    )
    .unwrap();
    errors.push(("lstm_step", lstm.max_rel_error));

    let mut ps = ParamSet::new();
    let states: Vec<_> = (0..3).map(|s| ps.add(format!("s{s}"), uniform(&mut rng, &[4])).unwrap()).collect();
    let hd = ps.add("h_dec", uniform(&mut rng, &[4])).unwrap();
    let wc = ps.add("w_c", uniform(&mut rng, &[4, 9])).unwrap();
    let wo = ps.add("w_out", uniform(&mut rng, &[6, 5])).unwrap();
    let attention = grad_check(
        &mut ps,
        |g| {
            let rows: Vec<_> = states.iter().map(|&s| g.param(s)).collect();
            let memory = g.stack(&rows)?;
            let memory_t = g.transpose(memory)?;
            let enc = EncoderOutput {
                states: rows,
                memory,
                memory_t,
                finals: Vec::new(),
            };
            let hv = g.param(hd);
            let att = attend(g, hv, &enc)?;
            let one = g.constant(Tensor::vector(vec![1.0]));
            let ch = g.concat(&[att.context, hv, one], 0)?;
            let wcv = g.param(wc);
            let pre = g.matmul(wcv, ch)?;
            let ht = g.tanh(pre)?;
            let hb = g.concat(&[ht, one], 0)?;
            let wov = g.param(wo);
            let logits = g.matmul(wov, hb)?;
            g.nll(logits, 4)
        },
        DEFAULT_STEP,
        GRAD_TOL,
    )
    .unwrap();
    errors.push(("attention", attention.max_rel_error));

    let mut cfg = ModelConfig::new(Mode::Dpage, 5, 3, 4);
    cfg.embed_dim = 2;
    cfg.hidden_dim = 2;
    cfg.pattern_dim = 2;
    let mut model = Seq2Seq::new(cfg).unwrap();
    for p in model.params_mut().iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
    }
    let mut ps = model.params().clone();
    let one_step = grad_check(
        &mut ps,
        |g| {
            let enc = model.encode(g, &[4, 3, 4])?;
            let mut best = None;
            for k in 0..3 {
                let l = model.sequence_nll(g, &enc, &[3], &Conditioning::Pattern(k))?;
                if best.is_none_or(|b| g.value(l).item().unwrap() < g.value(b).item().unwrap()) {
                    best = Some(l);
                }
            }
            Ok(best.unwrap())
        },
        DEFAULT_STEP,
        GRAD_TOL,
    )
    .unwrap();
    errors.push(("one-step pattern loss", one_step.max_rel_error));

    let secs = t.elapsed().as_secs_f64();
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(worst < GRAD_TOL && secs < 10.0, format!("{detail}; {secs:.2}s (< 10s)"))
}

fn metric_oracles() -> Verdict {
    let t = Instant::now();
    let toks = |s: &str| -> Tokens { s.split_whitespace().map(String::from).collect() };
    let corpus: Vec<Tokens> = ["the cat sat on the mat", "a b c d e", "x y"].iter().map(|s| toks(s)).collect();
    let refs: Vec<Vec<Tokens>> = corpus.iter().map(|l| vec![l.clone()]).collect();
    let bleu = multi_ref_bleu(&corpus, &refs, MAX_ORDER).unwrap();
    let d = word_distribution(&corpus).unwrap();
    let jd = jeffreys_divergence(&[d.clone(), d.clone(), d], KL_EPSILON).unwrap();
    let p = [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into_iter().collect();
    let q = [("a".to_string(), 0.25), ("b".to_string(), 0.75)].into_iter().collect();
    let kl = kl_divergence(&p, &q, KL_EPSILON);
    let distinct = distinct_n(&[toks("a b a"), toks("b c")], 1).unwrap();

    // every confusion entry depends only on its own decoder and reference set
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let words = ["a", "b", "c", "d", "e", "f"];
    let random_corpus = |rng: &mut ChaCha8Rng| -> Vec<Tokens> {
        (0..6)
            .map(|_| (0..rng.random_range(1..7)).map(|_| words[rng.random_range(0..6)].to_string()).collect())
            .collect()
    };
    let mut independent = true;
    for _ in 0..20 {
        let outs: Vec<_> = (0..3).map(|_| random_corpus(&mut rng)).collect();
        let rs: Vec<_> = (0..4).map(|_| random_corpus(&mut rng)).collect();
        let m = confusion_matrix(&outs, &rs).unwrap();
        let (i, j) = (rng.random_range(0..3), rng.random_range(0..4));
        let single = confusion_matrix(&outs[i..=i], &rs[j..=j]).unwrap()[0][0];
        let mut outs2 = outs.clone();
        let mut rs2 = rs.clone();
        outs2[(i + 1) % 3] = random_corpus(&mut rng);
        rs2[(j + 1) % 4] = random_corpus(&mut rng);
        let m2 = confusion_matrix(&outs2, &rs2).unwrap();
        independent &= m[i][j] == single && m2[i][j] == single;
    }
    let secs = t.elapsed().as_secs_f64();
    let passed = bleu == 1.0
        && jd.abs() < 1e-9
        && (kl - 0.1438).abs() < 1e-3
        && distinct == 0.6
        && independent
        && secs < 5.0;
    verdict(
        passed,
        format!("bleu {bleu}, jd {jd:.1e}, kl {kl:.4}, distinct-1 {distinct}, independence {independent}; {secs:.2}s (< 5s)"),
    )
}

fn toy_decoder(seed: u64) -> Seq2Seq {
    // ids 0 and 1 are never emitted, leaving EOS and three content tokens
    let mut cfg = ModelConfig::new(Mode::Seq2seq, 6, 1, seed);
    cfg.embed_dim = 3;
    cfg.hidden_dim = 3;
    let mut m = Seq2Seq::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in m.params_mut().iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.5..1.5));
    }
    m
}

fn enumerate(m: &Seq2Seq, src: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut all = vec![vec![]];
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| (3..6).map(move |t| [s.clone(), vec![t]].concat()))
            .collect();
        all.extend(frontier.iter().cloned());
    }
    let mut scored: Vec<(Vec<usize>, f64)> = all
        .into_iter()
        .map(|s| {
            let lp = sequence_log_prob(m, src, &s, &Conditioning::None).unwrap();
            (s, lp)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().map(|e| e.0).collect()
}

fn decoding_oracle() -> Verdict {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut cases = 0;
    for seed in 0..8 {
        let m = toy_decoder(seed);
        let src = [3 + seed as usize % 3, 4, 5];
        for max_len in 1..=3 {
            let truth = enumerate(&m, &src, max_len);
            for beam in [64, 100] {
                for k in [1, 3, 5, 10] {
                    cases += 1;
                    let top = beam_topk_decode(&m, &src, beam, k, max_len).unwrap();
                    if top[..] != truth[..k.min(truth.len())] {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let mut greedy_mismatches = 0;
    for seed in 0..100 {
        let m = toy_decoder(1000 + seed);
        let src = [3 + seed as usize % 3, 5];
        let g = greedy(&m, &src, &Conditioning::None, 3).unwrap();
        let b = beam_search(&m, &src, 1, &Conditioning::None, 3).unwrap();
        if b[0].tokens != g.tokens {
            greedy_mismatches += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && greedy_mismatches == 0 && secs < 30.0,
        format!(
            "beam vs enumeration {mismatches}/{cases} mismatches, beam-1 vs greedy {greedy_mismatches}/100; {secs:.2}s (< 30s)"
        ),
    )
}

fn fmt_row(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", "))
}

fn scale_capture(dpage: &Trained) -> Verdict {
    let a = best_assignment(&dpage.matrix).unwrap();
    let min = a.scores.iter().copied().fold(1.0, f64::min);
    verdict(
        min >= 0.95,
        format!("assignment {:?}, matched BLEU {} (each >= 0.95)", a.columns, fmt_row(&a.scores)),
    )
}

fn sub_capture(sub: &Trained) -> Verdict {
    let matched = max_matching(&sub.matrix, 0.95);
    let a = best_assignment(&sub.matrix).unwrap();
    verdict(
        matched >= 4,
        format!("{matched}/5 patterns matched at BLEU >= 0.95 (need 4); assignment BLEU {}", fmt_row(&a.scores)),
    )
}

fn spread(values: impl Iterator<Item = f64> + Clone) -> f64 {
    values.clone().fold(f64::NEG_INFINITY, f64::max) - values.fold(f64::INFINITY, f64::min)
}

fn baselines(noise: &Trained, vae: &Trained) -> Verdict {
    let noise_mean = best_assignment(&noise.matrix).unwrap().mean;
    let row_spread = vae.matrix.iter().map(|r| spread(r.iter().copied())).fold(0.0, f64::max);
    let col_spread = (0..K)
        .map(|j| spread(vae.matrix.iter().map(|r| r[j])))
        .fold(0.0, f64::max);
    verdict(
        noise_mean <= 0.5 && row_spread <= 0.05,
        format!(
            "noise-5 best assignment mean {noise_mean:.3} (<= 0.5); vae-5 max row spread {row_spread:.3} (<= 0.05), \
             max column spread {col_spread:.3}"
        ),
    )
}

fn jd_separation(dpage: &Trained, noise: &Trained, vae: &Trained) -> Verdict {
    verdict(
        dpage.jd >= 10.0 * vae.jd && dpage.jd >= 10.0 * noise.jd,
        format!("jd dpage {:.3e}, noise {:.3e}, vae {:.3e} (dpage >= 10x each)", dpage.jd, noise.jd, vae.jd),
    )
}

fn balance(dpage: &Trained) -> Verdict {
    let f = dpage.log.assignments.final_fractions().unwrap();
    verdict(
        f.iter().all(|&x| (0.1..=0.3).contains(&x)),
        format!("final-epoch fractions {} (each in [0.1, 0.3])", fmt_row(&f)),
    )
}

fn dpage_cli(dir: &Path, args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_dpage")).current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        println!("  dpage {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

/// gen-data, train, decode and eval with seed 7 in `dir`; returns the report bytes.
fn pipeline(dir: &Path) -> Option<Vec<u8>> {
    let refs: Vec<String> = (0..K).map(|k| format!("data/ref_{k}.txt")).collect();
    let mut eval = vec!["eval", "--outputs", "out", "--src", "data/test.src", "--refs"];
    eval.extend(refs.iter().map(String::as_str));
    let steps: [&[&str]; 4] = [
        &["gen-data", "--dataset", "syn-scale", "--seed", "7", "--out", "data", "--train-size", "300", "--test-size", "50"],
        &["train", "--data", "data", "--out", "model", "--seed", "7", "--epochs", "2", "--hidden", "16", "--embed", "8"],
        &["decode", "--checkpoint", "model/model.ckpt", "--input", "data/test.src", "--out", "out", "--seed", "7"],
        &eval,
    ];
    for s in steps {
        if !dpage_cli(dir, s) {
            return None;
        }
    }
    fs::read(dir.join("out/report.json")).ok()
}

fn reproducibility(dpage: &Trained, scale: &Corpus) -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (pipeline(a.path()), pipeline(b.path()));
    let reports_equal = ra.is_some() && ra == rb;
    let schema_ok = ra
        .as_ref()
        .and_then(|r| serde_json::from_slice(r).ok())
        .is_some_and(|v| dpage_cli::validate_report(&v).is_ok());

    let bytes = to_bytes(&dpage.model, &scale.vocab, Some(&budget(Mode::Dpage))).unwrap();
    let restored = from_bytes(&bytes).unwrap();
    let outputs_equal = decode_text(&restored.model, scale) == dpage.outputs;
    let bytes_equal = to_bytes(&restored.model, &restored.vocab, restored.training.as_ref()).unwrap() == bytes;
    verdict(
        reports_equal && schema_ok && outputs_equal && bytes_equal,
        format!(
            "report.json identical across runs {reports_equal} (schema valid {schema_ok}); \
             decode after checkpoint round trip identical {outputs_equal} (re-save identical {bytes_equal})"
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |id, name, v: Verdict| {
        println!("{} criterion {id} ({name}): {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    record(1, "gradient correctness", gradients());
    record(7, "metric oracles", metric_oracles());
    record(8, "decoding oracle", decoding_oracle());

    let scale = corpus(gen_syn_scale(&SynConfig::with_seed(SEED)).unwrap());
    let dpage = train_and_decode(&scale, Mode::Dpage, "syn-scale dpage-5");
    record(2, "syn-scale pattern capture", scale_capture(&dpage));
    record(6, "training balance", balance(&dpage));
    let noise = train_and_decode(&scale, Mode::Noise, "syn-scale noise-5");
    let vae = train_and_decode(&scale, Mode::Vae, "syn-scale vae-5");
    record(4, "baseline failure to separate", baselines(&noise, &vae));
    record(5, "jd separation", jd_separation(&dpage, &noise, &vae));
    record(9, "reproducibility", reproducibility(&dpage, &scale));
    drop((noise, vae));

    let sub = corpus(gen_syn_sub(&SynConfig::with_seed(SEED)).unwrap());
    let sub_model = train_and_decode(&sub, Mode::Dpage, "syn-sub dpage-5");
    record(3, "syn-sub pattern capture", sub_capture(&sub_model));

    results.sort_by_key(|r| r.0);
    println!("\nsummary ({:.0}s):", started.elapsed().as_secs_f64());
    for (id, name, v) in &results {
        println!("  {} {id} {name}", if v.passed { "PASS" } else { "FAIL" });
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
