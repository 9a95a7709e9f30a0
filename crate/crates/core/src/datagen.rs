//! Synthetic rewriting-pattern benchmarks, TSV corpus ingestion and vocabulary building.
//!
//! Syn-Sub maps every input word through one of K injective dictionaries with
//! pairwise disjoint target vocabularies. Syn-Scale rewrites an integer length
//! in metres into km, dm, cm, mm and μm, one token per digit or decimal point.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub type Tokens = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphrasePair {
    pub source: Tokens,
    pub target: Tokens,
    /// Generating pattern of a synthetic pair. Kept for analysis only; the
    /// trainer never reads it and it is not written to `train.tsv`.
    pub pattern: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynConfig {
    pub seed: u64,
    pub k: usize,
    pub source_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train_inputs: usize,
    pub test_inputs: usize,
}

impl Default for SynConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            k: 5,
            source_vocab: 50,
            min_len: 6,
            max_len: 20,
            train_inputs: 5000,
            test_inputs: 1000,
        }
    }
}

impl SynConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.source_vocab == 0 || self.train_inputs == 0 || self.test_inputs == 0 {
            return Err(Error::Config("synthetic dataset counts must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "invalid length range [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// A generated benchmark: training pairs, test inputs and one line-aligned
/// reference set per pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynDataset {
    pub train: Vec<ParaphrasePair>,
    pub test_inputs: Vec<Tokens>,
    pub references: Vec<Vec<Tokens>>,
}

/// K injective dictionaries over the source vocabulary with disjoint ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymDictionaryBank {
    maps: Vec<Vec<String>>,
}

impl SynonymDictionaryBank {
    pub fn generate(k: usize, source_vocab: usize, rng: &mut ChaCha8Rng) -> Self {
        let maps = (0..k)
            .map(|d| {
                let mut perm: Vec<usize> = (0..source_vocab).collect();
                perm.shuffle(rng);
                perm.into_iter().map(|j| format!("s{d}_{j}")).collect()
            })
            .collect();
        Self { maps }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Applies dictionary `k` to every word of `input`.
    pub fn apply(&self, k: usize, input: &[String]) -> Result<Tokens> {
        input
            .iter()
            .map(|w| {
                source_index(w)
                    .and_then(|i| self.maps[k].get(i))
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("word `{w}` is not in the source vocabulary")))
            })
            .collect()
    }

    pub fn target_vocab(&self, k: usize) -> &[String] {
        &self.maps[k]
    }
}

fn source_word(i: usize) -> String {
    format!("w{i}")
}

fn source_index(word: &str) -> Option<usize> {
    word.strip_prefix('w')?.parse().ok()
}

/// Draws `count` distinct inputs with `draw`, rejecting any already seen.
fn distinct_inputs(
    count: usize,
    seen: &mut HashSet<Tokens>,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Tokens,
) -> Vec<Tokens> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let input = draw(rng);
        if seen.insert(input.clone()) {
            out.push(input);
        }
    }
    out
}

fn assemble(
    train_inputs: Vec<Tokens>,
    test_inputs: Vec<Tokens>,
    k: usize,
    rewrite: impl Fn(usize, &[String]) -> Result<Tokens>,
) -> Result<SynDataset> {
    let mut train = Vec::with_capacity(train_inputs.len() * k);
    for input in &train_inputs {
        for pattern in 0..k {
            train.push(ParaphrasePair {
                source: input.clone(),
                target: rewrite(pattern, input)?,
                pattern: Some(pattern),
            });
        }
    }
    let references = (0..k)
        .map(|pattern| test_inputs.iter().map(|input| rewrite(pattern, input)).collect())
        .collect::<Result<Vec<_>>>()?;
    Ok(SynDataset {
        train,
        test_inputs,
        references,
    })
}

/// Synonym-substitution benchmark.
pub fn gen_syn_sub(config: &SynConfig) -> Result<SynDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bank = SynonymDictionaryBank::generate(config.k, config.source_vocab, &mut rng);
    let (lo, hi, v) = (config.min_len, config.max_len, config.source_vocab);
    let draw = |rng: &mut ChaCha8Rng| -> Tokens {
        let len = rng.random_range(lo..=hi);
        (0..len).map(|_| source_word(rng.random_range(0..v))).collect()
    };
    let mut seen = HashSet::new();
    let train_inputs = distinct_inputs(config.train_inputs, &mut seen, &mut rng, draw);
    let test_inputs = distinct_inputs(config.test_inputs, &mut seen, &mut rng, draw);
    assemble(train_inputs, test_inputs, config.k, |k, input| bank.apply(k, input))
}

/// Length units of the Syn-Scale benchmark, in reference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Km,
    Dm,
    Cm,
    Mm,
    Um,
}

impl Unit {
    pub const ALL: [Unit; 5] = [Unit::Km, Unit::Dm, Unit::Cm, Unit::Mm, Unit::Um];

    pub fn token(self) -> &'static str {
        match self {
            Unit::Km => "km",
            Unit::Dm => "dm",
            Unit::Cm => "cm",
            Unit::Mm => "mm",
            Unit::Um => "μm",
        }
    }

    /// Power of ten converting metres into this unit.
    fn exponent(self) -> i32 {
        match self {
            Unit::Km => -3,
            Unit::Dm => 1,
            Unit::Cm => 2,
            Unit::Mm => 3,
            Unit::Um => 6,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Unit::ALL
            .into_iter()
            .find(|u| u.token() == s)
            .ok_or_else(|| Error::Config(format!("unsupported unit `{s}`")))
    }
}

pub const METRE: &str = "m";
pub const SCALE_MIN: u64 = 1000;
pub const SCALE_MAX: u64 = 10000;

fn char_tokens(s: &str) -> Tokens {
    s.chars().map(String::from).collect()
}

/// Rewrites an integer number of metres in `unit`, one token per digit or
/// decimal point plus the unit token. Exact: no rounding, trailing zeros kept.
pub fn convert_unit(metres: u64, unit: Unit) -> Result<Tokens> {
    if !(SCALE_MIN..=SCALE_MAX).contains(&metres) {
        return Err(Error::Contract(format!(
            "{metres} m is outside [{SCALE_MIN}, {SCALE_MAX}]"
        )));
    }
    let text = match unit.exponent() {
        -3 => format!("{}.{:03}", metres / 1000, metres % 1000),
        e => (metres * 10u64.pow(e as u32)).to_string(),
    };
    let mut tokens = char_tokens(&text);
    tokens.push(unit.token().to_string());
    Ok(tokens)
}

/// Inverse of [`convert_unit`]: the number of metres a converted sequence denotes.
pub fn parse_scaled(tokens: &[String]) -> Result<u64> {
    let (unit_tok, digits) = tokens
        .split_last()
        .ok_or_else(|| Error::Data("empty scaled sequence".into()))?;
    let unit: Unit = unit_tok.parse()?;
    let text: String = digits.concat();
    let bad = || Error::Data(format!("`{}` is not a scaled length", tokens.join(" ")));
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    if int_part.is_empty() || !text.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return Err(bad());
    }
    // value = int.frac * 10^-exponent metres, computed in integers
    let mantissa: u64 = format!("{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let shift = unit.exponent() + frac_part.len() as i32;
    if shift >= 0 {
        let div = 10u64.pow(shift as u32);
        if !mantissa.is_multiple_of(div) {
            return Err(bad());
        }
        Ok(mantissa / div)
    } else {
        Ok(mantissa * 10u64.pow((-shift) as u32))
    }
}

pub fn metres_tokens(metres: u64) -> Tokens {
    let mut tokens = char_tokens(&metres.to_string());
    tokens.push(METRE.to_string());
    tokens
}

/// Unit-conversion benchmark; uses the first `k` units of [`Unit::ALL`].
pub fn gen_syn_scale(config: &SynConfig) -> Result<SynDataset> {
    config.validate()?;
    if config.k > Unit::ALL.len() {
        return Err(Error::Config(format!(
            "syn-scale has {} patterns, {} requested",
            Unit::ALL.len(),
            config.k
        )));
    }
    let pool = (SCALE_MAX - SCALE_MIN + 1) as usize;
    if config.train_inputs + config.test_inputs > pool {
        return Err(Error::Config(format!(
            "syn-scale can draw at most {pool} distinct inputs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| metres_tokens(rng.random_range(SCALE_MIN..=SCALE_MAX));
    let mut seen = HashSet::new();
    let train_inputs = distinct_inputs(config.train_inputs, &mut seen, &mut rng, draw);
    let test_inputs = distinct_inputs(config.test_inputs, &mut seen, &mut rng, draw);
    assemble(train_inputs, test_inputs, config.k, |k, input| {
        let metres: u64 = input[..input.len() - 1]
            .concat()
            .parse()
            .map_err(|_| Error::Data(format!("bad syn-scale input {input:?}")))?;
        convert_unit(metres, Unit::ALL[k])
    })
}

/// Writes `train.tsv`, `test.src` and `ref_0.txt .. ref_{K-1}.txt` into `dir`.
pub fn write_dataset(dir: &Path, data: &SynDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pairs: Vec<(Tokens, Tokens)> = data
        .train
        .iter()
        .map(|p| (p.source.clone(), p.target.clone()))
        .collect();
    write_tsv(&dir.join("train.tsv"), &pairs)?;
    write_lines(&dir.join("test.src"), &data.test_inputs)?;
    for (k, refs) in data.references.iter().enumerate() {
        write_lines(&dir.join(format!("ref_{k}.txt")), refs)?;
    }
    Ok(())
}

pub fn write_tsv(path: &Path, pairs: &[(Tokens, Tokens)]) -> Result<()> {
    let mut out = String::new();
    for (s, t) in pairs {
        out.push_str(&s.join(" "));
        out.push('\t');
        out.push_str(&t.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Writes one space-joined line per sequence, LF-terminated.
pub fn write_lines(path: &Path, lines: &[Tokens]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a line-aligned token file; every line (including blank ones) is kept.
pub fn read_lines(path: &Path) -> Result<Vec<Tokens>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TsvCorpus {
    pub pairs: Vec<ParaphrasePair>,
    /// Malformed lines, skipped but reported.
    pub errors: Vec<ParseIssue>,
}

/// Parses `source<TAB>target` lines; blank lines are skipped.
pub fn parse_tsv(text: &str) -> TsvCorpus {
    let mut corpus = TsvCorpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let issue = |message: String| ParseIssue { line: i + 1, message };
        if fields.len() != 2 {
            corpus.errors.push(issue(format!(
                "expected exactly one TAB, found {}",
                fields.len() - 1
            )));
            continue;
        }
        let source: Tokens = fields[0].split_whitespace().map(String::from).collect();
        let target: Tokens = fields[1].split_whitespace().map(String::from).collect();
        if source.is_empty() || target.is_empty() {
            corpus.errors.push(issue("empty source or target".into()));
            continue;
        }
        corpus.pairs.push(ParaphrasePair {
            source,
            target,
            pattern: None,
        });
    }
    corpus
}

pub fn load_tsv_corpus(path: &Path) -> Result<TsvCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_tsv(&text))
}

/// Shared source/target vocabulary: specials first, then tokens by descending
/// frequency with lexicographic tie-break. Tokens rarer than `min_freq` are left out.
pub fn build_vocab(pairs: &[ParaphrasePair], min_freq: usize) -> Vocabulary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        for t in p.source.iter().chain(&p.target) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}
