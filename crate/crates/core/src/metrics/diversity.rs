use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};

/// Additive smoothing applied over the union vocabulary before taking logs.
pub const KL_EPSILON: f64 = 1e-10;

/// Unigram distribution, keyed in token order.
pub type WordDistribution = BTreeMap<String, f64>;

/// Distinct n-grams over total n-grams across the whole corpus.
pub fn distinct_n<S: AsRef<str>>(corpus: &[Vec<S>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("distinct-n needs n >= 1".into()));
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0usize;
    for line in corpus {
        for w in line.windows(n) {
            seen.insert(w.iter().map(AsRef::as_ref).collect());
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data(format!("corpus has no {n}-grams")));
    }
    Ok(seen.len() as f64 / total as f64)
}

pub fn word_distribution<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<WordDistribution> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for tok in corpus.iter().flatten() {
        *counts.entry(tok.as_ref().to_string()).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Data("word distribution of an empty corpus".into()));
    }
    Ok(counts.into_iter().map(|(w, c)| (w, c as f64 / total as f64)).collect())
}

/// Both distributions smoothed over their joint vocabulary, as aligned vectors.
fn smoothed(dists: &[&WordDistribution], epsilon: f64) -> (Vec<String>, Vec<Vec<f64>>) {
    let vocab: BTreeSet<&String> = dists.iter().flat_map(|d| d.keys()).collect();
    let norm = 1.0 + epsilon * vocab.len() as f64;
    let probs = dists
        .iter()
        .map(|d| {
            vocab
                .iter()
                .map(|w| (d.get(*w).copied().unwrap_or(0.0) + epsilon) / norm)
                .collect()
        })
        .collect();
    (vocab.into_iter().cloned().collect(), probs)
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// `KL(p || q)` in nats after additive `epsilon` smoothing.
pub fn kl_divergence(p: &WordDistribution, q: &WordDistribution, epsilon: f64) -> f64 {
    let (_, probs) = smoothed(&[p, q], epsilon);
    kl(&probs[0], &probs[1])
}

/// Mean KL over all ordered pairs of distinct distributions.
pub fn jeffreys_divergence(dists: &[WordDistribution], epsilon: f64) -> Result<f64> {
    let k = dists.len();
    if k < 2 {
        return Err(Error::Data(format!("jeffreys divergence needs at least 2 distributions, got {k}")));
    }
    let refs: Vec<&WordDistribution> = dists.iter().collect();
    let (_, probs) = smoothed(&refs, epsilon);
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                sum += kl(&probs[i], &probs[j]);
            }
        }
    }
    Ok(sum / (k * (k - 1)) as f64)
}

/// Per distribution `i`, the `top_m` words with the largest
/// `sum_{j != i} Q_i(w) ln(Q_i(w) / Q_j(w))`; ties in lexicographic order.
pub fn jd_word_contributions(dists: &[WordDistribution], top_m: usize, epsilon: f64) -> Result<Vec<Vec<(String, f64)>>> {
    let k = dists.len();
    if k < 2 {
        return Err(Error::Data(format!("word contributions need at least 2 distributions, got {k}")));
    }
    let refs: Vec<&WordDistribution> = dists.iter().collect();
    let (vocab, probs) = smoothed(&refs, epsilon);
    Ok((0..k)
        .map(|i| {
            let mut scored: Vec<(String, f64)> = vocab
                .iter()
                .enumerate()
                .map(|(w, word)| {
                    let qi = probs[i][w];
                    let c = (0..k).filter(|&j| j != i).map(|j| qi * (qi / probs[j][w]).ln()).sum();
                    (word.clone(), c)
                })
                .collect();
            // vocab is already sorted, and the sort is stable
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
            scored.truncate(top_m);
            scored
        })
        .collect())
}
