//! Fidelity and diversity metrics over tokenized corpora.

mod bleu;
mod confusion;
mod diversity;
mod sari;

pub use bleu::{multi_ref_bleu, BleuStats, MAX_ORDER};
pub use confusion::{best_assignment, confusion_matrix, length_report, max_matching, Assignment, LengthReport};
pub use diversity::{
    distinct_n, jd_word_contributions, jeffreys_divergence, kl_divergence, word_distribution, WordDistribution,
    KL_EPSILON,
};
pub use sari::sari;

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Counts of every n-gram of order `n` in `tokens`.
pub(crate) fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

pub(crate) fn check_aligned(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Data(format!("{what}: {a} lines vs {b} lines")));
    }
    Ok(())
}
