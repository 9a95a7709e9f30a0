use crate::error::{Error, Result};

use super::{check_aligned, ngram_counts};

pub const MAX_ORDER: usize = 4;

/// Corpus-level n-gram statistics behind a BLEU score.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// Precision per order; an order with no matches scores `(m + 1) / (t + 1)`
    /// from the second order on.
    pub fn precisions(&self) -> Vec<f64> {
        self.matches
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(i, (&m, &t))| {
                if i > 0 && m == 0 {
                    1.0 / (t as f64 + 1.0)
                } else if t == 0 {
                    0.0
                } else {
                    m as f64 / t as f64
                }
            })
            .collect()
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn score(&self) -> f64 {
        let precisions = self.precisions();
        if precisions.contains(&0.0) {
            return 0.0;
        }
        let order = precisions.len() as f64;
        let log_mean: f64 = precisions.iter().map(|p| p.ln() / order).sum();
        self.brevity_penalty() * log_mean.exp()
    }

    pub fn collect<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<Vec<S>>], max_order: usize) -> Result<Self> {
        check_aligned("bleu hypotheses vs references", hypotheses.len(), references.len())?;
        if hypotheses.is_empty() {
            return Err(Error::Data("bleu needs at least one line".into()));
        }
        let mut stats = BleuStats {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            hyp_len: 0,
            ref_len: 0,
        };
        for (hyp, refs) in hypotheses.iter().zip(references) {
            if refs.is_empty() {
                return Err(Error::Data("a hypothesis line has no reference".into()));
            }
            stats.hyp_len += hyp.len();
            // closest reference length, ties to the shorter one
            stats.ref_len += refs
                .iter()
                .map(Vec::len)
                .min_by_key(|&r| (r.abs_diff(hyp.len()), r))
                .expect("non-empty");
            for n in 1..=max_order {
                let hyp_counts = ngram_counts(hyp, n);
                let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
                for (gram, &c) in &hyp_counts {
                    let max_ref = ref_counts.iter().map(|rc| rc.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                    stats.matches[n - 1] += c.min(max_ref);
                }
                stats.totals[n - 1] += hyp.len().saturating_sub(n - 1);
            }
        }
        Ok(stats)
    }
}

/// Corpus BLEU of line-aligned hypotheses against per-line reference sets.
pub fn multi_ref_bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<Vec<S>>], max_order: usize) -> Result<f64> {
    if max_order == 0 {
        return Err(Error::Config("bleu order must be at least 1".into()));
    }
    Ok(BleuStats::collect(hypotheses, references, max_order)?.score())
}
