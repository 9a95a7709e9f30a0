use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_aligned, multi_ref_bleu, MAX_ORDER};

/// BLEU of every decoder's outputs (rows) against every single reference set (columns).
pub fn confusion_matrix<S: AsRef<str> + Clone>(outputs: &[Vec<Vec<S>>], references: &[Vec<Vec<S>>]) -> Result<Vec<Vec<f64>>> {
    if outputs.is_empty() || references.is_empty() {
        return Err(Error::Data("confusion matrix needs outputs and references".into()));
    }
    let lines = references[0].len();
    for (i, o) in outputs.iter().enumerate() {
        check_aligned(&format!("decoder {i} vs references"), o.len(), lines)?;
    }
    for (j, r) in references.iter().enumerate() {
        check_aligned(&format!("reference set {j} vs reference set 0"), r.len(), lines)?;
    }
    let wrapped: Vec<Vec<Vec<Vec<S>>>> = references
        .iter()
        .map(|set| set.iter().map(|line| vec![line.clone()]).collect())
        .collect();
    outputs
        .iter()
        .map(|o| wrapped.iter().map(|r| multi_ref_bleu(o, r, MAX_ORDER)).collect())
        .collect()
}

/// A row-to-column injective matching and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `columns[i]` is the column matched to row `i`.
    pub columns: Vec<usize>,
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// The injective row-to-column assignment maximizing the summed entries.
/// Needs at least as many columns as rows; exact search over column subsets.
pub fn best_assignment(matrix: &[Vec<f64>]) -> Result<Assignment> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols < rows || cols > 20 || matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::Data(format!(
            "cannot assign {rows} rows injectively into {cols} columns"
        )));
    }
    // best[mask]: best sum for the first popcount(mask) rows using columns in mask
    let size = 1usize << cols;
    let mut best = vec![f64::NEG_INFINITY; size];
    let mut choice = vec![usize::MAX; size];
    best[0] = 0.0;
    for mask in 0..size {
        let row = mask.count_ones() as usize;
        if row >= rows || best[mask] == f64::NEG_INFINITY {
            continue;
        }
        for (c, &entry) in matrix[row].iter().enumerate().take(cols) {
            if mask & (1 << c) == 0 {
                let next = mask | (1 << c);
                let v = best[mask] + entry;
                if v > best[next] {
                    best[next] = v;
                    choice[next] = c;
                }
            }
        }
    }
    let (mut mask, _) = (0..size)
        .filter(|m| m.count_ones() as usize == rows)
        .map(|m| (m, best[m]))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut columns = vec![0; rows];
    for row in (0..rows).rev() {
        let c = choice[mask];
        columns[row] = c;
        mask &= !(1 << c);
    }
    let scores: Vec<f64> = columns.iter().enumerate().map(|(r, &c)| matrix[r][c]).collect();
    let mean = scores.iter().sum::<f64>() / rows as f64;
    Ok(Assignment { columns, scores, mean })
}

/// Size of a maximum matching between rows and columns using only entries
/// `>= threshold`.
pub fn max_matching(matrix: &[Vec<f64>], threshold: f64) -> usize {
    let cols = matrix.iter().map(Vec::len).max().unwrap_or(0);
    let mut owner: Vec<Option<usize>> = vec![None; cols];
    fn augment(r: usize, m: &[Vec<f64>], t: f64, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for c in 0..m[r].len() {
            if m[r][c] >= t && !seen[c] {
                seen[c] = true;
                if owner[c].is_none_or(|o| augment(o, m, t, seen, owner)) {
                    owner[c] = Some(r);
                    return true;
                }
            }
        }
        false
    }
    (0..matrix.len())
        .filter(|&r| augment(r, matrix, threshold, &mut vec![false; cols], &mut owner))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub source_avg: f64,
    pub decoder_avg: Vec<f64>,
    /// Largest minus smallest decoder average.
    pub delta: f64,
}

fn mean_len<S>(corpus: &[Vec<S>]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Data("length of an empty corpus".into()));
    }
    Ok(corpus.iter().map(Vec::len).sum::<usize>() as f64 / corpus.len() as f64)
}

pub fn length_report<S>(sources: &[Vec<S>], outputs: &[Vec<Vec<S>>]) -> Result<LengthReport> {
    let source_avg = mean_len(sources)?;
    let decoder_avg = outputs.iter().map(|o| mean_len(o)).collect::<Result<Vec<_>>>()?;
    let max = decoder_avg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = decoder_avg.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LengthReport {
        source_avg,
        delta: if decoder_avg.is_empty() { 0.0 } else { max - min },
        decoder_avg,
    })
}
