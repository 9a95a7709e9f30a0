use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::{check_aligned, ngram_counts};

const ORDERS: usize = 4;

/// Ratio with the vacuous case (nothing to score) counted as 1.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Keep F1, deletion precision and addition F1 for one order.
fn order_scores(
    source: &HashMap<Vec<&str>, usize>,
    output: &HashMap<Vec<&str>, usize>,
    refs: &[HashMap<Vec<&str>, usize>],
) -> (f64, f64, f64) {
    let num_refs = refs.len() as f64;
    let mut ref_total: HashMap<&Vec<&str>, f64> = HashMap::new();
    for r in refs {
        for (g, &c) in r {
            *ref_total.entry(g).or_insert(0.0) += c as f64;
        }
    }
    let count = |m: &HashMap<Vec<&str>, usize>, g: &Vec<&str>| m.get(g).copied().unwrap_or(0) as f64;
    // reference counts averaged over the reference set
    let ref_avg = |g: &Vec<&str>| ref_total.get(g).copied().unwrap_or(0.0) / num_refs;

    let (mut keep_num, mut keep_out, mut keep_ref) = (0.0, 0.0, 0.0);
    let (mut del_num, mut del_out) = (0.0, 0.0);
    for g in source.keys() {
        let (i, o, r) = (count(source, g), count(output, g), ref_avg(g));
        let kept_out = i.min(o);
        let kept_ref = i.min(r);
        keep_num += kept_out.min(kept_ref);
        keep_out += kept_out;
        keep_ref += kept_ref;
        let del_o = (i - o).max(0.0);
        let del_r = (i - r).max(0.0);
        del_num += del_o.min(del_r);
        del_out += del_o;
    }
    let keep = f1(ratio(keep_num, keep_out), ratio(keep_num, keep_ref));
    let deletion = ratio(del_num, del_out);

    let added: HashSet<&Vec<&str>> = output.keys().filter(|g| !source.contains_key(*g)).collect();
    let wanted: HashSet<&Vec<&str>> = ref_total.keys().copied().filter(|g| !source.contains_key(*g)).collect();
    let good = added.intersection(&wanted).count() as f64;
    let addition = f1(ratio(good, added.len() as f64), ratio(good, wanted.len() as f64));
    (keep, deletion, addition)
}

/// Sentence-averaged SARI over orders 1..4; each line's score is the mean of
/// keep F1, deletion precision and addition F1, each averaged over orders.
/// Components with nothing to score count as 1.
pub fn sari<S: AsRef<str>>(sources: &[Vec<S>], hypotheses: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<f64> {
    check_aligned("sari sources vs hypotheses", sources.len(), hypotheses.len())?;
    check_aligned("sari sources vs references", sources.len(), references.len())?;
    if sources.is_empty() {
        return Err(Error::Data("sari needs at least one line".into()));
    }
    let mut total = 0.0;
    for ((src, hyp), refs) in sources.iter().zip(hypotheses).zip(references) {
        if refs.is_empty() {
            return Err(Error::Data("a sari line has no reference".into()));
        }
        let (mut keep, mut del, mut add) = (0.0, 0.0, 0.0);
        for n in 1..=ORDERS {
            let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
            let (k, d, a) = order_scores(&ngram_counts(src, n), &ngram_counts(hyp, n), &ref_counts);
            keep += k;
            del += d;
            add += a;
        }
        let orders = ORDERS as f64;
        total += (keep / orders + del / orders + add / orders) / 3.0;
    }
    Ok(total / sources.len() as f64)
}
