//! Metrics against independently written reference computations.

use dpage_core::metrics::{distinct_n, jeffreys_divergence, kl_divergence, multi_ref_bleu, sari, KL_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Naive n-gram multiset as a sorted list of (gram, count).
fn grams(s: &[String], n: usize) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    if s.len() >= n {
        for i in 0..=s.len() - n {
            let g = s[i..i + n].join(" ");
            match out.iter_mut().find(|(k, _)| *k == g) {
                Some(e) => e.1 += 1.0,
                None => out.push((g, 1.0)),
            }
        }
    }
    out
}

fn get(m: &[(String, f64)], g: &str) -> f64 {
    m.iter().find(|(k, _)| k == g).map_or(0.0, |e| e.1)
}

/// Straight transcription of the keep / delete / add definitions for one line.
fn sari_line(src: &[String], out: &[String], refs: &[Vec<String>]) -> f64 {
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 1.0 };
    let f = |p: f64, r: f64| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    let mut total = 0.0;
    for n in 1..=4 {
        let (i_g, o_g) = (grams(src, n), grams(out, n));
        let r_all: Vec<Vec<(String, f64)>> = refs.iter().map(|r| grams(r, n)).collect();
        let rbar = |g: &str| r_all.iter().map(|r| get(r, g)).sum::<f64>() / refs.len() as f64;
        let (mut kn, mut kd_o, mut kd_r, mut dn, mut dd) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (g, ci) in &i_g {
            let co = get(&o_g, g);
            let cr = rbar(g);
            kn += ci.min(co).min(ci.min(cr));
            kd_o += ci.min(co);
            kd_r += ci.min(cr);
            dn += (ci - co).max(0.0).min((ci - cr).max(0.0));
            dd += (ci - co).max(0.0);
        }
        let keep = f(div(kn, kd_o), div(kn, kd_r));
        let del = div(dn, dd);
        let mut ref_union: Vec<String> = Vec::new();
        for r in &r_all {
            for (g, _) in r {
                if !ref_union.contains(g) {
                    ref_union.push(g.clone());
                }
            }
        }
        let added: Vec<&String> = o_g.iter().map(|e| &e.0).filter(|g| get(&i_g, g) == 0.0).collect();
        let wanted: Vec<&String> = ref_union.iter().filter(|g| get(&i_g, g) == 0.0).collect();
        let good = added.iter().filter(|g| wanted.contains(g)).count() as f64;
        let add = f(div(good, added.len() as f64), div(good, wanted.len() as f64));
        total += (keep + del + add) / 3.0;
    }
    total / 4.0
}

#[test]
fn sari_small_case() {
    let v = sari(&[t("a b")], &[t("a c")], &[vec![t("a c")]]).unwrap();
    assert!((v - sari_line(&t("a b"), &t("a c"), &[t("a c")])).abs() < 1e-12);
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn sari_identity_uses_vacuous_convention() {
    let s = t("x y z");
    assert_eq!(sari(std::slice::from_ref(&s), std::slice::from_ref(&s), &[vec![s.clone()]]).unwrap(), 1.0);
}

#[test]
fn sari_matches_oracle_on_random_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let words = ["a", "b", "c", "d", "e", "f"];
    let line = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.random_range(1..8);
        (0..n).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()
    };
    let (mut srcs, mut outs, mut refs) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..40 {
        srcs.push(line(&mut rng));
        outs.push(line(&mut rng));
        let nref = rng.random_range(1..4);
        refs.push((0..nref).map(|_| line(&mut rng)).collect::<Vec<_>>());
    }
    let expect: f64 = srcs
        .iter()
        .zip(&outs)
        .zip(&refs)
        .map(|((s, o), r)| sari_line(s, o, r))
        .sum::<f64>()
        / 40.0;
    assert!((sari(&srcs, &outs, &refs).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn bleu_two_line_spreadsheet() {
    // line 1: "the cat sat" vs {"the cat sat down"}: unigrams 3/3, bigrams 2/2
    // line 2: "a dog" vs {"the dog", "a big dog"}: unigrams a, dog -> 2/2; bigram "a dog" -> 0/1
    //   closest reference length to 2 is 2
    // p1 = 5/5, p2 = 2/3; c = 5, r = 4 + 2 = 6, BP = exp(1 - 6/5)
    let hyps = vec![t("the cat sat"), t("a dog")];
    let refs = vec![vec![t("the cat sat down")], vec![t("the dog"), t("a big dog")]];
    let expect = (1.0f64 - 6.0 / 5.0).exp() * (0.5 * (2.0f64 / 3.0).ln()).exp();
    let got = multi_ref_bleu(&hyps, &refs, 2).unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn bleu_smooths_missing_higher_orders() {
    // unigram 2/2 matched, no bigram match: p2 = (0 + 1) / (1 + 1)
    let got = multi_ref_bleu(&[t("b a")], &[vec![t("a b")]], 2).unwrap();
    assert!((got - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn hand_values() {
    assert_eq!(distinct_n(&[t("a b a"), t("b c")], 1).unwrap(), 0.6);
    let p = [("a", 0.5), ("b", 0.5)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let q = [("a", 0.25), ("b", 0.75)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    assert!((kl_divergence(&p, &q, KL_EPSILON) - 0.1438).abs() < 1e-3);
    assert!(jeffreys_divergence(&[p.clone(), p], KL_EPSILON).unwrap().abs() < 1e-9);
}
