//! Brute-force metric implementations used as independent oracles.

#![allow(dead_code)]

/// `(sentence, start, end, label)` for every maximal entity, found by trying
/// every `[start, end]` window and checking it against the BIO rules.
pub fn brute_spans(corpus: &[Vec<String>]) -> Vec<(usize, usize, usize, String)> {
    let mut out = Vec::new();
    for (s, tags) in corpus.iter().enumerate() {
        let label_of = |t: &str| t.get(2..).map(str::to_string);
        for start in 0..tags.len() {
            let Some(label) = label_of(&tags[start]) else { continue };
            if tags[start] == "O" {
                continue;
            }
            // a span starts at B-X, or at I-X not preceded by B-X / I-X
            let starts = tags[start].starts_with("B-")
                || start == 0
                || label_of(&tags[start - 1]).as_deref() != Some(label.as_str())
                || tags[start - 1] == "O";
            if !starts {
                continue;
            }
            for end in start..tags.len() {
                let inside = (start + 1..=end).all(|k| tags[k] == format!("I-{label}"));
                let closed = end + 1 == tags.len() || tags[end + 1] != format!("I-{label}");
                if inside && closed {
                    out.push((s, start, end, label.clone()));
                }
            }
        }
    }
    out
}

pub fn brute_f1(pred: &[Vec<String>], gold: &[Vec<String>]) -> f64 {
    let p = brute_spans(pred);
    let g = brute_spans(gold);
    let matched = p.iter().filter(|x| g.contains(x)).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { matched / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { matched / g.len() as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn grams(tokens: &[usize], n: usize) -> Vec<&[usize]> {
    if tokens.len() < n {
        Vec::new()
    } else {
        (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect()
    }
}

/// Corpus BLEU by explicit list counting; clipping is done by repeatedly
/// removing a matched reference n-gram.
pub fn brute_bleu(pred: &[Vec<usize>], refs: &[Vec<usize>]) -> f64 {
    let mut log_sum = 0.0;
    let mut orders = 0;
    let cand_len: usize = pred.iter().map(Vec::len).sum();
    let ref_len: usize = refs.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return 0.0;
    }
    for n in 1..=4 {
        let (mut hits, mut total) = (0usize, 0usize);
        for (p, r) in pred.iter().zip(refs) {
            let mut pool = grams(r, n);
            for g in grams(p, n) {
                total += 1;
                if let Some(k) = pool.iter().position(|x| *x == g) {
                    pool.swap_remove(k);
                    hits += 1;
                }
            }
        }
        if total == 0 {
            continue;
        }
        let num = if hits == 0 { 0.1 } else { hits as f64 };
        log_sum += (num / total as f64).ln();
        orders += 1;
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / orders as f64).exp()
}
