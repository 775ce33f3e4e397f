//! Token accuracy, span-level BIO F1 and corpus BLEU.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use crate::datagen::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    TokenAccuracy,
    EntityF1,
    Bleu,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::TokenAccuracy => "token_accuracy",
            Metric::EntityF1 => "f1",
            Metric::Bleu => "bleu",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token_accuracy" | "accuracy" | "token-accuracy" => Ok(Metric::TokenAccuracy),
            "f1" | "F1" | "entity_f1" => Ok(Metric::EntityF1),
            "bleu" | "BLEU" => Ok(Metric::Bleu),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Counts behind a metric value.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Tokens {
        matched: usize,
        gold: usize,
    },
    Entities {
        matched: usize,
        predicted: usize,
        gold: usize,
    },
    Ngrams {
        matches: [usize; 4],
        totals: [usize; 4],
        candidate_len: usize,
        reference_len: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    /// In `[0, 1]`.
    pub value: f64,
    pub support: Support,
}

impl fmt::Display for MetricReport {
    /// `metric=value support=...`; BLEU is shown ×100.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = match self.metric {
            Metric::Bleu => self.value * 100.0,
            _ => self.value,
        };
        write!(f, "{}={:.4} support=", self.metric, shown)?;
        match &self.support {
            Support::Tokens { matched, gold } => write!(f, "matched:{matched},gold:{gold}"),
            Support::Entities {
                matched,
                predicted,
                gold,
            } => write!(f, "matched:{matched},predicted:{predicted},gold:{gold}"),
            Support::Ngrams {
                matches,
                totals,
                candidate_len,
                reference_len,
            } => {
                let pairs: Vec<String> = matches.iter().zip(totals).map(|(m, t)| format!("{m}/{t}")).collect();
                write!(
                    f,
                    "ngrams:{},cand_len:{candidate_len},ref_len:{reference_len}",
                    pairs.join("|")
                )
            }
        }
    }
}

fn check_sizes<A, B>(pred: &[A], gold: &[B], op: &'static str) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty(op));
    }
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{op}: {} predictions for {} references",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Position-wise matches over the shorter of each pair, divided by the total
/// number of gold tokens.
pub fn token_accuracy<S: PartialEq>(pred: &[Vec<S>], gold: &[Vec<S>]) -> Result<MetricReport> {
    check_sizes(pred, gold, "token_accuracy")?;
    let matched = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| p.iter().zip(g).filter(|(a, b)| a == b).count())
        .sum();
    let total: usize = gold.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Empty("token_accuracy"));
    }
    Ok(MetricReport {
        metric: Metric::TokenAccuracy,
        value: matched as f64 / total as f64,
        support: Support::Tokens { matched, gold: total },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Result<Bio<'_>> {
    if tag == "O" {
        return Ok(Bio::Outside);
    }
    let malformed = || Error::invalid(format!("malformed BIO tag `{tag}`"));
    let (prefix, ty) = tag.split_once('-').ok_or_else(malformed)?;
    if ty.is_empty() {
        return Err(malformed());
    }
    match prefix {
        "B" => Ok(Bio::Begin(ty)),
        "I" => Ok(Bio::Inside(ty)),
        _ => Err(malformed()),
    }
}

/// A labelled span `[start, end]` (inclusive).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Extracts spans from a BIO sequence. An `I-X` that does not continue an
/// `X` span opens a new one.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let bio = parse_tag(tag.as_ref())?;
        let continues = matches!((bio, open), (Bio::Inside(ty), Some((_, cur))) if ty == cur);
        if !continues {
            if let Some((start, label)) = open.take() {
                spans.push(Span {
                    start,
                    end: i - 1,
                    label: label.to_string(),
                });
            }
            open = match bio {
                Bio::Outside => None,
                Bio::Begin(ty) | Bio::Inside(ty) => Some((i, ty)),
            };
        }
    }
    if let Some((start, label)) = open {
        spans.push(Span {
            start,
            end: tags.len() - 1,
            label: label.to_string(),
        });
    }
    Ok(spans)
}

/// Exact span-and-label F1. Undefined precision or recall counts as 0.
pub fn entity_f1<S: AsRef<str>>(pred: &[Vec<S>], gold: &[Vec<S>]) -> Result<MetricReport> {
    check_sizes(pred, gold, "entity_f1")?;
    let (mut matched, mut n_pred, mut n_gold) = (0, 0, 0);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::invalid(format!(
                "entity_f1: sequence {i} has {} predicted and {} gold tags",
                p.len(),
                g.len()
            )));
        }
        let ps: HashSet<Span> = bio_spans(p)?.into_iter().collect();
        let gs: HashSet<Span> = bio_spans(g)?.into_iter().collect();
        matched += ps.intersection(&gs).count();
        n_pred += ps.len();
        n_gold += gs.len();
    }
    let precision = if n_pred == 0 {
        0.0
    } else {
        matched as f64 / n_pred as f64
    };
    let recall = if n_gold == 0 {
        0.0
    } else {
        matched as f64 / n_gold as f64
    };
    let value = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricReport {
        metric: Metric::EntityF1,
        value,
        support: Support::Entities {
            matched,
            predicted: n_pred,
            gold: n_gold,
        },
    })
}

/// Numerator used for an n-gram order with no clipped matches.
pub const BLEU_ZERO_SMOOTHING: f64 = 0.1;

fn ngram_counts<S: Eq + Hash>(tokens: &[S], n: usize) -> HashMap<&[S], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Single-reference corpus BLEU with up to 4-gram precisions.
///
/// Orders with no clipped matches use `0.1 / candidate n-gram count`; orders
/// for which the candidate corpus has no n-grams at all are left out of the
/// geometric mean. Brevity penalty `exp(min(0, 1 − r/c))`.
pub fn corpus_bleu<S: Eq + Hash>(pred: &[Vec<S>], refs: &[Vec<S>]) -> Result<MetricReport> {
    check_sizes(pred, refs, "corpus_bleu")?;
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0, 0);
    for (p, r) in pred.iter().zip(refs) {
        cand_len += p.len();
        ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            for (gram, c) in ngram_counts(p, n) {
                matches[n - 1] += c.min(rc.get(gram).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    let support = Support::Ngrams {
        matches,
        totals,
        candidate_len: cand_len,
        reference_len: ref_len,
    };
    if cand_len == 0 {
        return Ok(MetricReport {
            metric: Metric::Bleu,
            value: 0.0,
            support,
        });
    }
    let logs: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&m, &t)| {
            let num = if m == 0 { BLEU_ZERO_SMOOTHING } else { m as f64 };
            (num / t as f64).ln()
        })
        .collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let bp = (1.0 - ref_len as f64 / cand_len as f64).min(0.0).exp();
    Ok(MetricReport {
        metric: Metric::Bleu,
        value: bp * mean.exp(),
        support,
    })
}

/// Scores id sequences (without EOS) under `metric`.
///
/// For F1, ids become tag strings through `vocab`; predicted tokens that are
/// not BIO tags read as `O`, and predictions are cut or padded with `O` to
/// the gold length.
pub fn score_ids(metric: Metric, pred: &[Vec<usize>], gold: &[Vec<usize>], vocab: &Vocabulary) -> Result<MetricReport> {
    match metric {
        Metric::TokenAccuracy => token_accuracy(pred, gold),
        Metric::Bleu => corpus_bleu(pred, gold),
        Metric::EntityF1 => {
            let as_tag = |id: usize| -> String {
                match vocab.token(id) {
                    Some(t) if parse_tag(t).is_ok() => t.to_string(),
                    _ => "O".to_string(),
                }
            };
            let gold_tags: Vec<Vec<String>> = gold.iter().map(|g| g.iter().map(|&id| as_tag(id)).collect()).collect();
            let pred_tags: Vec<Vec<String>> = pred
                .iter()
                .zip(&gold_tags)
                .map(|(p, g)| {
                    (0..g.len())
                        .map(|i| p.get(i).map_or_else(|| "O".to_string(), |&id| as_tag(id)))
                        .collect()
                })
                .collect();
            entity_f1(&pred_tags, &gold_tags)
        }
    }
}
