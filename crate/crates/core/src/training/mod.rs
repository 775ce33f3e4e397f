//! The per-step cross-entropy objective under five ways of choosing each
//! decoder input, plus hard greedy decoding.
//!
//! | regime           | input to step `i` when the model branch is taken |
//! |------------------|--------------------------------------------------|
//! | `CE`             | always the gold embedding `e(y*_{i−1})`          |
//! | `SS-hard-greedy` | `e(argmax s_{i−1})`                              |
//! | `SS-hard-sample` | `e(argmax (s_{i−1} + G))`                        |
//! | `relaxed-greedy` | `Eᵀ softmax(α s_{i−1})`                          |
//! | `relaxed-sample` | `Eᵀ softmax(α (s_{i−1} + G))`                    |
//!
//! Outside `CE`, a coin with gold probability `ε` is flipped at every step
//! after the first. Hard regimes pass no gradient to the scores that picked
//! the token; relaxed regimes do.

mod train;

pub use train::{
    read_metrics_csv, train, train_seed, write_metrics_csv, write_run_outputs, ModelShape, RunRecord, SeedRun,
    TrainConfig, TrainOutcome, METRICS_HEADER,
};

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::datagen::SequencePair;
use crate::error::{Error, Result};
use crate::relaxation::{self, draw_branch, gumbel_noise, MixBranch, Temperature};
use crate::rng::{self, Rng, Stream};
use crate::scalar::Scalar;
use crate::seq2seq::{AttentionMode, Bound, Seq2Seq, EOS, SOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Ce,
    SsHardGreedy,
    SsHardSample,
    RelaxedGreedy,
    RelaxedSample,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Ce,
        Regime::SsHardGreedy,
        Regime::SsHardSample,
        Regime::RelaxedGreedy,
        Regime::RelaxedSample,
    ];

    pub fn is_relaxed(self) -> bool {
        matches!(self, Regime::RelaxedGreedy | Regime::RelaxedSample)
    }

    pub fn is_hard(self) -> bool {
        matches!(self, Regime::SsHardGreedy | Regime::SsHardSample)
    }

    pub fn samples(self) -> bool {
        matches!(self, Regime::SsHardSample | Regime::RelaxedSample)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Ce => "CE",
            Regime::SsHardGreedy => "SS-hard-greedy",
            Regime::SsHardSample => "SS-hard-sample",
            Regime::RelaxedGreedy => "relaxed-greedy",
            Regime::RelaxedSample => "relaxed-sample",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown regime `{s}`")))
    }
}

/// `−log softmax(scores)[gold]`.
pub fn step_loss<T: Scalar>(tape: &mut Tape<T>, scores: Var, gold: usize) -> Result<Var> {
    let log_probs = tape.log_softmax(scores)?;
    let picked = tape.pick(log_probs, gold)?;
    tape.neg(picked)
}

/// Random sources consumed by a rollout.
#[derive(Clone, Debug)]
pub struct RolloutStreams {
    pub mixing: Rng,
    pub gumbel: Rng,
}

impl RolloutStreams {
    pub fn new(seed: u64) -> Self {
        RolloutStreams {
            mixing: rng::stream(seed, Stream::Mixing),
            gumbel: rng::stream(seed, Stream::Gumbel),
        }
    }
}

/// What was fed into one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct FedInput {
    pub embedding: Var,
    /// `None` at step 0 (start symbol) and under `CE`.
    pub branch: Option<MixBranch>,
    /// Token chosen by a hard regime on the model branch.
    pub decision: Option<usize>,
}

/// Tape nodes of one rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// Sum of the step losses.
    pub loss: Var,
    pub step_losses: Vec<Var>,
    pub step_scores: Vec<Var>,
    pub fed: Vec<FedInput>,
}

/// Source ids as the encoder sees them: the source followed by EOS.
pub fn encoder_input(source: &[usize]) -> Vec<usize> {
    let mut ids = source.to_vec();
    ids.push(EOS);
    ids
}

/// Builds the summed per-step loss of one pair under `regime`.
pub fn rollout_loss<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Bound<'_, T>,
    pair: &SequencePair,
    regime: Regime,
    eps: T,
    alpha: Temperature<T>,
    streams: &mut RolloutStreams,
) -> Result<Rollout> {
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::invalid(format!(
            "mixing probability must lie in [0, 1], got {eps}"
        )));
    }
    let target = pair.target();
    let source = encoder_input(pair.source());
    if model.config().attention == AttentionMode::FixedPositional && target.len() > source.len() {
        return Err(Error::invalid(format!(
            "fixed attention needs target length {} <= encoded source length {}",
            target.len(),
            source.len()
        )));
    }
    let encoded = model.encode(tape, &source)?;
    let table = model.target_table();
    let vocab = model.config().tgt_vocab;
    let (mut h, mut c) = encoded.final_state;

    let mut step_losses = Vec::with_capacity(target.len());
    let mut step_scores: Vec<Var> = Vec::with_capacity(target.len());
    let mut fed = Vec::with_capacity(target.len());
    for (i, &gold) in target.iter().enumerate() {
        let input = if i == 0 {
            FedInput {
                embedding: model.target_embedding(tape, SOS)?,
                branch: None,
                decision: None,
            }
        } else {
            let gold_emb = model.target_embedding(tape, target[i - 1])?;
            if regime == Regime::Ce {
                FedInput {
                    embedding: gold_emb,
                    branch: None,
                    decision: None,
                }
            } else {
                let branch = draw_branch(eps, &mut streams.mixing);
                let noise = if regime.samples() {
                    Some(gumbel_noise::<T, _>(&mut streams.gumbel, vocab)?)
                } else {
                    None
                };
                let prev = step_scores[i - 1];
                match branch {
                    MixBranch::Gold => FedInput {
                        embedding: gold_emb,
                        branch: Some(branch),
                        decision: None,
                    },
                    MixBranch::Model => {
                        let (embedding, decision) = match regime {
                            Regime::SsHardGreedy => {
                                let (e, idx) = relaxation::hard_argmax_embedding(tape, prev, table)?;
                                (e, Some(idx))
                            }
                            Regime::SsHardSample => {
                                let noise = noise.as_ref().expect("sampling regimes draw noise");
                                let perturbed: Vec<T> = tape
                                    .value(prev)
                                    .iter()
                                    .zip(noise.noise())
                                    .map(|(&s, &g)| s + g)
                                    .collect();
                                let idx = relaxation::hard_argmax(&perturbed)?;
                                (tape.row(table, idx)?, Some(idx))
                            }
                            Regime::RelaxedGreedy => {
                                (relaxation::soft_argmax_embedding(tape, prev, alpha, table)?, None)
                            }
                            Regime::RelaxedSample => {
                                let noise = noise.as_ref().expect("sampling regimes draw noise");
                                (
                                    relaxation::soft_sample_embedding(tape, prev, alpha, noise, table)?,
                                    None,
                                )
                            }
                            Regime::Ce => unreachable!("CE feeds gold"),
                        };
                        FedInput {
                            embedding,
                            branch: Some(branch),
                            decision,
                        }
                    }
                }
            }
        };
        let out = model.decode_step(tape, input.embedding, h, c, &encoded, i)?;
        h = out.h;
        c = out.c;
        step_losses.push(step_loss(tape, out.scores, gold)?);
        step_scores.push(out.scores);
        fed.push(input);
    }
    let all = tape.concat(&step_losses)?;
    let loss = tape.sum(all)?;
    Ok(Rollout {
        loss,
        step_losses,
        step_scores,
        fed,
    })
}

/// Hard greedy decoding. Returns ids up to (not including) EOS, at most
/// `max_len` of them; fixed attention also stops at the encoded length.
pub fn greedy_decode<T: Scalar>(model: &Seq2Seq<T>, source: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false)?;
    let encoder_ids = encoder_input(source);
    let encoded = bound.encode(&mut tape, &encoder_ids)?;
    let limit = match model.config().attention {
        AttentionMode::FixedPositional => max_len.min(encoded.len()),
        _ => max_len,
    };
    let table = bound.target_table();
    let (mut h, mut c) = encoded.final_state;
    let mut input = bound.target_embedding(&mut tape, SOS)?;
    let mut out = Vec::new();
    for i in 0..limit {
        let step = bound.decode_step(&mut tape, input, h, c, &encoded, i)?;
        h = step.h;
        c = step.c;
        let (next, idx) = relaxation::hard_argmax_embedding(&mut tape, step.scores, table)?;
        if idx == EOS {
            break;
        }
        out.push(idx);
        input = next;
    }
    Ok(out)
}

/// Default decoding budget for a source.
pub fn decode_budget(source_len: usize) -> usize {
    2 * source_len + 2
}

/// Summed rollout loss over `pairs` at fixed parameters; every call replays
/// the same random draws from `seed`, which makes it a deterministic function
/// of the parameters.
pub fn objective<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[SequencePair],
    regime: Regime,
    eps: T,
    alpha: Temperature<T>,
    seed: u64,
) -> Result<T> {
    let mut streams = RolloutStreams::new(seed);
    let mut total = T::zero();
    for pair in pairs {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false)?;
        let r = rollout_loss(&mut tape, &bound, pair, regime, eps, alpha, &mut streams)?;
        total += tape.scalar(r.loss);
    }
    Ok(total)
}

/// [`objective`] plus its gradient with respect to the flattened parameters.
pub fn objective_and_gradient<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[SequencePair],
    regime: Regime,
    eps: T,
    alpha: Temperature<T>,
    seed: u64,
) -> Result<(T, Vec<T>)> {
    let mut streams = RolloutStreams::new(seed);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); model.num_scalars()];
    for pair in pairs {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, true)?;
        let r = rollout_loss(&mut tape, &bound, pair, regime, eps, alpha, &mut streams)?;
        total += tape.scalar(r.loss);
        let g = tape.backward(r.loss)?;
        let mut offset = 0;
        for &v in bound.vars() {
            for (dst, &x) in grad[offset..].iter_mut().zip(g.get(v)) {
                *dst += x;
            }
            offset += g.get(v).len();
        }
    }
    Ok((total, grad))
}
