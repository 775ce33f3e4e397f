//! Line sweeps of the training objective through parameter space, argmax
//! flip bracketing, and whole-model gradient checks.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::autodiff::{max_relative_error, try_finite_difference_gradient, Tape};
use crate::datagen::SequencePair;
use crate::error::{Error, Result};
use crate::relaxation::Temperature;
use crate::scalar::{lit, Scalar};
use crate::seq2seq::Seq2Seq;
use crate::training::{objective_and_gradient, rollout_loss, Regime, RolloutStreams};

/// Relative-error floor of whole-model gradient checks.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

/// One scalar parameter, written `name[index]` (e.g. `out.b[3]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSelector {
    pub name: String,
    pub index: usize,
}

impl FromStr for ParamSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("parameter selector `{s}` is not of the form name[index]"));
        let (name, rest) = s.trim().split_once('[').ok_or_else(bad)?;
        let index = rest
            .strip_suffix(']')
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        if name.is_empty() {
            return Err(bad());
        }
        Ok(ParamSelector {
            name: name.to_string(),
            index,
        })
    }
}

impl ParamSelector {
    /// Position in [`Seq2Seq::flat`].
    pub fn resolve<T: Scalar>(&self, model: &Seq2Seq<T>) -> Result<usize> {
        model.flat_index(&self.name, self.index)
    }
}

/// Loss of a rollout under fixed random draws together with the tokens the
/// model fed itself.
pub fn evaluate_with_decisions<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[SequencePair],
    regime: Regime,
    eps: T,
    alpha: Temperature<T>,
    seed: u64,
) -> Result<(T, Vec<Option<usize>>)> {
    let mut streams = RolloutStreams::new(seed);
    let mut total = T::zero();
    let mut decisions = Vec::new();
    for pair in pairs {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false)?;
        let r = rollout_loss(&mut tape, &bound, pair, regime, eps, alpha, &mut streams)?;
        total += tape.scalar(r.loss);
        decisions.extend(r.fed.iter().map(|f| f.decision));
    }
    Ok((total, decisions))
}

/// A fixed objective: model, data, regime and random draws.
#[derive(Clone, Debug)]
pub struct Probe<'a, T> {
    pub model: &'a Seq2Seq<T>,
    pub pairs: &'a [SequencePair],
    pub eps: T,
    pub seed: u64,
}

impl<'a, T: Scalar> Probe<'a, T> {
    pub fn new(model: &'a Seq2Seq<T>, pairs: &'a [SequencePair], eps: T, seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("probe pairs"));
        }
        Ok(Probe {
            model,
            pairs,
            eps,
            seed,
        })
    }

    fn moved(&self, coord: usize, theta: T) -> Result<Seq2Seq<T>> {
        let mut flat = self.model.flat();
        let slot = flat.get_mut(coord).ok_or(Error::IndexOutOfRange {
            op: "probe",
            index: coord,
            len: self.model.num_scalars(),
        })?;
        *slot = theta;
        let mut m = self.model.clone();
        m.set_flat(&flat)?;
        Ok(m)
    }

    /// Loss with parameter `coord` set to `theta`.
    pub fn loss_at(&self, regime: Regime, alpha: Temperature<T>, coord: usize, theta: T) -> Result<T> {
        Ok(self.at(regime, alpha, coord, theta)?.0)
    }

    pub fn at(&self, regime: Regime, alpha: Temperature<T>, coord: usize, theta: T) -> Result<(T, Vec<Option<usize>>)> {
        let m = self.moved(coord, theta)?;
        evaluate_with_decisions(&m, self.pairs, regime, self.eps, alpha, self.seed)
    }

    /// Decisions taken by hard greedy feeding at `theta`.
    pub fn signature(&self, coord: usize, theta: T) -> Result<Vec<Option<usize>>> {
        Ok(self
            .at(Regime::SsHardGreedy, Temperature::new(T::one())?, coord, theta)?
            .1)
    }

    /// Bisects `[lo, hi]` down to width `tol` around a change of the hard
    /// greedy decisions. The endpoints must disagree.
    pub fn bisect_flip(&self, coord: usize, lo: T, hi: T, tol: T) -> Result<Bracket<T>> {
        if !(lo < hi) || !(tol > T::zero()) {
            return Err(Error::invalid("flip bracketing needs lo < hi and a positive tolerance"));
        }
        let (mut lo, mut hi) = (lo, hi);
        let left = self.signature(coord, lo)?;
        if left == self.signature(coord, hi)? {
            return Err(Error::invalid("no decision change between the bracket endpoints"));
        }
        let two = lit::<T>(2.0);
        while hi - lo > tol {
            let mid = lo + (hi - lo) / two;
            if mid <= lo || mid >= hi {
                break;
            }
            if self.signature(coord, mid)? == left {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Bracket { lo, hi })
    }

    /// Scans `points` evenly spaced values of `[lo, hi]` for the first
    /// decision change and bisects it to width `tol`.
    pub fn find_flip(&self, coord: usize, lo: T, hi: T, points: usize, tol: T) -> Result<Option<Bracket<T>>> {
        let thetas = grid(lo, hi, points)?;
        let mut prev = self.signature(coord, thetas[0])?;
        for w in thetas.windows(2) {
            let next = self.signature(coord, w[1])?;
            if next != prev {
                return self.bisect_flip(coord, w[0], w[1], tol).map(Some);
            }
            prev = next;
        }
        Ok(None)
    }

    /// Hard greedy loss (all model feeds) plus the relaxed greedy loss for
    /// each `alpha` along `thetas`.
    pub fn sweep(&self, coord: usize, thetas: &[T], alphas: &[T]) -> Result<Sweep<T>> {
        let one = Temperature::new(T::one())?;
        let hard = thetas
            .iter()
            .map(|&t| self.loss_at(Regime::SsHardGreedy, one, coord, t))
            .collect::<Result<Vec<_>>>()?;
        let mut relaxed = Vec::with_capacity(alphas.len());
        for &a in alphas {
            let alpha = Temperature::new(a)?;
            let curve = thetas
                .iter()
                .map(|&t| self.loss_at(Regime::RelaxedGreedy, alpha, coord, t))
                .collect::<Result<Vec<_>>>()?;
            relaxed.push((a, curve));
        }
        Ok(Sweep {
            thetas: thetas.to_vec(),
            hard,
            relaxed,
        })
    }
}

/// An interval whose endpoints feed different hard decisions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Bracket<T> {
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn mid(&self) -> T {
        self.lo + self.width() / lit(2.0)
    }
}

/// `points` evenly spaced values from `from` to `to` inclusive.
pub fn grid<T: Scalar>(from: T, to: T, points: usize) -> Result<Vec<T>> {
    if points < 3 {
        return Err(Error::invalid(format!(
            "a sweep needs at least 3 grid points, got {points}"
        )));
    }
    if !(from < to) {
        return Err(Error::invalid(format!("empty sweep range [{from}, {to}]")));
    }
    let last = T::from_usize(points - 1).expect("grid size fits");
    Ok((0..points)
        .map(|i| {
            let t = T::from_usize(i).expect("grid index fits") / last;
            from + (to - from) * t
        })
        .collect())
}

/// Largest `|v[i+1] − v[i]|`.
pub fn max_adjacent_jump<T: Scalar>(values: &[T]) -> T {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(T::zero(), T::max)
}

/// `max_i |a[i] − b[i]|`.
pub fn sup_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max)
}

/// Loss curves along one parameter line.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep<T> {
    pub thetas: Vec<T>,
    pub hard: Vec<T>,
    /// `(alpha, curve)` per temperature.
    pub relaxed: Vec<(T, Vec<T>)>,
}

impl<T: Scalar> Sweep<T> {
    pub fn header(&self) -> String {
        let mut h = String::from("theta,loss_hard");
        for (a, _) in &self.relaxed {
            let _ = write!(h, ",loss_alpha_{a}");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (i, t) in self.thetas.iter().enumerate() {
            let _ = write!(out, "{t},{}", self.hard[i]);
            for (_, curve) in &self.relaxed {
                let _ = write!(out, ",{}", curve[i]);
            }
            out.push('\n');
        }
        out
    }

    /// `(label, max adjacent jump)` per curve, hard first.
    pub fn jumps(&self) -> Vec<(String, T)> {
        let mut v = vec![("loss_hard".to_string(), max_adjacent_jump(&self.hard))];
        for (a, curve) in &self.relaxed {
            v.push((format!("loss_alpha_{a}"), max_adjacent_jump(curve)));
        }
        v
    }
}

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport<T> {
    pub max_relative_error: T,
    pub parameters: usize,
    /// Coordinates whose difference stencil changes a hard decision.
    pub discontinuities: Vec<usize>,
}

impl<T: Scalar> GradcheckReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        self.discontinuities.is_empty() && self.max_relative_error <= tol
    }
}

/// Compares the analytic gradient of the rollout loss with central
/// differences over every parameter. Random draws are replayed identically
/// for every evaluation.
pub fn gradcheck<T: Scalar>(
    probe: &Probe<'_, T>,
    regime: Regime,
    alpha: Temperature<T>,
    step: T,
) -> Result<GradcheckReport<T>> {
    let (_, analytic) = objective_and_gradient(probe.model, probe.pairs, regime, probe.eps, alpha, probe.seed)?;
    let base = probe.model.flat();
    let mut scratch = probe.model.clone();
    let mut discontinuities = Vec::new();
    let mut last_sig: Option<Vec<Option<usize>>> = None;
    let mut calls = 0usize;
    let numeric = try_finite_difference_gradient(
        |x: &[T]| {
            scratch.set_flat(x)?;
            let (loss, sig) = evaluate_with_decisions(&scratch, probe.pairs, regime, probe.eps, alpha, probe.seed)?;
            // evaluations come in (+h, −h) pairs per coordinate
            if calls % 2 == 1 && last_sig.as_ref() != Some(&sig) {
                discontinuities.push(calls / 2);
            }
            last_sig = Some(sig);
            calls += 1;
            Ok(loss)
        },
        &base,
        step,
    )?;
    Ok(GradcheckReport {
        max_relative_error: max_relative_error(&analytic, &numeric, lit(GRADCHECK_FLOOR)),
        parameters: base.len(),
        discontinuities,
    })
}

/// Mean over parameters of the variance of the gradient across `draws`
/// independent sets of random draws (seeds `probe.seed ..`).
pub fn gradient_variance<T: Scalar>(
    probe: &Probe<'_, T>,
    regime: Regime,
    alpha: Temperature<T>,
    draws: usize,
) -> Result<T> {
    if draws < 2 {
        return Err(Error::invalid("gradient variance needs at least two draws"));
    }
    let n = probe.model.num_scalars();
    let mut sum = vec![T::zero(); n];
    let mut sum_sq = vec![T::zero(); n];
    for k in 0..draws as u64 {
        let (_, g) = objective_and_gradient(probe.model, probe.pairs, regime, probe.eps, alpha, probe.seed + k)?;
        for ((s, q), x) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(g) {
            *s += x;
            *q += x * x;
        }
    }
    let d = T::from_usize(draws).expect("draw count fits");
    let total = sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| (q - s * s / d) / (d - T::one()))
        .fold(T::zero(), |a, b| a + b);
    Ok(total / T::from_usize(n).expect("parameter count fits"))
}

#[cfg(test)]
mod tests;
