//! Hard and relaxed versions of the decision fed back into a decoder.
//!
//! Given the score vector `s` a decoder produced at one step and the target
//! embedding table `E` (one row per vocabulary entry), the next step can be
//! fed:
//!
//! * the hard argmax embedding `E[argmax s]`, a piecewise-constant function
//!   of the scores;
//! * the soft argmax embedding `Eᵀ softmax(α s)`, a smooth convex combination
//!   that concentrates on the argmax row as `α` grows;
//! * the soft sample embedding `Eᵀ softmax(α (s + G))` with Gumbel noise `G`,
//!   which relaxes a draw from `softmax(s)` the same way.
//!
//! All relaxed embeddings are tape nodes, so gradients reach the scores (and
//! everything upstream of them) as well as the table. Gumbel noise enters as a
//! constant.

use rand::Rng;

use crate::autodiff::{self, Tape, Var};
use crate::error::{Error, Result, Shape};
use crate::scalar::Scalar;

/// Peaked-softmax temperature `α > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Temperature<T>(T);

impl<T: Scalar> Temperature<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if alpha > T::zero() && alpha.is_finite() {
            Ok(Temperature(alpha))
        } else {
            Err(Error::invalid(format!(
                "temperature must be positive and finite, got {alpha}"
            )))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// One Gumbel(0, 1) draw per vocabulary entry, with the uniforms it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GumbelSample<T> {
    noise: Vec<T>,
    uniforms: Vec<T>,
}

impl<T: Scalar> GumbelSample<T> {
    /// Transforms the given uniforms, clamping each into `[ε, 1 − ε]` first.
    pub fn from_uniforms(uniforms: Vec<T>) -> Result<Self> {
        if uniforms.is_empty() {
            return Err(Error::Empty("gumbel_noise"));
        }
        let uniforms: Vec<T> = uniforms.into_iter().map(clamp_unit).collect();
        let noise = uniforms.iter().map(|&u| gumbel_transform(u)).collect();
        Ok(GumbelSample { noise, uniforms })
    }

    /// All-zero noise; turns the soft sample embedding into the soft argmax.
    pub fn zeros(n: usize) -> Self {
        let e_inv = T::one() / T::one().exp();
        GumbelSample {
            noise: vec![T::zero(); n],
            uniforms: vec![e_inv; n],
        }
    }

    pub fn noise(&self) -> &[T] {
        &self.noise
    }

    pub fn uniforms(&self) -> &[T] {
        &self.uniforms
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }
}

fn clamp_unit<T: Scalar>(u: T) -> T {
    let eps = T::epsilon();
    u.max(eps).min(T::one() - eps)
}

/// `G = −ln(−ln U)`.
pub fn gumbel_transform<T: Scalar>(u: T) -> T {
    -(-u.ln()).ln()
}

/// Draws `n` independent Gumbel(0, 1) variates.
pub fn gumbel_noise<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<GumbelSample<T>> {
    if n == 0 {
        return Err(Error::Empty("gumbel_noise"));
    }
    let uniforms = (0..n)
        .map(|_| T::from_f64(rng.gen::<f64>()).expect("uniform representable"))
        .collect();
    GumbelSample::from_uniforms(uniforms)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn hard_argmax<T: Scalar>(scores: &[T]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite { op: "hard_argmax" });
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("hard_argmax"))
}

/// Peaked softmax weights `softmax(α s)` on plain values.
pub fn soft_weights<T: Scalar>(scores: &[T], alpha: Temperature<T>) -> Vec<T> {
    let scaled: Vec<T> = scores.iter().map(|&s| s * alpha.value()).collect();
    autodiff::softmax(&scaled)
}

fn check_table<T: Scalar>(tape: &Tape<T>, scores: Var, table: Var, op: &'static str) -> Result<()> {
    let (ss, ts) = (tape.shape(scores), tape.shape(table));
    if !ss.is_vector() || ss.rows != ts.rows {
        return Err(Error::ShapeMismatch {
            op,
            left: ss,
            right: ts,
        });
    }
    if ss.rows == 0 {
        return Err(Error::Empty(op));
    }
    if tape.value(scores).iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

/// `E[argmax s]` together with the chosen index.
///
/// The result is a row read of the table; the choice itself is constant with
/// respect to the scores.
pub fn hard_argmax_embedding<T: Scalar>(tape: &mut Tape<T>, scores: Var, table: Var) -> Result<(Var, usize)> {
    check_table(tape, scores, table, "hard_argmax_embedding")?;
    let index = hard_argmax(tape.value(scores))?;
    Ok((tape.row(table, index)?, index))
}

/// `softmax(α s)` with `α` supplied as a scalar tape node.
pub fn peaked_softmax<T: Scalar>(tape: &mut Tape<T>, scores: Var, alpha: Var) -> Result<Var> {
    let scaled = tape.scale_by(scores, alpha)?;
    tape.softmax(scaled)
}

/// Soft argmax embedding `Eᵀ softmax(α s)`.
pub fn soft_argmax_embedding<T: Scalar>(
    tape: &mut Tape<T>,
    scores: Var,
    alpha: Temperature<T>,
    table: Var,
) -> Result<Var> {
    let alpha = tape.constant_scalar(alpha.value());
    soft_argmax_embedding_with(tape, scores, alpha, table)
}

/// [`soft_argmax_embedding`] with a caller-provided temperature node, so the
/// embedding can also be differentiated with respect to `α`.
pub fn soft_argmax_embedding_with<T: Scalar>(tape: &mut Tape<T>, scores: Var, alpha: Var, table: Var) -> Result<Var> {
    check_table(tape, scores, table, "soft_argmax_embedding")?;
    if !(tape.scalar(alpha) > T::zero()) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let weights = peaked_softmax(tape, scores, alpha)?;
    tape.mat_t_vec(table, weights)
}

/// Soft sample embedding `Eᵀ softmax(α (s + G))`; `G` is held constant.
pub fn soft_sample_embedding<T: Scalar>(
    tape: &mut Tape<T>,
    scores: Var,
    alpha: Temperature<T>,
    gumbel: &GumbelSample<T>,
    table: Var,
) -> Result<Var> {
    check_table(tape, scores, table, "soft_sample_embedding")?;
    let n = tape.shape(scores).rows;
    if gumbel.len() != n {
        return Err(Error::ShapeMismatch {
            op: "soft_sample_embedding",
            left: Shape::vector(n),
            right: Shape::vector(gumbel.len()),
        });
    }
    let noise = tape.constant_vector(gumbel.noise().to_vec())?;
    let perturbed = tape.add(scores, noise)?;
    let alpha = tape.constant_scalar(alpha.value());
    let weights = peaked_softmax(tape, perturbed, alpha)?;
    tape.mat_t_vec(table, weights)
}

/// Which input a scheduled-sampling step received.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixBranch {
    Gold,
    Model,
}

/// Flips the per-step coin: gold with probability `eps`.
pub fn draw_branch<T: Scalar, R: Rng + ?Sized>(eps: T, rng: &mut R) -> MixBranch {
    let u: f64 = rng.gen();
    if u < eps.to_f64_lossless() {
        MixBranch::Gold
    } else {
        MixBranch::Model
    }
}

/// Chooses between the gold and model-derived embeddings for one step.
pub fn mix_step_input<T: Scalar, R: Rng + ?Sized>(
    gold: Var,
    model: Var,
    eps: T,
    rng: &mut R,
) -> Result<(Var, MixBranch)> {
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::invalid(format!(
            "mixing probability must lie in [0, 1], got {eps}"
        )));
    }
    Ok(match draw_branch(eps, rng) {
        MixBranch::Gold => (gold, MixBranch::Gold),
        MixBranch::Model => (model, MixBranch::Model),
    })
}

#[cfg(test)]
mod tests;
