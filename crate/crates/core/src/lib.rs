//! Continuous relaxations of greedy and sampled decoding for
//! scheduled-sampling training of sequence-to-sequence models.
//!
//! The crate bundles the pieces needed to study these objectives end to end:
//! a reverse-mode differentiation [`autodiff`] tape, the soft argmax and
//! Gumbel soft-sample embeddings in [`relaxation`], an LSTM encoder-decoder in
//! [`seq2seq`], annealing [`schedules`], the five training regimes in
//! [`training`], synthetic tasks in [`datagen`], metrics in [`evaluation`],
//! and line sweeps / gradient checks in [`probe`].
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the element type to `f64`, which every tolerance in the test
//! suites assumes.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod config;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod probe;
pub mod relaxation;
pub mod rng;
pub mod scalar;
pub mod schedules;
pub mod seq2seq;
pub mod training;

pub use error::{Error, Result, Shape};
pub use scalar::Scalar;

pub type Tape64 = autodiff::Tape<f64>;
pub type Model64 = seq2seq::Seq2Seq<f64>;
pub type Temperature64 = relaxation::Temperature<f64>;
pub type GumbelSample64 = relaxation::GumbelSample<f64>;
pub type EmbeddingTable64 = seq2seq::EmbeddingTable<f64>;
pub type MixingSchedule64 = schedules::MixingSchedule<f64>;
pub type TemperatureSchedule64 = schedules::TemperatureSchedule<f64>;
