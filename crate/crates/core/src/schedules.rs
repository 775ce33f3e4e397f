//! Per-epoch annealing of the gold-mixing probability ε and temperature α.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Upper clamp on annealed temperatures.
pub const MAX_TEMPERATURE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MixingSchedule<T> {
    /// `ε(e) = k / (k + exp(e / k))`; larger `k` decays more gently.
    InverseSigmoid {
        k: T,
    },
    Constant {
        eps: T,
    },
    /// Never feed gold after the first epoch.
    AlwaysSample,
}

impl<T: Scalar> MixingSchedule<T> {
    pub fn inverse_sigmoid(k: T) -> Result<Self> {
        if k > T::zero() && k.is_finite() {
            Ok(MixingSchedule::InverseSigmoid { k })
        } else {
            Err(Error::invalid(format!("decay strength k must be positive, got {k}")))
        }
    }

    pub fn constant(eps: T) -> Result<Self> {
        if eps >= T::zero() && eps <= T::one() {
            Ok(MixingSchedule::Constant { eps })
        } else {
            Err(Error::invalid(format!(
                "mixing probability must lie in [0, 1], got {eps}"
            )))
        }
    }

    /// Probability of feeding the gold token during `epoch`.
    ///
    /// Epoch 0 always trains on gold inputs.
    pub fn mixing_probability(&self, epoch: usize) -> T {
        if epoch == 0 {
            return T::one();
        }
        match *self {
            MixingSchedule::InverseSigmoid { k } => {
                let e: T = lit(epoch as f64);
                k / (k + (e / k).exp())
            }
            MixingSchedule::Constant { eps } => eps,
            MixingSchedule::AlwaysSample => T::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemperatureSchedule<T> {
    Fixed {
        alpha0: T,
    },
    /// `α(e) = α₀ · rᵉ`, clamped at [`MAX_TEMPERATURE`].
    Exponential {
        alpha0: T,
        rate: T,
    },
}

impl<T: Scalar> TemperatureSchedule<T> {
    pub fn fixed(alpha0: T) -> Result<Self> {
        check_positive("alpha0", alpha0)?;
        Ok(TemperatureSchedule::Fixed { alpha0 })
    }

    pub fn exponential(alpha0: T, rate: T) -> Result<Self> {
        check_positive("alpha0", alpha0)?;
        check_positive("rate", rate)?;
        Ok(TemperatureSchedule::Exponential { alpha0, rate })
    }

    pub fn temperature(&self, epoch: usize) -> T {
        let alpha = match *self {
            TemperatureSchedule::Fixed { alpha0 } => alpha0,
            TemperatureSchedule::Exponential { alpha0, rate } => alpha0 * rate.powi(epoch as i32),
        };
        alpha.min(lit(MAX_TEMPERATURE))
    }
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

/// The schedule values in force during one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulePoint<T> {
    pub epoch: usize,
    pub eps: T,
    pub alpha: T,
}

pub fn schedule_point<T: Scalar>(
    mixing: &MixingSchedule<T>,
    temperature: &TemperatureSchedule<T>,
    epoch: usize,
) -> SchedulePoint<T> {
    SchedulePoint {
        epoch,
        eps: mixing.mixing_probability(epoch),
        alpha: temperature.temperature(epoch),
    }
}
