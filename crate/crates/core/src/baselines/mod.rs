//! Comparator estimators: the propensity-free and binary-label networks,
//! post-hoc IPW and TMLE adjustments, and the Kaplan-Meier curve.

mod ipw;
mod km;
mod tmle;

pub use ipw::{clamp_propensity, ipw_adjust, ipw_ate, P_MAX, P_MIN};
pub use km::{kaplan_meier, kaplan_meier_times};
pub use tmle::{fluctuate, observed_outcome, targeted_update, tmle_adjust, AdjustedATE, Fluctuation, TmleArm};

use crate::error::Result;
use crate::par::Execution;
use crate::simgen::LongitudinalSample;
use crate::tcsnet::{train_ensemble, Ensemble, EstimatorKind, TrainConfig};

/// The estimator network without its propensity column.
pub fn train_snn(samples: &[LongitudinalSample], cfg: &TrainConfig, exec: Execution) -> Result<Ensemble> {
    train_ensemble(samples, cfg, EstimatorKind::Snn, exec)
}

/// Single-head network regressing the at-risk row with squared error.
pub fn train_binary(samples: &[LongitudinalSample], cfg: &TrainConfig, exec: Execution) -> Result<Ensemble> {
    train_ensemble(samples, cfg, EstimatorKind::Binary, exec)
}
