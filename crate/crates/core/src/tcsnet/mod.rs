//! The time-varying causal survival estimator: labels, input matrix,
//! potential-outcome networks, composite loss, seed ensemble and effect
//! extraction.

mod effects;
mod labels;
mod lambda;
pub mod loss;
mod network;
mod persist;
mod train;

pub use effects::{
    band, estimate_effects, estimate_effects_where, implied_hazard, member_curves, monotone_survival,
    percentile_sorted, predict_hazard, predict_observed_survival, survival_curve, ArmCurves, EffectEstimate,
    BAND_LOWER, BAND_UPPER,
};
pub use labels::{build_labels, labels_from, LabelMatrix};
pub use lambda::{assemble_lambda, counterfactual, InputMatrix};
pub use loss::{l2_pair_count, loss_l1, loss_l1_scalar, loss_l2, CompositeLoss};
pub use network::{FeatureScaler, Head, HeadLayout, OutcomeArch, OutcomeNet, PropensityNet};
pub use persist::{load_ensemble, save_ensemble, write_cate_json, write_effects_csv, CateSummary};
pub use train::{
    check_treatment_variation, fit_propensity, follow_up_propensity, predict_propensity, train_ensemble,
    train_member, Ensemble, EstimatorKind, Member, PropensityConfig, TrainConfig,
};
