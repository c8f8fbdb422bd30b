use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labels::{build_labels, LabelMatrix};
use super::lambda::{assemble_lambda, InputMatrix};
use super::loss::{mse_with_grad, CompositeLoss};
use super::network::{
    visit_prefixed, visit_prefixed_mut, FeatureScaler, HeadLayout, OutcomeArch, OutcomeNet, PropensityNet,
};
use crate::error::{Result, TcsError};
use crate::ndgrad::ops::clamp_prob;
use crate::ndgrad::{mask_transform, Adam, AdamConfig, MaskedSequence, Parameterized, Tensor};
use crate::par::{derive_seed, Execution};
use crate::simgen::{rng_from_seed, LongitudinalSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensityConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            hidden: 32,
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Ensemble size `K`.
    pub members: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of the training set drawn (without replacement) each epoch.
    pub subsample: f64,
    pub hidden: usize,
    pub head_hidden: usize,
    pub adam: AdamConfig,
    pub loss: CompositeLoss,
    pub propensity: PropensityConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            members: 5,
            epochs: 40,
            batch_size: 64,
            subsample: 0.7,
            hidden: 64,
            head_hidden: 32,
            adam: AdamConfig::default(),
            loss: CompositeLoss::default(),
            propensity: PropensityConfig::default(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("members", self.members),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
            ("head_hidden", self.head_hidden),
            ("propensity.hidden", self.propensity.hidden),
            ("propensity.epochs", self.propensity.epochs),
            ("propensity.batch_size", self.propensity.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TcsError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(TcsError::Config(format!("subsample {} outside (0, 1]", self.subsample)));
        }
        for (name, lr) in [("adam.lr", self.adam.lr), ("propensity.adam.lr", self.propensity.adam.lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(TcsError::Config(format!("{name} must be positive")));
            }
        }
        self.loss.validate()
    }
}

/// Which outcome model an ensemble holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Per-arm hazard heads with propensity input.
    Tcs,
    /// Per-arm hazard heads without propensity input.
    Snn,
    /// Single head with treatment input, regressed on the at-risk row.
    Binary,
}

impl EstimatorKind {
    pub fn uses_propensity(self) -> bool {
        self == EstimatorKind::Tcs
    }

    pub fn layout(self) -> HeadLayout {
        match self {
            EstimatorKind::Binary => HeadLayout::TreatmentInput,
            _ => HeadLayout::PerArm,
        }
    }

    /// Outputs are per-step hazards rather than at-risk probabilities.
    pub fn predicts_hazard(self) -> bool {
        self != EstimatorKind::Binary
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Tcs => "tcs",
            EstimatorKind::Snn => "snn",
            EstimatorKind::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub seed: u64,
    pub propensity: Option<PropensityNet>,
    pub outcome: OutcomeNet,
    pub loss_history: Vec<f64>,
    pub propensity_history: Vec<f64>,
}

impl Member {
    /// Input matrix for `sample` as this member sees it.
    pub fn lambda(&self, sample: &LongitudinalSample) -> Result<InputMatrix> {
        let mut lam = assemble_lambda(sample, None)?;
        if let Some(net) = &self.propensity {
            lam.propensity = Some(follow_up_propensity(net, &lam.panel, sample.u)?);
        }
        Ok(lam)
    }
}

impl Parameterized for Member {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(p) = &self.propensity {
            visit_prefixed("propensity", p, f);
        }
        visit_prefixed("outcome", &self.outcome, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(p) = self.propensity.as_mut() {
            visit_prefixed_mut("propensity", p, f);
        }
        visit_prefixed_mut("outcome", &mut self.outcome, f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub kind: EstimatorKind,
    pub config: TrainConfig,
    pub members: Vec<Member>,
}

impl Ensemble {
    pub fn arch(&self) -> Option<OutcomeArch> {
        self.members.first().map(|m| m.outcome.arch)
    }
}

impl Parameterized for Ensemble {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (k, m) in self.members.iter().enumerate() {
            visit_prefixed(&format!("member{k}"), m, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (k, m) in self.members.iter_mut().enumerate() {
            visit_prefixed_mut(&format!("member{k}"), m, f);
        }
    }
}

fn training_error(seed: u64, e: TcsError) -> TcsError {
    match e {
        TcsError::Numerical(reason) => TcsError::Training { seed, reason },
        other => other,
    }
}

fn scale_grads(model: &mut dyn Parameterized, factor: f64) {
    model.visit_mut(&mut |_, t| t.grad.iter_mut().for_each(|g| *g *= factor));
}

/// Minibatch loop shared by every network. `batch_loss` returns the summed
/// loss of the given subjects and accumulates its gradient; the step uses
/// the batch mean.
fn optimize<N, F, R>(
    net: &mut N,
    n: usize,
    epochs: usize,
    batch_size: usize,
    subsample: f64,
    adam: AdamConfig,
    rng: &mut R,
    seed: u64,
    mut batch_loss: F,
) -> Result<Vec<f64>>
where
    N: Parameterized,
    F: FnMut(&mut N, &[usize]) -> Result<f64>,
    R: Rng,
{
    let mut opt = Adam::new(net, adam);
    let take = ((subsample * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let chosen = &order[..take];
        let mut total = 0.0;
        for batch in chosen.chunks(batch_size) {
            net.zero_grad();
            let loss = batch_loss(net, batch).map_err(|e| training_error(seed, e))?;
            if !loss.is_finite() {
                return Err(TcsError::Training {
                    seed,
                    reason: format!("non-finite loss in epoch {epoch}"),
                });
            }
            total += loss;
            scale_grads(net, 1.0 / batch.len() as f64);
            opt.step(net).map_err(|e| training_error(seed, e))?;
        }
        history.push(total / take as f64);
    }
    Ok(history)
}

pub fn check_treatment_variation(samples: &[LongitudinalSample]) -> Result<()> {
    if samples.len() < 2 {
        return Err(TcsError::Data(format!(
            "propensity fitting needs at least 2 subjects, got {}",
            samples.len()
        )));
    }
    let treated: usize = samples.iter().map(|s| s.a.iter().filter(|&&a| a == 1).count()).sum();
    let total: usize = samples.iter().map(|s| s.a.len()).sum();
    if treated == 0 || treated == total {
        return Err(TcsError::DegenerateTreatment(format!(
            "every observed treatment is {}",
            u8::from(treated > 0)
        )));
    }
    Ok(())
}

/// Fit a propensity network on full panels. Returns the network and its
/// per-epoch mean loss.
pub fn fit_propensity(
    samples: &[LongitudinalSample],
    cfg: &PropensityConfig,
    seed: u64,
) -> Result<(PropensityNet, Vec<f64>)> {
    check_treatment_variation(samples)?;
    let panels = samples
        .iter()
        .map(|s| mask_transform(s, 1..=s.steps()))
        .collect::<Result<Vec<_>>>()?;
    let scaler = FeatureScaler::fit(samples)?;
    let mut net = PropensityNet::new(scaler, cfg.hidden, &mut rng_from_seed(derive_seed(seed, 0)));
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let history = optimize(&mut net, panels.len(), cfg.epochs, cfg.batch_size, 1.0, cfg.adam, &mut rng, seed, |net, batch| {
        let mut total = 0.0;
        for &i in batch {
            let (p, tape) = net.forward(&panels[i])?;
            let a = &panels[i].a;
            let mut d = Vec::with_capacity(p.len());
            for (&pi, &ai) in p.iter().zip(a) {
                let pc = clamp_prob(pi);
                total -= ai * pc.ln() + (1.0 - ai) * (1.0 - pc).ln();
                d.push(pi - ai);
            }
            net.backward(&tape, &d)?;
        }
        Ok(total)
    })?;
    Ok((net, history))
}

/// `p(s)` for every internal step of `panel`.
pub fn predict_propensity(net: &PropensityNet, panel: &MaskedSequence) -> Result<Vec<f64>> {
    Ok(net.forward(panel)?.0)
}

/// Propensity at follow-up steps `1..=q`, taken from a full panel.
pub fn follow_up_propensity(net: &PropensityNet, panel: &MaskedSequence, u: usize) -> Result<Vec<f64>> {
    if panel.start != 1 || panel.steps <= u {
        return Err(TcsError::Usage("follow-up propensity needs the full panel".into()));
    }
    Ok(predict_propensity(net, panel)?[u..].to_vec())
}

fn outcome_arch(kind: EstimatorKind, cfg: &TrainConfig, sample: &LongitudinalSample) -> OutcomeArch {
    OutcomeArch {
        d: sample.d,
        u: sample.u,
        q: sample.q,
        hidden: cfg.hidden,
        head_hidden: cfg.head_hidden,
        use_propensity: kind.uses_propensity(),
        layout: kind.layout(),
    }
}

/// Train one ensemble member. Identical arguments give identical members.
pub fn train_member(
    samples: &[LongitudinalSample],
    cfg: &TrainConfig,
    kind: EstimatorKind,
    seed: u64,
) -> Result<Member> {
    cfg.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| TcsError::Data("cannot train on an empty sample".into()))?;
    let q = first.q;
    let labels = samples
        .iter()
        .map(|s| build_labels(s, q))
        .collect::<Result<Vec<LabelMatrix>>>()?;
    let mut lambdas = samples
        .iter()
        .map(|s| assemble_lambda(s, None))
        .collect::<Result<Vec<_>>>()?;
    let (propensity, propensity_history) = if kind.uses_propensity() {
        let (net, hist) = fit_propensity(samples, &cfg.propensity, derive_seed(seed, 1))?;
        for (lam, s) in lambdas.iter_mut().zip(samples) {
            lam.propensity = Some(follow_up_propensity(&net, &lam.panel, s.u)?);
        }
        (Some(net), hist)
    } else {
        (None, Vec::new())
    };
    let scaler = FeatureScaler::fit(samples)?;
    let arch = outcome_arch(kind, cfg, first);
    let mut outcome = OutcomeNet::new(arch, scaler, &mut rng_from_seed(derive_seed(seed, 2)));
    let mut rng = rng_from_seed(derive_seed(seed, 3));
    let loss = cfg.loss;
    let loss_history = optimize(
        &mut outcome,
        samples.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.subsample,
        cfg.adam,
        &mut rng,
        seed,
        |net, batch| {
            let mut preds = Vec::with_capacity(batch.len());
            let mut tapes = Vec::with_capacity(batch.len());
            for &i in batch {
                let (p, tape) = net.forward(&lambdas[i])?;
                preds.push(p);
                tapes.push(tape);
            }
            let batch_labels: Vec<LabelMatrix> = batch.iter().map(|&i| labels[i].clone()).collect();
            let (value, grads) = if kind.predicts_hazard() {
                loss.value_and_grad(&preds, &batch_labels)?
            } else {
                mse_with_grad(&preds, &batch_labels)?
            };
            for (tape, g) in tapes.iter().zip(&grads) {
                net.backward(tape, g)?;
            }
            Ok(value)
        },
    )?;
    Ok(Member {
        seed,
        propensity,
        outcome,
        loss_history,
        propensity_history,
    })
}

/// Train `cfg.members` independently seeded members.
pub fn train_ensemble(
    samples: &[LongitudinalSample],
    cfg: &TrainConfig,
    kind: EstimatorKind,
    exec: Execution,
) -> Result<Ensemble> {
    cfg.validate()?;
    if cfg.members < 2 {
        return Err(TcsError::Config(format!(
            "an ensemble needs at least 2 members, got {}",
            cfg.members
        )));
    }
    if kind.uses_propensity() {
        check_treatment_variation(samples)?;
    }
    let members = exec
        .map_indexed(cfg.members, |k| {
            let seed = derive_seed(cfg.seed, k as u64);
            log::debug!("training {} member {k} (seed {seed})", kind.name());
            train_member(samples, cfg, kind, seed)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        kind,
        config: *cfg,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, ScenarioConfig};

    fn data(n: usize) -> Vec<LongitudinalSample> {
        let cfg = ScenarioConfig {
            n,
            u: 2,
            q: 4,
            d: 3,
            ..ScenarioConfig::default()
        };
        generate(&cfg, 12).unwrap().samples
    }

    fn tiny() -> TrainConfig {
        TrainConfig {
            members: 2,
            epochs: 3,
            batch_size: 8,
            hidden: 4,
            head_hidden: 3,
            propensity: PropensityConfig {
                hidden: 3,
                epochs: 2,
                batch_size: 8,
                ..PropensityConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_member() {
        let s = data(20);
        let a = train_member(&s, &tiny(), EstimatorKind::Tcs, 99).unwrap();
        let b = train_member(&s, &tiny(), EstimatorKind::Tcs, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_history.len(), 3);
    }

    #[test]
    fn modes_agree_bitwise() {
        let s = data(16);
        let seq = train_ensemble(&s, &tiny(), EstimatorKind::Snn, Execution::Sequential).unwrap();
        let par = train_ensemble(&s, &tiny(), EstimatorKind::Snn, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_ne!(seq.members[0].outcome, seq.members[1].outcome);
    }

    #[test]
    fn single_arm_is_degenerate() {
        let mut s = data(10);
        for x in &mut s {
            x.a.iter_mut().for_each(|a| *a = 1);
        }
        let err = fit_propensity(&s, &PropensityConfig::default(), 1);
        assert!(matches!(err, Err(TcsError::DegenerateTreatment(_))));
        assert!(train_ensemble(&s, &tiny(), EstimatorKind::Tcs, Execution::Sequential).is_err());
        assert!(train_ensemble(&s, &tiny(), EstimatorKind::Snn, Execution::Sequential).is_ok());
    }

    #[test]
    fn config_bounds() {
        let bad = TrainConfig {
            members: 1,
            ..tiny()
        };
        assert!(matches!(
            train_ensemble(&data(6), &bad, EstimatorKind::Snn, Execution::Sequential),
            Err(TcsError::Config(_))
        ));
        assert!(TrainConfig { subsample: 0.0, ..tiny() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..tiny() }.validate().is_err());
    }

    #[test]
    fn training_reduces_loss() {
        let s = data(60);
        let cfg = TrainConfig {
            epochs: 25,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..tiny()
        };
        let m = train_member(&s, &cfg, EstimatorKind::Snn, 5).unwrap();
        let h = &m.loss_history;
        assert!(h.last().unwrap() < &h[0], "{h:?}");
    }
}
