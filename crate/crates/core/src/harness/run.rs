//! Replicate orchestration: generate a train/test pair, fit every requested
//! estimator on the training half and score it on the testing half.

use serde::{Deserialize, Serialize};

use super::config::{Estimator, RunConfig};
use crate::baselines::{ipw_adjust, kaplan_meier, observed_outcome, tmle_adjust};
use crate::error::{Result, TcsError};
use crate::metrics::{
    auroc_by_time, auroc_pooled, bias, bias_curve, concordance, coverage, mse, risk_from_survival, MetricReport,
};
use crate::ndgrad::mask_transform;
use crate::par::{derive_seed, Execution};
use crate::simgen::{generate_pair, Dataset, GroundTruth, LongitudinalSample, ScenarioConfig};
use crate::tcsnet::{
    estimate_effects, fit_propensity, follow_up_propensity, predict_observed_survival, train_ensemble, EffectEstimate,
    Ensemble, EstimatorKind, TrainConfig,
};

/// Stream of the baseline propensity fit used by the IPW and TMLE rows.
const BASELINE_PROPENSITY_STREAM: u64 = 100;

/// One subject-time row of `effects.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub scenario: String,
    pub replicate: usize,
    pub estimator: String,
    pub id: String,
    pub time: usize,
    pub ite: f64,
    pub lo: f64,
    pub hi: f64,
    pub s1: f64,
    pub s0: f64,
    pub true_ite: f64,
}

/// One time point of a population-level effect curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateRow {
    pub scenario: String,
    pub replicate: usize,
    pub estimator: String,
    pub time: usize,
    pub cate: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub hr_star: Option<f64>,
    pub true_ate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub reports: Vec<MetricReport>,
    pub effects: Vec<EffectRow>,
    pub cate: Vec<CateRow>,
}

impl RunResult {
    fn extend(&mut self, other: RunResult) {
        self.reports.extend(other.reports);
        self.effects.extend(other.effects);
        self.cate.extend(other.cate);
    }

    /// Reports for one estimator row name, in replicate order.
    pub fn reports_for<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a MetricReport> + 'a {
        self.reports.iter().filter(move |r| r.estimator == estimator)
    }
}

/// Seed recorded on every row of a replicate.
pub fn replicate_seed(scenario: &ScenarioConfig, replicate: usize) -> u64 {
    derive_seed(scenario.seed, replicate as u64)
}

/// Report row names produced for an estimator family.
pub fn row_names(estimator: Estimator) -> &'static [&'static str] {
    match estimator {
        Estimator::Tcs => &["tcs"],
        Estimator::Snn => &["snn_raw", "snn_ipw", "snn_tmle"],
        Estimator::Binary => &["binary_raw", "binary_ipw", "binary_tmle"],
        Estimator::Km => &["km"],
    }
}

struct Context<'a> {
    scenario: &'a str,
    replicate: usize,
    seed: u64,
    test: &'a Dataset,
    true_ate: Vec<f64>,
    taus: Vec<usize>,
    events: Vec<bool>,
}

impl Context<'_> {
    fn report(&self, estimator: &str) -> MetricReport {
        MetricReport::empty(self.scenario, self.replicate, estimator, self.seed)
    }

    fn failed(&self, estimator: &str, err: &TcsError) -> MetricReport {
        log::warn!(
            "{} replicate {}: {estimator} failed: {err}",
            self.scenario,
            self.replicate
        );
        let mut r = self.report(estimator);
        r.error = Some(format!("{}: {err}", err.category()));
        r
    }

    fn truth(&self) -> &GroundTruth {
        &self.test.truth
    }

    fn cate_rows(&self, estimator: &str, cate: &[f64], band: Option<(&[f64], &[f64])>, hr: Option<&[f64]>) -> Vec<CateRow> {
        (0..cate.len())
            .map(|t| CateRow {
                scenario: self.scenario.to_string(),
                replicate: self.replicate,
                estimator: estimator.to_string(),
                time: t + 1,
                cate: cate[t],
                lo: band.map(|(lo, _)| lo[t]),
                hi: band.map(|(_, hi)| hi[t]),
                hr_star: hr.map(|h| h[t]),
                true_ate: self.true_ate[t],
            })
            .collect()
    }
}

/// Metrics of an ensemble's ITE, CATE and observed-arm discrimination.
fn score_ensemble(
    ctx: &Context<'_>,
    name: &str,
    ensemble: &Ensemble,
    est: &EffectEstimate,
    exec: Execution,
) -> Result<MetricReport> {
    let truth = ctx.truth();
    let group: Vec<usize> = (0..est.len()).collect();
    let mut r = ctx.report(name);
    let m = mse(&est.ite, &truth.ite, &group)?;
    r.rmse = Some(m.iter().map(|v| v.sqrt()).collect());
    r.mse = Some(m);
    r.bias_ite = optional(bias(&est.ite, &truth.ite, &group))?;
    r.bias_ate = optional(bias_curve(&est.cate, &ctx.true_ate))?;
    r.coverage = Some(coverage(&est.ite_lo, &est.ite_hi, &truth.ite, &group)?);
    let surv = predict_observed_survival(ensemble, &ctx.test.samples, exec)?;
    r.auroc = Some(auroc_by_time(&surv, &ctx.taus, &ctx.events)?);
    r.auroc_pooled = optional(auroc_pooled(&surv, &ctx.taus, &ctx.events))?;
    let risk: Vec<f64> = surv.iter().map(|s| risk_from_survival(s)).collect();
    r.concordance = optional(concordance(&risk, &ctx.taus, &ctx.events))?;
    Ok(r)
}

/// Undefined metrics become `None`; other errors propagate.
fn optional<T>(res: Result<T>) -> Result<Option<T>> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(TcsError::UndefinedMetric(msg)) => {
            log::debug!("metric undefined: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn effect_rows(ctx: &Context<'_>, name: &str, est: &EffectEstimate) -> Vec<EffectRow> {
    let truth = ctx.truth();
    let mut rows = Vec::with_capacity(est.len() * est.q());
    for i in 0..est.len() {
        for t in 0..est.q() {
            rows.push(EffectRow {
                scenario: ctx.scenario.to_string(),
                replicate: ctx.replicate,
                estimator: name.to_string(),
                id: est.ids[i].clone(),
                time: t + 1,
                ite: est.ite[i][t],
                lo: est.ite_lo[i][t],
                hi: est.ite_hi[i][t],
                s1: est.survival_1[i][t],
                s0: est.survival_0[i][t],
                true_ite: truth.ite[i][t],
            });
        }
    }
    rows
}

/// Propensity, treatment and observed-outcome matrices for the adjustments.
struct AdjustInputs {
    p: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    y_obs: Vec<Vec<Option<f64>>>,
}

fn adjust_inputs(train: &[LongitudinalSample], test: &[LongitudinalSample], cfg: &TrainConfig, seed: u64) -> Result<AdjustInputs> {
    let (net, _) = fit_propensity(train, &cfg.propensity, seed)?;
    let mut out = AdjustInputs {
        p: Vec::with_capacity(test.len()),
        a: Vec::with_capacity(test.len()),
        y_obs: Vec::with_capacity(test.len()),
    };
    for s in test {
        let panel = mask_transform(s, 1..=s.steps())?;
        out.p.push(follow_up_propensity(&net, &panel, s.u)?);
        out.a.push((1..=s.q).map(|k| f64::from(s.a_follow_up(k))).collect());
        out.y_obs
            .push((1..=s.q).map(|t| observed_outcome(s.tau(), s.event(), t)).collect());
    }
    Ok(out)
}

/// The raw row plus its IPW and TMLE adjusted ATE rows.
fn adjusted_family(
    ctx: &Context<'_>,
    prefix: &str,
    fitted: Result<(Ensemble, EffectEstimate)>,
    adjust: &Result<AdjustInputs>,
    exec: Execution,
    out: &mut RunResult,
) {
    let raw = format!("{prefix}_raw");
    let ipw = format!("{prefix}_ipw");
    let tmle = format!("{prefix}_tmle");
    let (ensemble, est) = match fitted {
        Ok(v) => v,
        Err(e) => {
            for name in [&raw, &ipw, &tmle] {
                out.reports.push(ctx.failed(name, &e));
            }
            return;
        }
    };
    out.reports.push(
        score_ensemble(ctx, &raw, &ensemble, &est, exec).unwrap_or_else(|e| ctx.failed(&raw, &e)),
    );
    out.effects.extend(effect_rows(ctx, &raw, &est));
    out.cate.extend(ctx.cate_rows(
        &raw,
        &est.cate,
        Some((&est.cate_lo, &est.cate_hi)),
        Some(&est.hr_star),
    ));
    let inputs = match adjust {
        Ok(v) => v,
        Err(e) => {
            out.reports.push(ctx.failed(&ipw, e));
            out.reports.push(ctx.failed(&tmle, e));
            return;
        }
    };
    let observed_arm: Vec<Vec<f64>> = (0..est.len())
        .map(|i| {
            (0..est.q())
                .map(|t| {
                    if inputs.a[i][t] == 1.0 {
                        est.survival_1[i][t]
                    } else {
                        est.survival_0[i][t]
                    }
                })
                .collect()
        })
        .collect();
    let mut push_ate = |name: &str, psi: Result<Vec<f64>>| match psi.and_then(|psi| {
        let mut r = ctx.report(name);
        r.bias_ate = optional(bias_curve(&psi, &ctx.true_ate))?;
        Ok((r, psi))
    }) {
        Ok((r, psi)) => {
            out.reports.push(r);
            out.cate.extend(ctx.cate_rows(name, &psi, None, None));
        }
        Err(e) => out.reports.push(ctx.failed(name, &e)),
    };
    push_ate(&ipw, ipw_adjust(&observed_arm, &inputs.a, &inputs.p));
    push_ate(
        &tmle,
        tmle_adjust(&est.survival_1, &est.survival_0, &inputs.y_obs, &inputs.a, &inputs.p).map(|adj| adj.psi_tmle),
    );
}

/// Naive Kaplan-Meier contrast between subjects by their first follow-up arm.
fn km_family(ctx: &Context<'_>, out: &mut RunResult) {
    let samples = &ctx.test.samples;
    let q = ctx.true_ate.len();
    let arm = |a: u8| -> Vec<LongitudinalSample> {
        samples.iter().filter(|s| s.a_follow_up(1) == a).cloned().collect()
    };
    let (treated, control) = (arm(1), arm(0));
    if treated.is_empty() || control.is_empty() {
        let e = TcsError::DegenerateTreatment("Kaplan-Meier contrast needs both arms at follow-up step 1".into());
        out.reports.push(ctx.failed("km", &e));
        return;
    }
    let (s1, s0) = (kaplan_meier(&treated, q), kaplan_meier(&control, q));
    let diff: Vec<f64> = s1.iter().zip(&s0).map(|(a, b)| a - b).collect();
    let scored = (|| -> Result<MetricReport> {
        let truth = ctx.truth();
        let group: Vec<usize> = (0..samples.len()).collect();
        let ite = vec![diff.clone(); samples.len()];
        let mut r = ctx.report("km");
        let m = mse(&ite, &truth.ite, &group)?;
        r.rmse = Some(m.iter().map(|v| v.sqrt()).collect());
        r.mse = Some(m);
        r.bias_ite = optional(bias(&ite, &truth.ite, &group))?;
        r.bias_ate = optional(bias_curve(&diff, &ctx.true_ate))?;
        Ok(r)
    })();
    out.reports.push(scored.unwrap_or_else(|e| ctx.failed("km", &e)));
    out.cate.extend(ctx.cate_rows("km", &diff, None, None));
}

fn fit_and_estimate(
    train: &[LongitudinalSample],
    test: &[LongitudinalSample],
    cfg: &TrainConfig,
    kind: EstimatorKind,
    exec: Execution,
) -> Result<(Ensemble, EffectEstimate)> {
    let ensemble = train_ensemble(train, cfg, kind, exec)?;
    let est = estimate_effects(&ensemble, test, exec)?;
    Ok((ensemble, est))
}

/// Fit and score every estimator on one replicate. Estimator failures are
/// recorded on their report rows; only data generation errors propagate.
pub fn run_replicate(
    scenario_name: &str,
    scenario: &ScenarioConfig,
    train_cfg: &TrainConfig,
    estimators: &[Estimator],
    replicate: usize,
    exec: Execution,
) -> Result<RunResult> {
    let seed = replicate_seed(scenario, replicate);
    let (train, test) = generate_pair(scenario, replicate)?;
    let cfg = TrainConfig {
        seed: derive_seed(train_cfg.seed, seed),
        ..train_cfg.clone()
    };
    let ctx = Context {
        scenario: scenario_name,
        replicate,
        seed,
        test: &test,
        true_ate: test.truth.ate(),
        taus: test.samples.iter().map(LongitudinalSample::tau).collect(),
        events: test.samples.iter().map(LongitudinalSample::event).collect(),
    };
    let needs_adjust = estimators.iter().any(|e| matches!(e, Estimator::Snn | Estimator::Binary));
    let adjust = if needs_adjust {
        adjust_inputs(
            &train.samples,
            &test.samples,
            &cfg,
            derive_seed(seed, BASELINE_PROPENSITY_STREAM),
        )
    } else {
        Err(TcsError::Usage("no adjusted estimators requested".into()))
    };
    let mut out = RunResult::default();
    for &e in estimators {
        match e {
            Estimator::Tcs => match fit_and_estimate(&train.samples, &test.samples, &cfg, EstimatorKind::Tcs, exec) {
                Ok((ens, est)) => {
                    out.reports
                        .push(score_ensemble(&ctx, "tcs", &ens, &est, exec).unwrap_or_else(|e| ctx.failed("tcs", &e)));
                    out.effects.extend(effect_rows(&ctx, "tcs", &est));
                    out.cate.extend(ctx.cate_rows(
                        "tcs",
                        &est.cate,
                        Some((&est.cate_lo, &est.cate_hi)),
                        Some(&est.hr_star),
                    ));
                }
                Err(err) => out.reports.push(ctx.failed("tcs", &err)),
            },
            Estimator::Snn => {
                let fitted = fit_and_estimate(&train.samples, &test.samples, &cfg, EstimatorKind::Snn, exec);
                adjusted_family(&ctx, "snn", fitted, &adjust, exec, &mut out);
            }
            Estimator::Binary => {
                let fitted = fit_and_estimate(&train.samples, &test.samples, &cfg, EstimatorKind::Binary, exec);
                adjusted_family(&ctx, "binary", fitted, &adjust, exec, &mut out);
            }
            Estimator::Km => km_family(&ctx, &mut out),
        }
    }
    Ok(out)
}

/// Every replicate of one scenario cell, in replicate order.
pub fn run_scenario(
    scenario_name: &str,
    scenario: &ScenarioConfig,
    train_cfg: &TrainConfig,
    estimators: &[Estimator],
    exec: Execution,
) -> Result<RunResult> {
    scenario.validate()?;
    train_cfg.validate()?;
    let parts = exec.map_indexed(scenario.replicates, |rep| {
        run_replicate(scenario_name, scenario, train_cfg, estimators, rep, exec)
    });
    let mut out = RunResult::default();
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Expand the sweep and run every cell.
pub fn run_sweep(cfg: &RunConfig, exec: Execution) -> Result<RunResult> {
    cfg.validate()?;
    let mut out = RunResult::default();
    for (name, scenario) in cfg.sweep.expand(&cfg.name, &cfg.scenario)? {
        log::info!("scenario {name}: {} replicates", scenario.replicates);
        out.extend(run_scenario(&name, &scenario, &cfg.train, &cfg.estimators, exec)?);
    }
    Ok(out)
}
