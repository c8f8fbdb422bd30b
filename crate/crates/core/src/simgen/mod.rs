//! Synthetic longitudinal survival benchmark.
//!
//! Subjects live on an internal grid `s = 1..=u+q`: steps `1..=u` are the
//! history window, steps `u+1..=u+q` the follow-up. Covariates drift as
//! `N(sqrt(s), V)`, treatment is a per-step Bernoulli whose probability mixes
//! an exposure indicator with a fair coin (weight `eta` on the indicator),
//! and event/censor times come from the root-finding construction: one
//! uniform per subject and process, compared against a per-step survival
//! factor. The hazard is indexed by the follow-up step `k = s - u`, so the
//! first follow-up step carries zero hazard.

mod io;

pub use io::{
    header as dataset_header, read_dataset_csv, write_dataset_csv, write_samples_csv, write_truth_csv, DatasetSidecar,
    SIDECAR_VERSION,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::par::derive_seed;

/// How the binary exposure indicator over the first three confounders is
/// thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExposureRule {
    /// `X1 + X2 + X3 > 3 sqrt(s)`: the three-covariate sum against its own
    /// expectation, so the indicator is a fair split that depends on `X`.
    Centered,
    /// `X1 + X2 + X3 > threshold`. `threshold = 0` is the literal reduction of
    /// the printed rule; with positive drifting means it is almost always 1.
    Constant { threshold: f64 },
}

impl Default for ExposureRule {
    fn default() -> Self {
        ExposureRule::Centered
    }
}

impl ExposureRule {
    pub fn threshold(&self, s: usize) -> f64 {
        match *self {
            ExposureRule::Centered => 3.0 * (s as f64).sqrt(),
            ExposureRule::Constant { threshold } => threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Subject count.
    pub n: usize,
    /// Confounder dimension.
    pub d: usize,
    /// Covariate variance `V`.
    pub v: f64,
    /// Overlap parameter in `[0, 1]`.
    pub eta: f64,
    /// History window length.
    pub u: usize,
    /// Follow-up length.
    pub q: usize,
    /// Covariate hazard coefficient.
    pub beta: f64,
    /// Treatment hazard coefficient.
    pub treat_coef: f64,
    /// Hazard and censoring scale `lambda`.
    pub lambda_scale: f64,
    pub replicates: usize,
    pub seed: u64,
    pub exposure: ExposureRule,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 1500,
            d: 6,
            v: 0.5,
            eta: 0.9,
            u: 5,
            q: 10,
            beta: 1.0,
            treat_coef: 0.1,
            lambda_scale: 30.0,
            replicates: 50,
            seed: 20_210_601,
            exposure: ExposureRule::Centered,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(TcsError::Config(msg.to_string()));
        if self.n < 2 {
            return fail("n must be at least 2");
        }
        if self.d < 3 {
            return fail("d must be at least 3 (the exposure rule reads three confounders)");
        }
        if self.u < 1 {
            return fail("u (history window) must be at least 1");
        }
        if self.q < 1 {
            return fail("q (follow-up) must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail("eta must lie in [0, 1]");
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return fail("v must be positive and finite");
        }
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            return fail("lambda_scale must be positive and finite");
        }
        if !self.beta.is_finite() || !self.treat_coef.is_finite() {
            return fail("beta and treat_coef must be finite");
        }
        if let ExposureRule::Constant { threshold } = self.exposure {
            if !threshold.is_finite() {
                return fail("exposure threshold must be finite");
            }
        }
        Ok(())
    }

    /// Panel length `u + q`.
    pub fn steps(&self) -> usize {
        self.u + self.q
    }
}

/// One subject's panel. Time-indexed vectors use 0-based storage for the
/// 1-based internal grid: entry `s - 1` holds step `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalSample {
    pub id: String,
    /// Row-major `(u + q) x d` covariates; unobserved cells hold 0.
    pub x: Vec<f64>,
    /// Treatment per step, 0 or 1.
    pub a: Vec<u8>,
    /// Row-major `(u + q) x d`, `true` = observed.
    pub mask: Vec<bool>,
    pub d: usize,
    pub u: usize,
    pub q: usize,
    /// Event time in `1..=q+1`; `q + 1` means no event in follow-up.
    pub event_time: usize,
    /// Censor time in `1..=q`; `q` is administrative end of follow-up.
    pub censor_time: usize,
}

impl LongitudinalSample {
    pub fn steps(&self) -> usize {
        self.u + self.q
    }

    /// `tau = min(tau_s, tau_c)`.
    pub fn tau(&self) -> usize {
        self.event_time.min(self.censor_time)
    }

    /// `Y = 1` iff the event precedes or coincides with censoring.
    pub fn event(&self) -> bool {
        self.event_time <= self.censor_time
    }

    /// Covariate row at internal step `s` (1-based).
    pub fn x_row(&self, s: usize) -> &[f64] {
        &self.x[(s - 1) * self.d..s * self.d]
    }

    pub fn mask_row(&self, s: usize) -> &[bool] {
        &self.mask[(s - 1) * self.d..s * self.d]
    }

    /// Treatment at internal step `s` (1-based).
    pub fn a_at(&self, s: usize) -> u8 {
        self.a[s - 1]
    }

    /// Treatment at follow-up step `k` (1-based), i.e. internal step `u + k`.
    pub fn a_follow_up(&self, k: usize) -> u8 {
        self.a[self.u + k - 1]
    }

    pub fn check(&self) -> Result<()> {
        let t = self.steps();
        if self.x.len() != t * self.d || self.mask.len() != t * self.d || self.a.len() != t {
            return Err(TcsError::Structural(format!(
                "subject {}: panel sizes do not match (u + q) x d = {} x {}",
                self.id, t, self.d
            )));
        }
        if self.event_time < 1 || self.event_time > self.q + 1 {
            return Err(TcsError::Data(format!(
                "subject {}: event time {} outside 1..={}",
                self.id,
                self.event_time,
                self.q + 1
            )));
        }
        if self.censor_time < 1 || self.censor_time > self.q {
            return Err(TcsError::Data(format!(
                "subject {}: censor time {} outside 1..={}",
                self.id, self.censor_time, self.q
            )));
        }
        if self.a.iter().any(|&v| v > 1) {
            return Err(TcsError::Data(format!("subject {}: non-binary treatment", self.id)));
        }
        Ok(())
    }
}

/// True counterfactual quantities for every subject, computed from the same
/// realized covariate path as the observed sample. Inner vectors are indexed
/// by follow-up step `k - 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// `psi_i(k) = S_1(k) - S_0(k)`.
    pub ite: Vec<Vec<f64>>,
    pub hazard_1: Vec<Vec<f64>>,
    pub hazard_0: Vec<Vec<f64>>,
    /// Counterfactual survival `P(no event by k)` under all-treated/all-control.
    pub survival_1: Vec<Vec<f64>>,
    pub survival_0: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Sample average effect per follow-up step.
    pub fn ate(&self) -> Vec<f64> {
        let n = self.ite.len().max(1) as f64;
        let q = self.ite.first().map_or(0, Vec::len);
        (0..q)
            .map(|k| self.ite.iter().map(|row| row[k]).sum::<f64>() / n)
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> GroundTruth {
        let pick = |v: &Vec<Vec<f64>>| idx.iter().map(|&i| v[i].clone()).collect();
        GroundTruth {
            ite: pick(&self.ite),
            hazard_1: pick(&self.hazard_1),
            hazard_0: pick(&self.hazard_0),
            survival_1: pick(&self.survival_1),
            survival_0: pick(&self.survival_0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub samples: Vec<LongitudinalSample>,
    pub truth: GroundTruth,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw `n` covariate panels, each row-major `(u + q) x d` with
/// `X_d(s) ~ N(sqrt(s), V)`.
pub fn gen_covariates<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let t = cfg.steps();
    let sd = cfg.v.sqrt();
    let panels = (0..cfg.n)
        .map(|_| {
            let mut panel = Vec::with_capacity(t * cfg.d);
            for s in 1..=t {
                let mean = (s as f64).sqrt();
                for _ in 0..cfg.d {
                    let z: f64 = rng.sample(StandardNormal);
                    panel.push(mean + sd * z);
                }
            }
            panel
        })
        .collect();
    Ok(panels)
}

/// Exposure indicator at internal step `s` for one covariate row.
pub fn exposure_indicator(x_row: &[f64], s: usize, rule: ExposureRule) -> bool {
    x_row[0] + x_row[1] + x_row[2] > rule.threshold(s)
}

/// `P(A(s) = 1) = eta * I_s + 0.5 * (1 - eta)`.
pub fn treatment_probability(x_row: &[f64], s: usize, eta: f64, rule: ExposureRule) -> f64 {
    let ind = if exposure_indicator(x_row, s, rule) { 1.0 } else { 0.0 };
    eta * ind + 0.5 * (1.0 - eta)
}

/// Draw a treatment path for every panel.
pub fn assign_treatment<R: Rng + ?Sized>(
    panels: &[Vec<f64>],
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>> {
    if cfg.d < 3 {
        return Err(TcsError::Config(
            "d must be at least 3 (the exposure rule reads three confounders)".into(),
        ));
    }
    let t = cfg.steps();
    let paths = panels
        .iter()
        .map(|panel| {
            (1..=t)
                .map(|s| {
                    let row = &panel[(s - 1) * cfg.d..s * cfg.d];
                    let p = treatment_probability(row, s, cfg.eta, cfg.exposure);
                    u8::from(rng.random::<f64>() < p)
                })
                .collect()
        })
        .collect();
    Ok(paths)
}

/// Hazard at follow-up step `k`: `(ln k / lambda) * (treat_coef * a + beta * sum(x))`.
pub fn hazard_at(x_row: &[f64], a: u8, k: usize, cfg: &ScenarioConfig) -> f64 {
    debug_assert!(k >= 1);
    hazard_at_time(x_row, f64::from(a), k as f64, cfg)
}

/// The hazard formula at a real-valued time `t > 0`.
pub fn hazard_at_time(x_row: &[f64], a: f64, t: f64, cfg: &ScenarioConfig) -> f64 {
    let sum: f64 = x_row.iter().sum();
    t.ln() / cfg.lambda_scale * (cfg.treat_coef * a + cfg.beta * sum)
}

/// Per-step censoring survival factor `exp(-ln k / lambda)`.
pub fn censor_factor(k: usize, cfg: &ScenarioConfig) -> f64 {
    (-(k as f64).ln() / cfg.lambda_scale).exp()
}

/// First step `k` in `1..=q` where `factor(k) < u`, if any.
fn first_crossing(q: usize, uniform: f64, factor: impl Fn(usize) -> f64) -> Option<usize> {
    (1..=q).find(|&k| factor(k) < uniform)
}

/// Event and censor times for one subject given its two uniforms.
pub fn times_from_uniforms(
    panel: &[f64],
    treatment: &[u8],
    cfg: &ScenarioConfig,
    u_event: f64,
    u_censor: f64,
) -> (usize, usize) {
    let q = cfg.q;
    let tau_s = first_crossing(q, u_event, |k| {
        let s = cfg.u + k;
        let row = &panel[(s - 1) * cfg.d..s * cfg.d];
        (-hazard_at(row, treatment[s - 1], k, cfg)).exp()
    })
    .unwrap_or(q + 1);
    let tau_c = first_crossing(q, u_censor, |k| censor_factor(k, cfg)).unwrap_or(q);
    (tau_s, tau_c)
}

/// Root-finding event and censor times, one `(U_e, U_c)` pair per subject.
pub fn draw_times<R: Rng + ?Sized>(
    panels: &[Vec<f64>],
    treatments: &[Vec<u8>],
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if panels.len() != treatments.len() {
        return Err(TcsError::Structural(format!(
            "{} covariate panels but {} treatment paths",
            panels.len(),
            treatments.len()
        )));
    }
    Ok(panels
        .iter()
        .zip(treatments)
        .map(|(panel, path)| {
            let u_event: f64 = rng.random();
            let u_censor: f64 = rng.random();
            times_from_uniforms(panel, path, cfg, u_event, u_censor)
        })
        .collect())
}

/// Closed-form counterfactual survival under a constant arm. With a single
/// uniform held across steps, no event by `k` iff `U <= min_{j<=k} S(j)`.
pub fn counterfactual_survival(panel: &[f64], arm: u8, cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    let mut hazards = Vec::with_capacity(cfg.q);
    let mut survival = Vec::with_capacity(cfg.q);
    let mut running = 1.0_f64;
    for k in 1..=cfg.q {
        let s = cfg.u + k;
        let h = hazard_at(&panel[(s - 1) * cfg.d..s * cfg.d], arm, k, cfg);
        running = running.min((-h).exp());
        hazards.push(h);
        survival.push(running);
    }
    (hazards, survival)
}

/// Ground-truth individual effects for every panel.
pub fn true_ite(panels: &[Vec<f64>], cfg: &ScenarioConfig) -> GroundTruth {
    let mut truth = GroundTruth::default();
    for panel in panels {
        let (h1, s1) = counterfactual_survival(panel, 1, cfg);
        let (h0, s0) = counterfactual_survival(panel, 0, cfg);
        truth.ite.push(s1.iter().zip(&s0).map(|(a, b)| a - b).collect());
        truth.hazard_1.push(h1);
        truth.hazard_0.push(h0);
        truth.survival_1.push(s1);
        truth.survival_0.push(s0);
    }
    truth
}

/// Generate one complete dataset. Identical `(cfg, seed)` gives a
/// bit-identical result.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let panels = gen_covariates(cfg, &mut rng)?;
    let treatments = assign_treatment(&panels, cfg, &mut rng)?;
    let times = draw_times(&panels, &treatments, cfg, &mut rng)?;
    let truth = true_ite(&panels, cfg);
    let t = cfg.steps();
    let samples = panels
        .into_iter()
        .zip(treatments)
        .zip(times)
        .enumerate()
        .map(|(i, ((x, a), (event_time, censor_time)))| LongitudinalSample {
            id: i.to_string(),
            x,
            a,
            mask: vec![true; t * cfg.d],
            d: cfg.d,
            u: cfg.u,
            q: cfg.q,
            event_time,
            censor_time,
        })
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        seed,
        samples,
        truth,
    })
}

/// Seeds of the train/test pair for one replicate.
pub fn replicate_seeds(base: u64, replicate: usize) -> (u64, u64) {
    let rep = derive_seed(base, replicate as u64);
    (derive_seed(rep, 0), derive_seed(rep, 1))
}

/// Independent train and test datasets for one replicate.
pub fn generate_pair(cfg: &ScenarioConfig, replicate: usize) -> Result<(Dataset, Dataset)> {
    let (train_seed, test_seed) = replicate_seeds(cfg.seed, replicate);
    Ok((generate(cfg, train_seed)?, generate(cfg, test_seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n: 200,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn validate_names_violated_bound() {
        let bad = ScenarioConfig { d: 2, ..small() };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("d must be at least 3"), "{err}");
        let bad = ScenarioConfig { eta: 1.5, ..small() };
        assert!(bad.validate().unwrap_err().to_string().contains("eta"));
        let bad = ScenarioConfig { v: 0.0, ..small() };
        assert!(bad.validate().unwrap_err().to_string().contains("v must"));
        let bad = ScenarioConfig { n: 1, ..small() };
        assert!(matches!(bad.validate(), Err(TcsError::Config(_))));
    }

    #[test]
    fn vanishing_variance_gives_exact_means() {
        let cfg = ScenarioConfig { v: 1e-40, ..small() };
        let panels = gen_covariates(&cfg, &mut rng_from_seed(3)).unwrap();
        for panel in &panels {
            for s in 1..=cfg.steps() {
                for d in 0..cfg.d {
                    assert_eq!(panel[(s - 1) * cfg.d + d], (s as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small();
        let a = generate(&cfg, 11).unwrap();
        let b = generate(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = generate(&cfg, 12).unwrap();
        assert_ne!(a.samples[0].x, c.samples[0].x);
    }

    #[test]
    fn treatment_probability_cases() {
        let hi = [10.0, 10.0, 10.0];
        let lo = [-10.0, -10.0, -10.0];
        let rule = ExposureRule::Constant { threshold: 0.0 };
        assert_eq!(treatment_probability(&hi, 4, 0.0, rule), 0.5);
        assert_eq!(treatment_probability(&lo, 4, 0.0, rule), 0.5);
        assert_eq!(treatment_probability(&hi, 4, 1.0, rule), 1.0);
        assert_eq!(treatment_probability(&lo, 4, 1.0, rule), 0.0);
        assert_eq!(treatment_probability(&hi, 4, 0.5, rule), 0.75);
        assert_eq!(treatment_probability(&lo, 4, 0.5, rule), 0.25);
        // centered rule compares against 3 sqrt(s)
        assert!(exposure_indicator(&[2.1, 2.0, 2.0], 4, ExposureRule::Centered));
        assert!(!exposure_indicator(&[1.9, 2.0, 2.0], 4, ExposureRule::Centered));
    }

    #[test]
    fn eta_one_follows_indicator() {
        let cfg = ScenarioConfig { eta: 1.0, ..small() };
        let mut rng = rng_from_seed(5);
        let panels = gen_covariates(&cfg, &mut rng).unwrap();
        let paths = assign_treatment(&panels, &cfg, &mut rng).unwrap();
        for (panel, path) in panels.iter().zip(&paths) {
            for s in 1..=cfg.steps() {
                let row = &panel[(s - 1) * cfg.d..s * cfg.d];
                assert_eq!(path[s - 1] == 1, exposure_indicator(row, s, cfg.exposure));
            }
        }
    }

    #[test]
    fn hazard_examples() {
        let cfg = ScenarioConfig::default();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(hazard_at(&x, 1, 1, &cfg), 0.0);
        assert_eq!(hazard_at(&x, 0, 1, &cfg), 0.0);
        let k = 7;
        let diff = hazard_at(&x, 1, k, &cfg) - hazard_at(&x, 0, k, &cfg);
        assert!((diff - 0.1 * (k as f64).ln() / 30.0).abs() < 1e-15);
    }

    #[test]
    fn hazard_at_e_is_one() {
        let cfg = ScenarioConfig::default();
        let x = [10.0, 12.0, 8.0];
        let h = hazard_at_time(&x, 0.0, std::f64::consts::E, &cfg);
        assert!((h - 1.0).abs() < 1e-15);
        assert!(((-h).exp() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn censoring_with_unit_uniform_hits_step_two() {
        let cfg = small();
        let panel = vec![1.0; cfg.steps() * cfg.d];
        let path = vec![0u8; cfg.steps()];
        let (_, tau_c) = times_from_uniforms(&panel, &path, &cfg, 0.5, 1.0);
        assert_eq!(tau_c, 2);
        let (tau_s, _) = times_from_uniforms(&panel, &path, &cfg, 0.0, 0.5);
        assert_eq!(tau_s, cfg.q + 1);
    }

    #[test]
    fn times_and_indicator_ranges() {
        let cfg = small();
        let ds = generate(&cfg, 99).unwrap();
        for s in &ds.samples {
            s.check().unwrap();
            assert!((1..=cfg.q + 1).contains(&s.event_time));
            assert!((1..=cfg.q).contains(&s.censor_time));
            assert_eq!(s.tau(), s.event_time.min(s.censor_time));
            assert_eq!(s.event(), s.event_time <= s.censor_time);
        }
    }

    #[test]
    fn zero_treatment_coefficient_has_null_truth() {
        let cfg = ScenarioConfig { treat_coef: 0.0, ..small() };
        let ds = generate(&cfg, 1).unwrap();
        assert!(ds.truth.ite.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_effect_is_zero_and_bounded() {
        let ds = generate(&small(), 2).unwrap();
        for row in &ds.truth.ite {
            assert_eq!(row[0], 0.0);
            assert!(row.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
