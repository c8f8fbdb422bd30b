use serde::{Deserialize, Serialize};

use super::train::{Ensemble, EstimatorKind, Member};
use crate::error::{Result, TcsError};
use crate::ndgrad::ops::PROB_FLOOR;
use crate::par::Execution;
use crate::simgen::LongitudinalSample;

/// `S(t) = prod_{j <= t} (1 - theta(j))`.
pub fn survival_curve(theta_hat: &[f64]) -> Vec<f64> {
    let mut s = 1.0;
    theta_hat
        .iter()
        .map(|&h| {
            s *= 1.0 - h.clamp(0.0, 1.0);
            s
        })
        .collect()
}

/// Discrete hazard implied by a survival curve, `1 - S(t) / S(t-1)`.
pub fn implied_hazard(survival: &[f64]) -> Vec<f64> {
    let mut prev = 1.0;
    survival
        .iter()
        .map(|&s| {
            let h = if prev > 0.0 { (1.0 - s / prev).clamp(0.0, 1.0) } else { 1.0 };
            prev = s;
            h
        })
        .collect()
}

/// Running minimum capped to `[0, 1]`, making any curve a valid survival curve.
pub fn monotone_survival(raw: &[f64]) -> Vec<f64> {
    let mut m: f64 = 1.0;
    raw.iter()
        .map(|&v| {
            m = m.min(v.clamp(0.0, 1.0));
            m
        })
        .collect()
}

/// Per-step hazards for `sample` under its observed treatments.
pub fn predict_hazard(member: &Member, sample: &LongitudinalSample) -> Result<Vec<f64>> {
    member.outcome.predict(&member.lambda(sample)?)
}

/// Counterfactual hazard and survival curves of one subject under one member.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCurves {
    pub hazard_1: Vec<f64>,
    pub hazard_0: Vec<f64>,
    pub survival_1: Vec<f64>,
    pub survival_0: Vec<f64>,
}

fn curves_from_output(kind: EstimatorKind, out: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    if kind.predicts_hazard() {
        let s = survival_curve(&out);
        (out, s)
    } else {
        let s = monotone_survival(&out);
        (implied_hazard(&s), s)
    }
}

pub fn member_curves(kind: EstimatorKind, member: &Member, sample: &LongitudinalSample) -> Result<ArmCurves> {
    let lam = member.lambda(sample)?;
    let (one, zero) = member.outcome.predict_arms(&lam)?;
    let (hazard_1, survival_1) = curves_from_output(kind, one);
    let (hazard_0, survival_0) = curves_from_output(kind, zero);
    Ok(ArmCurves {
        hazard_1,
        hazard_0,
        survival_1,
        survival_0,
    })
}

/// Ensemble-mean survival under each subject's observed treatments.
pub fn predict_observed_survival(
    ensemble: &Ensemble,
    samples: &[LongitudinalSample],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let kind = ensemble.kind;
    exec.map_slice(samples, |s| {
        let mut mean = vec![0.0; s.q];
        for m in &ensemble.members {
            let (_, surv) = curves_from_output(kind, m.outcome.predict(&m.lambda(s)?)?);
            for (acc, v) in mean.iter_mut().zip(surv) {
                *acc += v;
            }
        }
        let k = ensemble.members.len() as f64;
        Ok(mean.into_iter().map(|v| v / k).collect())
    })
    .into_iter()
    .collect()
}

/// Linear-interpolation percentile of already sorted values.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub const BAND_LOWER: f64 = 0.025;
pub const BAND_UPPER: f64 = 0.975;

/// Percentile band of `values` widened, if needed, to contain `point`.
pub fn band(values: &[f64], point: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&v, BAND_LOWER).min(point);
    let hi = percentile_sorted(&v, BAND_UPPER).max(point);
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub kind: EstimatorKind,
    pub ids: Vec<String>,
    /// `ite[i][t-1]`, with member-percentile bands.
    pub ite: Vec<Vec<f64>>,
    pub ite_lo: Vec<Vec<f64>>,
    pub ite_hi: Vec<Vec<f64>>,
    pub cate: Vec<f64>,
    pub cate_lo: Vec<f64>,
    pub cate_hi: Vec<f64>,
    pub hr_star: Vec<f64>,
    /// Ensemble-mean counterfactual curves per subject.
    pub survival_1: Vec<Vec<f64>>,
    pub survival_0: Vec<Vec<f64>>,
    pub hazard_1: Vec<Vec<f64>>,
    pub hazard_0: Vec<Vec<f64>>,
}

impl EffectEstimate {
    pub fn q(&self) -> usize {
        self.cate.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn mean_of(rows: &[&Vec<f64>], q: usize) -> Vec<f64> {
    let mut out = vec![0.0; q];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    let k = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    out
}

/// Effects over every sample accepted by `filter`.
pub fn estimate_effects_where<F>(
    ensemble: &Ensemble,
    samples: &[LongitudinalSample],
    filter: F,
    exec: Execution,
) -> Result<EffectEstimate>
where
    F: Fn(&LongitudinalSample) -> bool,
{
    let chosen: Vec<&LongitudinalSample> = samples.iter().filter(|s| filter(s)).collect();
    if chosen.is_empty() {
        return Err(TcsError::Selection("subgroup filter selected no subjects".into()));
    }
    if ensemble.members.is_empty() {
        return Err(TcsError::Usage("ensemble has no members".into()));
    }
    let kind = ensemble.kind;
    let q = chosen[0].q;
    let k = ensemble.members.len();
    // per subject: every member's curves
    let curves: Vec<Vec<ArmCurves>> = exec
        .map_slice(&chosen, |s| {
            ensemble
                .members
                .iter()
                .map(|m| member_curves(kind, m, s))
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let n = chosen.len();
    let mut est = EffectEstimate {
        kind,
        ids: chosen.iter().map(|s| s.id.clone()).collect(),
        ite: Vec::with_capacity(n),
        ite_lo: Vec::with_capacity(n),
        ite_hi: Vec::with_capacity(n),
        cate: vec![0.0; q],
        cate_lo: vec![0.0; q],
        cate_hi: vec![0.0; q],
        hr_star: vec![0.0; q],
        survival_1: Vec::with_capacity(n),
        survival_0: Vec::with_capacity(n),
        hazard_1: Vec::with_capacity(n),
        hazard_0: Vec::with_capacity(n),
    };
    // member-level CATE: member_cate[m][t]
    let mut member_cate = vec![vec![0.0; q]; k];
    for subject in &curves {
        let diffs: Vec<Vec<f64>> = subject
            .iter()
            .map(|c| c.survival_1.iter().zip(&c.survival_0).map(|(a, b)| a - b).collect())
            .collect();
        let diff_refs: Vec<&Vec<f64>> = diffs.iter().collect();
        let point = mean_of(&diff_refs, q);
        let mut lo = vec![0.0; q];
        let mut hi = vec![0.0; q];
        for t in 0..q {
            let vals: Vec<f64> = diffs.iter().map(|d| d[t]).collect();
            (lo[t], hi[t]) = band(&vals, point[t]);
        }
        for (mc, d) in member_cate.iter_mut().zip(&diffs) {
            for (a, b) in mc.iter_mut().zip(d) {
                *a += b;
            }
        }
        let s1: Vec<&Vec<f64>> = subject.iter().map(|c| &c.survival_1).collect();
        let s0: Vec<&Vec<f64>> = subject.iter().map(|c| &c.survival_0).collect();
        let h1: Vec<&Vec<f64>> = subject.iter().map(|c| &c.hazard_1).collect();
        let h0: Vec<&Vec<f64>> = subject.iter().map(|c| &c.hazard_0).collect();
        est.ite.push(point);
        est.ite_lo.push(lo);
        est.ite_hi.push(hi);
        est.survival_1.push(mean_of(&s1, q));
        est.survival_0.push(mean_of(&s0, q));
        est.hazard_1.push(mean_of(&h1, q));
        est.hazard_0.push(mean_of(&h0, q));
    }
    let nf = n as f64;
    for t in 0..q {
        est.cate[t] = est.ite.iter().map(|r| r[t]).sum::<f64>() / nf;
        let vals: Vec<f64> = member_cate.iter().map(|m| m[t] / nf).collect();
        (est.cate_lo[t], est.cate_hi[t]) = band(&vals, est.cate[t]);
        est.hr_star[t] = est
            .hazard_0
            .iter()
            .zip(&est.hazard_1)
            .map(|(h0, h1)| h0[t] / h1[t].max(PROB_FLOOR))
            .sum::<f64>()
            / nf;
    }
    Ok(est)
}

pub fn estimate_effects(
    ensemble: &Ensemble,
    samples: &[LongitudinalSample],
    exec: Execution,
) -> Result<EffectEstimate> {
    estimate_effects_where(ensemble, samples, |_| true, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_examples() {
        assert_eq!(survival_curve(&[0.0, 0.0, 0.0]), vec![1.0; 3]);
        assert_eq!(survival_curve(&[0.5, 0.5]), vec![0.5, 0.25]);
        assert_eq!(survival_curve(&[1.0, 0.3, 0.9]), vec![0.0; 3]);
    }

    #[test]
    fn implied_hazard_inverts_survival() {
        let h = [0.1, 0.4, 0.25, 0.0];
        let back = implied_hazard(&survival_curve(&h));
        for (a, b) in back.iter().zip(h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn percentile_of_one_is_itself() {
        assert_eq!(percentile_sorted(&[0.3], 0.025), 0.3);
        assert_eq!(band(&[0.3], 0.3), (0.3, 0.3));
        assert_eq!(percentile_sorted(&[0.0, 1.0], 0.25), 0.25);
    }

    #[test]
    fn band_contains_point() {
        let v = [0.1, 0.1, 0.1, 0.1, 5.0];
        let p = v.iter().sum::<f64>() / 5.0;
        let (lo, hi) = band(&v, p);
        assert!(lo <= p && p <= hi);
    }
}
