use serde::{Deserialize, Serialize};

use super::ipw::{clamp_propensity, ipw_ate};
use crate::error::{Result, TcsError};
use crate::ndgrad::ops::{clamp_prob, logit, sigmoid};

pub const FLUCTUATION_TOL: f64 = 1e-8;
pub const FLUCTUATION_MAX_ITER: usize = 100;

/// How one arm's fluctuation coefficient was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TmleArm {
    Fitted,
    /// Every observed outcome in the arm is identical; the likelihood has
    /// no finite maximizer and the targeted value is that outcome.
    Separated,
    /// No observed outcomes in the arm; the initial estimate is kept.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub delta_1: f64,
    pub delta_0: f64,
    pub arm_1: TmleArm,
    pub arm_0: TmleArm,
    /// Common value of a separated arm's outcomes.
    pub bound_1: f64,
    pub bound_0: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedATE {
    pub psi_initial: Vec<f64>,
    pub psi_ipw: Vec<f64>,
    pub psi_tmle: Vec<f64>,
    pub delta: Vec<Fluctuation>,
}

/// Observed survival indicator at `t`: 1 while `t < tau`, 0 once the event
/// happened, unknown once censored.
pub fn observed_outcome(tau: usize, event: bool, t: usize) -> Option<f64> {
    if t < tau {
        Some(1.0)
    } else if event {
        Some(0.0)
    } else {
        None
    }
}

struct Obs {
    offset: f64,
    h1: f64,
    h0: f64,
    y: f64,
}

fn loglik(obs: &[Obs], d1: f64, d0: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let mu = clamp_prob(sigmoid(o.offset + d1 * o.h1 + d0 * o.h0));
            o.y * mu.ln() + (1.0 - o.y) * (1.0 - mu).ln()
        })
        .sum()
}

fn arm_status(obs: &[Obs], pick: impl Fn(&Obs) -> bool) -> (TmleArm, f64) {
    let ys: Vec<f64> = obs.iter().filter(|o| pick(o)).map(|o| o.y).collect();
    match ys.first() {
        None => (TmleArm::Empty, f64::NAN),
        Some(&first) if (first == 0.0 || first == 1.0) && ys.iter().all(|&y| y == first) => {
            (TmleArm::Separated, first)
        }
        Some(_) => (TmleArm::Fitted, f64::NAN),
    }
}

/// Intercept-free logistic regression of `y` on the smart covariates with
/// the initial logit as offset, by Newton/IRLS with step halving.
pub fn fluctuate(y_init_obs: &[f64], y_obs: &[Option<f64>], a: &[f64], p: &[f64]) -> Result<Fluctuation> {
    let n = y_obs.len();
    if y_init_obs.len() != n || a.len() != n || p.len() != n {
        return Err(TcsError::Structural("fluctuation inputs disagree in length".into()));
    }
    let obs: Vec<Obs> = (0..n)
        .filter_map(|i| {
            y_obs[i].map(|y| {
                let pc = clamp_propensity(p[i]);
                Obs {
                    offset: logit(clamp_prob(y_init_obs[i])),
                    h1: a[i] / pc,
                    h0: (1.0 - a[i]) / (1.0 - pc),
                    y,
                }
            })
        })
        .collect();
    let (arm_1, bound_1) = arm_status(&obs, |o| o.h1 != 0.0);
    let (arm_0, bound_0) = arm_status(&obs, |o| o.h0 != 0.0);
    let free_1 = arm_1 == TmleArm::Fitted;
    let free_0 = arm_0 == TmleArm::Fitted;
    let (mut d1, mut d0) = (0.0, 0.0);
    let mut iterations = 0;
    if free_1 || free_0 {
        let mut converged = false;
        while iterations < FLUCTUATION_MAX_ITER {
            iterations += 1;
            let (mut g1, mut g0, mut h11, mut h00, mut h10) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for o in &obs {
                let mu = sigmoid(o.offset + d1 * o.h1 + d0 * o.h0);
                let w = mu * (1.0 - mu);
                g1 += (o.y - mu) * o.h1;
                g0 += (o.y - mu) * o.h0;
                h11 += w * o.h1 * o.h1;
                h00 += w * o.h0 * o.h0;
                h10 += w * o.h1 * o.h0;
            }
            let (s1, s0) = match (free_1, free_0) {
                (true, true) => {
                    let det = h11 * h00 - h10 * h10;
                    ((h00 * g1 - h10 * g0) / det, (h11 * g0 - h10 * g1) / det)
                }
                (true, false) => (g1 / h11, 0.0),
                _ => (0.0, g0 / h00),
            };
            if !(s1.is_finite() && s0.is_finite()) {
                return Err(TcsError::Adjustment(format!(
                    "fluctuation step is not finite at iteration {iterations} (delta = ({d1}, {d0}), score = ({g1}, {g0}))"
                )));
            }
            let base = loglik(&obs, d1, d0);
            let mut scale = 1.0;
            while scale > 1e-10 && loglik(&obs, d1 + scale * s1, d0 + scale * s0) < base {
                scale *= 0.5;
            }
            d1 += scale * s1;
            d0 += scale * s0;
            if (scale * s1).abs().max((scale * s0).abs()) < FLUCTUATION_TOL {
                converged = true;
                break;
            }
        }
        if !converged || !(d1.is_finite() && d0.is_finite()) {
            return Err(TcsError::Adjustment(format!(
                "fluctuation did not converge in {FLUCTUATION_MAX_ITER} iterations (delta = ({d1}, {d0}), {} observations)",
                obs.len()
            )));
        }
    }
    Ok(Fluctuation {
        delta_1: d1,
        delta_0: d0,
        arm_1,
        arm_0,
        bound_1,
        bound_0,
        iterations,
    })
}

fn update_one(y: f64, delta: f64, h: f64, arm: TmleArm, bound: f64) -> f64 {
    match arm {
        TmleArm::Separated => bound,
        _ if delta == 0.0 => y,
        _ => sigmoid(logit(clamp_prob(y)) + delta * h),
    }
}

/// Targeted potential outcomes `expit(logit(Y_a) + delta_a H(a))` with
/// `H(1) = 1/P`, `H(0) = 1/(1-P)`.
pub fn targeted_update(y1: &[f64], y0: &[f64], p: &[f64], fl: &Fluctuation) -> (Vec<f64>, Vec<f64>) {
    let t1 = y1
        .iter()
        .zip(p)
        .map(|(&y, &p)| update_one(y, fl.delta_1, 1.0 / clamp_propensity(p), fl.arm_1, fl.bound_1))
        .collect();
    let t0 = y0
        .iter()
        .zip(p)
        .map(|(&y, &p)| update_one(y, fl.delta_0, 1.0 / (1.0 - clamp_propensity(p)), fl.arm_0, fl.bound_0))
        .collect();
    (t1, t0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-time IPW and TMLE adjustments of initial arm predictions. All
/// matrices are subject-major `[i][t-1]`.
pub fn tmle_adjust(
    y1: &[Vec<f64>],
    y0: &[Vec<f64>],
    y_obs: &[Vec<Option<f64>>],
    a: &[Vec<f64>],
    p: &[Vec<f64>],
) -> Result<AdjustedATE> {
    let n = y1.len();
    if n == 0 {
        return Err(TcsError::Selection("TMLE over an empty sample".into()));
    }
    if [y0.len(), y_obs.len(), a.len(), p.len()].iter().any(|&l| l != n) {
        return Err(TcsError::Structural("TMLE inputs disagree in subject count".into()));
    }
    let treated = a.iter().flatten().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == a.iter().map(Vec::len).sum::<usize>() {
        return Err(TcsError::DegenerateTreatment(
            "TMLE needs both treated and control observations".into(),
        ));
    }
    let q = y1[0].len();
    let mut out = AdjustedATE {
        psi_initial: Vec::with_capacity(q),
        psi_ipw: Vec::with_capacity(q),
        psi_tmle: Vec::with_capacity(q),
        delta: Vec::with_capacity(q),
    };
    for t in 0..q {
        let c1: Vec<f64> = y1.iter().map(|r| r[t]).collect();
        let c0: Vec<f64> = y0.iter().map(|r| r[t]).collect();
        let ca: Vec<f64> = a.iter().map(|r| r[t]).collect();
        let cp: Vec<f64> = p.iter().map(|r| r[t]).collect();
        let co: Vec<Option<f64>> = y_obs.iter().map(|r| r[t]).collect();
        let init_obs: Vec<f64> = (0..n).map(|i| if ca[i] == 1.0 { c1[i] } else { c0[i] }).collect();
        let fl = fluctuate(&init_obs, &co, &ca, &cp)
            .map_err(|e| TcsError::Adjustment(format!("time {}: {e}", t + 1)))?;
        let (t1, t0) = targeted_update(&c1, &c0, &cp, &fl);
        out.psi_initial.push(mean(&c1) - mean(&c0));
        out.psi_ipw.push(ipw_ate(&init_obs, &ca, &cp)?);
        out.psi_tmle.push(mean(&t1) - mean(&t0));
        out.delta.push(fl);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> Fluctuation {
        Fluctuation {
            delta_1: 0.0,
            delta_0: 0.0,
            arm_1: TmleArm::Fitted,
            arm_0: TmleArm::Fitted,
            bound_1: f64::NAN,
            bound_0: f64::NAN,
            iterations: 0,
        }
    }

    #[test]
    fn zero_fluctuation_is_identity() {
        let y1 = [0.31, 0.77, 0.999, 1e-9];
        let y0 = [0.2, 0.5, 0.41, 0.93];
        let p = [0.3, 0.5, 0.7, 0.995];
        let (t1, t0) = targeted_update(&y1, &y0, &p, &zero());
        assert_eq!(t1, y1);
        assert_eq!(t0, y0);
    }

    #[test]
    fn matching_initial_gives_zero_delta() {
        // observed outcomes equal the initial predictions: the score vanishes at 0
        let init = [0.3, 0.6, 0.45, 0.8, 0.2, 0.7];
        let a = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let p = [0.4, 0.6, 0.5, 0.3, 0.55, 0.45];
        let obs: Vec<Option<f64>> = init.iter().map(|&v| Some(v)).collect();
        let fl = fluctuate(&init, &obs, &a, &p).unwrap();
        assert!(fl.delta_1.abs() < 1e-8 && fl.delta_0.abs() < 1e-8);
    }

    #[test]
    fn fitted_delta_zeroes_the_score() {
        let init = [0.3, 0.6, 0.45, 0.8, 0.2, 0.7, 0.5, 0.4];
        let a = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let p = [0.4, 0.6, 0.5, 0.3, 0.55, 0.45, 0.5, 0.5];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let obs: Vec<Option<f64>> = y.iter().map(|&v| Some(v)).collect();
        let fl = fluctuate(&init, &obs, &a, &p).unwrap();
        let (mut g1, mut g0) = (0.0, 0.0);
        for i in 0..8 {
            let h1 = a[i] / p[i];
            let h0 = (1.0 - a[i]) / (1.0 - p[i]);
            let mu = sigmoid(logit(init[i]) + fl.delta_1 * h1 + fl.delta_0 * h0);
            g1 += (y[i] - mu) * h1;
            g0 += (y[i] - mu) * h0;
        }
        assert!(g1.abs() < 1e-9 && g0.abs() < 1e-9);
    }

    #[test]
    fn separated_arm_takes_its_outcome() {
        let init = [0.3, 0.6, 0.45, 0.8];
        let a = [1.0, 0.0, 1.0, 0.0];
        let p = [0.5; 4];
        let obs = [Some(1.0), Some(0.0), Some(1.0), Some(1.0)];
        let fl = fluctuate(&init, &obs, &a, &p).unwrap();
        assert_eq!(fl.arm_1, TmleArm::Separated);
        assert_eq!(fl.arm_0, TmleArm::Fitted);
        let (t1, _) = targeted_update(&[0.2, 0.4], &[0.5, 0.5], &[0.5, 0.5], &fl);
        assert_eq!(t1, vec![1.0, 1.0]);
    }

    #[test]
    fn censored_subjects_are_excluded() {
        assert_eq!(observed_outcome(4, false, 3), Some(1.0));
        assert_eq!(observed_outcome(4, false, 4), None);
        assert_eq!(observed_outcome(4, true, 4), Some(0.0));
        assert_eq!(observed_outcome(4, true, 9), Some(0.0));
    }
}
