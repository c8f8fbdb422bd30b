//! Training losses over per-subject hazard predictions `theta_hat[i][t-1]`.
//!
//! Both likelihood-style terms are written as quantities to minimize: the
//! partial log-likelihood and the concordant-pair count enter negated.

use serde::{Deserialize, Serialize};

use super::labels::LabelMatrix;
use crate::error::{Result, TcsError};
use crate::ndgrad::ops::{clamp_prob, clamp_prob_grad, sigmoid};

fn check_shapes(theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<()> {
    if theta_hat.len() != labels.len() {
        return Err(TcsError::Structural(format!(
            "{} prediction rows for {} label rows",
            theta_hat.len(),
            labels.len()
        )));
    }
    for (row, l) in theta_hat.iter().zip(labels) {
        if row.len() != l.q() {
            return Err(TcsError::Structural(format!(
                "prediction of length {} for labels of length {}",
                row.len(),
                l.q()
            )));
        }
    }
    Ok(())
}

/// Negative partial log-likelihood in matrix form:
/// `-sum_i sum_t [gamma_i(t) ln theta(t) + Theta_i(t) ln(1 - theta(t))]`.
pub fn loss_l1(theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<f64> {
    check_shapes(theta_hat, labels)?;
    let mut total = 0.0;
    for (row, l) in theta_hat.iter().zip(labels) {
        for t in 0..row.len() {
            let p = clamp_prob(row[t]);
            total -= l.gamma[t] * p.ln() + l.theta[t] * (1.0 - p).ln();
        }
    }
    Ok(total)
}

/// The same quantity as the sum of the uncensored and censored parts,
/// looping over each subject's survived steps explicitly.
pub fn loss_l1_scalar(theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<f64> {
    check_shapes(theta_hat, labels)?;
    let mut uncensored = 0.0;
    let mut censored = 0.0;
    for (row, l) in theta_hat.iter().zip(labels) {
        let survived = (l.tau - 1).min(row.len());
        let before: f64 = (0..survived).map(|j| (1.0 - clamp_prob(row[j])).ln()).sum();
        if l.e {
            uncensored += clamp_prob(row[l.tau - 1]).ln() + before;
        } else {
            censored += before;
        }
    }
    Ok(-(uncensored + censored))
}

/// Gradient of [`loss_l1`] w.r.t. every prediction.
pub fn loss_l1_grad(theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<Vec<Vec<f64>>> {
    check_shapes(theta_hat, labels)?;
    Ok(theta_hat
        .iter()
        .zip(labels)
        .map(|(row, l)| {
            row.iter()
                .enumerate()
                .map(|(t, &raw)| {
                    let p = clamp_prob(raw);
                    let dp = -l.gamma[t] / p + l.theta[t] / (1.0 - p);
                    dp * clamp_prob_grad(raw)
                })
                .collect()
        })
        .collect())
}

/// Pairs `(i, j)` at step `t` where `i` has its event at `t` and `j` is
/// still at risk without an event at `t`.
fn valid_pairs(labels: &[LabelMatrix], t: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let events: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].event_at(t)).collect();
    events.into_iter().flat_map(move |i| {
        (0..labels.len())
            .filter(move |&j| j != i && !labels[j].event_at(t) && labels[j].at_risk(t))
            .map(move |j| (i, j))
    })
}

/// Exact number of concordant pairs: `theta_i(t) > theta_j(t)` over valid pairs.
pub fn l2_pair_count(theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<usize> {
    check_shapes(theta_hat, labels)?;
    let q = labels.first().map_or(0, LabelMatrix::q);
    Ok((1..=q)
        .map(|t| {
            valid_pairs(labels, t)
                .filter(|&(i, j)| theta_hat[i][t - 1] > theta_hat[j][t - 1])
                .count()
        })
        .sum())
}

/// Smooth rank loss `-sum_t sum_pairs sigmoid((theta_i - theta_j) / T)`.
pub fn loss_l2(theta_hat: &[Vec<f64>], labels: &[LabelMatrix], temperature: f64) -> Result<f64> {
    Ok(loss_l2_with_grad(theta_hat, labels, temperature)?.0)
}

pub fn loss_l2_with_grad(
    theta_hat: &[Vec<f64>],
    labels: &[LabelMatrix],
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if !(temperature > 0.0) {
        return Err(TcsError::Config("rank-loss temperature must be positive".into()));
    }
    check_shapes(theta_hat, labels)?;
    let q = labels.first().map_or(0, LabelMatrix::q);
    let mut grad: Vec<Vec<f64>> = theta_hat.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut total = 0.0;
    for t in 1..=q {
        for (i, j) in valid_pairs(labels, t) {
            let s = sigmoid((theta_hat[i][t - 1] - theta_hat[j][t - 1]) / temperature);
            total -= s;
            let ds = s * (1.0 - s) / temperature;
            grad[i][t - 1] -= ds;
            grad[j][t - 1] += ds;
        }
    }
    Ok((total, grad))
}

/// `alpha * L1 + beta * L2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoss {
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
}

impl Default for CompositeLoss {
    fn default() -> Self {
        CompositeLoss {
            alpha: 1.0,
            beta: 0.1,
            temperature: 0.1,
        }
    }
}

impl CompositeLoss {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(TcsError::Config("alpha and beta must be finite and non-negative".into()));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(TcsError::Config("alpha and beta cannot both be zero".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(TcsError::Config("rank-loss temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn value_and_grad(&self, theta_hat: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut value = 0.0;
        let mut grad: Vec<Vec<f64>> = theta_hat.iter().map(|r| vec![0.0; r.len()]).collect();
        if self.alpha != 0.0 {
            value += self.alpha * loss_l1(theta_hat, labels)?;
            for (g, d) in grad.iter_mut().zip(loss_l1_grad(theta_hat, labels)?) {
                for (a, b) in g.iter_mut().zip(d) {
                    *a += self.alpha * b;
                }
            }
        }
        if self.beta != 0.0 {
            let (v, d) = loss_l2_with_grad(theta_hat, labels, self.temperature)?;
            value += self.beta * v;
            for (g, d) in grad.iter_mut().zip(d) {
                for (a, b) in g.iter_mut().zip(d) {
                    *a += self.beta * b;
                }
            }
        }
        Ok((value, grad))
    }
}

/// Squared error against the at-risk row, used by the binary baseline.
pub fn mse_with_grad(pred: &[Vec<f64>], labels: &[LabelMatrix]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(pred, labels)?;
    let mut total = 0.0;
    let grad = pred
        .iter()
        .zip(labels)
        .map(|(row, l)| {
            row.iter()
                .zip(&l.theta)
                .map(|(p, y)| {
                    total += (p - y) * (p - y);
                    2.0 * (p - y)
                })
                .collect()
        })
        .collect();
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::ops::PROB_FLOOR;
    use crate::tcsnet::labels::labels_from;

    #[test]
    fn censored_half_hazard() {
        let labels = vec![labels_from(3, false, 5).unwrap()];
        let theta = vec![vec![0.5; 5]];
        let v = loss_l1(&theta, &labels).unwrap();
        assert!((v - (-2.0 * 0.5f64.ln())).abs() < 1e-15);
        assert!((loss_l1_scalar(&theta, &labels).unwrap() - v).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let q = 6;
        let labels = vec![labels_from(4, true, q).unwrap()];
        let theta = vec![vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]];
        let v = loss_l1(&theta, &labels).unwrap();
        let bound = q as f64 * -(1.0 - PROB_FLOOR).ln();
        assert!(v >= 0.0 && v <= bound + 1e-15, "{v}");
    }

    #[test]
    fn one_valid_pair() {
        let labels = vec![labels_from(2, true, 3).unwrap(), labels_from(3, false, 3).unwrap()];
        let theta = vec![vec![0.1, 0.9, 0.1], vec![0.1, 0.05, 0.1]];
        assert_eq!(l2_pair_count(&theta, &labels).unwrap(), 1);
    }

    #[test]
    fn tie_counts_half_smooth_zero_exact() {
        let labels = vec![labels_from(2, true, 3).unwrap(), labels_from(3, false, 3).unwrap()];
        let theta = vec![vec![0.3, 0.4, 0.3], vec![0.3, 0.4, 0.3]];
        assert_eq!(l2_pair_count(&theta, &labels).unwrap(), 0);
        let v = loss_l2(&theta, &labels, 0.1).unwrap();
        assert_eq!(v, -0.5);
    }

    #[test]
    fn composite_validation() {
        let bad = CompositeLoss {
            alpha: 0.0,
            beta: 0.0,
            ..CompositeLoss::default()
        };
        assert!(bad.validate().is_err());
        assert!(CompositeLoss::default().validate().is_ok());
        assert!(loss_l2(&[], &[], 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let labels = vec![
            labels_from(2, true, 4).unwrap(),
            labels_from(4, false, 4).unwrap(),
            labels_from(3, true, 4).unwrap(),
        ];
        let theta = vec![vec![0.2, 0.6, 0.3, 0.4], vec![0.1, 0.3, 0.5, 0.2], vec![0.4, 0.2, 0.7, 0.3]];
        let loss = CompositeLoss {
            alpha: 0.7,
            beta: 0.4,
            temperature: 0.2,
        };
        let (_, g) = loss.value_and_grad(&theta, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            for t in 0..4 {
                let mut p = theta.clone();
                p[i][t] += eps;
                let fp = loss.value_and_grad(&p, &labels).unwrap().0;
                p[i][t] -= 2.0 * eps;
                let fm = loss.value_and_grad(&p, &labels).unwrap().0;
                assert!(((fp - fm) / (2.0 * eps) - g[i][t]).abs() < 1e-6);
            }
        }
    }
}
