use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::simgen::LongitudinalSample;

/// Training target for one subject over follow-up steps `1..=q`
/// (stored at index `t - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix {
    /// At-risk row: 1 for `t < tau`, 0 for `t >= tau`.
    pub theta: Vec<f64>,
    /// Event row: a single 1 at `tau` when the subject had the event.
    pub gamma: Vec<f64>,
    /// 1 iff any event entry is set.
    pub e: bool,
    pub tau: usize,
}

impl LabelMatrix {
    pub fn q(&self) -> usize {
        self.theta.len()
    }

    /// At risk at step `t` (1-based): still under observation.
    pub fn at_risk(&self, t: usize) -> bool {
        self.tau >= t
    }

    pub fn event_at(&self, t: usize) -> bool {
        self.gamma[t - 1] == 1.0
    }
}

pub fn labels_from(tau: usize, event: bool, q: usize) -> Result<LabelMatrix> {
    if tau < 1 {
        return Err(TcsError::Data(format!("terminal time {tau} is before the first step")));
    }
    if tau > q + 1 {
        return Err(TcsError::Data(format!("terminal time {tau} beyond q + 1 = {}", q + 1)));
    }
    let theta = (1..=q).map(|t| if t < tau { 1.0 } else { 0.0 }).collect();
    let e = event && tau <= q;
    let gamma = (1..=q).map(|t| if e && t == tau { 1.0 } else { 0.0 }).collect();
    Ok(LabelMatrix { theta, gamma, e, tau })
}

pub fn build_labels(sample: &LongitudinalSample, q: usize) -> Result<LabelMatrix> {
    labels_from(sample.tau(), sample.event(), q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_at_three() {
        let l = labels_from(3, true, 5).unwrap();
        assert_eq!(l.theta, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.gamma, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(l.e);
    }

    #[test]
    fn censored_at_three() {
        let l = labels_from(3, false, 5).unwrap();
        assert_eq!(l.theta, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.gamma, vec![0.0; 5]);
        assert!(!l.e);
    }

    #[test]
    fn never_terminated() {
        let l = labels_from(6, true, 5).unwrap();
        assert_eq!(l.theta, vec![1.0; 5]);
        assert_eq!(l.gamma, vec![0.0; 5]);
        assert!(!l.e);
    }

    #[test]
    fn invalid_tau() {
        assert!(matches!(labels_from(0, true, 5), Err(TcsError::Data(_))));
        assert!(matches!(labels_from(7, true, 5), Err(TcsError::Data(_))));
    }
}
