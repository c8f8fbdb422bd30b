//! Missingness representation: instead of imputing, each covariate carries
//! an observed/missing flag `M` and the time `delta` since it was last seen.

use std::ops::RangeInclusive;

use crate::error::{Result, TcsError};
use crate::simgen::LongitudinalSample;

/// `[M, delta, X, A]` over a window of internal steps. Matrices are
/// row-major `steps x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence {
    /// First internal step covered (1-based).
    pub start: usize,
    pub steps: usize,
    pub d: usize,
    /// 1 = observed, 0 = missing.
    pub m: Vec<f64>,
    /// Steps since the last observation strictly before `t`, or `t - start`
    /// if there was none.
    pub delta: Vec<f64>,
    /// Covariates with missing entries zero-filled.
    pub x: Vec<f64>,
    pub a: Vec<f64>,
}

impl MaskedSequence {
    pub fn m_at(&self, t: usize, d: usize) -> f64 {
        self.m[t * self.d + d]
    }

    pub fn delta_at(&self, t: usize, d: usize) -> f64 {
        self.delta[t * self.d + d]
    }

    pub fn x_at(&self, t: usize, d: usize) -> f64 {
        self.x[t * self.d + d]
    }
}

/// Build the masked representation of `sample` over internal steps `window`.
pub fn mask_transform(sample: &LongitudinalSample, window: RangeInclusive<usize>) -> Result<MaskedSequence> {
    let (start, end) = (*window.start(), *window.end());
    if window.is_empty() {
        return Err(TcsError::Usage(format!("empty masking window {start}..={end}")));
    }
    if start < 1 || end > sample.steps() {
        return Err(TcsError::Usage(format!(
            "masking window {start}..={end} outside panel 1..={}",
            sample.steps()
        )));
    }
    let d = sample.d;
    let steps = end - start + 1;
    let mut out = MaskedSequence {
        start,
        steps,
        d,
        m: vec![0.0; steps * d],
        delta: vec![0.0; steps * d],
        x: vec![0.0; steps * d],
        a: vec![0.0; steps],
    };
    for j in 0..d {
        let mut since = 0.0;
        for t in 0..steps {
            let s = start + t;
            let seen = sample.mask_row(s)[j];
            let idx = t * d + j;
            out.delta[idx] = since;
            if seen {
                out.m[idx] = 1.0;
                out.x[idx] = sample.x_row(s)[j];
            }
            // GRU-D recursion: one step elapses; reset if observed now
            since = if seen { 1.0 } else { since + 1.0 };
        }
    }
    for t in 0..steps {
        out.a[t] = f64::from(sample.a_at(start + t));
    }
    Ok(out)
}
