//! The per-subject input matrix: one row per follow-up step, each row
//! exposing the propensity score, the covariate history up to that step and
//! the treatment at that step.

use crate::error::{Result, TcsError};
use crate::ndgrad::{mask_transform, MaskedSequence};
use crate::simgen::LongitudinalSample;

/// Compact form of the input matrix. Row `t` (1-based) is
/// `[p(t)] ++ X(1..=u+q) ++ [a(t)]` with every covariate after internal step
/// `u + t` hidden; [`InputMatrix::row`] materializes it.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrix {
    pub u: usize,
    pub q: usize,
    pub d: usize,
    /// Masked covariate panel over internal steps `1..=u+q`.
    pub panel: MaskedSequence,
    /// `p(t)` for `t = 1..=q`, absent for the propensity-free variant.
    pub propensity: Option<Vec<f64>>,
    /// `a(t)` for `t = 1..=q`.
    pub treatment: Vec<f64>,
}

impl InputMatrix {
    pub fn rows(&self) -> usize {
        self.q
    }

    pub fn has_propensity(&self) -> bool {
        self.propensity.is_some()
    }

    pub fn width(&self) -> usize {
        usize::from(self.has_propensity()) + (self.u + self.q) * self.d + 1
    }

    /// Last internal step visible to row `t`.
    pub fn horizon(&self, t: usize) -> usize {
        self.u + t
    }

    /// Row `t` (1-based); `None` marks an entry that is missing or lies in
    /// the row's future.
    pub fn row(&self, t: usize) -> Result<Vec<Option<f64>>> {
        if t < 1 || t > self.q {
            return Err(TcsError::Usage(format!("row {t} outside 1..={}", self.q)));
        }
        let mut out = Vec::with_capacity(self.width());
        if let Some(p) = &self.propensity {
            out.push(Some(p[t - 1]));
        }
        for s in 0..self.u + self.q {
            for j in 0..self.d {
                let visible = s < self.horizon(t) && self.panel.m_at(s, j) == 1.0;
                out.push(visible.then(|| self.panel.x_at(s, j)));
            }
        }
        out.push(Some(self.treatment[t - 1]));
        Ok(out)
    }

    /// Same history, treatment fixed to `a` on every row.
    pub fn counterfactual(&self, a: u8) -> InputMatrix {
        let mut out = self.clone();
        out.treatment = vec![f64::from(a); self.q];
        out
    }
}

/// Build the input matrix for `sample`. `p_trace`, when given, holds the
/// propensity for follow-up steps `1..=q`.
pub fn assemble_lambda(sample: &LongitudinalSample, p_trace: Option<&[f64]>) -> Result<InputMatrix> {
    let (u, q) = (sample.u, sample.q);
    if let Some(p) = p_trace {
        if p.len() != q {
            return Err(TcsError::Structural(format!(
                "propensity trace has {} entries, expected {q}",
                p.len()
            )));
        }
    }
    let panel = mask_transform(sample, 1..=u + q)?;
    let treatment = (1..=q).map(|k| f64::from(sample.a_follow_up(k))).collect();
    Ok(InputMatrix {
        u,
        q,
        d: sample.d,
        panel,
        propensity: p_trace.map(<[f64]>::to_vec),
        treatment,
    })
}

/// Shorthand for [`InputMatrix::counterfactual`].
pub fn counterfactual(lambda: &InputMatrix, a: u8) -> InputMatrix {
    lambda.counterfactual(a)
}
