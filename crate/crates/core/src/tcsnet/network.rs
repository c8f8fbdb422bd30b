//! Recurrent encoder plus per-step output heads, with hand-written backward
//! passes that follow the `ndgrad` tape convention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lambda::InputMatrix;
use crate::error::{Result, TcsError};
use crate::ndgrad::ops::{sigmoid, softplus, softplus_grad};
use crate::ndgrad::{scoped, Dense, LstmCell, LstmTrace, MaskedSequence, Parameterized, Tape, Tensor};
use crate::simgen::LongitudinalSample;

/// Per-covariate standardization fitted on observed training cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Divisor applied to the time-since-observed channel.
    pub horizon: f64,
}

impl FeatureScaler {
    pub fn identity(d: usize, horizon: f64) -> Self {
        FeatureScaler {
            mean: vec![0.0; d],
            sd: vec![1.0; d],
            horizon,
        }
    }

    pub fn fit(samples: &[LongitudinalSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| TcsError::Data("cannot fit feature scaling on an empty sample".into()))?;
        let d = first.d;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = vec![0usize; d];
        for s in samples {
            for step in 1..=s.steps() {
                for (j, (&x, &seen)) in s.x_row(step).iter().zip(s.mask_row(step)).enumerate() {
                    if seen {
                        sum[j] += x;
                        sq[j] += x * x;
                        count[j] += 1;
                    }
                }
            }
        }
        let mut out = FeatureScaler::identity(d, first.steps() as f64);
        for j in 0..d {
            if count[j] > 0 {
                let n = count[j] as f64;
                let mean = sum[j] / n;
                let var = (sq[j] / n - mean * mean).max(0.0);
                out.mean[j] = mean;
                out.sd[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        Ok(out)
    }

    pub fn width(&self) -> usize {
        3 * self.mean.len() + 1
    }

    /// Encoder inputs `[x_std * m, m, delta / horizon, s / horizon]` per step.
    pub fn features(&self, seq: &MaskedSequence) -> Vec<f64> {
        let d = seq.d;
        let mut out = Vec::with_capacity(seq.steps * 3 * d);
        for t in 0..seq.steps {
            for j in 0..d {
                let m = seq.m_at(t, j);
                out.push(m * (seq.x_at(t, j) - self.mean[j]) / self.sd[j]);
            }
            for j in 0..d {
                out.push(seq.m_at(t, j));
            }
            for j in 0..d {
                out.push(seq.delta_at(t, j) / self.horizon);
            }
            out.push((seq.start + t) as f64 / self.horizon);
        }
        out
    }
}

/// How the treatment reaches the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// One head per arm, selected by `a(t)`.
    PerArm,
    /// A single head with `a(t)` appended to its input.
    TreatmentInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeArch {
    pub d: usize,
    pub u: usize,
    pub q: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub use_propensity: bool,
    pub layout: HeadLayout,
}

impl OutcomeArch {
    pub fn head_input(&self) -> usize {
        self.hidden + usize::from(self.use_propensity) + usize::from(self.layout == HeadLayout::TreatmentInput)
    }

    pub fn head_count(&self) -> usize {
        match self.layout {
            HeadLayout::PerArm => 2,
            HeadLayout::TreatmentInput => 1,
        }
    }
}

/// `dense -> softplus -> dense -> sigmoid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub inner: Dense,
    pub out: Dense,
}

impl Head {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Head {
            inner: Dense::new(input, hidden, rng),
            out: Dense::new(hidden, 1, rng),
        }
    }
}

#[derive(Debug, Clone)]
struct RowCache {
    head: usize,
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    out: f64,
}

#[derive(Debug, Clone)]
pub struct OutcomeRecord {
    trace: LstmTrace,
    rows: Vec<RowCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeNet {
    pub arch: OutcomeArch,
    pub scaler: FeatureScaler,
    pub encoder: LstmCell,
    pub heads: Vec<Head>,
}

impl OutcomeNet {
    pub fn new<R: Rng + ?Sized>(arch: OutcomeArch, scaler: FeatureScaler, rng: &mut R) -> Self {
        let encoder = LstmCell::new(scaler.width(), arch.hidden, rng);
        let heads = (0..arch.head_count())
            .map(|_| Head::new(arch.head_input(), arch.head_hidden, rng))
            .collect();
        OutcomeNet {
            arch,
            scaler,
            encoder,
            heads,
        }
    }

    fn check_input(&self, lambda: &InputMatrix) -> Result<()> {
        let a = &self.arch;
        if lambda.d != a.d || lambda.u != a.u || lambda.q != a.q {
            return Err(TcsError::Structural(format!(
                "input matrix shape (d={}, u={}, q={}) does not match network (d={}, u={}, q={})",
                lambda.d, lambda.u, lambda.q, a.d, a.u, a.q
            )));
        }
        if lambda.has_propensity() != a.use_propensity {
            return Err(TcsError::Structural(format!(
                "network expects propensity input: {}, input matrix carries it: {}",
                a.use_propensity,
                lambda.has_propensity()
            )));
        }
        Ok(())
    }

    fn encode(&self, lambda: &InputMatrix) -> Result<LstmTrace> {
        self.check_input(lambda)?;
        let xs = self.scaler.features(&lambda.panel);
        self.encoder.forward_sequence(&xs, lambda.panel.steps)
    }

    fn head_row(&self, trace: &LstmTrace, lambda: &InputMatrix, r: usize, a: f64) -> Result<RowCache> {
        let h = self.arch.hidden;
        // row r (0-based) reads the state after internal step u + r + 1
        let mut input = trace.hidden_at(lambda.u + r, h).to_vec();
        if let Some(p) = &lambda.propensity {
            input.push(p[r]);
        }
        let head = match self.arch.layout {
            HeadLayout::PerArm => usize::from(a >= 0.5),
            HeadLayout::TreatmentInput => {
                input.push(a);
                0
            }
        };
        let hd = &self.heads[head];
        let pre = hd.inner.forward(&input)?;
        let act: Vec<f64> = pre.iter().map(|&z| softplus(z)).collect();
        let out = sigmoid(hd.out.forward(&act)?[0]);
        Ok(RowCache {
            head,
            input,
            pre,
            act,
            out,
        })
    }

    /// Per-row outputs for `lambda` (hazards, or at-risk probabilities for
    /// the single-head layout) plus the tape for [`OutcomeNet::backward`].
    pub fn forward(&self, lambda: &InputMatrix) -> Result<(Vec<f64>, Tape<OutcomeRecord>)> {
        let trace = self.encode(lambda)?;
        let rows = (0..lambda.q)
            .map(|r| self.head_row(&trace, lambda, r, lambda.treatment[r]))
            .collect::<Result<Vec<_>>>()?;
        let out = rows.iter().map(|c| c.out).collect();
        Ok((out, Tape::recorded(OutcomeRecord { trace, rows })))
    }

    pub fn predict(&self, lambda: &InputMatrix) -> Result<Vec<f64>> {
        Ok(self.forward(lambda)?.0)
    }

    /// Outputs under `a = 1` and `a = 0` on every row, sharing one encoder pass.
    pub fn predict_arms(&self, lambda: &InputMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.encode(lambda)?;
        let mut one = Vec::with_capacity(lambda.q);
        let mut zero = Vec::with_capacity(lambda.q);
        for r in 0..lambda.q {
            one.push(self.head_row(&trace, lambda, r, 1.0)?.out);
            zero.push(self.head_row(&trace, lambda, r, 0.0)?.out);
        }
        Ok((one, zero))
    }

    /// Accumulate parameter gradients given `d_out`, the loss gradient with
    /// respect to every row output.
    pub fn backward(&mut self, tape: &Tape<OutcomeRecord>, d_out: &[f64]) -> Result<()> {
        let rec = tape.get()?;
        if d_out.len() != rec.rows.len() {
            return Err(TcsError::Structural(format!(
                "{} output gradients for {} rows",
                d_out.len(),
                rec.rows.len()
            )));
        }
        let h = self.arch.hidden;
        let u = self.arch.u;
        let mut dhs = vec![0.0; rec.trace.steps * h];
        let mut d_act = vec![0.0; self.arch.head_hidden];
        let mut d_input = vec![0.0; self.arch.head_input()];
        for (r, (cache, &g)) in rec.rows.iter().zip(d_out).enumerate() {
            if g == 0.0 {
                continue;
            }
            let head = &mut self.heads[cache.head];
            let dz = g * cache.out * (1.0 - cache.out);
            head.out.backward(&cache.act, &[dz], Some(&mut d_act));
            let d_pre: Vec<f64> = d_act.iter().zip(&cache.pre).map(|(d, &z)| d * softplus_grad(z)).collect();
            head.inner.backward(&cache.input, &d_pre, Some(&mut d_input));
            for (acc, d) in dhs[(u + r) * h..(u + r + 1) * h].iter_mut().zip(&d_input[..h]) {
                *acc += d;
            }
        }
        self.encoder.backward_sequence(&rec.trace, &dhs, false)?;
        Ok(())
    }

    /// Exchange the two per-arm heads.
    pub fn swap_heads(&mut self) {
        if self.heads.len() == 2 {
            self.heads.swap(0, 1);
        }
    }
}

impl Parameterized for OutcomeNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.encoder.visit_scoped("encoder", f);
        for (k, head) in self.heads.iter().enumerate() {
            head.inner.visit_scoped(&format!("head{k}.inner"), f);
            head.out.visit_scoped(&format!("head{k}.out"), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.encoder.visit_scoped_mut("encoder", f);
        for (k, head) in self.heads.iter_mut().enumerate() {
            head.inner.visit_scoped_mut(&format!("head{k}.inner"), f);
            head.out.visit_scoped_mut(&format!("head{k}.out"), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropensityRecord {
    trace: LstmTrace,
    logits: Vec<f64>,
}

/// Encoder with a sigmoid read-out at every step: `p(s) = P(A(s) = 1 | history up to s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityNet {
    pub scaler: FeatureScaler,
    pub encoder: LstmCell,
    pub out: Dense,
}

impl PropensityNet {
    pub fn new<R: Rng + ?Sized>(scaler: FeatureScaler, hidden: usize, rng: &mut R) -> Self {
        let encoder = LstmCell::new(scaler.width(), hidden, rng);
        let out = Dense::new(hidden, 1, rng);
        PropensityNet { scaler, encoder, out }
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden_size()
    }

    pub fn forward(&self, seq: &MaskedSequence) -> Result<(Vec<f64>, Tape<PropensityRecord>)> {
        if seq.d != self.scaler.mean.len() {
            return Err(TcsError::Structural(format!(
                "sequence has {} covariates, network expects {}",
                seq.d,
                self.scaler.mean.len()
            )));
        }
        let xs = self.scaler.features(seq);
        let trace = self.encoder.forward_sequence(&xs, seq.steps)?;
        let h = self.hidden();
        let logits = (0..seq.steps)
            .map(|t| Ok(self.out.forward(trace.hidden_at(t, h))?[0]))
            .collect::<Result<Vec<f64>>>()?;
        let p = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok((p, Tape::recorded(PropensityRecord { trace, logits })))
    }

    /// Accumulate gradients given the loss gradient with respect to each
    /// step's logit.
    pub fn backward(&mut self, tape: &Tape<PropensityRecord>, d_logits: &[f64]) -> Result<()> {
        let rec = tape.get()?;
        if d_logits.len() != rec.logits.len() {
            return Err(TcsError::Structural(format!(
                "{} logit gradients for {} steps",
                d_logits.len(),
                rec.logits.len()
            )));
        }
        let h = self.hidden();
        let mut dhs = vec![0.0; rec.trace.steps * h];
        let mut dh = vec![0.0; h];
        for (t, &g) in d_logits.iter().enumerate() {
            self.out.backward(rec.trace.hidden_at(t, h), &[g], Some(&mut dh));
            dhs[t * h..(t + 1) * h].copy_from_slice(&dh);
        }
        self.encoder.backward_sequence(&rec.trace, &dhs, false)?;
        Ok(())
    }
}

impl Parameterized for PropensityNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.encoder.visit_scoped("encoder", f);
        self.out.visit_scoped("out", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.encoder.visit_scoped_mut("encoder", f);
        self.out.visit_scoped_mut("out", f);
    }
}

/// Prefix every tensor name of `inner` with `prefix`.
pub(crate) fn visit_prefixed(prefix: &str, inner: &dyn Parameterized, f: &mut dyn FnMut(&str, &Tensor)) {
    inner.visit(&mut |name, t| f(&scoped(prefix, name), t));
}

pub(crate) fn visit_prefixed_mut(prefix: &str, inner: &mut dyn Parameterized, f: &mut dyn FnMut(&str, &mut Tensor)) {
    inner.visit_mut(&mut |name, t| f(&scoped(prefix, name), t));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{finite_difference_grad, max_relative_error, mask_transform};
    use crate::simgen::{generate, rng_from_seed, ScenarioConfig};
    use crate::tcsnet::lambda::assemble_lambda;

    fn small() -> Vec<LongitudinalSample> {
        let cfg = ScenarioConfig {
            n: 4,
            u: 2,
            q: 3,
            d: 3,
            ..ScenarioConfig::default()
        };
        generate(&cfg, 4).unwrap().samples
    }

    fn arch(layout: HeadLayout, use_propensity: bool) -> OutcomeArch {
        OutcomeArch {
            d: 3,
            u: 2,
            q: 3,
            hidden: 3,
            head_hidden: 2,
            use_propensity,
            layout,
        }
    }

    #[test]
    fn outcome_gradient_matches_finite_differences() {
        let samples = small();
        let scaler = FeatureScaler::fit(&samples).unwrap();
        for layout in [HeadLayout::PerArm, HeadLayout::TreatmentInput] {
            let mut net = OutcomeNet::new(arch(layout, true), scaler.clone(), &mut rng_from_seed(3));
            let lam = assemble_lambda(&samples[0], Some(&[0.3, 0.6, 0.8])).unwrap();
            let w = [0.7, -1.3, 0.4];
            let loss = |n: &OutcomeNet| -> Result<f64> {
                Ok(n.predict(&lam)?.iter().zip(&w).map(|(o, w)| o * w).sum())
            };
            net.zero_grad();
            let (_, tape) = net.forward(&lam).unwrap();
            net.backward(&tape, &w).unwrap();
            let fd = finite_difference_grad(&net, 1e-5, loss).unwrap();
            assert!(max_relative_error(&net.flat_grads(), &fd, 1e-6) < 1e-5);
        }
    }

    #[test]
    fn propensity_gradient_matches_finite_differences() {
        let samples = small();
        let scaler = FeatureScaler::fit(&samples).unwrap();
        let mut net = PropensityNet::new(scaler, 3, &mut rng_from_seed(8));
        let seq = mask_transform(&samples[1], 1..=5).unwrap();
        let w = [0.2, -0.4, 1.1, 0.5, -0.9];
        let loss = |n: &PropensityNet| -> Result<f64> {
            let (p, _) = n.forward(&seq)?;
            Ok(p.iter().zip(&w).map(|(p, w)| crate::ndgrad::ops::logit(*p) * w).sum())
        };
        net.zero_grad();
        let (_, tape) = net.forward(&seq).unwrap();
        net.backward(&tape, &w).unwrap();
        let fd = finite_difference_grad(&net, 1e-5, loss).unwrap();
        assert!(max_relative_error(&net.flat_grads(), &fd, 1e-6) < 1e-5);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let samples = small();
        let mut net = OutcomeNet::new(
            arch(HeadLayout::PerArm, false),
            FeatureScaler::fit(&samples).unwrap(),
            &mut rng_from_seed(1),
        );
        let err = net.backward(&Tape::default(), &[0.0; 3]);
        assert!(matches!(err, Err(TcsError::Usage(_))));
    }

    #[test]
    fn propensity_flag_must_match() {
        let samples = small();
        let net = OutcomeNet::new(
            arch(HeadLayout::PerArm, true),
            FeatureScaler::fit(&samples).unwrap(),
            &mut rng_from_seed(1),
        );
        let lam = assemble_lambda(&samples[0], None).unwrap();
        assert!(matches!(net.predict(&lam), Err(TcsError::Structural(_))));
    }

    #[test]
    fn predict_arms_matches_counterfactual_forward() {
        let samples = small();
        let net = OutcomeNet::new(
            arch(HeadLayout::PerArm, false),
            FeatureScaler::fit(&samples).unwrap(),
            &mut rng_from_seed(2),
        );
        let lam = assemble_lambda(&samples[2], None).unwrap();
        let (one, zero) = net.predict_arms(&lam).unwrap();
        assert_eq!(one, net.predict(&lam.counterfactual(1)).unwrap());
        assert_eq!(zero, net.predict(&lam.counterfactual(0)).unwrap());
    }
}
