//! Gated recurrent cell (LSTM) unrolled over a sequence, with
//! backpropagation through time.
//!
//! Gate pre-activations are stacked in the order input, forget, output,
//! candidate: `z = W_x x_t + W_h h_{t-1} + b`, each block `hidden` rows.

use rand::Rng;

use super::ops::{dot, sigmoid};
use super::tensor::{scoped, Parameterized, Tensor};
use crate::error::{Result, TcsError};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `[4H, I]`
    pub w_x: Tensor,
    /// `[4H, H]`
    pub w_h: Tensor,
    /// `[4H]`
    pub b: Tensor,
    hidden: usize,
    input: usize,
}

/// Everything the backward pass needs from one unrolled forward pass.
#[derive(Debug, Clone, Default)]
pub struct LstmTrace {
    pub steps: usize,
    /// `T x I` inputs.
    pub xs: Vec<f64>,
    /// `T x 4H` post-activation gates (i, f, o, g).
    pub gates: Vec<f64>,
    /// `T x H` cell states.
    pub cs: Vec<f64>,
    /// `T x H` tanh of cell states.
    pub tanh_cs: Vec<f64>,
    /// `T x H` hidden states.
    pub hs: Vec<f64>,
}

impl LstmTrace {
    pub fn hidden_at(&self, t: usize, hidden: usize) -> &[f64] {
        &self.hs[t * hidden..(t + 1) * hidden]
    }
}

impl LstmCell {
    /// Weights uniform in `+-1/sqrt(I + H)`; biases zero except the forget
    /// gate, which starts at one.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.values[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmCell {
            w_x: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_h: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            b,
            hidden,
            input,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    /// Run the cell over `steps` inputs stored row-major in `xs` (`T x I`),
    /// starting from zero hidden and cell state.
    pub fn forward_sequence(&self, xs: &[f64], steps: usize) -> Result<LstmTrace> {
        let (h, n_in) = (self.hidden, self.input);
        if xs.len() != steps * n_in {
            return Err(TcsError::Structural(format!(
                "recurrent cell expects {steps} x {n_in} inputs, got {} values",
                xs.len()
            )));
        }
        let mut tr = LstmTrace {
            steps,
            xs: xs.to_vec(),
            gates: vec![0.0; steps * 4 * h],
            cs: vec![0.0; steps * h],
            tanh_cs: vec![0.0; steps * h],
            hs: vec![0.0; steps * h],
        };
        let zeros = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        for t in 0..steps {
            let x = &xs[t * n_in..(t + 1) * n_in];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&tr.hs[(t - 1) * h..t * h], &tr.cs[(t - 1) * h..t * h])
            };
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = self.b.values[r]
                    + dot(&self.w_x.values[r * n_in..(r + 1) * n_in], x)
                    + dot(&self.w_h.values[r * h..(r + 1) * h], h_prev);
            }
            let mut c_new = vec![0.0; h];
            let gates = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let o_g = sigmoid(z[2 * h + j]);
                let g_g = z[3 * h + j].tanh();
                gates[j] = i_g;
                gates[h + j] = f_g;
                gates[2 * h + j] = o_g;
                gates[3 * h + j] = g_g;
                c_new[j] = f_g * c_prev[j] + i_g * g_g;
            }
            for j in 0..h {
                let tc = c_new[j].tanh();
                tr.cs[t * h + j] = c_new[j];
                tr.tanh_cs[t * h + j] = tc;
                tr.hs[t * h + j] = gates[2 * h + j] * tc;
            }
        }
        if tr.hs.iter().chain(&tr.cs).any(|v| !v.is_finite()) {
            return Err(TcsError::Numerical("non-finite recurrent state".into()));
        }
        Ok(tr)
    }

    /// Backpropagate `dhs` (`T x H`, gradient of the loss w.r.t. every
    /// hidden state) through time. Parameter gradients accumulate into the
    /// tensors; the input gradient (`T x I`) is returned when requested.
    pub fn backward_sequence(
        &mut self,
        trace: &LstmTrace,
        dhs: &[f64],
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let (h, n_in, steps) = (self.hidden, self.input, trace.steps);
        if dhs.len() != steps * h {
            return Err(TcsError::Structural(format!(
                "hidden-state gradient must be {steps} x {h}, got {} values",
                dhs.len()
            )));
        }
        let mut dx = want_input_grad.then(|| vec![0.0; steps * n_in]);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];
        for t in (0..steps).rev() {
            let gates = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
            let tanh_c = &trace.tanh_cs[t * h..(t + 1) * h];
            let c_prev = if t == 0 {
                &zeros[..]
            } else {
                &trace.cs[(t - 1) * h..t * h]
            };
            for j in 0..h {
                let (i_g, f_g, o_g, g_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let dh = dhs[t * h + j] + dh_next[j];
                let d_o = dh * tanh_c[j];
                let dc = dh * o_g * (1.0 - tanh_c[j] * tanh_c[j]) + dc_next[j];
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * c_prev[j];
                dc_next[j] = dc * f_g;
                dz[j] = d_i * i_g * (1.0 - i_g);
                dz[h + j] = d_f * f_g * (1.0 - f_g);
                dz[2 * h + j] = d_o * o_g * (1.0 - o_g);
                dz[3 * h + j] = d_g * (1.0 - g_g * g_g);
            }
            let x = &trace.xs[t * n_in..(t + 1) * n_in];
            let h_prev = if t == 0 {
                &zeros[..]
            } else {
                &trace.hs[(t - 1) * h..t * h]
            };
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                self.b.grad[r] += g;
                for (w, xi) in self.w_x.grad[r * n_in..(r + 1) * n_in].iter_mut().zip(x) {
                    *w += g * xi;
                }
                for (w, hi) in self.w_h.grad[r * h..(r + 1) * h].iter_mut().zip(h_prev) {
                    *w += g * hi;
                }
                for (d, w) in dh_next.iter_mut().zip(&self.w_h.values[r * h..(r + 1) * h]) {
                    *d += g * w;
                }
                if let Some(dx) = dx.as_mut() {
                    let row = &self.w_x.values[r * n_in..(r + 1) * n_in];
                    for (d, w) in dx[t * n_in..(t + 1) * n_in].iter_mut().zip(row) {
                        *d += g * w;
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn visit_scoped(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&scoped(prefix, "w_x"), &self.w_x);
        f(&scoped(prefix, "w_h"), &self.w_h);
        f(&scoped(prefix, "b"), &self.b);
    }

    pub fn visit_scoped_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&scoped(prefix, "w_x"), &mut self.w_x);
        f(&scoped(prefix, "w_h"), &mut self.w_h);
        f(&scoped(prefix, "b"), &mut self.b);
    }
}

impl Parameterized for LstmCell {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.visit_scoped("", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.visit_scoped_mut("", f);
    }
}
