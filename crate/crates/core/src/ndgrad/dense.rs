use rand::Rng;

use super::ops::dot;
use super::tensor::{scoped, Parameterized, Tensor};
use crate::error::{Result, TcsError};

/// Affine layer `y = W x + b` with `W` stored row-major as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Weights uniform in `+-1/sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Dense {
            weight: Tensor::uniform(&[output, input], bound, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut layer = Dense::zeros(n, n);
        for i in 0..n {
            layer.weight.values[i * n + i] = 1.0;
        }
        layer
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_size()];
        self.forward_into(x, &mut out)?;
        Ok(out)
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n_in = self.input_size();
        if x.len() != n_in || out.len() != self.output_size() {
            return Err(TcsError::Structural(format!(
                "dense layer {}x{} got input of length {}",
                self.output_size(),
                n_in,
                x.len()
            )));
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.bias.values[r] + dot(&self.weight.values[r * n_in..(r + 1) * n_in], x);
        }
        Ok(())
    }

    /// Accumulate parameter gradients for upstream gradient `dy` at input
    /// `x`; writes the input gradient into `dx` when given.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        let n_in = self.input_size();
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias.grad[r] += g;
            let row = &mut self.weight.grad[r * n_in..(r + 1) * n_in];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight.values[r * n_in..(r + 1) * n_in];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    pub fn visit_scoped(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&scoped(prefix, "weight"), &self.weight);
        f(&scoped(prefix, "bias"), &self.bias);
    }

    pub fn visit_scoped_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&scoped(prefix, "weight"), &mut self.weight);
        f(&scoped(prefix, "bias"), &mut self.bias);
    }
}

impl Parameterized for Dense {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.visit_scoped("", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.visit_scoped_mut("", f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::rng_from_seed;

    #[test]
    fn zero_weights_give_bias() {
        let mut layer = Dense::zeros(4, 3);
        layer.bias.values = vec![0.5, -1.0, 2.0];
        assert_eq!(layer.forward(&[9.0, -3.0, 1.0, 7.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn identity_passes_input() {
        let x = [0.25, -4.0, 3.5];
        assert_eq!(Dense::identity(3).forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn wrong_width_is_structural() {
        let layer = Dense::zeros(4, 3);
        assert!(matches!(layer.forward(&[1.0]), Err(TcsError::Structural(_))));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = rng_from_seed(8);
        let mut layer = Dense::new(5, 3, &mut rng);
        let x = [0.3, -1.2, 0.8, 2.0, -0.1];
        let target = [0.1, 0.0, -0.4];
        let loss = |l: &Dense| -> f64 {
            let y = l.forward(&x).unwrap();
            y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let y = layer.forward(&x).unwrap();
        let dy: Vec<f64> = y.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut dx = vec![0.0; 5];
        layer.backward(&x, &dy, Some(&mut dx));
        let analytic = layer.flat_grads();
        let base = layer.flat_values();
        let eps = 1e-6;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            let mut minus = base.clone();
            minus[i] -= eps;
            let mut l = layer.clone();
            l.set_flat_values(&plus).unwrap();
            let fp = loss(&l);
            l.set_flat_values(&minus).unwrap();
            let fm = loss(&l);
            let fd = (fp - fm) / (2.0 * eps);
            assert!((fd - analytic[i]).abs() < 1e-7, "param {i}: {fd} vs {}", analytic[i]);
        }
    }
}
