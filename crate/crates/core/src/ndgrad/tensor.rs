use rand::Rng;

use crate::error::{Result, TcsError};

/// Dense parameter buffer with a gradient of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(TcsError::Structural(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            values,
        })
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut t = Tensor::zeros(shape);
        for v in &mut t.values {
            *v = rng.random_range(-bound..=bound);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(TcsError::Numerical(format!("{what}: value {i} is not finite")));
        }
        if let Some(i) = self.grad.iter().position(|v| !v.is_finite()) {
            return Err(TcsError::Numerical(format!("{what}: gradient {i} is not finite")));
        }
        Ok(())
    }
}

/// Anything that owns trainable tensors. Visit order is stable and defines
/// the flat layout used by the optimizer and checkpoints.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, t| out.extend_from_slice(&t.values));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, t| out.extend_from_slice(&t.grad));
        out
    }

    fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(TcsError::Structural(format!(
                "expected {n} parameter values, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            let len = t.len();
            t.values.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        });
        Ok(())
    }

    /// Named shapes in visit order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.shape().to_vec())));
        out
    }
}

/// Join a prefix and a leaf name with a dot.
pub fn scoped(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_is_structural() {
        assert!(matches!(
            Tensor::from_values(&[2, 3], vec![0.0; 5]),
            Err(TcsError::Structural(_))
        ));
    }

    #[test]
    fn non_finite_values_trip() {
        let mut t = Tensor::zeros(&[3]);
        assert!(t.ensure_finite("t").is_ok());
        t.values[1] = f64::NAN;
        assert!(matches!(t.ensure_finite("t"), Err(TcsError::Numerical(_))));
    }
}
