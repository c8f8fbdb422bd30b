/// Probabilities entering a logarithm are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus, which is the logistic function.
#[inline]
pub fn softplus_grad(x: f64) -> f64 {
    sigmoid(x)
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `d clamp_prob(p) / dp`: one strictly inside the band, zero outside.
#[inline]
pub fn clamp_prob_grad(p: f64) -> f64 {
    if p > PROB_FLOOR && p < 1.0 - PROB_FLOOR {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += scale * v`.
#[inline]
pub fn axpy(out: &mut [f64], scale: f64, v: &[f64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += scale * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_symmetry_and_limits() {
        for &x in &[-40.0, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn softplus_matches_definition() {
        for &x in &[-5.0, -0.1, 0.0, 0.7, 10.0, 35.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-12 * naive.max(1.0));
        }
    }

    #[test]
    fn clamp_band() {
        assert_eq!(clamp_prob(0.0), PROB_FLOOR);
        assert_eq!(clamp_prob(1.0), 1.0 - PROB_FLOOR);
        assert_eq!(clamp_prob(0.3), 0.3);
    }
}
