use crate::error::{Result, TcsError};

pub const P_MIN: f64 = 0.01;
pub const P_MAX: f64 = 0.99;

pub fn clamp_propensity(p: f64) -> f64 {
    p.clamp(P_MIN, P_MAX)
}

/// `(1/N) sum_i [A_i Y_i / P_i - (1 - A_i) Y_i / (1 - P_i)]` at one time point.
pub fn ipw_ate(y: &[f64], a: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != a.len() || y.len() != p.len() {
        return Err(TcsError::Structural(format!(
            "IPW inputs disagree in length: {} outcomes, {} treatments, {} propensities",
            y.len(),
            a.len(),
            p.len()
        )));
    }
    if y.is_empty() {
        return Err(TcsError::Selection("IPW over an empty sample".into()));
    }
    let total: f64 = y
        .iter()
        .zip(a)
        .zip(p)
        .map(|((&y, &a), &p)| {
            let p = clamp_propensity(p);
            a * y / p - (1.0 - a) * y / (1.0 - p)
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Per-time IPW ATE from subject-major matrices `[i][t-1]`.
pub fn ipw_adjust(y_hat: &[Vec<f64>], a: &[Vec<f64>], p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let treated = a.iter().flatten().filter(|&&v| v == 1.0).count();
    let total = a.iter().map(Vec::len).sum::<usize>();
    if treated == 0 || treated == total {
        return Err(TcsError::DegenerateTreatment(
            "IPW needs both treated and control observations".into(),
        ));
    }
    let q = y_hat.first().map_or(0, Vec::len);
    (0..q)
        .map(|t| {
            let col = |m: &[Vec<f64>]| m.iter().map(|r| r[t]).collect::<Vec<f64>>();
            ipw_ate(&col(y_hat), &col(a), &col(p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_subject_example() {
        assert_eq!(ipw_ate(&[1.0, 0.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn constant_outcome_balanced_half() {
        let v = ipw_ate(&[0.7; 4], &[1.0, 0.0, 1.0, 0.0], &[0.5; 4]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn half_propensity_is_scaled_arm_sum_difference() {
        let y = [0.2, 0.9, 0.4, 0.6, 0.1];
        let a = [1.0, 0.0, 0.0, 1.0, 1.0];
        let v = ipw_ate(&y, &a, &[0.5; 5]).unwrap();
        let treated: f64 = y.iter().zip(&a).filter(|(_, &a)| a == 1.0).map(|(y, _)| y).sum();
        let control: f64 = y.iter().zip(&a).filter(|(_, &a)| a == 0.0).map(|(y, _)| y).sum();
        assert!((v - 2.0 * (treated - control) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_arms() {
        let err = ipw_adjust(&[vec![0.5], vec![0.4]], &[vec![1.0], vec![1.0]], &[vec![0.5], vec![0.5]]);
        assert!(matches!(err, Err(TcsError::DegenerateTreatment(_))));
    }

    #[test]
    fn propensity_is_clamped() {
        let v = ipw_ate(&[1.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(v, 1.0 / P_MIN);
    }
}
