use crate::simgen::LongitudinalSample;

/// Product-limit estimate at `t = 1..=q`. A subject with terminal time
/// `tau` is in the risk set for every `t <= tau`.
pub fn kaplan_meier_times(taus: &[usize], events: &[bool], q: usize) -> Vec<f64> {
    let mut s = 1.0;
    (1..=q)
        .map(|t| {
            let at_risk = taus.iter().filter(|&&tau| tau >= t).count();
            let died = taus.iter().zip(events).filter(|(&tau, &e)| e && tau == t).count();
            if at_risk > 0 {
                s *= 1.0 - died as f64 / at_risk as f64;
            }
            s
        })
        .collect()
}

pub fn kaplan_meier(samples: &[LongitudinalSample], q: usize) -> Vec<f64> {
    let taus: Vec<usize> = samples.iter().map(LongitudinalSample::tau).collect();
    let events: Vec<bool> = samples.iter().map(LongitudinalSample::event).collect();
    kaplan_meier_times(&taus, &events, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_events_is_flat() {
        assert_eq!(kaplan_meier_times(&[2, 3, 4], &[false; 3], 4), vec![1.0; 4]);
    }

    #[test]
    fn single_event() {
        assert_eq!(kaplan_meier_times(&[2], &[true], 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn censoring_leaves_risk_set() {
        // event at 2 among 2 at risk, then the censored subject is gone
        let s = kaplan_meier_times(&[2, 2, 3], &[true, false, true], 3);
        assert_eq!(s, vec![1.0, 1.0 - 1.0 / 3.0, 0.0]);
    }
}
