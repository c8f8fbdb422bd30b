use proptest::prelude::*;

use tcs_core::baselines::{ipw_ate, kaplan_meier_times};
use tcs_core::metrics::{auroc, bias, concordance, rmse};
use tcs_core::simgen::{generate, ScenarioConfig};
use tcs_core::tcsnet::{
    assemble_lambda, band, labels_from, loss_l1, loss_l1_scalar, monotone_survival, survival_curve,
};

fn survival_data(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>, Vec<bool>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(1usize..8, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn concordance_ignores_order_and_monotone_maps(
        (data, perm) in survival_data(40).prop_flat_map(|d| { let n = d.0.len(); (Just(d), permutation(n)) })
    ) {
        let (risk, times, events) = data;
        let base = concordance(&risk, &times, &events);
        let r2: Vec<f64> = perm.iter().map(|&i| risk[i]).collect();
        let t2: Vec<usize> = perm.iter().map(|&i| times[i]).collect();
        let e2: Vec<bool> = perm.iter().map(|&i| events[i]).collect();
        let mapped: Vec<f64> = risk.iter().map(|r| 3.0 * r.exp() + 1.0).collect();
        match base {
            Ok(c) => {
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert_eq!(concordance(&r2, &t2, &e2).unwrap(), c);
                prop_assert_eq!(concordance(&mapped, &times, &events).unwrap(), c);
            }
            Err(_) => prop_assert!(concordance(&r2, &t2, &e2).is_err()),
        }
    }

    #[test]
    fn auroc_ignores_order_and_monotone_maps(
        (data, perm) in survival_data(40).prop_flat_map(|d| { let n = d.0.len(); (Just(d), permutation(n)) })
    ) {
        let (scores, _, labels) = data;
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let s2: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
        let l2: Vec<bool> = perm.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(auroc(&s2, &l2).unwrap(), a);
        let mapped: Vec<f64> = scores.iter().map(|s| s.powi(3) - 7.0).collect();
        prop_assert_eq!(auroc(&mapped, &labels).unwrap(), a);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auroc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn bias_is_scale_free_and_rmse_scales(
        rows in prop::collection::vec(prop::collection::vec((0.01f64..1.0, -1.0f64..1.0), 4), 1..20),
        c in 0.1f64..10.0,
    ) {
        let truth: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
        let est: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|p| p.0 + p.1).collect()).collect();
        let scale = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|v| v * c).collect()).collect() };
        let group: Vec<usize> = (0..truth.len()).collect();
        let b = bias(&est, &truth, &group).unwrap();
        let bs = bias(&scale(&est), &scale(&truth), &group).unwrap();
        for (x, y) in b.per_time.iter().zip(&bs.per_time) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() <= 1e-9 * x.unwrap().max(1.0));
        }
        let r = rmse(&est, &truth, &group).unwrap();
        let rs = rmse(&scale(&est), &scale(&truth), &group).unwrap();
        for (x, y) in r.iter().zip(&rs) {
            prop_assert!(*x >= 0.0);
            prop_assert!((x * c - y).abs() <= 1e-9 * y.max(1.0));
        }
    }

    #[test]
    fn l1_forms_agree(
        subjects in prop::collection::vec((1usize..=11, any::<bool>(), prop::collection::vec(0.001f64..0.999, 10)), 1..60)
    ) {
        let q = 10;
        let labels: Vec<_> = subjects
            .iter()
            .map(|(tau, event, _)| labels_from((*tau).min(if *event { q } else { q + 1 }), *event, q).unwrap())
            .collect();
        let theta: Vec<Vec<f64>> = subjects.iter().map(|s| s.2.clone()).collect();
        let a = loss_l1(&theta, &labels).unwrap();
        let b = loss_l1_scalar(&theta, &labels).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn band_contains_the_point(values in prop::collection::vec(-1.0f64..1.0, 1..30), point in -1.0f64..1.0) {
        let (lo, hi) = band(&values, point);
        prop_assert!(lo <= point && point <= hi);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let (lo, hi) = band(&values, mean);
        prop_assert!(lo <= mean && mean <= hi);
    }

    #[test]
    fn survival_curves_are_monotone(
        theta in prop::collection::vec(0.0f64..=1.0, 1..20),
        raw in prop::collection::vec(-0.5f64..1.5, 1..20),
    ) {
        for curve in [survival_curve(&theta), monotone_survival(&raw)] {
            prop_assert!(curve.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn km_is_a_survival_curve((_, times, events) in survival_data(40)) {
        let km = kaplan_meier_times(&times, &events, 8);
        prop_assert!(km.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(km.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ipw_at_one_half_is_twice_the_arm_difference(
        rows in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..50)
    ) {
        prop_assume!(rows.iter().any(|r| r.1) && rows.iter().any(|r| !r.1));
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let a: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.1))).collect();
        let n = rows.len() as f64;
        let treated: f64 = rows.iter().filter(|r| r.1).map(|r| r.0).sum();
        let control: f64 = rows.iter().filter(|r| !r.1).map(|r| r.0).sum();
        let got = ipw_ate(&y, &a, &vec![0.5; rows.len()]).unwrap();
        prop_assert!((got - 2.0 * (treated - control) / n).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counterfactuals_are_idempotent_and_masks_survive(seed in any::<u64>(), drop in 0.0f64..0.6) {
        let cfg = ScenarioConfig { n: 3, u: 3, q: 4, ..ScenarioConfig::default() };
        let mut ds = generate(&cfg, seed).unwrap();
        let s = &mut ds.samples[0];
        let cells = s.mask.len();
        for c in 0..cells {
            if (c as f64 + 0.5) / cells as f64 <= drop {
                s.mask[c] = false;
                s.x[c] = 0.0;
            }
        }
        let lam = assemble_lambda(s, Some(&[0.3, 0.4, 0.5, 0.6])).unwrap();
        for a in [0u8, 1] {
            let once = lam.counterfactual(a);
            prop_assert_eq!(&once.counterfactual(a), &once);
            prop_assert_eq!(&lam.counterfactual(1 - a).counterfactual(a), &once);
            prop_assert_eq!(&once.panel, &lam.panel);
        }
        for t in 1..=cfg.q {
            let row = lam.row(t).unwrap();
            for step in 0..cfg.u + cfg.q {
                for j in 0..cfg.d {
                    if !s.mask[step * cfg.d + j] {
                        prop_assert!(row[1 + step * cfg.d + j].is_none());
                    }
                }
            }
        }
    }
}
