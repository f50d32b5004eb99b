use proptest::prelude::*;
use rough_contact::eval::{
    break_even, compute_metrics, reference_total_cost, surrogate_total_cost, BreakEven, CostLedger,
};

fn full_scale_ledger(t_pred: f64) -> CostLedger {
    CostLedger {
        t_pred_per_sample_s: t_pred,
        t_fit_s: 9.18,
        t_tune_s: 2599.0,
        t_database_s: 15_878.0 * 189.79,
        mean_bem_time_s: 189.79,
    }
}

#[test]
fn full_scale_ledger_break_even() {
    let BreakEven::At(n) = break_even(&full_scale_ledger(0.827 / 3175.0)).unwrap() else { panic!("never profitable") };
    assert!(n.abs_diff(15_893) <= 20, "N* = {n}");
}

#[test]
fn break_even_is_insensitive_to_cheap_predictions() {
    let at = |t| match break_even(&full_scale_ledger(t)).unwrap() {
        BreakEven::At(n) => n as f64,
        BreakEven::NeverProfitable => f64::NAN,
    };
    let t = 0.827 / 3175.0;
    assert!((at(2.0 * t) - at(t)).abs() / at(t) < 1e-3);
}

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40)
        .prop_flat_map(|n| (prop::collection::vec(0.01f64..100.0, n), prop::collection::vec(-10.0f64..10.0, n)))
        .prop_map(|(a, e)| {
            let p = a.iter().zip(&e).map(|(x, d)| x + d).collect();
            (a, p)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metric_scaling_and_bounds((a, p) in pairs(), c in 0.001f64..1000.0) {
        let m = compute_metrics(&a, &p).unwrap();
        let (ca, cp): (Vec<f64>, Vec<f64>) = (a.iter().map(|v| v * c).collect(), p.iter().map(|v| v * c).collect());
        if let Ok(s) = compute_metrics(&ca, &cp) {
            let tol = |x: f64| 1e-9 * (1.0 + x.abs());
            // nMSE divides a squared error by a mean, so it scales with c; the others are scale free.
            prop_assert!((s.nmse_percent - c * m.nmse_percent).abs() <= tol(c * m.nmse_percent));
            prop_assert!((s.nmae_percent - m.nmae_percent).abs() <= tol(m.nmae_percent));
            prop_assert!((s.nmaxe_percent - m.nmaxe_percent).abs() <= tol(m.nmaxe_percent));
            prop_assert!((s.r2_percent - m.r2_percent).abs() <= tol(m.r2_percent));
        }
        prop_assert!(m.nmse_percent >= 0.0 && m.nmae_percent >= 0.0 && m.nmaxe_percent >= 0.0);
        prop_assert!(m.r2_percent <= 100.0);
        let exact = a == p;
        prop_assert_eq!(m.nmse_percent == 0.0, exact);
        prop_assert_eq!(m.nmae_percent == 0.0, exact);
        prop_assert_eq!(m.nmaxe_percent == 0.0, exact);
    }

    #[test]
    fn break_even_is_the_first_profitable_count(
        fixed in 0.0f64..1e6, bem in 1e-3f64..500.0, frac in 0.0f64..0.999
    ) {
        let l = CostLedger { t_pred_per_sample_s: bem * frac, t_fit_s: 0.0, t_tune_s: 0.0, t_database_s: fixed, mean_bem_time_s: bem };
        let BreakEven::At(n) = break_even(&l).unwrap() else { return Err(TestCaseError::fail("never")) };
        prop_assert!(reference_total_cost(&l, n) >= surrogate_total_cost(&l, n));
        if n > 0 {
            prop_assert!(reference_total_cost(&l, n - 1) < surrogate_total_cost(&l, n - 1));
        }
    }
}

#[test]
fn negative_r2_is_not_clamped() {
    let m = compute_metrics(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
    assert!((m.r2_percent + 300.0).abs() < 1e-12);
}

#[test]
fn equal_costs_never_pay_off() {
    assert_eq!(break_even(&full_scale_ledger(189.79)).unwrap(), BreakEven::NeverProfitable);
    assert_eq!(break_even(&full_scale_ledger(200.0)).unwrap(), BreakEven::NeverProfitable);
}
