use proptest::prelude::*;

use scip_core::reference::bh_step_up;
use scip_core::selection::{
    bh_select, generalized_conformal_pvalues, scip_select, CalibrationRecord, ScipOptions, TestRecord,
};
use scip_core::simgen::RegressionDgp;
use scip_core::{InformativeConstraint, Interval, PredictionSet, RngStream, ScoredPool, TieMode};

fn pool_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (1usize..40, 1usize..40).prop_flat_map(|(n, m)| {
        (
            proptest::collection::vec((0u8..8).prop_map(f64::from), n),
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec((0u8..8).prop_map(f64::from), m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pvalues_lie_in_unit_interval((cal, null, test) in pool_strategy(), seed: u64) {
        let pool = ScoredPool::new(cal, null, test).unwrap();
        for mode in [TieMode::PerUnit, TieMode::SharedU, TieMode::Deterministic] {
            let p = generalized_conformal_pvalues(&pool, mode, RngStream::new(seed, 0));
            prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn higher_trust_never_hurts((cal, null, test) in pool_strategy(), j in 0usize..40) {
        let j = j % test.len();
        let pool = ScoredPool::new(cal.clone(), null.clone(), test.clone()).unwrap();
        let mut raised = test;
        raised[j] += 1.0;
        let better = ScoredPool::new(cal, null, raised).unwrap();
        let p = generalized_conformal_pvalues(&pool, TieMode::Deterministic, RngStream::new(0, 0));
        let q = generalized_conformal_pvalues(&better, TieMode::Deterministic, RngStream::new(0, 0));
        prop_assert!(q[j] <= p[j]);
    }

    #[test]
    fn bh_selection_is_self_consistent(p in proptest::collection::vec(0.0f64..=1.0, 1..60), alpha in 0.01f64..0.9) {
        let r = bh_select(&p, alpha).unwrap();
        prop_assert_eq!(&r.selected, &bh_step_up(&p, alpha));
        prop_assert!(r.selected.iter().all(|&j| p[j] <= r.threshold_alpha_hat));
        prop_assert_eq!(r.selected.len(), r.k_hat);
    }

    #[test]
    fn reported_sets_stay_informative(
        lows in proptest::collection::vec(-2i8..4, 1..30),
        trust in proptest::collection::vec(0u8..5, 30),
        alpha in 0.05f64..0.5,
    ) {
        let constraint = InformativeConstraint::PositiveInterval;
        let set = |lo: i8| {
            if lo > 0 {
                PredictionSet::interval(Interval::closed(f64::from(lo), f64::from(lo) + 1.0).unwrap())
            } else {
                PredictionSet::Intervals(scip_core::IntervalUnion::empty())
            }
        };
        let cal: Vec<CalibrationRecord> = lows
            .iter()
            .zip(&trust)
            .enumerate()
            .map(|(i, (&lo, &t))| CalibrationRecord { set: set(lo), trust: f64::from(t), null: i % 3 == 0 })
            .collect();
        let test: Vec<TestRecord> = lows
            .iter()
            .zip(trust.iter().rev())
            .map(|(&lo, &t)| TestRecord { set: set(lo), trust: f64::from(t) })
            .collect();
        let out = scip_select(&cal, &test, alpha, ScipOptions::default(), RngStream::new(1, 2)).unwrap();
        prop_assert!(out.reported.iter().all(|(_, s)| !s.is_empty() && constraint.contains(s)));
    }

    #[test]
    fn same_seed_same_data(seed: u64, eta in 0.0f64..2.0) {
        let dgp = RegressionDgp::new(eta);
        let a = dgp.sample(20, &mut RngStream::new(seed, 3).rng());
        let b = dgp.sample(20, &mut RngStream::new(seed, 3).rng());
        prop_assert_eq!(a, b);
    }
}
