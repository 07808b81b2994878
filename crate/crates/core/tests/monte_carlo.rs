//! Monte-Carlo checks of false coverage control at reduced scale.

use std::sync::Arc;

use scip_core::conformal::LabelSpace;
use scip_core::constructors::fixed_constructor;
use scip_core::data::hide_labels;
use scip_core::metrics::{aggregate, replication_metrics, ReplicationMetrics};
use scip_core::procedures::{
    run_cfbh_plus, run_infosp, run_infosp_plus, run_naive, run_scip, ProcedureConfig, ProcedureOutput, Sidedness,
};
use scip_core::simgen::{RegressionDgp, SyntheticProfile};
use scip_core::trust::{train_pu_classifier, TrainingConfig};
use scip_core::{InformativeConstraint, Interval, Label, NonconformityScore, PredictionSet, RngStream, TrustScore};

const ALPHA: f64 = 0.1;
const REPS: u64 = 200;

fn regression_fcr(
    eta: f64,
    seed: u64,
    run: impl Fn(&[scip_core::LabeledSample], &[scip_core::LabeledSample], &[scip_core::UnlabeledSample], RngStream) -> ProcedureOutput,
) -> (f64, f64, f64) {
    let dgp = RegressionDgp::new(eta);
    let reps: Vec<ReplicationMetrics> = (0..REPS)
        .map(|rep| {
            let root = RngStream::new(seed, rep);
            let mut rng = root.derive_named("data").rng();
            let cal = dgp.sample(400, &mut rng);
            let cal0 = dgp.sample(400, &mut rng);
            let (test, truth) = hide_labels(&dgp.sample(400, &mut rng));
            let out = run(&cal, &cal0, &test, root.derive_named("ties"));
            replication_metrics(&out.reported, &truth).unwrap()
        })
        .collect();
    let agg = aggregate(&reps);
    (agg.fcr.mean, agg.fcr.stderr, agg.cpow.mean)
}

fn positive_config(eta: f64) -> ProcedureConfig {
    ProcedureConfig::new(
        ALPHA,
        InformativeConstraint::PositiveInterval,
        NonconformityScore::AbsoluteResidual(RegressionDgp::new(eta).mu_hat()),
        LabelSpace::Real,
    )
}

#[test]
fn valid_methods_control_fcr_under_misspecification() {
    for eta in [0.0, 1.0] {
        let cfg = positive_config(eta);
        let (fcr, se, _) = regression_fcr(eta, 1, |cal, _, test, _| run_infosp(cal, test, &cfg).unwrap());
        assert!(fcr <= ALPHA + 3.0 * se, "infosp eta={eta}: {fcr}");
        let (fcr, se, _) =
            regression_fcr(eta, 2, |cal, cal0, test, s| run_infosp_plus(cal, cal0, test, &cfg, s).unwrap());
        assert!(fcr <= ALPHA + 3.0 * se, "infosp+ eta={eta}: {fcr}");
        assert!(fcr >= ALPHA - 0.03, "infosp+ eta={eta} too conservative: {fcr}");
        let mu = RegressionDgp::new(eta).mu_hat();
        let (fcr, se, _) = regression_fcr(eta, 3, |cal, _, test, s| {
            run_cfbh_plus(cal, test, &mu, Sidedness::TwoSided { c_l: 0.0, c_u: 1.0 }, &cfg, s).unwrap()
        });
        assert!(fcr <= ALPHA + 3.0 * se, "two-sided cfbh+ eta={eta}: {fcr}");
    }
}

#[test]
fn naive_fails_under_misspecification() {
    let cfg = positive_config(1.0);
    let (fcr, se, _) = regression_fcr(1.0, 4, |cal, _, test, _| run_naive(cal, test, &cfg).unwrap());
    assert!(fcr > ALPHA + 3.0 * se, "{fcr}");
}

#[test]
fn positive_unlabeled_trust_controls_fcr() {
    let c0 = 0.5;
    let set = PredictionSet::interval(Interval::above(c0));
    let constraint = InformativeConstraint::HalfLine(c0);
    let constructor = fixed_constructor(set, &constraint).unwrap();
    let cfg = ProcedureConfig { constraint, ..positive_config(0.0) };
    let training = TrainingConfig { degree: 2, ..Default::default() };
    let (fcr, se, cpow) = regression_fcr(0.0, 5, |cal, _, test, s| {
        let g = train_pu_classifier(cal, test, &constructor, training).unwrap();
        run_scip(cal, test, &constructor, &TrustScore::PuClassifier(Arc::new(g)), &cfg, s).unwrap()
    });
    assert!(fcr <= ALPHA + 3.0 * se, "{fcr}");
    assert!(cpow > 0.0);
}

#[test]
fn dti_profile_pattern() {
    let profile = SyntheticProfile::DtiLike { feasible_fraction: 0.5, threshold: 0.0 };
    let cfg = ProcedureConfig::new(ALPHA, profile.constraint(), profile.score(), profile.label_space());
    let mut naive = Vec::new();
    let mut plus = Vec::new();
    for rep in 0..REPS {
        let root = RngStream::new(6, rep);
        let mut rng = root.derive_named("data").rng();
        let cal = profile.sample(300, &mut rng);
        let cal0 = profile.sample(300, &mut rng);
        let (test, truth) = hide_labels(&profile.sample(300, &mut rng));
        let a = run_naive(&cal, &test, &cfg).unwrap();
        let b = run_infosp_plus(&cal, &cal0, &test, &cfg, root).unwrap();
        naive.push(replication_metrics(&a.reported, &truth).unwrap());
        plus.push(replication_metrics(&b.reported, &truth).unwrap());
    }
    let (naive, plus) = (aggregate(&naive), aggregate(&plus));
    assert!(naive.fcr.mean > ALPHA, "{:?}", naive.fcr);
    assert!(plus.fcr.mean <= ALPHA + 3.0 * plus.fcr.stderr, "{:?}", plus.fcr);
}

#[test]
fn cifar_profile_ordering() {
    let profile = SyntheticProfile::CifarLike { feasible_fraction: 0.6 };
    let cfg = ProcedureConfig::new(ALPHA, profile.constraint(), profile.score(), profile.label_space());
    let (mut sp, mut spp) = (0.0, 0.0);
    for rep in 0..100 {
        let root = RngStream::new(7, rep);
        let mut rng = root.derive_named("data").rng();
        let cal = profile.sample(300, &mut rng);
        let cal0 = profile.sample(300, &mut rng);
        let (test, _) = hide_labels(&profile.sample(300, &mut rng));
        sp += run_infosp(&cal, &test, &cfg).unwrap().reported.len() as f64;
        spp += run_infosp_plus(&cal, &cal0, &test, &cfg, root).unwrap().reported.len() as f64;
    }
    assert!(spp >= sp, "{spp} < {sp}");
}

#[test]
fn reported_labels_are_real() {
    let cfg = positive_config(0.0);
    let dgp = RegressionDgp::new(0.0);
    let mut rng = RngStream::new(8, 0).rng();
    let cal = dgp.sample(200, &mut rng);
    let (test, truth) = hide_labels(&dgp.sample(200, &mut rng));
    let out = run_infosp(&cal, &test, &cfg).unwrap();
    assert!(truth.iter().all(|y| matches!(y, Label::Real(_))));
    assert!(out.reported.iter().all(|(_, s)| cfg.constraint.contains(s)));
}
