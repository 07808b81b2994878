//! Randomized checks that pairs of procedures known to coincide return the
//! same selections. Every failing instance is kept verbatim so it can be
//! replayed.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use scip_core::conformal::LabelSpace;
use scip_core::data::SoftmaxOfFeatures;
use scip_core::procedures::{
    run_cfbh, run_cfbh_plus, run_selective_classification, ClassTarget, ProcedureConfig, Sidedness,
};
use scip_core::reference::{bh_step_up, fasi_select, zhao_su_select};
use scip_core::selection::{bh_select, counting_knockoff_select, generalized_conformal_pvalues};
use scip_core::{
    ClassSet, InformativeConstraint, Label, LabeledSample, NonconformityScore, PredictionSet, ProbabilityModel,
    Regressor, RngStream, ScoredPool, TieMode, UnlabeledSample,
};

use crate::error::RunError;
use crate::experiment::write_csv;

pub const SUMMARY_FILE: &str = "equivalence.csv";
pub const COUNTEREXAMPLE_FILE: &str = "counterexamples.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    BhSelfConsistent,
    KnockoffBh,
    CfbhOneSided,
    Fasi,
    ZhaoSu,
}

impl Check {
    pub const ALL: [Check; 5] = [Self::BhSelfConsistent, Self::KnockoffBh, Self::CfbhOneSided, Self::Fasi, Self::ZhaoSu];

    pub fn name(self) -> &'static str {
        match self {
            Self::BhSelfConsistent => "bh-vs-self-consistent",
            Self::KnockoffBh => "counting-knockoff-vs-bh",
            Self::CfbhOneSided => "cfbh-vs-cfbh+",
            Self::Fasi => "fasi-vs-scip",
            Self::ZhaoSu => "zhao-su-vs-scip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvalueInstance {
    pub pvalues: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInstance {
    pub cal_trust: Vec<f64>,
    pub cal_null: Vec<bool>,
    pub test_trust: Vec<f64>,
    pub alpha: f64,
    pub shared_u: bool,
    pub seed: u64,
    pub stream: u64,
}

/// One-dimensional regression with `μ̂(x) = x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfbhInstance {
    pub cal_x: Vec<f64>,
    pub cal_y: Vec<f64>,
    pub test_x: Vec<f64>,
    pub c0: f64,
    pub alpha: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Features are logits; class probabilities are their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInstance {
    pub classes: usize,
    pub cal_logits: Vec<Vec<f64>>,
    pub cal_labels: Vec<usize>,
    pub test_logits: Vec<Vec<f64>>,
    pub alpha: f64,
    pub y0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Instance {
    Pvalues(PvalueInstance),
    Pool(PoolInstance),
    Cfbh(CfbhInstance),
    Classes(ClassInstance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: String,
    pub instance: Instance,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub instances: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub checks: Vec<CheckSummary>,
    pub counterexamples: Vec<Counterexample>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    /// True when no instance was examined.
    pub fn vacuous(&self) -> bool {
        self.checks.iter().all(|c| c.instances == 0)
    }
}

/// Compares the two sides of `check` on `instance`; `None` when they agree.
pub fn compare(check: Check, instance: &Instance) -> Result<Option<(Vec<usize>, Vec<usize>)>, scip_core::Error> {
    let (left, right) = match (check, instance) {
        (Check::BhSelfConsistent, Instance::Pvalues(i)) => {
            (bh_select(&i.pvalues, i.alpha)?.selected, bh_step_up(&i.pvalues, i.alpha))
        }
        (Check::KnockoffBh, Instance::Pool(i)) => {
            let pool = ScoredPool::new(i.cal_trust.clone(), i.cal_null.clone(), i.test_trust.clone())?;
            let mode = if i.shared_u { TieMode::SharedU } else { TieMode::Deterministic };
            let stream = RngStream::new(i.seed, i.stream);
            let ck = counting_knockoff_select(&pool, i.alpha, mode, stream)?;
            let p = generalized_conformal_pvalues(&pool, mode, stream);
            (ck.selected, bh_select(&p, i.alpha)?.selected)
        }
        (Check::CfbhOneSided, Instance::Cfbh(i)) => {
            let mu: Arc<dyn Regressor> = Arc::new(|x: &[f64]| x[0]);
            let cal: Vec<LabeledSample> =
                i.cal_x.iter().zip(&i.cal_y).map(|(&x, &y)| LabeledSample::new(vec![x], Label::Real(y))).collect();
            let test: Vec<UnlabeledSample> = i.test_x.iter().map(|&x| UnlabeledSample { x: vec![x] }).collect();
            let config = ProcedureConfig::new(
                i.alpha,
                InformativeConstraint::HalfLine(i.c0),
                NonconformityScore::AbsoluteResidual(mu.clone()),
                LabelSpace::Real,
            );
            let stream = RngStream::new(i.seed, i.stream);
            let a = run_cfbh(&cal, &test, &mu, i.c0, &config, stream)?;
            let b = run_cfbh_plus(&cal, &test, &mu, Sidedness::OneSided { c0: i.c0 }, &config, stream)?;
            (a.selected(), b.selected())
        }
        (Check::Fasi | Check::ZhaoSu, Instance::Classes(i)) => {
            let p: Arc<dyn ProbabilityModel> = Arc::new(SoftmaxOfFeatures { classes: i.classes });
            let cal: Vec<LabeledSample> = i
                .cal_logits
                .iter()
                .zip(&i.cal_labels)
                .map(|(x, &y)| LabeledSample::new(x.clone(), Label::Class(y)))
                .collect();
            let test: Vec<UnlabeledSample> = i.test_logits.iter().map(|x| UnlabeledSample { x: x.clone() }).collect();
            let stream = RngStream::new(0, 0);
            if check == Check::Fasi {
                let ours = run_selective_classification(&cal, &test, &p, ClassTarget::Single(i.y0), i.alpha, stream)?;
                let s = |x: &Vec<f64>| p.probabilities(x)[i.y0];
                let reference = fasi_select(
                    &i.cal_logits.iter().map(s).collect::<Vec<_>>(),
                    &i.cal_labels,
                    i.y0,
                    &i.test_logits.iter().map(s).collect::<Vec<_>>(),
                    i.alpha,
                );
                (ours.selected(), reference)
            } else {
                let ours = run_selective_classification(&cal, &test, &p, ClassTarget::Argmax, i.alpha, stream)?;
                let probs = |xs: &[Vec<f64>]| xs.iter().map(|x| p.probabilities(x)).collect::<Vec<_>>();
                let reference = zhao_su_select(&probs(&i.cal_logits), &i.cal_labels, &probs(&i.test_logits), i.alpha);
                let same_classes = ours.reported.len() == reference.len()
                    && ours.reported.iter().zip(&reference).all(|((j, set), &(k, c))| {
                        *j == k && *set == PredictionSet::Classes(ClassSet::singleton(i.classes, c).expect("class"))
                    });
                let left = ours.selected();
                let mut right: Vec<usize> = reference.iter().map(|&(k, _)| k).collect();
                if !same_classes && left == right {
                    right.push(usize::MAX);
                }
                (left, right)
            }
        }
        _ => return Err(scip_core::Error::InvalidArgument(format!("instance does not fit check {}", check.name()))),
    };
    Ok((left != right).then_some((left, right)))
}

fn coarse<R: Rng>(rng: &mut R, discrete: bool, scale: f64) -> f64 {
    let v: f64 = scale * rng.sample::<f64, _>(StandardNormal);
    if discrete { (v * 2.0).round() / 2.0 } else { v }
}

/// Draws the `index`-th random instance for `check`.
pub fn random_instance(check: Check, seed: u64, index: u64) -> Instance {
    let stream = RngStream::new(seed, 0).derive_named(check.name()).derive(index);
    let mut rng = stream.rng();
    let discrete = rng.random_bool(0.4);
    let alpha = rng.random_range(0.05..0.5);
    match check {
        Check::BhSelfConsistent => {
            let m = rng.random_range(1..80);
            let pvalues = (0..m)
                .map(|_| {
                    let u: f64 = rng.random::<f64>().powi(2);
                    if discrete { (u * 20.0).ceil() / 20.0 } else { u }
                })
                .collect();
            Instance::Pvalues(PvalueInstance { pvalues, alpha })
        }
        Check::KnockoffBh => {
            let n = rng.random_range(1..80);
            let m = rng.random_range(1..80);
            let cal_trust = (0..n).map(|_| coarse(&mut rng, discrete, 1.0)).collect();
            let cal_null = (0..n).map(|_| rng.random_bool(0.3)).collect();
            let test_trust = (0..m).map(|_| coarse(&mut rng, discrete, 1.0) + 0.5).collect();
            let shared_u = rng.random_bool(0.5);
            Instance::Pool(PoolInstance { cal_trust, cal_null, test_trust, alpha, shared_u, seed, stream: stream.stream() })
        }
        Check::CfbhOneSided => {
            let n = rng.random_range(1..80);
            let m = rng.random_range(1..80);
            let cal_x: Vec<f64> = (0..n).map(|_| coarse(&mut rng, discrete, 1.0)).collect();
            let cal_y = cal_x.iter().map(|x| x + rng.sample::<f64, _>(StandardNormal)).collect();
            let test_x = (0..m).map(|_| coarse(&mut rng, discrete, 1.0)).collect();
            let c0 = f64::from(rng.random_range(-2i8..=2)) / 2.0;
            Instance::Cfbh(CfbhInstance { cal_x, cal_y, test_x, c0, alpha, seed, stream: stream.stream() })
        }
        Check::Fasi | Check::ZhaoSu => {
            let classes = rng.random_range(2..5);
            let n = rng.random_range(1..60);
            let m = rng.random_range(1..60);
            let logits = |rng: &mut scip_core::rng::StreamRng| -> Vec<f64> {
                (0..classes).map(|_| coarse(rng, discrete, 1.5)).collect()
            };
            let cal_logits = (0..n).map(|_| logits(&mut rng)).collect();
            let test_logits = (0..m).map(|_| logits(&mut rng)).collect();
            let cal_labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let y0 = rng.random_range(0..classes);
            Instance::Classes(ClassInstance { classes, cal_logits, cal_labels, test_logits, alpha, y0 })
        }
    }
}

/// Hand-built instance where every trust score is tied.
pub fn tied_instance(check: Check) -> Instance {
    match check {
        Check::BhSelfConsistent => Instance::Pvalues(PvalueInstance { pvalues: vec![0.05; 12], alpha: 0.1 }),
        Check::KnockoffBh => Instance::Pool(PoolInstance {
            cal_trust: vec![1.0; 20],
            cal_null: (0..20).map(|i| i % 4 == 0).collect(),
            test_trust: vec![1.0; 15],
            alpha: 0.3,
            shared_u: false,
            seed: 0,
            stream: 0,
        }),
        Check::CfbhOneSided => Instance::Cfbh(CfbhInstance {
            cal_x: vec![0.5; 20],
            cal_y: (0..20).map(|i| if i % 5 == 0 { -1.0 } else { 1.0 }).collect(),
            test_x: vec![0.5; 10],
            c0: 0.0,
            alpha: 0.3,
            seed: 0,
            stream: 0,
        }),
        Check::Fasi | Check::ZhaoSu => Instance::Classes(ClassInstance {
            classes: 3,
            cal_logits: vec![vec![1.0, 0.0, 0.0]; 20],
            cal_labels: (0..20).map(|i| usize::from(i % 5 == 0)).collect(),
            test_logits: vec![vec![1.0, 0.0, 0.0]; 10],
            alpha: 0.3,
            y0: 0,
        }),
    }
}

/// Runs `instances` random instances of every check plus the tied fixture
/// (the fixture is skipped when `instances` is zero).
pub fn run_equivalence_suite(seed: u64, instances: usize) -> Result<EquivalenceReport, scip_core::Error> {
    let mut checks = Vec::new();
    let mut counterexamples = Vec::new();
    for check in Check::ALL {
        let mut all: Vec<Instance> = (0..instances as u64).map(|i| random_instance(check, seed, i)).collect();
        if instances > 0 {
            all.push(tied_instance(check));
        }
        let mut failures = 0;
        for instance in all.iter() {
            if let Some((left, right)) = compare(check, instance)? {
                failures += 1;
                counterexamples.push(Counterexample {
                    check: check.name().to_owned(),
                    instance: instance.clone(),
                    left,
                    right,
                });
            }
        }
        checks.push(CheckSummary { check: check.name().to_owned(), instances: all.len(), failures });
    }
    Ok(EquivalenceReport { checks, counterexamples })
}

pub fn write_equivalence_report(report: &EquivalenceReport, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_owned(), source })?;
    write_csv(&dir.join(SUMMARY_FILE), &report.checks)?;
    let path = dir.join(COUNTEREXAMPLE_FILE);
    let mut json = serde_json::to_string_pretty(&report.counterexamples)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|source| RunError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let report = run_equivalence_suite(3, 50).unwrap();
        assert!(report.passed(), "{:?}", report.counterexamples);
        assert!(report.checks.iter().all(|c| c.instances == 51));
    }

    #[test]
    fn zero_instances_is_vacuous() {
        let report = run_equivalence_suite(3, 0).unwrap();
        assert!(report.passed());
        assert!(report.vacuous());
    }

    #[test]
    fn tied_fixtures_agree() {
        for check in Check::ALL {
            assert_eq!(compare(check, &tied_instance(check)).unwrap(), None, "{}", check.name());
        }
    }

    #[test]
    fn instances_roundtrip_through_json() {
        for check in Check::ALL {
            let instance = random_instance(check, 1, 7);
            let text = serde_json::to_string(&instance).unwrap();
            let back: Instance = serde_json::from_str(&text).unwrap();
            assert_eq!(compare(check, &back).unwrap(), compare(check, &instance).unwrap());
        }
    }

    #[test]
    fn mismatched_instance_is_rejected() {
        assert!(compare(Check::Fasi, &tied_instance(Check::KnockoffBh)).is_err());
    }
}
