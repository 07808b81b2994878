//! Complete selection methods assembled from constructors, trust scores and
//! the selection step.
//!
//! Every method takes labeled calibration samples, unlabeled test samples
//! and an [`RngStream`] consumed for tie breaking, and returns the indices of
//! the reported test units with their prediction sets. All reported sets
//! satisfy the configured constraint and are nonempty.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::conformal::{conformal_prediction_set, i_adjusted_pvalue, CalibrationScores, LabelSpace, NonconformityScore};
use crate::constraint::InformativeConstraint;
use crate::constructors::{argmax_class_constructor, cp_truncated_constructor, directional_constructor, fixed_constructor, Constructor};
use crate::data::{Label, LabeledSample, ProbabilityModel, Regressor, UnlabeledSample};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::selection::{bh_select, scip_select, CalibrationRecord, ScipOptions, TestRecord, TieBreaker, TieMode};
use crate::set::{ClassSet, Interval, PredictionSet};
use crate::trust::{
    distance_trust, probability_trust, train_trust_classifier, Labeling, TrainingConfig, TrustScore,
};

/// Settings shared by all methods.
#[derive(Debug, Clone)]
pub struct ProcedureConfig {
    pub alpha: f64,
    pub tie_mode: TieMode,
    pub constraint: InformativeConstraint,
    /// Nonconformity score for methods built on conformal sets.
    pub score: NonconformityScore,
    pub space: LabelSpace,
    /// Leave empty-set test units out of the BH denominator.
    pub shrink_m: bool,
}

impl ProcedureConfig {
    pub fn new(alpha: f64, constraint: InformativeConstraint, score: NonconformityScore, space: LabelSpace) -> Self {
        Self { alpha, tie_mode: TieMode::PerUnit, constraint, score, space, shrink_m: false }
    }

    pub fn with_tie_mode(mut self, tie_mode: TieMode) -> Self {
        self.tie_mode = tie_mode;
        self
    }

    fn options(&self) -> ScipOptions {
        ScipOptions { tie_mode: self.tie_mode, shrink_m: self.shrink_m }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcedureOutput {
    /// `(test index, set)` in ascending index order.
    pub reported: Vec<(usize, PredictionSet)>,
    /// Per-test statistic that drove selection: generalized p-values, or
    /// I-adjusted p-values for the conformal-threshold methods.
    pub pvalues: Vec<f64>,
    /// BH threshold of the final selection step.
    pub threshold: f64,
    /// Truncation level fitted on the extra calibration half.
    pub tau0: Option<f64>,
    /// Test units passing the screening stage.
    pub survivors: Option<Vec<usize>>,
}

impl ProcedureOutput {
    pub fn selected(&self) -> Vec<usize> {
        self.reported.iter().map(|(j, _)| *j).collect()
    }
}

/// One- or two-sided target region for regression selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sidedness {
    /// Units with `Y > c0`.
    OneSided { c0: f64 },
    /// Units with `Y > c_u` or `Y < c_l`.
    TwoSided { c_l: f64, c_u: f64 },
}

impl Sidedness {
    pub fn constraint(&self) -> InformativeConstraint {
        match *self {
            Self::OneSided { c0 } => InformativeConstraint::HalfLine(c0),
            Self::TwoSided { c_l, c_u } => InformativeConstraint::TargetHalfLines { c_l, c_u },
        }
    }

    fn constructor(&self, mu_hat: &Arc<dyn Regressor>) -> Result<Constructor> {
        match *self {
            Self::OneSided { c0 } => {
                fixed_constructor(PredictionSet::interval(Interval::above(c0)), &self.constraint())
            }
            Self::TwoSided { c_l, c_u } => directional_constructor(mu_hat.clone(), c_l, c_u),
        }
    }

    fn labeling(&self, mu_hat: &Arc<dyn Regressor>) -> Labeling {
        match *self {
            Self::OneSided { c0 } => Labeling::Above(c0),
            Self::TwoSided { c_l, c_u } => Labeling::TwoSided { mu_hat: mu_hat.clone(), c_l, c_u },
        }
    }
}

/// Which class sets selective classification reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTarget {
    /// Always `{y0}`.
    Single(usize),
    /// The most probable class of each unit.
    Argmax,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn ensure_informative(reported: &[(usize, PredictionSet)], constraint: &InformativeConstraint) -> Result<()> {
    if reported.iter().all(|(_, s)| !s.is_empty() && constraint.contains(s)) {
        Ok(())
    } else {
        Err(Error::NotInformative)
    }
}

/// Generic pipeline: build sets with `constructor`, score them with `trust`,
/// then select with generalized conformal p-values and BH.
pub fn run_scip(
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    constructor: &Constructor,
    trust: &TrustScore,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let cal_records = cal
        .iter()
        .map(|s| {
            let set = constructor.build(&s.x)?;
            let trust = trust.eval(&s.x, &set)?;
            let null = !set.contains(s.y)?;
            Ok(CalibrationRecord { set, trust, null })
        })
        .collect::<Result<Vec<_>>>()?;
    let test_records = test
        .iter()
        .map(|s| {
            let set = constructor.build(&s.x)?;
            let trust = trust.eval(&s.x, &set)?;
            Ok(TestRecord { set, trust })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = scip_select(&cal_records, &test_records, config.alpha, config.options(), rng)?;
    ensure_informative(&out.reported, &config.constraint)?;
    Ok(ProcedureOutput {
        reported: out.reported,
        pvalues: out.selection.pvalues,
        threshold: out.selection.threshold_alpha_hat,
        tau0: None,
        survivors: None,
    })
}

/// Level-`α` conformal sets on every test unit, keeping the informative
/// nonempty ones without any multiplicity adjustment.
pub fn run_naive(cal: &[LabeledSample], test: &[UnlabeledSample], config: &ProcedureConfig) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let scores = CalibrationScores::from_samples(cal, &config.score)?;
    let mut reported = Vec::new();
    for (j, s) in test.iter().enumerate() {
        let set = conformal_prediction_set(&s.x, &scores, &config.score, config.alpha, config.space)?;
        if !set.is_empty() && config.constraint.contains(&set) {
            reported.push((j, set));
        }
    }
    Ok(ProcedureOutput { reported, threshold: config.alpha, ..Default::default() })
}

fn i_adjusted_all<'a>(
    xs: impl Iterator<Item = &'a [f64]>,
    scores: &CalibrationScores,
    config: &ProcedureConfig,
) -> Result<Vec<f64>> {
    xs.map(|x| i_adjusted_pvalue(x, scores, &config.score, &config.constraint)).collect()
}

/// Conformal sets at level `level` for the listed test units, dropping any
/// that come out empty.
fn sets_at_level(
    test: &[UnlabeledSample],
    units: impl Iterator<Item = usize>,
    scores: &CalibrationScores,
    level: f64,
    config: &ProcedureConfig,
) -> Result<Vec<(usize, PredictionSet)>> {
    let mut reported = Vec::new();
    for j in units {
        let set = conformal_prediction_set(&test[j].x, scores, &config.score, level, config.space)?;
        if !set.is_empty() {
            reported.push((j, set));
        }
    }
    Ok(reported)
}

/// BH over I-adjusted p-values `q̃_j`; the units with `q̃_j ≤ τ̂` report
/// their conformal set at level `τ̂`.
pub fn run_infosp(cal: &[LabeledSample], test: &[UnlabeledSample], config: &ProcedureConfig) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let scores = CalibrationScores::from_samples(cal, &config.score)?;
    let q = i_adjusted_all(test.iter().map(|s| s.x.as_slice()), &scores, config)?;
    let bh = bh_select(&q, config.alpha)?;
    let reported = sets_at_level(test, bh.selected.iter().copied(), &scores, bh.threshold_alpha_hat, config)?;
    ensure_informative(&reported, &config.constraint)?;
    Ok(ProcedureOutput { reported, pvalues: q, threshold: bh.threshold_alpha_hat, ..Default::default() })
}

/// Truncated conformal constructor at `τ̂⁰`, the BH threshold of the
/// I-adjusted p-values of every calibration and test unit computed on `cal0`.
pub fn truncated_constructor(
    cal: &[LabeledSample],
    cal0: &[LabeledSample],
    test: &[UnlabeledSample],
    config: &ProcedureConfig,
) -> Result<(Constructor, f64)> {
    let scores0 = CalibrationScores::from_samples(cal0, &config.score)?;
    let xs = cal.iter().map(|s| s.x.as_slice()).chain(test.iter().map(|s| s.x.as_slice()));
    let q0 = i_adjusted_all(xs, &scores0, config)?;
    let tau0 = bh_select(&q0, config.alpha)?.threshold_alpha_hat;
    let constructor = cp_truncated_constructor(scores0, config.score.clone(), config.constraint, tau0, config.space)?;
    Ok((constructor, tau0))
}

fn one_minus_q_plus(constructor: &Constructor) -> TrustScore {
    match constructor {
        Constructor::CpTruncated { cal0, score, constraint, tau, .. } => TrustScore::OneMinusQPlus {
            cal0: cal0.clone(),
            score: score.clone(),
            constraint: *constraint,
            tau: *tau,
        },
        _ => unreachable!("truncated constructor"),
    }
}

/// Sets at level `q̃⁺ = max(τ̂⁰, q̃⁰)` with trust `1 - q̃⁺`, selected by SCIP
/// on `cal`.
pub fn run_infosp_plus(
    cal: &[LabeledSample],
    cal0: &[LabeledSample],
    test: &[UnlabeledSample],
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let (constructor, tau0) = truncated_constructor(cal, cal0, test, config)?;
    let trust = one_minus_q_plus(&constructor);
    let mut out = run_scip(cal, test, &constructor, &trust, config, rng)?;
    out.tau0 = Some(tau0);
    Ok(out)
}

/// Trust for the enhanced truncated-set method.
#[derive(Clone)]
pub enum EnhancedTrust {
    /// `Σ_{k ∈ C} p̂(k | x)`
    ClassMass(Arc<dyn ProbabilityModel>),
    /// Logistic classifier of the coverage event fitted on `train`.
    Classifier { train: Vec<LabeledSample>, training: TrainingConfig },
}

/// The truncated-set constructor with a trust score estimating the coverage
/// probability of each set.
pub fn run_infosp_plus_plus(
    cal: &[LabeledSample],
    cal0: &[LabeledSample],
    test: &[UnlabeledSample],
    trust: &EnhancedTrust,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let (constructor, tau0) = truncated_constructor(cal, cal0, test, config)?;
    let trust = match trust {
        EnhancedTrust::ClassMass(p) => probability_trust(p.clone()),
        EnhancedTrust::Classifier { train, training } => {
            let g = train_trust_classifier(train, &Labeling::Coverage(constructor.clone()), *training)?;
            TrustScore::TrainedClassifier(Arc::new(g))
        }
    };
    let mut out = run_scip(cal, test, &constructor, &trust, config, rng)?;
    out.tau0 = Some(tau0);
    Ok(out)
}

/// Clipped-score conformal p-values of `units` against `cal`, with the
/// clipping constant taken over `cal`, `units` and `extra` features.
fn clipped_pvalues(
    cal: &[LabeledSample],
    units: &[&[f64]],
    extra: &[&[f64]],
    mu_hat: &Arc<dyn Regressor>,
    c0: f64,
    ties: &mut TieBreaker,
) -> Result<Vec<f64>> {
    let sup = cal
        .iter()
        .map(|s| s.x.as_slice())
        .chain(units.iter().copied())
        .chain(extra.iter().copied())
        .map(|x| mu_hat.predict(x).abs())
        .fold(0.0, f64::max);
    let score = NonconformityScore::Clipped { mu_hat: mu_hat.clone(), c0, big_m: sup + 1.0 };
    let mut cal_v = cal.iter().map(|s| score.eval(&s.x, s.y)).collect::<Result<Vec<f64>>>()?;
    cal_v.sort_unstable_by(f64::total_cmp);
    let n = cal_v.len();
    units
        .iter()
        .map(|x| {
            let v = score.eval(x, Label::Real(c0))?;
            let le = cal_v.partition_point(|&w| w <= v);
            let lt = cal_v.partition_point(|&w| w < v);
            let u = ties.next();
            Ok(((n - le) as f64 + (1 + le - lt) as f64 * u) / (n + 1) as f64)
        })
        .collect()
}

/// Conformal selection of units with `Y > c0` using the clipped score
/// `V(x, y) = μ̂(x) - c0 - 2M·1{y > c0}`: calibration scores at the observed
/// labels, test scores at `y = c0`. Reports `(c0, ∞)` for selected units.
pub fn run_cfbh(
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    mu_hat: &Arc<dyn Regressor>,
    c0: f64,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let mut ties = TieBreaker::new(config.tie_mode, rng);
    let xs: Vec<&[f64]> = test.iter().map(|s| s.x.as_slice()).collect();
    let pvalues = clipped_pvalues(cal, &xs, &[], mu_hat, c0, &mut ties)?;
    let bh = bh_select(&pvalues, config.alpha)?;
    let half = PredictionSet::interval(Interval::above(c0));
    let reported = bh.selected.iter().map(|&j| (j, half.clone())).collect();
    Ok(ProcedureOutput { reported, pvalues, threshold: bh.threshold_alpha_hat, ..Default::default() })
}

/// One-sided: fixed `(c0, ∞)` with trust `μ̂(x)`. Two-sided: the half-line
/// `μ̂` points to, with trust `|(c_l + c_u)/2 - μ̂(x)|`.
pub fn run_cfbh_plus(
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    mu_hat: &Arc<dyn Regressor>,
    sided: Sidedness,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    let constructor = sided.constructor(mu_hat)?;
    let trust = match sided {
        Sidedness::OneSided { .. } => TrustScore::PredictiveValue(mu_hat.clone()),
        Sidedness::TwoSided { c_l, c_u } => distance_trust(mu_hat.clone(), c_l, c_u),
    };
    let config = ProcedureConfig { constraint: sided.constraint(), ..config.clone() };
    run_scip(cal, test, &constructor, &trust, &config, rng)
}

/// As [`run_cfbh_plus`] with a logistic classifier of the target event,
/// fitted on `train`, as trust.
#[allow(clippy::too_many_arguments)]
pub fn run_cfbh_plus_plus(
    train: &[LabeledSample],
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    mu_hat: &Arc<dyn Regressor>,
    sided: Sidedness,
    training: TrainingConfig,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    let constructor = sided.constructor(mu_hat)?;
    let g = train_trust_classifier(train, &sided.labeling(mu_hat), training)?;
    let trust = TrustScore::TrainedClassifier(Arc::new(g));
    let config = ProcedureConfig { constraint: sided.constraint(), ..config.clone() };
    run_scip(cal, test, &constructor, &trust, &config, rng)
}

/// Two-stage selection. Stage one runs clipped-score conformal selection of
/// `Y > screen_c` on the test units, calibrated on `cal_a` at level
/// `alpha_screen`, and applies the resulting p-value cutoff to the units of
/// `cal_b` as well. Stage two runs the I-adjusted BH method on the surviving
/// test units, calibrated on the surviving units of `cal_b` only.
#[allow(clippy::too_many_arguments)]
pub fn run_infoscop(
    cal_a: &[LabeledSample],
    cal_b: &[LabeledSample],
    test: &[UnlabeledSample],
    mu_hat: &Arc<dyn Regressor>,
    screen_c: f64,
    alpha_screen: f64,
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    check_alpha(alpha_screen)?;
    let mut ties = TieBreaker::new(config.tie_mode, rng);
    let test_x: Vec<&[f64]> = test.iter().map(|s| s.x.as_slice()).collect();
    let cal_x: Vec<&[f64]> = cal_b.iter().map(|s| s.x.as_slice()).collect();
    let p_test = clipped_pvalues(cal_a, &test_x, &cal_x, mu_hat, screen_c, &mut ties)?;
    let screen = bh_select(&p_test, alpha_screen)?;
    let survivors = screen.selected;
    let mut pvalues = alloc::vec![1.0; test.len()];
    let done = |pvalues, survivors| ProcedureOutput {
        reported: Vec::new(),
        pvalues,
        threshold: 0.0,
        tau0: None,
        survivors: Some(survivors),
    };
    if survivors.is_empty() {
        return Ok(done(pvalues, survivors));
    }
    let p_cal = clipped_pvalues(cal_a, &cal_x, &test_x, mu_hat, screen_c, &mut ties)?;
    let screened_cal: Vec<LabeledSample> = cal_b
        .iter()
        .zip(&p_cal)
        .filter(|(_, &p)| p <= screen.threshold_alpha_hat)
        .map(|(s, _)| s.clone())
        .collect();
    if screened_cal.is_empty() {
        return Ok(done(pvalues, survivors));
    }
    let kept: Vec<UnlabeledSample> = survivors.iter().map(|&j| test[j].clone()).collect();
    let stage = run_infosp(&screened_cal, &kept, config)?;
    let reported = stage.reported.into_iter().map(|(k, set)| (survivors[k], set)).collect();
    for (k, &j) in survivors.iter().enumerate() {
        pvalues[j] = stage.pvalues[k];
    }
    Ok(ProcedureOutput { reported, pvalues, threshold: stage.threshold, tau0: None, survivors: Some(survivors) })
}

/// Class-set selection with probability trust and deterministic ties.
pub fn run_selective_classification(
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    p_hat: &Arc<dyn ProbabilityModel>,
    target: ClassTarget,
    alpha: f64,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    let classes = p_hat.classes();
    let (constructor, constraint) = match target {
        ClassTarget::Single(y0) => {
            let c = InformativeConstraint::Singleton(y0);
            let set = PredictionSet::Classes(ClassSet::singleton(classes, y0)?);
            (fixed_constructor(set, &c)?, c)
        }
        ClassTarget::Argmax => (argmax_class_constructor(p_hat.clone()), InformativeConstraint::MaxSize(1)),
    };
    let config = ProcedureConfig {
        alpha,
        tie_mode: TieMode::Deterministic,
        constraint,
        score: NonconformityScore::OneMinusProb(p_hat.clone()),
        space: LabelSpace::Classes(classes),
        shrink_m: false,
    };
    run_scip(cal, test, &constructor, &probability_trust(p_hat.clone()), &config, rng)
}

/// Sets at level `τ̂⁰` for the test units with `q̃⁰_j ≤ τ̂⁰`.
pub fn run_infosp_modified(
    cal: &[LabeledSample],
    cal0: &[LabeledSample],
    test: &[UnlabeledSample],
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    check_alpha(config.alpha)?;
    let (constructor, tau0) = truncated_constructor(cal, cal0, test, config)?;
    let Constructor::CpTruncated { cal0: scores0, .. } = &constructor else { unreachable!() };
    let q0 = i_adjusted_all(test.iter().map(|s| s.x.as_slice()), scores0, config)?;
    let units = (0..test.len()).filter(|&j| q0[j] <= tau0);
    let reported = if tau0 > 0.0 { sets_at_level(test, units, scores0, tau0, config)? } else { Vec::new() };
    ensure_informative(&reported, &config.constraint)?;
    Ok(ProcedureOutput { reported, pvalues: q0, threshold: tau0, tau0: Some(tau0), survivors: None })
}

/// The truncated-set method with one tie-breaking draw shared by all units.
pub fn run_infosp_plus_modified(
    cal: &[LabeledSample],
    cal0: &[LabeledSample],
    test: &[UnlabeledSample],
    config: &ProcedureConfig,
    rng: RngStream,
) -> Result<ProcedureOutput> {
    let config = config.clone().with_tie_mode(TieMode::SharedU);
    run_infosp_plus(cal, cal0, test, &config, rng)
}
