//! Split conformal machinery: nonconformity scores, conformal prediction sets
//! and I-adjusted p-values.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::constraint::InformativeConstraint;
use crate::data::{Label, LabeledSample, ProbabilityModel, Regressor};
use crate::error::{Error, Result};
use crate::set::{ClassSet, Interval, PredictionSet};

pub type CustomScoreFn = dyn Fn(&[f64], Label) -> f64 + Send + Sync;

/// Nonconformity score `V(x, y)`: larger means `y` looks less plausible at `x`.
#[derive(Clone)]
pub enum NonconformityScore {
    /// `|y - μ̂(x)|`
    AbsoluteResidual(Arc<dyn Regressor>),
    /// `1 - p̂(y | x)`
    OneMinusProb(Arc<dyn ProbabilityModel>),
    /// `μ̂(x) - c0 - 2M·1{y > c0}` with `M > sup |μ̂|`.
    Clipped { mu_hat: Arc<dyn Regressor>, c0: f64, big_m: f64 },
    Custom(Arc<CustomScoreFn>),
}

impl fmt::Debug for NonconformityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AbsoluteResidual(_) => f.write_str("AbsoluteResidual"),
            Self::OneMinusProb(_) => f.write_str("OneMinusProb"),
            Self::Clipped { c0, big_m, .. } => write!(f, "Clipped(c0={c0}, M={big_m})"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl NonconformityScore {
    pub fn absolute_residual(mu_hat: impl Regressor + 'static) -> Self {
        Self::AbsoluteResidual(Arc::new(mu_hat))
    }

    pub fn one_minus_prob(p_hat: impl ProbabilityModel + 'static) -> Self {
        Self::OneMinusProb(Arc::new(p_hat))
    }

    pub fn eval(&self, x: &[f64], y: Label) -> Result<f64> {
        match (self, y) {
            (Self::AbsoluteResidual(mu), Label::Real(v)) => Ok((v - mu.predict(x)).abs()),
            (Self::OneMinusProb(p), Label::Class(k)) => {
                let probs = p.probabilities(x);
                let pk = probs
                    .get(k)
                    .ok_or(Error::ClassOutOfRange { index: k, classes: probs.len() })?;
                Ok(1.0 - pk)
            }
            (Self::Clipped { mu_hat, c0, big_m }, Label::Real(v)) => {
                let hit = if v > *c0 { 1.0 } else { 0.0 };
                Ok(mu_hat.predict(x) - c0 - 2.0 * big_m * hit)
            }
            (Self::Custom(f), y) => Ok(f(x, y)),
            _ => Err(Error::TaskMismatch),
        }
    }
}

/// Calibration scores `V(X_i, Y_i)`, kept sorted so tail counts are
/// logarithmic.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    sorted: Vec<f64>,
}

impl CalibrationScores {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("calibration scores"));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn from_samples(samples: &[LabeledSample], score: &NonconformityScore) -> Result<Self> {
        let values = samples
            .iter()
            .map(|s| score.eval(&s.x, s.y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{i : V_i ≥ v}`
    pub fn count_at_least(&self, v: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s < v)
    }

    /// Conformal level `(1 + #{V_i ≥ v}) / (n + 1)` of a candidate score `v`.
    pub fn level_of(&self, v: f64) -> f64 {
        (1 + self.count_at_least(v)) as f64 / (self.sorted.len() + 1) as f64
    }

    /// Largest score `v*` with `level_of(v*) > q`, the radius of the level-`q`
    /// set. `Some(+∞)` when every score qualifies; `None` when none does.
    pub fn score_radius(&self, q: f64) -> Option<f64> {
        let n = self.sorted.len();
        // Smallest tail count c with (1 + c)/(n + 1) > q.
        let passes = |c: usize| (1 + c) as f64 / (n + 1) as f64 > q;
        let guess = libm::floor(q * (n + 1) as f64) as usize;
        let mut c = guess.saturating_sub(1).min(n + 1);
        while c > 0 && passes(c - 1) {
            c -= 1;
        }
        while c <= n && !passes(c) {
            c += 1;
        }
        if c > n {
            return None;
        }
        if c == 0 {
            Some(f64::INFINITY)
        } else {
            // c-th largest calibration score
            Some(self.sorted[n - c])
        }
    }
}

/// Description of the label space used when building prediction sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    Real,
    Classes(usize),
}

/// Split conformal prediction set
/// `{y : (1 + #{i : V_i ≥ V(x, y)}) / (n + 1) > q}`.
///
/// Absolute-residual sets are computed in closed form as
/// `[μ̂(x) - v*, μ̂(x) + v*]`; class sets enumerate the label space.
pub fn conformal_prediction_set(
    x: &[f64],
    cal: &CalibrationScores,
    score: &NonconformityScore,
    q: f64,
    space: LabelSpace,
) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::LevelOutOfRange(q));
    }
    match (score, space) {
        (NonconformityScore::AbsoluteResidual(mu), LabelSpace::Real) => {
            let center = mu.predict(x);
            Ok(match cal.score_radius(q) {
                None => PredictionSet::Intervals(Default::default()),
                Some(r) if r.is_infinite() => {
                    PredictionSet::interval(Interval::open(f64::NEG_INFINITY, f64::INFINITY)?)
                }
                Some(r) => PredictionSet::interval(Interval::closed(center - r, center + r)?),
            })
        }
        (_, LabelSpace::Classes(classes)) => {
            let mut members = Vec::new();
            for k in 0..classes {
                if cal.level_of(score.eval(x, Label::Class(k))?) > q {
                    members.push(k);
                }
            }
            Ok(PredictionSet::Classes(ClassSet::new(classes, members)?))
        }
        (NonconformityScore::OneMinusProb(_), LabelSpace::Real) => Err(Error::TaskMismatch),
        _ => Err(Error::Unsupported("closed-form conformal set for this score")),
    }
}

/// Smallest conformal level whose prediction set is informative,
/// `(1 + #{V_i ≥ ν̃(x)}) / (n + 1)`; 1 when no informative set exists and 0
/// when every set is informative.
pub fn i_adjusted_pvalue(
    x: &[f64],
    cal: &CalibrationScores,
    score: &NonconformityScore,
    constraint: &InformativeConstraint,
) -> Result<f64> {
    Ok(match constraint.breakpoint(x, score)? {
        None => 1.0,
        Some(nu) if nu == f64::INFINITY => 0.0,
        Some(nu) => cal.level_of(nu),
    })
}

/// `max(τ, q̃)`
pub fn truncated_i_adjusted_pvalue(q_tilde: f64, tau: f64) -> f64 {
    q_tilde.max(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SoftmaxOfFeatures;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn constant_mu(c: f64) -> NonconformityScore {
        NonconformityScore::absolute_residual(move |_: &[f64]| c)
    }

    /// Literal evaluation of the set indicator at one candidate label.
    fn member_by_count(cal: &[f64], v: f64, q: f64) -> bool {
        let ge = cal.iter().filter(|&&s| s >= v).count();
        (1 + ge) as f64 / (cal.len() + 1) as f64 > q
    }

    #[test]
    fn inclusion_depends_on_strict_level() {
        let cal = CalibrationScores::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let score = constant_mu(1.5);
        // y = 4.0 has V = 2.5; (1 + 2)/5 = 0.6.
        let y = Label::Real(4.0);
        assert!(member_by_count(cal.sorted(), 2.5, 0.4));
        let at_04 = conformal_prediction_set(&[], &cal, &score, 0.4, LabelSpace::Real).unwrap();
        assert!(at_04.contains(y).unwrap());
        assert!(!member_by_count(cal.sorted(), 2.5, 0.6));
        let at_06 = conformal_prediction_set(&[], &cal, &score, 0.6, LabelSpace::Real).unwrap();
        assert!(!at_06.contains(y).unwrap());
    }

    #[test]
    fn zero_level_is_full_space() {
        let cal = CalibrationScores::new(vec![1.0, 2.0]).unwrap();
        let s = conformal_prediction_set(&[], &cal, &constant_mu(0.0), 0.0, LabelSpace::Real).unwrap();
        assert!(s.contains(Label::Real(1e300)).unwrap());
        let probs = NonconformityScore::one_minus_prob(SoftmaxOfFeatures { classes: 3 });
        let c = conformal_prediction_set(&[5.0, 0.0, -5.0], &cal, &probs, 0.0, LabelSpace::Classes(3))
            .unwrap();
        assert_eq!(c.measure().value(), 3.0);
    }

    #[test]
    fn unit_level_is_empty() {
        let cal = CalibrationScores::new(vec![1.0, 2.0]).unwrap();
        let s = conformal_prediction_set(&[], &cal, &constant_mu(0.0), 1.0, LabelSpace::Real).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn level_outside_unit_interval() {
        let cal = CalibrationScores::new(vec![1.0]).unwrap();
        let r = conformal_prediction_set(&[], &cal, &constant_mu(0.0), 1.5, LabelSpace::Real);
        assert_eq!(r, Err(Error::LevelOutOfRange(1.5)));
    }

    #[test]
    fn truncation_is_max() {
        assert_eq!(truncated_i_adjusted_pvalue(0.6, 0.1), 0.6);
        assert_eq!(truncated_i_adjusted_pvalue(0.05, 0.1), 0.1);
        assert_eq!(truncated_i_adjusted_pvalue(1.0, 0.1), 1.0);
    }

    fn random_cal(rng: &mut impl Rng, n: usize, discrete: bool) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v: f64 = rng.random::<f64>() * 3.0;
                if discrete {
                    (v * 4.0).round() / 4.0
                } else {
                    v
                }
            })
            .collect()
    }

    #[test]
    fn sets_shrink_as_level_grows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..30);
            let discrete = rng.random();
            let cal = CalibrationScores::new(random_cal(&mut rng, n, discrete)).unwrap();
            let center: f64 = rng.random_range(-2.0..2.0);
            let score = constant_mu(center);
            let q1: f64 = rng.random();
            let q2: f64 = rng.random_range(q1..=1.0);
            let a = conformal_prediction_set(&[], &cal, &score, q1, LabelSpace::Real).unwrap();
            let b = conformal_prediction_set(&[], &cal, &score, q2, LabelSpace::Real).unwrap();
            assert!(b.is_subset(&a), "{b} not within {a}");

            let logits = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0];
            let probs = NonconformityScore::one_minus_prob(SoftmaxOfFeatures { classes: 3 });
            let cal_p = CalibrationScores::new((0..n).map(|_| rng.random()).collect()).unwrap();
            let a = conformal_prediction_set(&logits, &cal_p, &probs, q1, LabelSpace::Classes(3)).unwrap();
            let b = conformal_prediction_set(&logits, &cal_p, &probs, q2, LabelSpace::Classes(3)).unwrap();
            assert!(b.is_subset(&a));
        }
    }

    #[test]
    fn closed_form_interval_matches_literal_indicator() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.random_range(1..25);
            let cal_values = random_cal(&mut rng, n, true);
            let cal = CalibrationScores::new(cal_values.clone()).unwrap();
            let q: f64 = rng.random();
            let set = conformal_prediction_set(&[], &cal, &constant_mu(0.0), q, LabelSpace::Real).unwrap();
            for step in -16..=16 {
                let y = step as f64 / 4.0;
                let expected = member_by_count(&cal_values, y.abs(), q);
                assert_eq!(set.contains(Label::Real(y)).unwrap(), expected, "q={q} y={y}");
            }
        }
    }

    /// Brute-force I-adjusted p-value: smallest grid level `k/(n+1)` whose
    /// set is informative, deciding informativeness from literal membership.
    fn brute_q_tilde_positive(cal: &[f64], mu: f64) -> f64 {
        let n = cal.len();
        for k in 1..=n + 1 {
            let q = k as f64 / (n + 1) as f64;
            let empty = !member_by_count(cal, 0.0, q);
            // Interval around mu: informative iff empty, or mu > 0 and 0 is excluded.
            let zero_in = member_by_count(cal, mu.abs(), q);
            if empty || (mu > 0.0 && !zero_in) {
                return q;
            }
        }
        1.0
    }

    fn brute_q_tilde_max_size(cal: &[f64], probs: &[f64], k0: usize) -> f64 {
        let n = cal.len();
        for k in 1..=n + 1 {
            let q = k as f64 / (n + 1) as f64;
            let size = probs.iter().filter(|&&p| member_by_count(cal, 1.0 - p, q)).count();
            if size <= k0 {
                return q;
            }
        }
        1.0
    }

    #[test]
    fn i_adjusted_fixtures() {
        let cal = CalibrationScores::new(vec![0.5, 1.0, 2.0, 3.0]).unwrap();
        let q = i_adjusted_pvalue(&[], &cal, &constant_mu(1.5), &InformativeConstraint::PositiveInterval)
            .unwrap();
        assert_eq!(q, brute_q_tilde_positive(cal.sorted(), 1.5));
        assert_eq!(q, 0.6);

        let q = i_adjusted_pvalue(&[], &cal, &constant_mu(-0.2), &InformativeConstraint::PositiveInterval)
            .unwrap();
        assert_eq!(q, 1.0);

        let probs = [0.5f64, 0.3, 0.2];
        let logits: Vec<f64> = probs.iter().map(|p| libm::log(*p)).collect();
        let score = NonconformityScore::one_minus_prob(SoftmaxOfFeatures { classes: 3 });
        let cal = CalibrationScores::new(vec![0.1, 0.4, 0.6, 0.9]).unwrap();
        let q = i_adjusted_pvalue(&logits, &cal, &score, &InformativeConstraint::MaxSize(2)).unwrap();
        assert_eq!(brute_q_tilde_max_size(cal.sorted(), &probs, 2), 0.4);
        assert!((q - 0.4).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn i_adjusted_matches_grid_scan(
            cal in proptest::collection::vec(0u8..12, 1..20),
            mu in -8i32..16,
        ) {
            let cal: Vec<f64> = cal.into_iter().map(|v| f64::from(v) / 4.0).collect();
            let mu = f64::from(mu) / 4.0;
            let scores = CalibrationScores::new(cal.clone()).unwrap();
            let got = i_adjusted_pvalue(&[], &scores, &constant_mu(mu), &InformativeConstraint::PositiveInterval).unwrap();
            prop_assert_eq!(got, brute_q_tilde_positive(&cal, mu));
            // The set at the returned level is informative.
            let set = conformal_prediction_set(&[], &scores, &constant_mu(mu), got, LabelSpace::Real).unwrap();
            prop_assert!(InformativeConstraint::PositiveInterval.contains(&set));
            // One grid step below is not.
            let n = cal.len();
            let below = got - 1.0 / (n + 1) as f64;
            if got < 1.0 && below > 0.0 {
                let set = conformal_prediction_set(&[], &scores, &constant_mu(mu), below, LabelSpace::Real).unwrap();
                prop_assert!(!InformativeConstraint::PositiveInterval.contains(&set));
            }
        }

        #[test]
        fn i_adjusted_matches_grid_scan_classes(
            cal in proptest::collection::vec(0.0f64..1.0, 1..20),
            logits in proptest::collection::vec(-3.0f64..3.0, 4),
            k0 in 1usize..4,
        ) {
            let probs = softmax(&logits);
            let scores = CalibrationScores::new(cal.clone()).unwrap();
            let score = NonconformityScore::one_minus_prob(SoftmaxOfFeatures { classes: 4 });
            let got = i_adjusted_pvalue(&logits, &scores, &score, &InformativeConstraint::MaxSize(k0)).unwrap();
            let want = brute_q_tilde_max_size(&cal, &probs, k0);
            prop_assert!((got - want).abs() < 1e-12, "got {} want {}", got, want);
        }
    }

    use crate::data::softmax;

    /// Marginal coverage of the level-q set on exchangeable Gaussian data.
    #[test]
    fn marginal_coverage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let q = 0.1;
        let n = 50;
        let draws = 10_000;
        let score = constant_mu(0.0);
        let mut covered = 0usize;
        for _ in 0..draws {
            let mut sample: Vec<f64> = (0..=n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let y = sample.pop().unwrap();
            let cal = CalibrationScores::new(sample.iter().map(|v| v.abs()).collect()).unwrap();
            let set = conformal_prediction_set(&[], &cal, &score, q, LabelSpace::Real).unwrap();
            covered += usize::from(set.contains(Label::Real(y)).unwrap());
        }
        let p = covered as f64 / draws as f64;
        let se = libm::sqrt(p * (1.0 - p) / draws as f64);
        assert!(p >= 1.0 - q - 3.0 * se, "coverage {p}");
    }
}
