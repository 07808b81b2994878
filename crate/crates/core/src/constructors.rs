//! Informative set constructors `x ↦ C^I(x)`.
//!
//! Every constructor is a fixed function of `x` and artifacts frozen before
//! calibration, so building sets for a pooled sample treats all units alike.

use alloc::sync::Arc;

use crate::conformal::{
    conformal_prediction_set, i_adjusted_pvalue, truncated_i_adjusted_pvalue, CalibrationScores,
    LabelSpace, NonconformityScore,
};
use crate::constraint::InformativeConstraint;
use crate::data::{argmax, ProbabilityModel, Regressor};
use crate::error::{Error, Result};
use crate::set::{ClassSet, Interval, IntervalUnion, PredictionSet};

#[derive(Clone)]
pub enum Constructor {
    Fixed(PredictionSet),
    /// `(c_u, ∞)` when `(c_l + c_u)/2 ≤ μ̂(x)`, otherwise `(-∞, c_l)`.
    DirectionalTwoSided { mu_hat: Arc<dyn Regressor>, c_l: f64, c_u: f64 },
    ArgmaxClass(Arc<dyn ProbabilityModel>),
    /// The conformal set at level `max(τ, q̃(x))`, empty when that level is 1.
    CpTruncated {
        cal0: CalibrationScores,
        score: NonconformityScore,
        constraint: InformativeConstraint,
        tau: f64,
        space: LabelSpace,
    },
}

impl core::fmt::Debug for Constructor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Fixed(set) => write!(f, "Fixed({set})"),
            Self::DirectionalTwoSided { c_l, c_u, .. } => {
                write!(f, "DirectionalTwoSided(c_l={c_l}, c_u={c_u})")
            }
            Self::ArgmaxClass(_) => f.write_str("ArgmaxClass"),
            Self::CpTruncated { constraint, tau, cal0, .. } => {
                write!(f, "CpTruncated({constraint:?}, tau={tau}, n0={})", cal0.len())
            }
        }
    }
}

pub fn fixed_constructor(set: PredictionSet, constraint: &InformativeConstraint) -> Result<Constructor> {
    if constraint.contains(&set) {
        Ok(Constructor::Fixed(set))
    } else {
        Err(Error::NotInformative)
    }
}

pub fn directional_constructor(mu_hat: Arc<dyn Regressor>, c_l: f64, c_u: f64) -> Result<Constructor> {
    if !(c_l <= c_u) {
        return Err(Error::InvalidArgument(alloc::format!("need c_l <= c_u, got {c_l} > {c_u}")));
    }
    Ok(Constructor::DirectionalTwoSided { mu_hat, c_l, c_u })
}

pub fn argmax_class_constructor(p_hat: Arc<dyn ProbabilityModel>) -> Constructor {
    Constructor::ArgmaxClass(p_hat)
}

pub fn cp_truncated_constructor(
    cal0: CalibrationScores,
    score: NonconformityScore,
    constraint: InformativeConstraint,
    tau: f64,
    space: LabelSpace,
) -> Result<Constructor> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::LevelOutOfRange(tau));
    }
    Ok(Constructor::CpTruncated { cal0, score, constraint, tau, space })
}

pub(crate) fn empty_set(space: LabelSpace) -> PredictionSet {
    match space {
        LabelSpace::Real => PredictionSet::Intervals(IntervalUnion::empty()),
        LabelSpace::Classes(k) => PredictionSet::Classes(ClassSet::empty(k)),
    }
}

/// Upper half-line when the prediction leans up (midpoint tie included).
pub(crate) fn leans_up(mu: f64, c_l: f64, c_u: f64) -> bool {
    (c_l + c_u) / 2.0 - mu <= 0.0
}

impl Constructor {
    pub fn build(&self, x: &[f64]) -> Result<PredictionSet> {
        match self {
            Self::Fixed(set) => Ok(set.clone()),
            Self::DirectionalTwoSided { mu_hat, c_l, c_u } => {
                let interval = if leans_up(mu_hat.predict(x), *c_l, *c_u) {
                    Interval::above(*c_u)
                } else {
                    Interval::below(*c_l)
                };
                Ok(PredictionSet::interval(interval))
            }
            Self::ArgmaxClass(model) => {
                let probs = model.probabilities(x);
                if probs.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite("class probabilities"));
                }
                let k = argmax(&probs);
                Ok(PredictionSet::Classes(ClassSet::singleton(probs.len(), k)?))
            }
            Self::CpTruncated { cal0, score, space, .. } => {
                let level = self.truncated_level(x)?.expect("truncated constructor");
                if level >= 1.0 {
                    Ok(empty_set(*space))
                } else {
                    conformal_prediction_set(x, cal0, score, level, *space)
                }
            }
        }
    }

    /// `q̃⁺(x) = max(τ, q̃(x))` for truncated conformal constructors.
    pub fn truncated_level(&self, x: &[f64]) -> Result<Option<f64>> {
        match self {
            Self::CpTruncated { cal0, score, constraint, tau, .. } => {
                let q = i_adjusted_pvalue(x, cal0, score, constraint)?;
                Ok(Some(truncated_i_adjusted_pvalue(q, *tau)))
            }
            _ => Ok(None),
        }
    }
}
