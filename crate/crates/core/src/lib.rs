//! Selective conformal inference with informative prediction sets.
//!
//! The crate reports, for a large pool of unlabeled test units, a subset of
//! prediction sets that are both *informative* (they satisfy a user-supplied
//! constraint such as "the interval lies above zero" or "at most two
//! classes") and *trustworthy* (the false coverage rate among the reported
//! sets is controlled at a target level).
//!
//! The pipeline has three pieces:
//!
//! 1. an informative set [constructor](constructors) that maps each feature
//!    vector to an admissible prediction set,
//! 2. a [trust score](trust) rating how likely that set is to cover the label,
//! 3. [generalized conformal p-values](selection) computed from the trust
//!    scores of calibration units whose set missed, followed by a
//!    self-consistent Benjamini–Hochberg threshold.
//!
//! Ready-made methods built from these pieces live in [`procedures`];
//! [`metrics`] and [`simgen`] support Monte-Carlo studies.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod conformal;
pub mod constraint;
pub mod constructors;
pub mod data;
mod error;
mod linalg;
pub mod metrics;
mod optim;
pub mod procedures;
pub mod reference;
pub mod rng;
pub mod selection;
pub mod set;
pub mod simgen;
pub mod trust;

pub use conformal::{CalibrationScores, NonconformityScore};
pub use constraint::InformativeConstraint;
pub use constructors::Constructor;
pub use data::{Label, LabeledSample, ProbabilityModel, Regressor, UnlabeledSample};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use selection::{ScoredPool, SelectionResult, TieMode};
pub use set::{ClassSet, Interval, IntervalUnion, PredictionSet, SetMeasure};
pub use trust::TrustScore;
