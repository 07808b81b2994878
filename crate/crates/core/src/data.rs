//! Samples, labels and the frozen predictive models the procedures consume.

use alloc::vec::Vec;

/// A response: real-valued for regression, a zero-based class index for
/// classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Real(f64),
    Class(usize),
}

impl Label {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Self::Real(v) => Some(v),
            Self::Class(_) => None,
        }
    }

    pub fn as_class(self) -> Option<usize> {
        match self {
            Self::Class(k) => Some(k),
            Self::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSample {
    pub x: Vec<f64>,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: Label) -> Self {
        Self { x, y }
    }

    pub fn unlabeled(&self) -> UnlabeledSample {
        UnlabeledSample { x: self.x.clone() }
    }
}

/// Split labeled samples into features and their hidden labels.
pub fn hide_labels(samples: &[LabeledSample]) -> (Vec<UnlabeledSample>, Vec<Label>) {
    samples.iter().map(|s| (s.unlabeled(), s.y)).unzip()
}

/// Point predictor `μ̂(x)`, fitted on data independent of calibration and test.
pub trait Regressor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F> Regressor for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Class-probability estimate `p̂(Y = k | x)`.
pub trait ProbabilityModel: Send + Sync {
    fn classes(&self) -> usize;
    fn probabilities(&self, x: &[f64]) -> Vec<f64>;
}

/// Conditional distribution estimate, used by region-probability trust scores.
pub trait ConditionalCdf: Send + Sync {
    /// `p̂(Y ≤ y | x)`
    fn cdf(&self, x: &[f64], y: f64) -> f64;
}

/// Treats the feature vector itself as a vector of logits.
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftmaxOfFeatures {
    pub classes: usize,
}

impl ProbabilityModel for SoftmaxOfFeatures {
    fn classes(&self) -> usize {
        self.classes
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&x[..self.classes])
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Index of the largest entry, smallest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}
