//! Trust scores `T(x, C)`: larger values mean the informative set `C` is more
//! likely to contain the label of `x`.
//!
//! Scores enter selection only through their ordering, so any strictly
//! increasing transformation of a score yields the same selections. Apart
//! from [`TrustScore::PredictiveValue`] (which returns `μ̂(x)` itself) every
//! variant maps into `[0, ∞)`, and every variant maps the empty set to 0.
//!
//! Besides the closed-form scores this module trains linear-logistic
//! classifiers of the coverage event, either on an independent training
//! sample ([`train_trust_classifier`]) or on the pooled calibration and test
//! features ([`train_pu_classifier`]), and computes similarity-aware scores
//! over a whole pool ([`diversity_scores`]).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::conformal::{i_adjusted_pvalue, truncated_i_adjusted_pvalue, CalibrationScores, NonconformityScore};
use crate::constraint::InformativeConstraint;
use crate::constructors::{leans_up, Constructor};
use crate::data::{ConditionalCdf, Label, LabeledSample, ProbabilityModel, Regressor, UnlabeledSample};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::optim::minimize;
pub use crate::optim::OptimizerConfig;
use crate::set::PredictionSet;

#[derive(Clone)]
pub enum TrustScore {
    /// `exp(-V(x, c0))` for a score non-increasing in `y`.
    MonotoneExp { score: NonconformityScore, c0: f64 },
    /// `Σ_{k ∈ C} p̂(k | x)`
    ProbabilityMass(Arc<dyn ProbabilityModel>),
    /// `μ̂(x)`
    PredictiveValue(Arc<dyn Regressor>),
    /// `|(c_l + c_u)/2 - μ̂(x)|`
    DistanceFromMidpoint { mu_hat: Arc<dyn Regressor>, c_l: f64, c_u: f64 },
    /// `p̂(Y ∈ C | x)` for half-line sets.
    RegionProbability(Arc<dyn ConditionalCdf>),
    /// `1 - max(τ, q̃(x))`
    OneMinusQPlus { cal0: CalibrationScores, score: NonconformityScore, constraint: InformativeConstraint, tau: f64 },
    TrainedClassifier(Arc<TrainedScorer>),
    PuClassifier(Arc<TrainedScorer>),
}

impl fmt::Debug for TrustScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::MonotoneExp { .. } => "MonotoneExp",
            Self::ProbabilityMass(_) => "ProbabilityMass",
            Self::PredictiveValue(_) => "PredictiveValue",
            Self::DistanceFromMidpoint { .. } => "DistanceFromMidpoint",
            Self::RegionProbability(_) => "RegionProbability",
            Self::OneMinusQPlus { .. } => "OneMinusQPlus",
            Self::TrainedClassifier(_) => "TrainedClassifier",
            Self::PuClassifier(_) => "PuClassifier",
        };
        f.write_str(name)
    }
}

pub fn monotone_trust(score: NonconformityScore, c0: f64) -> TrustScore {
    TrustScore::MonotoneExp { score, c0 }
}

pub fn probability_trust(p_hat: Arc<dyn ProbabilityModel>) -> TrustScore {
    TrustScore::ProbabilityMass(p_hat)
}

pub fn distance_trust(mu_hat: Arc<dyn Regressor>, c_l: f64, c_u: f64) -> TrustScore {
    TrustScore::DistanceFromMidpoint { mu_hat, c_l, c_u }
}

impl TrustScore {
    pub fn eval(&self, x: &[f64], set: &PredictionSet) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        match self {
            Self::MonotoneExp { score, c0 } => Ok(libm::exp(-score.eval(x, Label::Real(*c0))?)),
            Self::ProbabilityMass(model) => match set {
                PredictionSet::Classes(c) => {
                    let probs = model.probabilities(x);
                    c.members()
                        .iter()
                        .map(|&k| probs.get(k).copied().ok_or(Error::ClassOutOfRange { index: k, classes: probs.len() }))
                        .sum()
                }
                PredictionSet::Intervals(_) => Err(Error::TaskMismatch),
            },
            Self::PredictiveValue(mu) => Ok(mu.predict(x)),
            Self::DistanceFromMidpoint { mu_hat, c_l, c_u } => Ok(((c_l + c_u) / 2.0 - mu_hat.predict(x)).abs()),
            Self::RegionProbability(cdf) => {
                let PredictionSet::Intervals(u) = set else { return Err(Error::TaskMismatch) };
                match u.intervals() {
                    [iv] if iv.upper == f64::INFINITY && iv.lower > f64::NEG_INFINITY => {
                        Ok(1.0 - cdf.cdf(x, iv.lower))
                    }
                    [iv] if iv.lower == f64::NEG_INFINITY && iv.upper < f64::INFINITY => Ok(cdf.cdf(x, iv.upper)),
                    _ => Err(Error::Unsupported("region probability of a set that is not a half-line")),
                }
            }
            Self::OneMinusQPlus { cal0, score, constraint, tau } => {
                let q = i_adjusted_pvalue(x, cal0, score, constraint)?;
                Ok(1.0 - truncated_i_adjusted_pvalue(q, *tau))
            }
            Self::TrainedClassifier(g) | Self::PuClassifier(g) => Ok(g.predict(x)),
        }
    }
}

/// Similarity `s(x, x')` between two feature vectors.
#[derive(Clone)]
pub enum SimilarityKernel {
    /// 1 when the feature vectors are equal, 0 otherwise.
    Identity,
    /// `exp(-‖x - x'‖² / (2h²))`
    Gaussian { bandwidth: f64 },
    Custom(Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

impl SimilarityKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Identity => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Gaussian { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                libm::exp(-d2 / (2.0 * bandwidth * bandwidth))
            }
            Self::Custom(f) => f(a, b),
        }
    }
}

/// Similarity-aware scores over a pooled sample.
///
/// With `A_ij = (1 - ψ_i)(1 - ψ_j) s(x_i, x_j)`, `a = A⁻¹Ψ` and `b = A⁻¹1`,
/// returns `(αu₂ - u₁)·a + (u₂ - αu₃)·b` where `u₁ = Ψᵀa`, `u₂ = Ψᵀb`,
/// `u₃ = 1ᵀb`. The values may be negative.
pub fn diversity_scores(
    features: &[Vec<f64>],
    psi: &[f64],
    kernel: &SimilarityKernel,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = features.len();
    if psi.len() != n {
        return Err(Error::LengthMismatch("features and ψ"));
    }
    if psi.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("ψ must lie in [0, 1]".to_string()));
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = (1.0 - psi[i]) * (1.0 - psi[j]) * kernel.eval(&features[i], &features[j]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    let chol = Cholesky::factor(&a, n)?;
    let sol_psi = chol.solve(psi);
    let sol_one = chol.solve(&vec![1.0; n]);
    let u1: f64 = psi.iter().zip(&sol_psi).map(|(p, s)| p * s).sum();
    let u2: f64 = psi.iter().zip(&sol_one).map(|(p, s)| p * s).sum();
    let u3: f64 = sol_one.iter().sum();
    let c_psi = alpha * u2 - u1;
    let c_one = u2 - alpha * u3;
    Ok(sol_psi.iter().zip(&sol_one).map(|(a, b)| c_psi * a + c_one * b).collect())
}

/// How binary training labels are derived from labeled samples.
#[derive(Clone)]
pub enum Labeling {
    /// `A = 1` iff `Y ∈ C^I(X)`.
    Coverage(Constructor),
    /// `A = 1` iff `Y > c0`.
    Above(f64),
    /// `A = 1` iff `Y ≥ c_u` while `μ̂` leans up, or `Y ≤ c_l` while it
    /// leans down.
    TwoSided { mu_hat: Arc<dyn Regressor>, c_l: f64, c_u: f64 },
}

impl fmt::Debug for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Coverage(c) => write!(f, "Coverage({c:?})"),
            Self::Above(c0) => write!(f, "Above({c0})"),
            Self::TwoSided { c_l, c_u, .. } => write!(f, "TwoSided(c_l={c_l}, c_u={c_u})"),
        }
    }
}

impl Labeling {
    pub fn label(&self, sample: &LabeledSample) -> Result<bool> {
        match self {
            Self::Coverage(c) => c.build(&sample.x)?.contains(sample.y),
            Self::Above(c0) => Ok(real(sample.y)? > *c0),
            Self::TwoSided { mu_hat, c_l, c_u } => {
                let y = real(sample.y)?;
                Ok(if leans_up(mu_hat.predict(&sample.x), *c_l, *c_u) { y >= *c_u } else { y <= *c_l })
            }
        }
    }
}

fn real(y: Label) -> Result<f64> {
    y.as_real().ok_or(Error::TaskMismatch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the positive-class loss.
    pub lambda: f64,
    /// Per-coordinate polynomial degree of the feature map.
    pub degree: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { lambda: 1.0, degree: 1, optimizer: OptimizerConfig::default() }
    }
}

/// `g(x) = σ(w·φ(x) + b)` where `φ(x)` stacks `x_k, x_k², …, x_k^degree` for
/// every coordinate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub degree: usize,
    pub lambda: f64,
    pub iterations: usize,
    /// Empirical risk at the start and after every accepted step.
    pub loss_trace: Vec<f64>,
    /// Trained on the pooled calibration and test features. Such a scorer
    /// depends on which calibration units are covered, so its validity needs
    /// the coverage indicators to be independent across units.
    pub positive_unlabeled: bool,
}

pub fn feature_map(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * degree);
    for &v in x {
        let mut p = 1.0;
        for _ in 0..degree {
            p *= v;
            out.push(p);
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)`
fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

/// Weighted cross-entropy risk
/// `(1/N) Σ [λ·1{A=1}·(-log g) + 1{A=-1}·(-log(1-g))]` at `params = (w, b)`,
/// with its gradient written into `grad`.
pub fn logistic_risk(params: &[f64], features: &[Vec<f64>], labels: &[bool], lambda: f64, grad: &mut [f64]) -> f64 {
    let d = params.len() - 1;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut risk = 0.0;
    for (phi, &positive) in features.iter().zip(labels) {
        let z = params[d] + phi.iter().zip(params).map(|(f, w)| f * w).sum::<f64>();
        let (loss, dz) = if positive {
            (lambda * softplus(-z), lambda * (sigmoid(z) - 1.0))
        } else {
            (softplus(z), sigmoid(z))
        };
        risk += loss;
        for k in 0..d {
            grad[k] += dz * phi[k];
        }
        grad[d] += dz;
    }
    let n = features.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    risk / n
}

fn fit(features: Vec<Vec<f64>>, labels: Vec<bool>, config: TrainingConfig, pu: bool) -> Result<TrainedScorer> {
    if !(config.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", config.lambda)));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    let d = features.first().map_or(0, Vec::len);
    let min = minimize(
        |p, g| logistic_risk(p, &features, &labels, config.lambda, g),
        vec![0.0; d + 1],
        config.optimizer,
    );
    let mut weights = min.x;
    let bias = weights.pop().expect("bias");
    Ok(TrainedScorer {
        weights,
        bias,
        degree: config.degree,
        lambda: config.lambda,
        iterations: min.iterations,
        loss_trace: min.trace,
        positive_unlabeled: pu,
    })
}

/// Fits `g` on an independent training sample with labels from `labeling`.
pub fn train_trust_classifier(
    train: &[LabeledSample],
    labeling: &Labeling,
    config: TrainingConfig,
) -> Result<TrainedScorer> {
    let labels = train.iter().map(|s| labeling.label(s)).collect::<Result<Vec<_>>>()?;
    if labels.iter().all(|&a| a) || labels.iter().all(|&a| !a) {
        return Err(Error::DegenerateLabels);
    }
    let features = train.iter().map(|s| feature_map(&s.x, config.degree)).collect();
    fit(features, labels, config, false)
}

/// Fits `g` on the pooled sample: calibration units covered by their set are
/// positive, every other calibration or test unit is negative.
pub fn train_pu_classifier(
    cal: &[LabeledSample],
    test: &[UnlabeledSample],
    constructor: &Constructor,
    config: TrainingConfig,
) -> Result<TrainedScorer> {
    let mut labels = Vec::with_capacity(cal.len() + test.len());
    for s in cal {
        labels.push(constructor.build(&s.x)?.contains(s.y)?);
    }
    if !labels.iter().any(|&a| a) {
        return Err(Error::NoPositiveUnits);
    }
    labels.extend(core::iter::repeat_n(false, test.len()));
    let features = cal
        .iter()
        .map(|s| &s.x)
        .chain(test.iter().map(|s| &s.x))
        .map(|x| feature_map(x, config.degree))
        .collect();
    fit(features, labels, config, true)
}

impl TrainedScorer {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let phi = feature_map(x, self.degree);
        sigmoid(self.bias + phi.iter().zip(&self.weights).map(|(f, w)| f * w).sum::<f64>())
    }

    /// Key–value text lines that [`TrainedScorer::from_record`] reads back
    /// exactly.
    pub fn to_record(&self) -> String {
        let weights: Vec<String> = self.weights.iter().map(|w| format!("{w:?}")).collect();
        format!(
            "kind={}\ndegree={}\nlambda={:?}\niterations={}\nfinal_loss={:?}\nbias={:?}\nweights={}\n",
            if self.positive_unlabeled { "pu" } else { "classifier" },
            self.degree,
            self.lambda,
            self.iterations,
            self.loss_trace.last().copied().unwrap_or(f64::NAN),
            self.bias,
            weights.join(","),
        )
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut fields: Vec<(&str, &str)> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("no '=' in line {line:?}")))?;
            fields.push((k.trim(), v.trim()));
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Parse(format!("missing field {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| Error::Parse(format!("bad number in {key}")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::Parse(format!("bad integer in {key}")))
        };
        let positive_unlabeled = match get("kind")? {
            "pu" => true,
            "classifier" => false,
            other => return Err(Error::Parse(format!("unknown kind {other}"))),
        };
        let raw = get("weights")?;
        let weights = if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',')
                .map(|w| w.trim().parse().map_err(|_| Error::Parse(format!("bad weight {w:?}"))))
                .collect::<Result<Vec<f64>>>()?
        };
        Ok(Self {
            weights,
            bias: num("bias")?,
            degree: int("degree")?,
            lambda: num("lambda")?,
            iterations: int("iterations")?,
            loss_trace: vec![num("final_loss")?],
            positive_unlabeled,
        })
    }
}
