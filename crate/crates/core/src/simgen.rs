//! Simulation designs: a quadratic regression model with Gaussian noise, a
//! four-class softmax model, and score-only stand-ins for image and
//! binding-affinity studies.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::conformal::{LabelSpace, NonconformityScore};
use crate::constraint::InformativeConstraint;
use crate::data::{softmax, ConditionalCdf, Label, LabeledSample, ProbabilityModel, Regressor, SoftmaxOfFeatures};
use crate::optim::{minimize, OptimizerConfig};

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// `Y = μ*(X) + ε`, `X ~ N(0, 1)`, `ε ~ N(0, σ²)`, `μ*(x) = (2x² + 1)/6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionDgp {
    /// Misspecification of the fitted predictor; 0 gives `μ̂ = μ*`.
    pub eta: f64,
    pub noise_sd: f64,
}

impl RegressionDgp {
    pub fn new(eta: f64) -> Self {
        Self { eta, noise_sd: 0.5 }
    }

    pub fn mu_star(x: f64) -> f64 {
        (2.0 * x * x + 1.0) / 6.0
    }

    /// `((η + 2)x² + 1 - η³)/6`
    pub fn mu_hat_at(&self, x: f64) -> f64 {
        let eta = self.eta;
        ((eta + 2.0) * x * x + (1.0 - eta * eta * eta)) / 6.0
    }

    pub fn mu_hat(&self) -> Arc<dyn Regressor> {
        let dgp = *self;
        Arc::new(move |x: &[f64]| dgp.mu_hat_at(x[0]))
    }

    pub fn sample_y<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        Self::mu_star(x) + self.noise_sd * e
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LabeledSample> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                LabeledSample::new(vec![x], Label::Real(self.sample_y(x, rng)))
            })
            .collect()
    }

    /// `P(Y > c | X = x)` under the true model.
    pub fn prob_above(&self, x: f64, c: f64) -> f64 {
        normal_cdf((Self::mu_star(x) - c) / self.noise_sd)
    }
}

impl ConditionalCdf for RegressionDgp {
    fn cdf(&self, x: &[f64], y: f64) -> f64 {
        normal_cdf((y - Self::mu_star(x[0])) / self.noise_sd)
    }
}

/// `n_total` draws and the frozen predictor `μ̂(·; η)`.
pub fn gen_regression<R: Rng + ?Sized>(n_total: usize, eta: f64, rng: &mut R) -> (Vec<LabeledSample>, Arc<dyn Regressor>) {
    let dgp = RegressionDgp::new(eta);
    (dgp.sample(n_total, rng), dgp.mu_hat())
}

/// Four classes with `P(Y = k | x) ∝ exp(xᵀβ_k)` and `X ~ N(0, I₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassificationDgp;

impl ClassificationDgp {
    pub const BETA: [[f64; 2]; 4] = [[1.0, -1.0], [-1.0, 1.0], [1.0, 0.5], [0.5, 1.0]];
    pub const CLASSES: usize = 4;

    pub fn true_probs(x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = Self::BETA.iter().map(|b| b[0] * x[0] + b[1] * x[1]).collect();
        softmax(&logits)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LabeledSample> {
        (0..n)
            .map(|_| {
                let x = vec![rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let y = draw_class(&Self::true_probs(&x), rng);
                LabeledSample::new(x, Label::Class(y))
            })
            .collect()
    }
}

impl ProbabilityModel for ClassificationDgp {
    fn classes(&self) -> usize {
        Self::CLASSES
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        Self::true_probs(x)
    }
}

fn draw_class<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs).expect("valid probabilities").sample(rng)
}

/// Multinomial logistic regression `p̂(k | x) = softmax_k(W_k·x + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    /// One row per class: coefficients followed by the intercept.
    pub coef: Vec<Vec<f64>>,
}

impl SoftmaxRegression {
    pub fn fit(train: &[LabeledSample], classes: usize, optimizer: OptimizerConfig) -> Self {
        let d = train.first().map_or(0, |s| s.x.len());
        let width = d + 1;
        let labels: Vec<usize> = train.iter().map(|s| s.y.as_class().expect("class labels")).collect();
        let objective = |p: &[f64], g: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            let mut loss = 0.0;
            let mut logits = vec![0.0; classes];
            for (s, &y) in train.iter().zip(&labels) {
                for (k, z) in logits.iter_mut().enumerate() {
                    let row = &p[k * width..(k + 1) * width];
                    *z = row[d] + s.x.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                }
                let probs = softmax(&logits);
                loss -= libm::log(probs[y].max(f64::MIN_POSITIVE));
                for k in 0..classes {
                    let r = probs[k] - if k == y { 1.0 } else { 0.0 };
                    let row = &mut g[k * width..(k + 1) * width];
                    for (gj, xj) in row.iter_mut().zip(&s.x) {
                        *gj += r * xj;
                    }
                    row[d] += r;
                }
            }
            let n = train.len().max(1) as f64;
            g.iter_mut().for_each(|v| *v /= n);
            loss / n
        };
        let min = minimize(objective, vec![0.0; classes * width], optimizer);
        Self { coef: min.x.chunks(width).map(<[f64]>::to_vec).collect() }
    }
}

impl ProbabilityModel for SoftmaxRegression {
    fn classes(&self) -> usize {
        self.coef.len()
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let logits: Vec<f64> = self
            .coef
            .iter()
            .map(|row| row[d] + x.iter().zip(row).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        softmax(&logits)
    }
}

/// `n_total` draws and a softmax regression fitted on a separate block of
/// `n_total` draws.
pub fn gen_classification<R: Rng + ?Sized>(n_total: usize, rng: &mut R) -> (Vec<LabeledSample>, Arc<dyn ProbabilityModel>) {
    let dgp = ClassificationDgp;
    let train = dgp.sample(n_total, rng);
    let model = SoftmaxRegression::fit(&train, ClassificationDgp::CLASSES, OptimizerConfig::default());
    (dgp.sample(n_total, rng), Arc::new(model))
}

/// Score-only stand-ins for studies whose fitted models are out of reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticProfile {
    /// Three-class softmax outputs. Features are the logits themselves and
    /// labels are drawn from the softmax, so the model is calibrated. A
    /// `feasible_fraction` of units carry random logits with a unit-specific
    /// scale; the rest have flat logits and carry no class information.
    /// Informative sets are singletons.
    CifarLike { feasible_fraction: f64 },
    /// Binding-affinity predictions `μ̂(x) = x` with
    /// `Y = x + (0.5 + 0.5|x - threshold|)·N(0, 1)`. A `feasible_fraction` of
    /// units have `x` above `threshold`, the rest at or below it.
    DtiLike { feasible_fraction: f64, threshold: f64 },
}

impl SyntheticProfile {
    pub const CIFAR_CLASSES: usize = 3;


    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LabeledSample> {
        match *self {
            Self::CifarLike { feasible_fraction } => (0..n)
                .map(|_| {
                    let x: Vec<f64> = if rng.random::<f64>() < feasible_fraction {
                        let scale = 5.0 * rng.random::<f64>();
                        (0..Self::CIFAR_CLASSES).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
                    } else {
                        vec![0.0; Self::CIFAR_CLASSES]
                    };
                    let y = draw_class(&softmax(&x), rng);
                    LabeledSample::new(x, Label::Class(y))
                })
                .collect(),
            Self::DtiLike { feasible_fraction, threshold } => (0..n)
                .map(|_| {
                    let gap: f64 = 1.5 * rng.sample::<f64, _>(Exp1);
                    let x = if rng.random::<f64>() < feasible_fraction {
                        threshold + gap
                    } else {
                        threshold - gap
                    };
                    let e: f64 = rng.sample(StandardNormal);
                    LabeledSample::new(vec![x], Label::Real(x + (0.5 + 0.5 * gap) * e))
                })
                .collect(),
        }
    }

    pub fn score(&self) -> NonconformityScore {
        match self {
            Self::CifarLike { .. } => NonconformityScore::one_minus_prob(SoftmaxOfFeatures { classes: Self::CIFAR_CLASSES }),
            Self::DtiLike { .. } => NonconformityScore::AbsoluteResidual(self.mu_hat().expect("regression profile")),
        }
    }

    pub fn mu_hat(&self) -> Option<Arc<dyn Regressor>> {
        match self {
            Self::CifarLike { .. } => None,
            Self::DtiLike { .. } => Some(Arc::new(|x: &[f64]| x[0])),
        }
    }

    pub fn p_hat(&self) -> Option<Arc<dyn ProbabilityModel>> {
        match self {
            Self::CifarLike { .. } => Some(Arc::new(SoftmaxOfFeatures { classes: Self::CIFAR_CLASSES })),
            Self::DtiLike { .. } => None,
        }
    }

    pub fn constraint(&self) -> InformativeConstraint {
        match *self {
            Self::CifarLike { .. } => InformativeConstraint::MaxSize(1),
            Self::DtiLike { threshold, .. } => InformativeConstraint::LowerBoundedInterval(threshold),
        }
    }

    pub fn label_space(&self) -> LabelSpace {
        match self {
            Self::CifarLike { .. } => LabelSpace::Classes(Self::CIFAR_CLASSES),
            Self::DtiLike { .. } => LabelSpace::Real,
        }
    }
}

pub fn gen_synthetic_scores<R: Rng + ?Sized>(profile: SyntheticProfile, n_total: usize, rng: &mut R) -> Vec<LabeledSample> {
    profile.sample(n_total, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn regression_formulas() {
        assert_eq!(RegressionDgp::mu_star(0.0), 1.0 / 6.0);
        let exact = RegressionDgp::new(0.0);
        for x in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            assert_eq!(exact.mu_hat_at(x), RegressionDgp::mu_star(x));
        }
        let biased = RegressionDgp::new(1.0);
        assert_eq!(biased.mu_hat_at(2.0), 2.0);
        assert_eq!(biased.mu_hat_at(1.0), 0.5);
    }

    #[test]
    fn conditional_mean() {
        let dgp = RegressionDgp::new(0.0);
        let mut rng = RngStream::new(3, 0).rng();
        let x = 0.8;
        let draws: Vec<f64> = (0..100_000).map(|_| dgp.sample_y(x, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let se = dgp.noise_sd / libm::sqrt(draws.len() as f64);
        assert!((mean - RegressionDgp::mu_star(x)).abs() < 3.0 * se);
    }

    #[test]
    fn same_stream_same_data() {
        let a = gen_regression(50, 0.5, &mut RngStream::new(9, 1).rng()).0;
        let b = gen_regression(50, 0.5, &mut RngStream::new(9, 1).rng()).0;
        assert_eq!(a, b);
        let c = gen_regression(50, 0.5, &mut RngStream::new(9, 2).rng()).0;
        assert_ne!(a, c);
    }

    #[test]
    fn class_probabilities() {
        let p = ClassificationDgp::true_probs(&[0.0, 0.0]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // Logits (1, -1, 1, 0.5) at x = (1, 0): classes 0 and 2 tie on top.
        let p = ClassificationDgp::true_probs(&[1.0, 0.0]);
        assert_eq!(p[0], p[2]);
        assert!(p[0] > p[3] && p[3] > p[1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    /// Class marginals by midpoint quadrature against the bivariate normal.
    fn quadrature_marginals() -> [f64; 4] {
        let h = 0.02;
        let mut out = [0.0; 4];
        let steps = (16.0 / h) as usize;
        for i in 0..steps {
            let a = -8.0 + (i as f64 + 0.5) * h;
            for j in 0..steps {
                let b = -8.0 + (j as f64 + 0.5) * h;
                let w = libm::exp(-(a * a + b * b) / 2.0) / (2.0 * core::f64::consts::PI) * h * h;
                for (o, p) in out.iter_mut().zip(ClassificationDgp::true_probs(&[a, b])) {
                    *o += w * p;
                }
            }
        }
        out
    }

    #[test]
    fn label_frequencies() {
        let truth = quadrature_marginals();
        let n = 100_000;
        let data = ClassificationDgp.sample(n, &mut RngStream::new(4, 0).rng());
        for k in 0..4 {
            let freq = data.iter().filter(|s| s.y == Label::Class(k)).count() as f64 / n as f64;
            let se = libm::sqrt(truth[k] * (1.0 - truth[k]) / n as f64);
            assert!((freq - truth[k]).abs() < 3.0 * se, "class {k}: {freq} vs {}", truth[k]);
        }
    }

    #[test]
    fn softmax_fit_recovers_probabilities() {
        let (_, model) = gen_classification(4000, &mut RngStream::new(5, 0).rng());
        for x in [[0.0, 0.0], [1.0, -0.5], [-1.0, 1.5]] {
            let fit = model.probabilities(&x);
            let truth = ClassificationDgp::true_probs(&x);
            for (a, b) in fit.iter().zip(&truth) {
                assert!((a - b).abs() < 0.06, "{fit:?} vs {truth:?}");
            }
        }
    }

    #[test]
    fn synthetic_profiles() {
        let mut rng = RngStream::new(6, 0).rng();
        let flat = SyntheticProfile::CifarLike { feasible_fraction: 0.0 }.sample(100, &mut rng);
        assert!(flat.iter().all(|s| s.x == vec![0.0; 3]));
        let dti = SyntheticProfile::DtiLike { feasible_fraction: 0.3, threshold: 6.0 };
        let data = dti.sample(10_000, &mut rng);
        let above = data.iter().filter(|s| s.x[0] > 6.0).count() as f64 / 10_000.0;
        assert!((above - 0.3).abs() < 0.03);
        assert_eq!(dti.constraint(), InformativeConstraint::LowerBoundedInterval(6.0));
    }
}
