//! Per-replication error and power metrics and their Monte-Carlo aggregates.

use alloc::vec::Vec;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::set::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationMetrics {
    /// False coverage proportion `n_false / max(1, n_selected)`.
    pub fcp: f64,
    /// Number of reported sets.
    pub cpow: f64,
    /// `Σ 1/|C|` over reported sets, unbounded sets contributing 0.
    pub rpow: f64,
    pub n_selected: usize,
    pub n_false: usize,
}

/// `truth[j]` is the label of test unit `j`.
pub fn replication_metrics(reported: &[(usize, PredictionSet)], truth: &[Label]) -> Result<ReplicationMetrics> {
    let mut n_false = 0;
    let mut rpow = 0.0;
    for (j, set) in reported {
        let y = truth.get(*j).ok_or(Error::MissingTruth(*j))?;
        if !set.contains(*y)? {
            n_false += 1;
        }
        rpow += set.measure().reciprocal();
    }
    let n_selected = reported.len();
    Ok(ReplicationMetrics {
        fcp: n_false as f64 / n_selected.max(1) as f64,
        cpow: n_selected as f64,
        rpow,
        n_selected,
        n_false,
    })
}

/// `Σ n_false / Σ n_selected`
pub fn mfcr_estimate(n_false: &[usize], n_selected: &[usize]) -> Result<f64> {
    if n_false.len() != n_selected.len() {
        return Err(Error::LengthMismatch("false and selected counts"));
    }
    let selected: usize = n_selected.iter().sum();
    if selected == 0 {
        return Err(Error::NoSelections);
    }
    Ok(n_false.iter().sum::<usize>() as f64 / selected as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithError {
    pub mean: f64,
    /// Sample standard deviation over `√reps`; 0 with fewer than two values.
    pub stderr: f64,
}

pub fn mean_stderr(values: &[f64]) -> MeanWithError {
    let n = values.len();
    if n == 0 {
        return MeanWithError { mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MeanWithError { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MeanWithError { mean, stderr: libm::sqrt(var / n as f64) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateMetrics {
    pub fcr: MeanWithError,
    pub cpow: MeanWithError,
    pub rpow: MeanWithError,
    /// `None` when no replication selected anything.
    pub mfcr: Option<f64>,
    pub reps: usize,
}

pub fn aggregate(reps: &[ReplicationMetrics]) -> AggregateMetrics {
    let col = |f: fn(&ReplicationMetrics) -> f64| reps.iter().map(f).collect::<Vec<_>>();
    let n_false: Vec<usize> = reps.iter().map(|r| r.n_false).collect();
    let n_sel: Vec<usize> = reps.iter().map(|r| r.n_selected).collect();
    AggregateMetrics {
        fcr: mean_stderr(&col(|r| r.fcp)),
        cpow: mean_stderr(&col(|r| r.cpow)),
        rpow: mean_stderr(&col(|r| r.rpow)),
        mfcr: mfcr_estimate(&n_false, &n_sel).ok(),
        reps: reps.len(),
    }
}

/// Smallest score threshold `t` such that selecting `{score ≥ t}` keeps the
/// ratio `Σ (1 - P(cover)) / #selected` at most `alpha`, where `coverage[i]`
/// is the coverage probability of unit `i`. Returns `+∞` when no threshold
/// qualifies.
///
/// On a large reference sample this calibrates a score to a marginal false
/// coverage target.
pub fn threshold_for_mfcr(scores: &[f64], coverage: &[f64], alpha: f64) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut best = f64::INFINITY;
    let mut false_mass = 0.0;
    let mut k = 0;
    while k < order.len() {
        // Admit a whole block of tied scores at once.
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            false_mass += 1.0 - coverage[order[k]];
            k += 1;
        }
        if false_mass <= alpha * k as f64 {
            best = t;
        }
    }
    best
}
