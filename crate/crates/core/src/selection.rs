//! Generalized conformal p-values and the self-consistent BH threshold.
//!
//! Calibration units whose informative set missed their label ("null"
//! units) act as the reference distribution for test trust scores:
//!
//! ```text
//! p_j = [ #{i null, T_i > T_j} + (1 + #{i null, T_i = T_j}) · U_j ] / (n + 1)
//! ```
//!
//! The selected units are those with `p_j ≤ α̂`, where
//! `α̂ = max{a : (α/m)·#{p ≤ a} ≥ a}`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::Open01;

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::set::PredictionSet;

/// Trust scores of the calibration and test units plus the calibration null
/// flags `1{Y_i ∉ C_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    cal_trust: Vec<f64>,
    cal_null: Vec<bool>,
    test_trust: Vec<f64>,
}

impl ScoredPool {
    pub fn new(cal_trust: Vec<f64>, cal_null: Vec<bool>, test_trust: Vec<f64>) -> Result<Self> {
        if cal_trust.len() != cal_null.len() {
            return Err(Error::LengthMismatch("calibration trust scores and null flags"));
        }
        if cal_trust.iter().chain(&test_trust).any(|t| t.is_nan()) {
            return Err(Error::NonFinite("trust scores"));
        }
        Ok(Self { cal_trust, cal_null, test_trust })
    }

    pub fn n(&self) -> usize {
        self.cal_trust.len()
    }

    pub fn m(&self) -> usize {
        self.test_trust.len()
    }

    pub fn cal_trust(&self) -> &[f64] {
        &self.cal_trust
    }

    pub fn cal_null(&self) -> &[bool] {
        &self.cal_null
    }

    pub fn test_trust(&self) -> &[f64] {
        &self.test_trust
    }

    /// Trust scores of null calibration units, ascending.
    fn sorted_null_trust(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .cal_trust
            .iter()
            .zip(&self.cal_null)
            .filter(|(_, &null)| null)
            .map(|(&t, _)| t)
            .collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    }
}

/// How the uniform tie-breaking variables are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieMode {
    /// Independent `U_j` for every test unit.
    #[default]
    PerUnit,
    /// One `U` shared by all test units.
    SharedU,
    /// `U ≡ 1`.
    Deterministic,
}

/// Source of tie-breaking variables. Draws happen in test-unit order so a
/// given stream always produces the same p-values.
pub(crate) struct TieBreaker {
    mode: TieMode,
    rng: StreamRng,
    shared: f64,
}

impl TieBreaker {
    pub(crate) fn new(mode: TieMode, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let shared = match mode {
            TieMode::SharedU => rng.sample(Open01),
            _ => 1.0,
        };
        Self { mode, rng, shared }
    }

    pub(crate) fn next(&mut self) -> f64 {
        match self.mode {
            TieMode::PerUnit => self.rng.sample(Open01),
            TieMode::SharedU | TieMode::Deterministic => self.shared,
        }
    }

    pub(crate) fn shared(&self) -> f64 {
        self.shared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected test indices, ascending.
    pub selected: Vec<usize>,
    pub threshold_alpha_hat: f64,
    pub pvalues: Vec<f64>,
    pub k_hat: usize,
}

pub fn generalized_conformal_pvalues(pool: &ScoredPool, tie_mode: TieMode, rng: RngStream) -> Vec<f64> {
    let mut ties = TieBreaker::new(tie_mode, rng);
    gc_pvalues_with(pool, &mut ties)
}

pub(crate) fn gc_pvalues_with(pool: &ScoredPool, ties: &mut TieBreaker) -> Vec<f64> {
    let nulls = pool.sorted_null_trust();
    let denom = (pool.n() + 1) as f64;
    pool.test_trust
        .iter()
        .map(|&t| {
            let below_or_eq = nulls.partition_point(|&s| s <= t);
            let below = nulls.partition_point(|&s| s < t);
            let greater = nulls.len() - below_or_eq;
            let equal = below_or_eq - below;
            let u = ties.next();
            (greater as f64 + (1 + equal) as f64 * u) / denom
        })
        .collect()
}

/// `α·k/m`; every threshold comparison goes through this one expression.
pub(crate) fn bh_level(alpha: f64, k: usize, m: usize) -> f64 {
    alpha * k as f64 / m as f64
}

/// Self-consistent BH: `α̂ = max{a ∈ [0, 1] : (α/m)·#{p_j ≤ a} ≥ a}` with
/// `max ∅ = 0`, selecting `{j : p_j ≤ α̂}`.
///
/// Feasible thresholds satisfy `a ≤ (α/m)·r(a)`, so the maximum sits on the
/// lattice `a = α·k/m`; it is found by scanning `k` downwards.
pub fn bh_select(pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let count_at_most = |a: f64| sorted.partition_point(|&p| p <= a);
    let k_hat = (1..=m)
        .rev()
        .find(|&k| count_at_most(bh_level(alpha, k, m)) >= k)
        .unwrap_or(0);
    let threshold = if k_hat == 0 { 0.0 } else { bh_level(alpha, k_hat, m) };
    let selected: Vec<usize> = if k_hat == 0 {
        Vec::new()
    } else {
        (0..m).filter(|&j| pvalues[j] <= threshold).collect()
    };
    debug_assert_eq!(selected.len(), k_hat);
    Ok(SelectionResult { selected, threshold_alpha_hat: threshold, pvalues: pvalues.to_vec(), k_hat })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Counting-knockoff threshold on trust scores:
/// `τ̂ = min{τ ∈ {T_j} : FDP̂(τ) ≤ α}`, selecting `{j : T_j ≥ τ̂}`, with
///
/// ```text
/// FDP̂(τ) = [#{i null, T_i > τ} + (1 + #{i null, T_i = τ})·U] / (1 ∨ #{j : T_j ≥ τ}) · m/(n+1)
/// ```
///
/// `U ≡ 1` in [`TieMode::Deterministic`] and a single shared draw in
/// [`TieMode::SharedU`]; per-unit tie breaking has no counting form.
/// The returned p-values are the matching generalized conformal p-values.
pub fn counting_knockoff_select(
    pool: &ScoredPool,
    alpha: f64,
    tie_mode: TieMode,
    rng: RngStream,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    if tie_mode == TieMode::PerUnit {
        return Err(Error::Unsupported("counting knockoff with per-unit tie breaking"));
    }
    let mut ties = TieBreaker::new(tie_mode, rng);
    let u = ties.shared();
    let nulls = pool.sorted_null_trust();
    let (n, m) = (pool.n(), pool.m());
    let mut test_sorted = pool.test_trust.clone();
    test_sorted.sort_unstable_by(f64::total_cmp);

    let fdp_hat = |tau: f64| {
        let null_le = nulls.partition_point(|&s| s <= tau);
        let null_gt = nulls.len() - null_le;
        let null_eq = null_le - nulls.partition_point(|&s| s < tau);
        let test_ge = m - test_sorted.partition_point(|&s| s < tau);
        let numer = null_gt as f64 + (1 + null_eq) as f64 * u;
        numer * m as f64 / (test_ge.max(1) as f64 * (n + 1) as f64)
    };
    let tau_hat = test_sorted.iter().copied().find(|&tau| fdp_hat(tau) <= alpha);

    let selected: Vec<usize> = match tau_hat {
        Some(tau) => (0..m).filter(|&j| pool.test_trust[j] >= tau).collect(),
        None => Vec::new(),
    };
    let k_hat = selected.len();
    let pvalues = gc_pvalues_with(pool, &mut ties);
    Ok(SelectionResult {
        threshold_alpha_hat: if k_hat == 0 { 0.0 } else { bh_level(alpha, k_hat, m) },
        selected,
        pvalues,
        k_hat,
    })
}

/// A calibration unit after its informative set and trust score have been
/// computed.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub set: PredictionSet,
    pub trust: f64,
    /// `Y_i ∉ C_i`
    pub null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub set: PredictionSet,
    pub trust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScipOptions {
    pub tie_mode: TieMode,
    /// Drop empty-set test units from the BH denominator instead of keeping
    /// the full test count.
    pub shrink_m: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScipOutput {
    pub selection: SelectionResult,
    /// `(test index, informative set)` for each selected unit.
    pub reported: Vec<(usize, PredictionSet)>,
}

/// Generalized conformal p-values on the supplied records followed by BH.
///
/// Units whose informative set is empty carry trust 0 and are never
/// selected; their p-value is reported as 1.
pub fn scip_select(
    cal: &[CalibrationRecord],
    test: &[TestRecord],
    alpha: f64,
    options: ScipOptions,
    rng: RngStream,
) -> Result<ScipOutput> {
    let trust = |set: &PredictionSet, t: f64| if set.is_empty() { 0.0 } else { t };
    let pool = ScoredPool::new(
        cal.iter().map(|r| trust(&r.set, r.trust)).collect(),
        cal.iter().map(|r| r.null || r.set.is_empty()).collect(),
        test.iter().map(|r| trust(&r.set, r.trust)).collect(),
    )?;
    let mut pvalues = generalized_conformal_pvalues(&pool, options.tie_mode, rng);
    for (p, r) in pvalues.iter_mut().zip(test) {
        if r.set.is_empty() {
            *p = 1.0;
        }
    }
    let selection = if options.shrink_m {
        let live: Vec<usize> = (0..test.len()).filter(|&j| !test[j].set.is_empty()).collect();
        let sub: Vec<f64> = live.iter().map(|&j| pvalues[j]).collect();
        let inner = bh_select(&sub, alpha)?;
        SelectionResult {
            selected: inner.selected.iter().map(|&i| live[i]).collect(),
            threshold_alpha_hat: inner.threshold_alpha_hat,
            pvalues,
            k_hat: inner.k_hat,
        }
    } else {
        bh_select(&pvalues, alpha)?
    };
    let reported = selection
        .selected
        .iter()
        .map(|&j| (j, test[j].set.clone()))
        .collect();
    Ok(ScipOutput { selection, reported })
}
