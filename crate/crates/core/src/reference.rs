//! Textbook formulations of procedures that the main pipeline recovers as
//! special cases. They are written with plain loops and no shared helpers so
//! they can serve as independent cross-checks.

use alloc::vec::Vec;

/// Classical step-up Benjamini–Hochberg: sort, find the largest `k` with
/// `p_(k) ≤ αk/m`, reject the `k` smallest. Returns ascending indices.
pub fn bh_step_up(pvalues: &[f64], alpha: f64) -> Vec<usize> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut k = 0;
    for rank in (1..=m).rev() {
        if pvalues[order[rank - 1]] <= alpha * rank as f64 / m as f64 {
            k = rank;
            break;
        }
    }
    if k == 0 {
        return Vec::new();
    }
    let cutoff = pvalues[order[k - 1]];
    let mut out: Vec<usize> = (0..m).filter(|&j| pvalues[j] <= cutoff).collect();
    out.sort_unstable();
    out
}

/// Target-class selection with estimated q-values
///
/// ```text
/// Q_j = [1 + #{i : Y_i ≠ y0, S_i ≥ S_j}] / (1 ∨ #{j' : S_j' ≥ S_j}) · m/(n+1)
/// ```
///
/// selecting every test unit whose score reaches the smallest score with
/// `Q_j ≤ α`.
pub fn fasi_select(
    cal_scores: &[f64],
    cal_labels: &[usize],
    y0: usize,
    test_scores: &[f64],
    alpha: f64,
) -> Vec<usize> {
    let wrong: Vec<bool> = cal_labels.iter().map(|&y| y != y0).collect();
    knockoff_style(cal_scores, &wrong, test_scores, alpha)
}

/// All-class selective classification: each unit is tentatively assigned its
/// most probable class with score equal to that probability, and calibration
/// errors are the units whose tentative class is wrong.
///
/// Returns `(test index, assigned class)` pairs.
pub fn zhao_su_select(
    cal_probs: &[Vec<f64>],
    cal_labels: &[usize],
    test_probs: &[Vec<f64>],
    alpha: f64,
) -> Vec<(usize, usize)> {
    let decide = |p: &Vec<f64>| {
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        (best, p[best])
    };
    let cal: Vec<(usize, f64)> = cal_probs.iter().map(decide).collect();
    let test: Vec<(usize, f64)> = test_probs.iter().map(decide).collect();
    let wrong: Vec<bool> = cal.iter().zip(cal_labels).map(|(&(k, _), &y)| k != y).collect();
    let cal_s: Vec<f64> = cal.iter().map(|&(_, s)| s).collect();
    let test_s: Vec<f64> = test.iter().map(|&(_, s)| s).collect();
    knockoff_style(&cal_s, &wrong, &test_s, alpha)
        .into_iter()
        .map(|j| (j, test[j].0))
        .collect()
}

fn knockoff_style(cal_s: &[f64], wrong: &[bool], test_s: &[f64], alpha: f64) -> Vec<usize> {
    let n = cal_s.len();
    let m = test_s.len();
    let mut tau: Option<f64> = None;
    for j in 0..m {
        let s = test_s[j];
        let mut false_count = 1usize;
        for i in 0..n {
            if wrong[i] && cal_s[i] >= s {
                false_count += 1;
            }
        }
        let mut at_least = 0usize;
        for jj in 0..m {
            if test_s[jj] >= s {
                at_least += 1;
            }
        }
        let q = false_count as f64 / at_least.max(1) as f64 * m as f64 / (n + 1) as f64;
        if q <= alpha && tau.is_none_or(|t| s < t) {
            tau = Some(s);
        }
    }
    match tau {
        Some(t) => (0..m).filter(|&j| test_s[j] >= t).collect(),
        None => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn step_up_fixture() {
        assert_eq!(bh_step_up(&[0.01, 0.5, 0.02], 0.1), vec![0, 2]);
        assert_eq!(bh_step_up(&[1.0, 1.0], 0.1), Vec::<usize>::new());
        // The smallest p-value misses its own rank threshold but is still
        // rejected through a larger rank.
        assert_eq!(bh_step_up(&[0.06, 0.055, 0.9, 0.07], 0.2), vec![0, 1, 3]);
    }

    #[test]
    fn fasi_fixture() {
        // n = 3, m = 2; the only wrong-class calibration unit has score 0.5.
        let sel = fasi_select(&[0.9, 0.5, 0.2], &[0, 1, 0], 0, &[0.8, 0.3], 0.7);
        // Q(0.8) = 1/1 · 2/4 = 0.5; Q(0.3) = 2/2 · 2/4 = 0.5 → both selected.
        assert_eq!(sel, vec![0, 1]);
        let sel = fasi_select(&[0.9, 0.5, 0.2], &[0, 1, 0], 0, &[0.8, 0.3], 0.4);
        assert!(sel.is_empty());
    }

    #[test]
    fn zhao_su_assigns_argmax() {
        let cal = vec![vec![0.7, 0.3], vec![0.6, 0.4]];
        let test = vec![vec![0.1, 0.9], vec![0.5, 0.5]];
        let sel = zhao_su_select(&cal, &[0, 1], &test, 0.9);
        assert_eq!(sel, vec![(0, 1), (1, 0)]);
    }
}
