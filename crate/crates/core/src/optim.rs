use alloc::vec;
use alloc::vec::Vec;

/// Stopping rules for full-batch gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Stop once the gradient's largest absolute entry falls below this.
    pub grad_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { max_iter: 5000, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub(crate) x: Vec<f64>,
    /// Objective value at the start and after every accepted step.
    pub(crate) trace: Vec<f64>,
    pub(crate) iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with a Barzilai–Borwein trial step, halved until the
/// Armijo sufficient-decrease condition holds.
///
/// `objective(x, grad)` returns `f(x)` and writes `∇f(x)` into `grad`.
pub(crate) fn minimize<F>(objective: F, x0: Vec<f64>, config: OptimizerConfig) -> Minimum
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; d];
    let mut f = objective(&x, &mut g);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut iterations = 0;

    while iterations < config.max_iter && inf_norm(&g) >= config.grad_tol {
        let g_sq = dot(&g, &g);
        let mut t = step;
        let f_new = loop {
            for i in 0..d {
                x_new[i] = x[i] - t * g[i];
            }
            let value = objective(&x_new, &mut g_new);
            if value <= f - 1e-4 * t * g_sq {
                break Some(value);
            }
            t *= 0.5;
            if t < 1e-30 {
                break None;
            }
        };
        let Some(f_new) = f_new else { break };
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..d {
            let s = x_new[i] - x[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        f = f_new;
        trace.push(f);
        iterations += 1;
    }
    Minimum { x, trace, iterations }
}
