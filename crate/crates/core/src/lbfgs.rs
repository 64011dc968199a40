//! Limited-memory BFGS over flat parameter vectors.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Length of the first (steepest-descent) step.
    pub init_step: f64,
    pub grad_tol: f64,
    /// Stop once the cost is at or below this value.
    pub target: f64,
    pub armijo_c: f64,
    pub max_halvings: usize,
    /// Line-search failures tolerated; each one clears the memory and halves
    /// the initial step.
    pub max_restarts: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 200,
            init_step: 1.0,
            grad_tol: 1e-10,
            target: f64::NEG_INFINITY,
            armijo_c: 1e-4,
            max_halvings: 30,
            max_restarts: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
    pub restarts: usize,
    /// Cost after every accepted iteration, starting with the initial cost.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the cost and its gradient. Every accepted
/// step satisfies the Armijo condition, so the trace is non-increasing.
pub fn lbfgs<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::invalid("cost is not finite at the starting point"));
    }
    let mut evals = 1;
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut first_step = cfg.init_step;
    let mut restarts = 0;
    let mut converged = false;
    let mut iters = 0;

    while iters < cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < cfg.grad_tol || fx <= cfg.target {
            converged = true;
            break;
        }
        iters += 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| first_step / gnorm.max(1e-300));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            let scale = first_step / gnorm.max(1e-300);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            evals += 1;
            if let Ok((ft, gt)) = f(&xt) {
                if ft.is_finite() && ft <= fx + cfg.armijo_c * t * slope {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            if restarts >= cfg.max_restarts {
                log::debug!("L-BFGS line search failed after {restarts} restarts");
                break;
            }
            restarts += 1;
            hist.clear();
            first_step *= 0.5;
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fxn;
        g = gn;
        trace.push(fx);
    }
    if !converged && (dot(&g, &g).sqrt() < cfg.grad_tol || fx <= cfg.target) {
        converged = true;
    }
    Ok(LbfgsResult {
        x,
        f: fx,
        iters,
        evals,
        converged,
        restarts,
        trace,
    })
}
