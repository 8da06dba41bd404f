//! Limited-memory quasi-Newton minimization.
//!
//! Plain L-BFGS (two-loop recursion, backtracking Armijo line search) for
//! smooth objectives, and an orthant-wise variant for objectives with an
//! added L1 penalty. Everything is sequential f64 arithmetic, so runs are
//! bit-reproducible.

use std::collections::VecDeque;

use crate::errors::{Error, Result};

/// One optimizer iteration, as recorded in the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

/// Minimizer settings.
#[derive(Debug, Clone)]
pub struct OptimParams {
    /// Number of curvature pairs kept for the two-loop recursion.
    pub history: usize,
    pub max_iterations: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    /// Orthant-wise L1 penalty coefficient; the callback must return the
    /// smooth part only.
    pub l1: Option<f64>,
}

impl Default for OptimParams {
    fn default() -> Self {
        OptimParams {
            history: 10,
            max_iterations: 500,
            tolerance: 1e-6,
            l1: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: `direction = -H * seed` with the implicit inverse
/// Hessian from the curvature history.
fn two_loop(seed: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = seed.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Pseudo-gradient of `f(x) + c * |x|_1` at `x` given the smooth gradient.
fn pseudo_gradient(x: &[f64], grad: &[f64], c: f64) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .map(|(&xi, &gi)| {
            if xi > 0.0 {
                gi + c
            } else if xi < 0.0 {
                gi - c
            } else if gi + c < 0.0 {
                gi + c
            } else if gi - c > 0.0 {
                gi - c
            } else {
                0.0
            }
        })
        .collect()
}

/// Minimizes `f` (plus an optional L1 penalty) starting from `x0`.
///
/// `f` fills `grad` with the smooth gradient and returns the smooth
/// objective value. Returns the minimizer and the per-iteration log.
pub fn minimize<F>(
    mut f: F,
    x0: Vec<f64>,
    params: &OptimParams,
) -> Result<(Vec<f64>, Vec<IterationRecord>)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    let c1 = 1e-4;
    let l1 = params.l1.unwrap_or(0.0);
    let owlqn = params.l1.is_some() && l1 > 0.0;

    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad)? + l1 * l1_norm(&x);
    if !value.is_finite() {
        return Err(Error::Optimization("objective not finite at start".into()));
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(params.history);
    let mut log = Vec::new();
    let mut new_grad = vec![0.0; n];

    for iteration in 0..params.max_iterations {
        // Steepest-descent seed: the pseudo-gradient in the L1 case.
        let seed = if owlqn {
            pseudo_gradient(&x, &grad, l1)
        } else {
            grad.clone()
        };
        let gnorm = norm(&seed);
        log.push(IterationRecord {
            iteration,
            objective: value,
            grad_norm: gnorm,
        });
        if gnorm <= 1e-12 {
            break;
        }

        let mut direction = two_loop(&seed, &history);
        if owlqn {
            // Align the direction with the pseudo-gradient descent orthant.
            for (di, si) in direction.iter_mut().zip(&seed) {
                if *di * -si <= 0.0 {
                    *di = 0.0;
                }
            }
        }
        let mut descent = dot(&seed, &direction);
        if descent.is_nan() || descent >= 0.0 {
            // Not a descent direction: drop history, fall back to steepest.
            history.clear();
            direction = seed.iter().map(|g| -g).collect();
            descent = dot(&seed, &direction);
            if descent.is_nan() || descent >= 0.0 {
                break;
            }
        }

        // The orthant each coordinate must stay in during the line search.
        let orthant: Vec<f64> = if owlqn {
            x.iter()
                .zip(&seed)
                .map(|(&xi, &si)| if xi != 0.0 { xi.signum() } else { -si.signum() })
                .collect()
        } else {
            Vec::new()
        };

        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = vec![0.0; n];
        let mut value_new = value;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = x[i] + step * direction[i];
                if owlqn && x_new[i] * orthant[i] < 0.0 {
                    x_new[i] = 0.0; // orthant projection
                }
            }
            let smooth = f(&x_new, &mut new_grad)?;
            value_new = smooth + l1 * l1_norm(&x_new);
            if value_new.is_finite() && value_new <= value + c1 * step * descent {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No further progress along any tested step size.
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == params.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel_change = (value - value_new).abs() / value.abs().max(1.0);
        x = x_new.clone();
        std::mem::swap(&mut grad, &mut new_grad);
        value = value_new;
        if rel_change < params.tolerance {
            log.push(IterationRecord {
                iteration: iteration + 1,
                objective: value,
                grad_norm: norm(&grad),
            });
            break;
        }
    }
    Ok((x, log))
}
