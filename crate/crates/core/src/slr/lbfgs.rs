//! Limited-memory BFGS with Armijo backtracking for smooth objectives over a
//! flat parameter vector.

use std::collections::VecDeque;

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// Stops when the gradient sup-norm is at most `grad_tol` or after
/// `max_iter` iterations.
pub fn minimize_lbfgs<F>(mut objective: F, x0: Vec<f64>, max_iter: usize, grad_tol: f64) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = objective(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;

    while iterations < max_iter {
        if norm_inf(&grad) <= grad_tol {
            break;
        }
        iterations += 1;

        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / norm_inf(&grad).max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (a - beta) * sv);
        }

        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // lost descent; fall back to steepest descent
            history.clear();
            dir = grad.iter().map(|g| -g / norm_inf(&grad).max(1.0)).collect();
            slope = dot(&grad, &dir);
        }

        let mut step = 1.0;
        let (next_x, next_value, next_grad) = loop {
            let candidate: Vec<f64> = x.iter().zip(&dir).map(|(xv, d)| xv + step * d).collect();
            let (v, g) = objective(&candidate);
            if v.is_finite() && v <= value + ARMIJO * step * slope {
                break (candidate, v, g);
            }
            step *= 0.5;
            if step < 1e-20 {
                return LbfgsOutcome {
                    grad_norm_inf: norm_inf(&grad),
                    x,
                    value,
                    iterations,
                    converged: false,
                };
            }
        };

        let s: Vec<f64> = next_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let stalled = (value - next_value).abs() <= f64::EPSILON * value.abs();
        x = next_x;
        value = next_value;
        grad = next_grad;
        if stalled && norm_inf(&grad) > grad_tol {
            break;
        }
    }

    let grad_norm_inf = norm_inf(&grad);
    LbfgsOutcome {
        x,
        value,
        converged: grad_norm_inf <= grad_tol,
        grad_norm_inf,
        iterations,
    }
}
