//! Full-batch accelerated proximal gradient (FISTA) with backtracking and
//! function-value restarts. Slow per unit of progress compared to SAGA but
//! deterministic and free of sampling, which makes it the reference solver.

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Zip};

use super::loss::{loss_and_grad_raw, loss_raw, penalty, soft_threshold};
use super::{check_problem, FitOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::tensor_io::LabelVector;
use crate::weights::{FeatureSpace, WeightMatrix};

#[derive(Clone)]
struct Point {
    w: Array2<f64>,
    b: Option<Array1<f64>>,
}

struct Smooth<'a> {
    features: &'a ArrayView2<'a, f64>,
    labels: &'a [usize],
    l2: f64,
}

impl Smooth<'_> {
    fn value(&self, p: &Point) -> f64 {
        let l2 = if self.l2 > 0.0 {
            0.5 * self.l2 * p.w.iter().map(|v| v * v).sum::<f64>()
        } else {
            0.0
        };
        loss_raw(&p.w.view(), p.b.as_ref().map(|b| b.view()).as_ref(), self.features, self.labels) + l2
    }

    fn value_grad(&self, p: &Point) -> (f64, Point) {
        let lg = loss_and_grad_raw(
            &p.w.view(),
            p.b.as_ref().map(|b| b.view()).as_ref(),
            self.features,
            self.labels,
        );
        let mut grad = lg.grad;
        let mut value = lg.loss;
        if self.l2 > 0.0 {
            value += 0.5 * self.l2 * p.w.iter().map(|v| v * v).sum::<f64>();
            grad.scaled_add(self.l2, &p.w);
        }
        (
            value,
            Point {
                w: grad,
                b: lg.grad_intercept,
            },
        )
    }
}

fn prox_step(z: &Point, g: &Point, step: f64, lambda: f64) -> Point {
    let mut w = Array2::zeros(z.w.dim());
    Zip::from(&mut w)
        .and(&z.w)
        .and(&g.w)
        .for_each(|out, &zv, &gv| *out = soft_threshold(zv - step * gv, step * lambda));
    let b = z
        .b
        .as_ref()
        .zip(g.b.as_ref())
        .map(|(zb, gb)| zb - &(gb * step));
    Point { w, b }
}

fn inner_and_sq(a: &Point, b: &Point, g: &Point) -> (f64, f64) {
    // <g, a − b> and ‖a − b‖²
    let mut inner = 0.0;
    let mut sq = 0.0;
    Zip::from(&a.w).and(&b.w).and(&g.w).for_each(|&x, &y, &gv| {
        let d = x - y;
        inner += gv * d;
        sq += d * d;
    });
    if let (Some(ab), Some(bb), Some(gb)) = (&a.b, &b.b, &g.b) {
        Zip::from(ab).and(bb).and(gb).for_each(|&x, &y, &gv| {
            let d = x - y;
            inner += gv * d;
            sq += d * d;
        });
    }
    (inner, sq)
}

fn sup_diff(a: &Point, b: &Point) -> f64 {
    let mut m = a
        .w
        .iter()
        .zip(b.w.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if let (Some(ab), Some(bb)) = (&a.b, &b.b) {
        m = ab.iter().zip(bb.iter()).fold(m, |m, (x, y)| m.max((x - y).abs()));
    }
    m
}

fn extrapolate(x_new: &Point, x_old: &Point, beta: f64) -> Point {
    let w = x_new.w.clone() + &((&x_new.w - &x_old.w) * beta);
    let b = x_new
        .b
        .as_ref()
        .zip(x_old.b.as_ref())
        .map(|(n, o)| n.clone() + &((n - o) * beta));
    Point { w, b }
}

/// Minimizes `loss + λ‖W‖₁ (+ (l2/2)‖W‖²)` from `W = 0`.
pub fn fista_fit(
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FitOutcome> {
    fista_fit_from(features, labels, lambda, config, None)
}

pub fn fista_fit_from(
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    lambda: f64,
    config: &SolverConfig,
    init: Option<&WeightMatrix>,
) -> Result<FitOutcome> {
    check_problem(features, labels)?;
    config.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let (k, f) = (labels.n_classes, features.ncols());
    let smooth = Smooth {
        features,
        labels: labels.as_slice(),
        l2: config.l2,
    };
    let mut x = match init {
        Some(w) => Point {
            w: w.weights.clone(),
            b: config
                .intercept
                .then(|| w.intercept.clone().unwrap_or_else(|| Array1::zeros(k))),
        },
        None => Point {
            w: Array2::zeros((k, f)),
            b: config.intercept.then(|| Array1::zeros(k)),
        },
    };

    // Curvature bound of the mean softmax loss: ½ max_i ‖h_i‖² (+1 with an
    // intercept). Backtracking corrects it when too small.
    let max_sq = features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r))
        .fold(0.0f64, f64::max);
    let mut lipschitz = (0.5 * (max_sq + if config.intercept { 1.0 } else { 0.0 }) + config.l2)
        .max(1e-12);

    let mut objective = smooth.value(&x) + penalty(&x.w.view(), lambda, 0.0);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_gap = f64::INFINITY;

    while iterations < config.max_iter {
        iterations += 1;
        let (f_z, g_z) = smooth.value_grad(&z);
        let (x_new, f_new) = loop {
            let candidate = prox_step(&z, &g_z, 1.0 / lipschitz, lambda);
            let f_c = smooth.value(&candidate);
            let (inner, sq) = inner_and_sq(&candidate, &z, &g_z);
            let model = f_z + inner + 0.5 * lipschitz * sq;
            if f_c <= model + 1e-13 * f_z.abs().max(1.0) || sq == 0.0 {
                break (candidate, f_c);
            }
            lipschitz *= 2.0;
        };
        let obj_new = f_new + penalty(&x_new.w.view(), lambda, 0.0);
        if !obj_new.is_finite() {
            return Err(Error::Diverged {
                objective: obj_new,
                step: 1.0 / lipschitz,
            });
        }
        last_gap = lipschitz * sup_diff(&x_new, &z);
        if obj_new > objective && t > 1.0 {
            // momentum overshoot: restart from the last accepted iterate
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = extrapolate(&x_new, &x, (t - 1.0) / t_new);
        x = x_new;
        t = t_new;
        objective = obj_new.min(objective);
        if last_gap <= config.grad_tol {
            converged = true;
            break;
        }
        lipschitz *= 0.98;
    }

    if !converged {
        warn!(
            "fista: no convergence after {iterations} iterations; objective {objective:.6e}, \
             prox-gradient sup-norm {last_gap:.3e}"
        );
    }
    let objective = smooth.value(&x) + penalty(&x.w.view(), lambda, 0.0);
    let weights = WeightMatrix::dense(x.w, FeatureSpace::Avd).with_intercept(x.b);
    Ok(FitOutcome {
        weights,
        objective,
        iterations,
        converged,
    })
}
