//! Proximal SAGA for the ℓ1-penalized multinomial loss.
//!
//! The per-sample gradient of the loss is `r_i h_iᵀ` with residual
//! `r_i = softmax(W h_i + b) − e_{y_i}`, so the gradient table only stores
//! `r_i` (|C| values per sample). Each step draws `i` uniformly and applies
//!
//! ```text
//! W ← prox_{ηλ‖·‖₁}( W − η [ (r_i^new − r_i^old) h_iᵀ + Ḡ ] )
//! ```
//!
//! where `Ḡ` is the running mean of the stored gradients, updated
//! afterwards. The step size is `η = 1 / (3 L_max)` where
//! `L_max = ½ max_i ‖h_i‖²` (the `‖h_i‖²` gains 1 with an intercept) is
//! the largest per-sample smoothness constant: the softmax Hessian
//! `diag(p) − ppᵀ` has spectral norm at most ½.

use log::debug;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::loss::{class_scores, penalty, residuals_in_place};
use super::{check_problem, FitOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::numeric::softmax_parts;
use crate::rng::SeededRng;
use crate::tensor_io::LabelVector;
use crate::weights::{FeatureSpace, WeightMatrix};

/// Dot product with four independent accumulators so the reduction is not
/// bound by add latency.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn saga_step_size(features: &ArrayView2<f64>, intercept: bool) -> f64 {
    let sq_max = features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r))
        .fold(0.0f64, f64::max)
        + if intercept { 1.0 } else { 0.0 };
    let l_max = 0.5 * sq_max;
    1.0 / (3.0 * l_max.max(f64::MIN_POSITIVE))
}

/// Fits from `W = 0`.
pub fn prox_saga_fit(
    features: &ArrayView2<f64>,
    labels: &LabelVector,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FitOutcome> {
    prox_saga_fit_from(features, labels, lambda, config, None)
}

/// Epochs between objective evaluations. The full scoring pass is a fifth
/// of an epoch's cost, too much to pay every time.
const CHECK_EVERY: usize = 4;

/// Fits starting from `init` (warm start). Deterministic in `config.seed`.
pub fn prox_saga_fit_from(
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
    let (n, f) = features.dim();
    let k = labels.n_classes;
    let y = labels.as_slice();
    let nf = n as f64;

    let mut w = init.map_or_else(|| Array2::zeros((k, f)), |w| w.weights.as_standard_layout().into_owned());
    let mut b: Option<Array1<f64>> = config.intercept.then(|| {
        init.and_then(|w| w.intercept.clone())
            .unwrap_or_else(|| Array1::zeros(k))
    });

    // Gradient table at the starting point, and its mean.
    let mut table = class_scores(&w.view(), b.as_ref().map(|b| b.view()).as_ref(), features)
        .as_standard_layout()
        .into_owned();
    let initial_loss = residuals_in_place(&mut table, y) / nf;
    let mut mean_grad = (table.t().dot(features) / nf).as_standard_layout().into_owned();
    let mut mean_resid = table.sum_axis(ndarray::Axis(0)) / nf;

    let step = saga_step_size(features, config.intercept);
    let threshold = step * lambda;
    let mut rng = SeededRng::new(config.seed);
    let mut objective = initial_loss + penalty(&w.view(), lambda, 0.0);
    let mut converged = false;
    let mut epochs = 0;
    let feats = features.as_standard_layout();
    let mut kernel = Kernel {
        feats: feats.as_slice().expect("standard layout"),
        y,
        n,
        f,
        k,
        step,
        threshold,
        w: w.as_slice_mut().expect("fresh array"),
        mean_grad: mean_grad.as_slice_mut().expect("fresh array"),
        table: table.as_slice_mut().expect("fresh array"),
        intercept: b.as_mut().map(|b| b.as_slice_mut().expect("fresh array")),
        mean_resid: mean_resid.as_slice_mut().expect("fresh array"),
        resid: vec![0.0; k],
        delta: vec![0.0; k],
    };

    while epochs < config.epochs {
        epochs += 1;
        kernel.epoch(&mut rng);
        if !epochs.is_multiple_of(CHECK_EVERY) && epochs < config.epochs {
            continue;
        }

        let w_buf = &*kernel.w;
        let b = kernel.intercept.as_deref().map(ArrayView1::from);
        let w = ArrayView2::from_shape((k, f), w_buf).expect("shape");
        let mut scores = class_scores(&w, b.as_ref(), features);
        let loss = residuals_in_place(&mut scores, y) / nf;
        let new_objective = loss + penalty(&w, lambda, 0.0);
        if !new_objective.is_finite() {
            return Err(Error::Diverged {
                objective: new_objective,
                step,
            });
        }
        let span = (epochs - 1) % CHECK_EVERY + 1;
        let change =
            (objective - new_objective).abs() / new_objective.abs().max(f64::MIN_POSITIVE) / span as f64;
        objective = new_objective;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    drop(kernel);
    debug!("saga: lambda {lambda:.4e}, {epochs} epochs, objective {objective:.10e}");

    let weights = WeightMatrix::dense(w, FeatureSpace::Avd).with_intercept(b);
    Ok(FitOutcome {
        weights,
        objective,
        iterations: epochs,
        converged,
    })
}

#[cfg(test)]
thread_local! {
    static FORCE_GENERIC: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

#[cfg(test)]
fn force_generic() -> bool {
    FORCE_GENERIC.with(|c| c.get())
}

#[cfg(not(test))]
#[inline(always)]
fn force_generic() -> bool {
    false
}

/// Mutable solver state over flat row-major buffers.
struct Kernel<'a> {
    feats: &'a [f64],
    y: &'a [usize],
    n: usize,
    f: usize,
    k: usize,
    step: f64,
    threshold: f64,
    w: &'a mut [f64],
    mean_grad: &'a mut [f64],
    table: &'a mut [f64],
    intercept: Option<&'a mut [f64]>,
    mean_resid: &'a mut [f64],
    resid: Vec<f64>,
    delta: Vec<f64>,
}

impl Kernel<'_> {
    /// `n` sampled steps. Dispatches to an AVX2 build of the same code when
    /// available; without FMA contraction and with a fixed reduction order
    /// both builds produce identical bits.
    fn epoch(&mut self, rng: &mut SeededRng) {
        #[cfg(target_arch = "x86_64")]
        if !force_generic() && std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { self.epoch_avx2(rng) };
            return;
        }
        self.epoch_generic(rng);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn epoch_avx2(&mut self, rng: &mut SeededRng) {
        self.epoch_generic(rng);
    }

    #[inline(always)]
    fn epoch_generic(&mut self, rng: &mut SeededRng) {
        let (f, k) = (self.f, self.k);
        let inv_n = 1.0 / self.n as f64;
        let (step, threshold) = (self.step, self.threshold);
        for _ in 0..self.n {
            let i = rng.below(self.n);
            let h_i = &self.feats[i * f..(i + 1) * f];
            for (c, r) in self.resid.iter_mut().enumerate() {
                *r = dot(&self.w[c * f..(c + 1) * f], h_i);
            }
            if let Some(b) = &self.intercept {
                self.resid.iter_mut().zip(b.iter()).for_each(|(r, bv)| *r += bv);
            }
            softmax_parts(&mut self.resid);
            self.resid[self.y[i]] -= 1.0;
            let old = &mut self.table[i * k..(i + 1) * k];
            for ((d, &r), &o) in self.delta.iter_mut().zip(&self.resid).zip(old.iter()) {
                *d = r - o;
            }
            old.copy_from_slice(&self.resid);

            for (c, &dc) in self.delta.iter().enumerate() {
                let w_row = &mut self.w[c * f..(c + 1) * f];
                let g_row = &mut self.mean_grad[c * f..(c + 1) * f];
                let scale = dc * inv_n;
                for ((wv, gv), &hv) in w_row.iter_mut().zip(g_row.iter_mut()).zip(h_i) {
                    let x = *wv - step * (dc * hv + *gv);
                    // branch-free soft_threshold(x, threshold)
                    *wv = (x - threshold).max(0.0) + (x + threshold).min(0.0);
                    *gv += scale * hv;
                }
            }
            if let Some(b) = self.intercept.as_deref_mut() {
                for ((bv, &mv), &dv) in b.iter_mut().zip(self.mean_resid.iter()).zip(&self.delta) {
                    *bv -= step * (dv + mv);
                }
            }
            for (mv, &dv) in self.mean_resid.iter_mut().zip(&self.delta) {
                *mv += inv_n * dv;
            }
        }
    }
}
