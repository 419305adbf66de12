//! Gaussian-process regression with a Matérn-5/2 ARD kernel and a constant
//! mean, fitted by maximizing the log marginal likelihood.
//!
//! Targets are standardized before fitting. The constant mean is profiled
//! out in closed form (generalized least squares), so the optimizer only
//! sees log lengthscales and the log signal variance. Box bounds on those
//! are enforced by a logistic reparameterization, which lets an
//! unconstrained L-BFGS do the work.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::DseError;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Optimizer starts, each from a seeded random draw.
    pub restarts: usize,
    /// L-BFGS iteration cap per start.
    pub max_iters: u64,
    /// Diagonal jitter added to the kernel matrix.
    pub jitter: f64,
    /// Largest jitter tried (×10 steps) before giving up.
    pub max_jitter: f64,
    /// Lengthscale box.
    pub lengthscale_bounds: (f64, f64),
    /// Signal-variance box, in standardized units.
    pub signal_variance_bounds: (f64, f64),
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 5,
            max_iters: 50,
            jitter: 1e-6,
            max_jitter: 1e-3,
            lengthscale_bounds: (0.01, 100.0),
            signal_variance_bounds: (0.05, 20.0),
        }
    }
}

/// Matérn-5/2 correlation and its derivative factor at scaled distance `r`:
/// returns `(k(r), (5/3)(1+√5 r)e^{-√5 r})`.
fn matern52(r: f64) -> (f64, f64) {
    let e = (-SQRT5 * r).exp();
    let k = (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
    let dk = 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
    (k, dk)
}

/// Training inputs with cached pairwise squared differences.
struct Data {
    n: usize,
    d: usize,
    /// `sq[pair * d + k]` for pairs `i < j` in row-major order.
    sq: Vec<f64>,
    y: DVector<f64>,
}

impl Data {
    fn new(x: &[Vec<f64>], y: &[f64]) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 0..n {
            for j in i + 1..n {
                sq.extend(x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        Data {
            n,
            d,
            sq,
            y: DVector::from_column_slice(y),
        }
    }

    /// Correlation matrix (unit signal variance) and the derivative factors
    /// of the off-diagonal entries, both indexed by pair.
    fn correlations(&self, inv_l2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pairs = self.n * self.n.saturating_sub(1) / 2;
        let mut k = Vec::with_capacity(pairs);
        let mut dk = Vec::with_capacity(pairs);
        for p in 0..pairs {
            let row = &self.sq[p * self.d..(p + 1) * self.d];
            let r2: f64 = row.iter().zip(inv_l2).map(|(s, w)| s * w).sum();
            let (kv, dv) = matern52(r2.sqrt());
            k.push(kv);
            dk.push(dv);
        }
        (k, dk)
    }
}

struct Factorization {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    mean: f64,
    alpha: DVector<f64>,
    lml: f64,
}

/// Assembles `σ²C + jitter·I` and factors it, escalating the jitter ×10
/// until it succeeds or passes `max_jitter`.
fn factor(
    data: &Data,
    corr: &[f64],
    signal_var: f64,
    jitter: f64,
    max_jitter: f64,
) -> Option<Factorization> {
    let n = data.n;
    let mut base = DMatrix::<f64>::zeros(n, n);
    let mut p = 0;
    for i in 0..n {
        base[(i, i)] = signal_var;
        for j in i + 1..n {
            let v = signal_var * corr[p];
            base[(i, j)] = v;
            base[(j, i)] = v;
            p += 1;
        }
    }
    let mut jit = jitter;
    loop {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jit;
        }
        if let Some(chol) = Cholesky::new(k) {
            let ones = DVector::from_element(n, 1.0);
            let k_inv_1 = chol.solve(&ones);
            let k_inv_y = chol.solve(&data.y);
            let mean = k_inv_y.sum() / k_inv_1.sum();
            let centered = data.y.add_scalar(-mean);
            let alpha = chol.solve(&centered);
            let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum();
            let lml = -0.5 * centered.dot(&alpha)
                - log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            if lml.is_finite() {
                return Some(Factorization {
                    chol,
                    jitter: jit,
                    mean,
                    alpha,
                    lml,
                });
            }
        }
        if jit <= 0.0 || jit >= max_jitter {
            return None;
        }
        jit = (jit * 10.0).min(max_jitter);
    }
}

/// `K⁻¹` from the Cholesky factor, row-major. Inverts `L` by forward
/// substitution and forms `L⁻ᵀL⁻¹` exploiting triangularity and symmetry,
/// about a third of the work of a general solve against the identity.
fn cholesky_inverse(chol: &Cholesky<f64, Dyn>) -> Vec<f64> {
    let l = chol.l_dirty();
    let n = l.nrows();
    // Row-major copy of the lower triangle.
    let mut lr = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..=i {
            lr[i * n + k] = l[(i, k)];
        }
    }
    // Row `j` of `inv_t` holds column `j` of L⁻¹ (nonzero from index j on).
    let mut inv_t = vec![0.0; n * n];
    for j in 0..n {
        let col = &mut inv_t[j * n..(j + 1) * n];
        col[j] = 1.0 / lr[j * n + j];
        for i in j + 1..n {
            let row = &lr[i * n..i * n + i];
            let s: f64 = row[j..].iter().zip(&col[j..i]).map(|(a, b)| a * b).sum();
            col[i] = -s / lr[i * n + i];
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let a = &inv_t[i * n + j..(i + 1) * n];
            let b = &inv_t[j * n + j..(j + 1) * n];
            let v: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// Negative log marginal likelihood over unconstrained parameters `z`,
/// memoizing the last evaluation because the line search asks for the cost
/// and the gradient at the same point.
struct Objective<'a> {
    data: &'a Data,
    cfg: &'a GpConfig,
    cache: RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
}

/// Maps `z` to `θ = lo + (hi - lo)·sigmoid(z)` and returns `dθ/dz`.
fn squash(z: f64, lo: f64, hi: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + (-z).exp());
    (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
}

fn unsquash(theta: f64, lo: f64, hi: f64) -> f64 {
    let s = ((theta - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    (s / (1.0 - s)).ln()
}

impl Objective<'_> {
    fn bounds(&self, k: usize) -> (f64, f64) {
        let (lo, hi) = if k < self.data.d {
            self.cfg.lengthscale_bounds
        } else {
            self.cfg.signal_variance_bounds
        };
        (lo.ln(), hi.ln())
    }

    /// `(log lengthscales, log signal variance)` and their `dθ/dz`.
    fn theta(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        z.iter()
            .enumerate()
            .map(|(k, &zk)| {
                let (lo, hi) = self.bounds(k);
                squash(zk, lo, hi)
            })
            .unzip()
    }

    fn evaluate(&self, z: &[f64]) -> (f64, Vec<f64>) {
        if let Some((cz, c, g)) = self.cache.borrow().as_ref() {
            if cz.as_slice() == z {
                return (*c, g.clone());
            }
        }
        let out = self.compute(z);
        *self.cache.borrow_mut() = Some((z.to_vec(), out.0, out.1.clone()));
        out
    }

    fn compute(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let data = self.data;
        let d = data.d;
        let n = data.n;
        let (theta, dtheta) = self.theta(z);
        let inv_l2: Vec<f64> = theta[..d].iter().map(|t| (-2.0 * t).exp()).collect();
        let signal_var = theta[d].exp();
        let (corr, dcorr) = data.correlations(&inv_l2);
        let Some(f) = factor(data, &corr, signal_var, self.cfg.jitter, self.cfg.max_jitter) else {
            return (1e10, vec![0.0; z.len()]);
        };
        // W = ααᵀ - K⁻¹; dLML/dθ = ½ tr(W ∂K/∂θ).
        let k_inv = cholesky_inverse(&f.chol);
        let mut grad_theta = vec![0.0; d + 1];
        let mut p = 0;
        for i in 0..n {
            let w_ii = f.alpha[i] * f.alpha[i] - k_inv[i * n + i];
            grad_theta[d] += 0.5 * w_ii * signal_var;
            for j in i + 1..n {
                let w = f.alpha[i] * f.alpha[j] - k_inv[i * n + j];
                // Both (i,j) and (j,i) terms of the trace.
                grad_theta[d] += w * signal_var * corr[p];
                let g = w * signal_var * dcorr[p];
                let row = &data.sq[p * d..(p + 1) * d];
                for k in 0..d {
                    grad_theta[k] += g * row[k] * inv_l2[k];
                }
                p += 1;
            }
        }
        let grad: Vec<f64> = grad_theta
            .iter()
            .zip(&dtheta)
            .map(|(g, dt)| -g * dt)
            .collect();
        (-f.lml, grad)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> Result<Self::Output, argmin::core::Error> {
        Ok(self.evaluate(z).0)
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, z: &Self::Param) -> Result<Self::Gradient, argmin::core::Error> {
        Ok(self.evaluate(z).1)
    }
}

/// A fitted surrogate for one objective.
#[derive(Debug, Clone)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    lengthscales: Vec<f64>,
    signal_var: f64,
    mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_shift: f64,
    y_scale: f64,
    lml: f64,
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let shift = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - shift) * (v - shift)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 * shift.abs().max(1e-300) { var.sqrt() } else { 1.0 };
    let z = y.iter().map(|v| (v - shift) / scale).collect();
    (shift, scale, z)
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<(), DseError> {
    if x.len() != y.len() {
        return Err(DseError::Numerical(format!(
            "{} inputs but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(DseError::Numerical("a surrogate needs at least 2 observations".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(DseError::Numerical("inputs must share a positive dimension".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DseError::Numerical("training data must be finite".into()));
    }
    Ok(())
}

impl Gp {
    /// Conditions a GP with fixed hyperparameters (standardized units for
    /// the signal variance) on raw targets `y`.
    pub fn with_hyperparameters(
        x: &[Vec<f64>],
        y: &[f64],
        lengthscales: &[f64],
        signal_var: f64,
        cfg: &GpConfig,
    ) -> Result<Gp, DseError> {
        check_inputs(x, y)?;
        if lengthscales.len() != x[0].len() {
            return Err(DseError::Numerical("one lengthscale per input dimension".into()));
        }
        let (y_shift, y_scale, ys) = standardize(y);
        let data = Data::new(x, &ys);
        let inv_l2: Vec<f64> = lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let (corr, _) = data.correlations(&inv_l2);
        let f = factor(&data, &corr, signal_var, cfg.jitter, cfg.max_jitter).ok_or_else(|| {
            DseError::Numerical(format!(
                "kernel matrix is singular even with jitter {}",
                cfg.max_jitter
            ))
        })?;
        Ok(Gp {
            x: x.to_vec(),
            lengthscales: lengthscales.to_vec(),
            signal_var,
            mean: f.mean,
            jitter: f.jitter,
            chol: f.chol,
            alpha: f.alpha,
            y_shift,
            y_scale,
            lml: f.lml,
        })
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_var
    }

    /// Fitted constant mean, standardized units.
    pub fn mean_constant(&self) -> f64 {
        self.mean
    }

    /// Jitter actually used after any escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and variance in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let mut kstar = DVector::zeros(n);
        for (i, xi) in self.x.iter().enumerate() {
            let r2: f64 = xi
                .iter()
                .zip(x)
                .zip(&self.lengthscales)
                .map(|((a, b), l)| ((a - b) / l).powi(2))
                .sum();
            kstar[i] = self.signal_var * matern52(r2.sqrt()).0;
        }
        let mean = self.mean + kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .unwrap_or_else(|| DVector::zeros(n));
        let var = (self.signal_var - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in the units of the training targets.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_shift + self.y_scale * m, self.y_scale * self.y_scale * v)
    }

    /// Standardizes a raw target the same way the training data were.
    pub fn standardize_target(&self, y: f64) -> f64 {
        (y - self.y_shift) / self.y_scale
    }
}

/// Fits hyperparameters by maximum marginal likelihood, keeping the best of
/// `cfg.restarts` L-BFGS runs from random starting points drawn from `rng`.
pub fn fit_surrogate<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &GpConfig,
    rng: &mut R,
) -> Result<Gp, DseError> {
    check_inputs(x, y)?;
    let d = x[0].len();
    let (_, _, ys) = standardize(y);
    let data = Data::new(x, &ys);
    let objective = Objective {
        data: &data,
        cfg,
        cache: RefCell::new(None),
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let mut z0 = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let (lo, hi) = objective.bounds(k);
            // Start away from the box edges.
            let (a, b) = if k < d { (0.1f64.ln(), 10f64.ln()) } else { (0.5f64.ln(), 2f64.ln()) };
            let theta: f64 = rng.gen_range(a.max(lo)..b.min(hi));
            z0.push(unsquash(theta, lo, hi));
        }
        let start_cost = objective.evaluate(&z0).0;
        let mut candidate = (start_cost, z0.clone());
        let problem = Objective {
            data: &data,
            cfg,
            cache: RefCell::new(None),
        };
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7)
            .with_tolerance_grad(1e-6)
            .and_then(|s| s.with_tolerance_cost(1e-9));
        if let Ok(solver) = solver {
            let run = Executor::new(problem, solver)
                .configure(|state| state.param(z0).max_iters(cfg.max_iters))
                .run();
            if let Ok(res) = run {
                let state = res.state();
                if let Some(p) = state.get_best_param() {
                    let c = state.get_best_cost();
                    if c.is_finite() && c < candidate.0 {
                        candidate = (c, p.clone());
                    }
                }
            }
        }
        if best.as_ref().map_or(true, |(c, _)| candidate.0 < *c) {
            best = Some(candidate);
        }
    }
    let (_, z) = best.expect("at least one restart");
    let (theta, _) = objective.theta(&z);
    let lengthscales: Vec<f64> = theta[..d].iter().map(|t| t.exp()).collect();
    Gp::with_hyperparameters(x, y, &lengthscales, theta[d].exp(), cfg)
}
