//! First-order training (SGD, Adam) and L-BFGS refinement.
//!
//! Training runs in two stages: full-batch Adam to get near a minimum, then
//! L-BFGS with a backtracking Armijo line search to grind the loss further
//! down. Everything here is deterministic given the gradient sequence, so a
//! seeded run reproduces bit for bit.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("non-finite loss at the starting point")]
    NonFiniteStart,
    #[error("length mismatch: parameters {params}, gradient {grad}")]
    LengthMismatch { params: usize, grad: usize },
}

fn check_lengths(theta: &[f64], grad: &[f64]) -> Result<(), OptimError> {
    if theta.len() != grad.len() {
        return Err(OptimError::LengthMismatch {
            params: theta.len(),
            grad: grad.len(),
        });
    }
    Ok(())
}

fn check_finite(grad: &[f64], step: usize) -> Result<(), OptimError> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteGradient { step });
    }
    Ok(())
}

// ── SGD ─────────────────────────────────────────────────────────────────

/// Plain descent update, `theta -= alpha * grad`. `step` only labels errors.
pub fn sgd_step(
    theta: &mut [f64],
    grad: &[f64],
    alpha: f64,
    step: usize,
) -> Result<(), OptimError> {
    check_lengths(theta, grad)?;
    check_finite(grad, step)?;
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= alpha * g;
    }
    Ok(())
}

// ── Adam ────────────────────────────────────────────────────────────────

/// Bias-corrected adaptive moments. Defaults: beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8; the learning rate comes from the run config.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub alpha: f64,
}

impl AdamState {
    pub fn new(n: usize, alpha: f64) -> AdamState {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            alpha,
        }
    }

    /// One update. The step counter increments before bias correction, so the
    /// first step uses t = 1. First-step closed form, tested below:
    /// `delta = -alpha * g / (|g| + eps)`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<(), OptimError> {
        check_lengths(theta, grad)?;
        assert_eq!(self.m.len(), theta.len(), "state dimension mismatch");
        check_finite(grad, self.t as usize + 1)?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= self.alpha * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

// ── L-BFGS ──────────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    /// Stored curvature pairs.
    pub m_hist: usize,
    /// Stop when the gradient max-norm drops below this.
    pub gtol: f64,
    /// Stop when the relative loss decrease per iteration drops below this.
    pub ftol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Step halvings before declaring the line search failed.
    pub max_halvings: u32,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            m_hist: 20,
            gtol: 1e-9,
            ftol: 1e-12,
            max_iters: 5000,
            c1: 1e-4,
            max_halvings: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    LossTolerance,
    MaxIterations,
    /// No decrease after the allowed halvings; the best iterate so far is
    /// returned rather than an error.
    LineSearchFailure,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::GradientTolerance => "gradient-tolerance",
            StopReason::LossTolerance => "loss-tolerance",
            StopReason::MaxIterations => "max-iterations",
            StopReason::LineSearchFailure => "line-search-failure",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub reason: StopReason,
    /// Loss trace: entry 0 is the starting loss, then one entry per accepted
    /// iteration.
    pub losses: Vec<f64>,
    /// Curvature pairs accepted into the history over the whole run.
    pub pairs_stored: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `oracle` (loss and gradient) from `x0` with two-loop-recursion
/// L-BFGS and backtracking Armijo line search. Every accepted step strictly
/// decreases the loss; the returned loss never exceeds the starting loss.
pub fn lbfgs_minimize(
    oracle: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    opts: &LbfgsOptions,
) -> Result<LbfgsResult, OptimError> {
    lbfgs_minimize_observed(oracle, x0, opts, |_, _, _| {})
}

/// [`lbfgs_minimize`] with a progress callback. `on_accept(iter, x, f)` fires
/// once per accepted iteration, after the iterate is in place. `f` is the
/// oracle's loss at `x`; callers stitching richer per-call detail to the
/// iteration should key it on `f`, since the oracle may have been probed at
/// rejected trial points in between.
pub fn lbfgs_minimize_observed(
    mut oracle: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    mut on_accept: impl FnMut(usize, &[f64], f64),
) -> Result<LbfgsResult, OptimError> {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = oracle(&x);
    if !f.is_finite() {
        return Err(OptimError::NonFiniteStart);
    }
    check_finite(&g, 0)?;

    let mut losses = vec![f];
    let mut pairs_stored = 0usize;
    // History ring, newest last: (s, y, 1/s'y).
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        std::collections::VecDeque::with_capacity(opts.m_hist);

    let finish = |x: Vec<f64>, f: f64, g: &[f64], iters, reason, losses, pairs_stored| {
        Ok(LbfgsResult {
            x,
            loss: f,
            grad_norm: max_norm(g),
            iters,
            reason,
            losses,
            pairs_stored,
        })
    };

    if max_norm(&g) <= opts.gtol {
        return finish(x, f, &g, 0, StopReason::GradientTolerance, losses, 0);
    }

    for iter in 1..=opts.max_iters {
        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            // Barzilai-Borwein scaling of the seed Hessian.
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            // Numerically non-descent direction: fall back to steepest descent.
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        // Backtracking Armijo search.
        let armijo = |step: f64, ft: f64| ft.is_finite() && ft <= f + opts.c1 * step * slope;
        let mut step = 1.0f64;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            let (ft, gt) = oracle(&trial);
            if armijo(step, ft) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((mut xn, mut fn_, mut gn)) = accepted else {
            return finish(
                x,
                f,
                &g,
                iter - 1,
                StopReason::LineSearchFailure,
                losses,
                pairs_stored,
            );
        };
        // If the accepted point has non-positive curvature along the step,
        // the pair would be discarded and a stale history can stall progress
        // (negative-curvature valleys do exactly that). Extend the step by
        // doubling while the Armijo bound still holds to reach past the
        // concave stretch; acceptance stays Armijo-monotone throughout.
        let mut extensions = 0;
        while extensions < 20 {
            let sy: f64 = (0..n).map(|i| (xn[i] - x[i]) * (gn[i] - g[i])).sum();
            if sy > 0.0 {
                break;
            }
            let bigger = step * 2.0;
            let trial: Vec<f64> = (0..n).map(|i| x[i] + bigger * d[i]).collect();
            let (ft, gt) = oracle(&trial);
            if !armijo(bigger, ft) {
                break;
            }
            step = bigger;
            xn = trial;
            fn_ = ft;
            gn = gt;
            extensions += 1;
        }
        check_finite(&gn, iter)?;

        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        // Only positive-curvature pairs enter the history; anything else
        // would break the two-loop recursion's positive definiteness.
        if sy > f64::EPSILON * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if hist.len() == opts.m_hist {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
            pairs_stored += 1;
        }

        let f_prev = f;
        x = xn;
        f = fn_;
        g = gn;
        losses.push(f);
        on_accept(iter, &x, f);

        if max_norm(&g) <= opts.gtol {
            return finish(x, f, &g, iter, StopReason::GradientTolerance, losses, pairs_stored);
        }
        if (f_prev - f).abs() <= opts.ftol * f_prev.abs().max(1.0) {
            return finish(x, f, &g, iter, StopReason::LossTolerance, losses, pairs_stored);
        }
    }
    let iters = opts.max_iters;
    finish(x, f, &g, iters, StopReason::MaxIterations, losses, pairs_stored)
}
