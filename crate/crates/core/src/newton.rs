//! Bracketed, damped scalar Newton iteration.
//!
//! Every nonlinear equation in the readout chain reduces to a single KCL
//! residual in one node overdrive voltage, monotone on a known interval. The
//! solver keeps a sign bracket around the root, halves the Newton step while
//! the residual grows, and falls back to bisection when a step would leave the
//! bracket.

use serde::{Deserialize, Serialize};

/// Convergence controls shared by the DC and transient solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Absolute floor on the KCL residual, amperes.
    pub abs_tol: f64,
    /// Residual tolerance relative to the current scale of the node.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            abs_tol: 1e-24,
            rel_tol: 1e-14,
            max_iter: 100,
        }
    }
}

/// Why an iteration stopped without a root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NewtonFailure {
    /// The residual has the same sign at both ends of the interval.
    NoBracket { f_lo: f64, f_hi: f64 },
    MaxIterations { x: f64, residual: f64 },
}

const MAX_HALVINGS: usize = 12;

/// Find `x` in `[lo, hi]` with `f(x).0 ≈ 0`.
///
/// `f` returns the residual and its derivative. `scale` sets the magnitude
/// that `rel_tol` is measured against (typically the branch current).
pub fn solve<F>(
    mut f: F,
    x0: f64,
    lo: f64,
    hi: f64,
    scale: f64,
    opts: &NewtonOptions,
) -> Result<f64, NewtonFailure>
where
    F: FnMut(f64) -> (f64, f64),
{
    let tol = opts.abs_tol.max(opts.rel_tol * scale.abs());
    let (mut a, mut b) = (lo, hi);
    let fa = f(a).0;
    if fa.abs() <= tol {
        return Ok(a);
    }
    let fb = f(b).0;
    if fb.abs() <= tol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NewtonFailure::NoBracket { f_lo: fa, f_hi: fb });
    }
    let neg_at_a = fa < 0.0;

    let mut x = if x0.is_finite() { x0.clamp(a, b) } else { 0.5 * (a + b) };
    let (mut r, mut d) = f(x);

    for _ in 0..opts.max_iter {
        if r.abs() <= tol {
            return Ok(x);
        }
        if (r < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            return Ok(x);
        }

        let newton = -r / d;
        let (next, rn, dn) = if newton.is_finite() && x + newton > a && x + newton < b {
            let mut step = newton;
            let mut cand = x + step;
            let (mut rc, mut dc) = f(cand);
            let mut halvings = 0;
            while rc.abs() > r.abs() && halvings < MAX_HALVINGS {
                step *= 0.5;
                cand = x + step;
                (rc, dc) = f(cand);
                halvings += 1;
            }
            (cand, rc, dc)
        } else {
            let mid = 0.5 * (a + b);
            let (rm, dm) = f(mid);
            (mid, rm, dm)
        };

        let moved = (next - x).abs();
        x = next;
        r = rn;
        d = dn;
        if moved <= 2.0 * f64::EPSILON * x.abs() {
            return Ok(x);
        }
    }
    if r.abs() <= tol {
        Ok(x)
    } else {
        Err(NewtonFailure::MaxIterations { x, residual: r })
    }
}
