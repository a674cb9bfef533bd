//! Preconditioned conjugate gradient over [`SystemVector`].
//!
//! Both maps are passed as closures so the same loop drives the
//! matrix-free solver, dense oracles and the unpreconditioned baseline.

use crate::error::{Result, UnwrapError};
use crate::operators::SystemVector;

/// Iterations between re-projections of the residual onto the range of `A`.
pub const REPROJECT_EVERY: usize = 50;

/// Curvatures `pᵀAp` at or below this end the solve.
const DEGENERATE_CURVATURE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: SystemVector,
    pub iterations: usize,
    /// `‖r_l‖` for `l = 0..=iterations`
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

pub fn pcg_solve<A, M>(
    apply_a: A,
    apply_m: M,
    b: &SystemVector,
    x0: &SystemVector,
    opts: PcgOptions,
) -> Result<PcgOutcome>
where
    A: FnMut(&SystemVector) -> Result<SystemVector>,
    M: FnMut(&SystemVector) -> Result<SystemVector>,
{
    pcg_solve_observed(apply_a, apply_m, b, x0, opts, |_, _, _| {})
}

/// As [`pcg_solve`], calling `observe(l, x_l, r_l)` for every iterate including `l = 0`.
pub fn pcg_solve_observed<A, M, O>(
    mut apply_a: A,
    mut apply_m: M,
    b: &SystemVector,
    x0: &SystemVector,
    opts: PcgOptions,
    mut observe: O,
) -> Result<PcgOutcome>
where
    A: FnMut(&SystemVector) -> Result<SystemVector>,
    M: FnMut(&SystemVector) -> Result<SystemVector>,
    O: FnMut(usize, &SystemVector, &SystemVector),
{
    if opts.rel_tol.is_nan() || opts.rel_tol < 0.0 {
        return Err(UnwrapError::InvalidArgument(format!(
            "rel_tol must be non-negative, got {}",
            opts.rel_tol
        )));
    }
    let breakdown = |iteration: usize, what: &str| UnwrapError::NumericalBreakdown {
        iteration,
        detail: format!("non-finite {what} in conjugate gradient"),
    };

    let threshold = opts.rel_tol * b.norm();
    let mut x = x0.clone();
    let mut r = b.sub(&apply_a(&x)?);
    if !r.is_finite() {
        return Err(breakdown(0, "initial residual"));
    }
    let mut norms = vec![r.norm()];
    observe(0, &x, &r);
    if norms[0] <= threshold || opts.max_iters == 0 {
        return Ok(PcgOutcome {
            x,
            iterations: 0,
            converged: norms[0] <= threshold,
            residual_norms: norms,
        });
    }

    let mut z = apply_m(&r)?;
    let mut rho = r.dot(&z);
    let mut p = z;
    let mut converged = false;
    for l in 1..=opts.max_iters {
        let ap = apply_a(&p)?;
        let curvature = p.dot(&ap);
        if !curvature.is_finite() {
            return Err(breakdown(l, "curvature"));
        }
        if curvature <= DEGENERATE_CURVATURE {
            converged = *norms.last().unwrap() <= threshold;
            break;
        }
        let alpha = rho / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        if l % REPROJECT_EVERY == 0 {
            r.project_out_nullspace();
        }
        let norm = r.norm();
        if !norm.is_finite() {
            return Err(breakdown(l, "residual"));
        }
        norms.push(norm);
        observe(l, &x, &r);
        if norm <= threshold {
            converged = true;
            break;
        }
        if l == opts.max_iters {
            break;
        }
        z = apply_m(&r)?;
        let rho_next = r.dot(&z);
        if !rho_next.is_finite() {
            return Err(breakdown(l, "preconditioned residual"));
        }
        let beta = rho_next / rho;
        rho = rho_next;
        p.xpby(&z, beta);
    }
    Ok(PcgOutcome {
        x,
        iterations: norms.len() - 1,
        residual_norms: norms,
        converged,
    })
}
