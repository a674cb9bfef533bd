//! Outer IRLS loop with warm-started PCG, a sufficient-decrease safeguard
//! and an adaptive CG budget.
//!
//! At outer step `k` the weights are refreshed from the current slack,
//! the relative drop `Δ` of `H_δ` caused by that refresh decides the CG
//! budget (or stops the run), and PCG approximately minimizes `H_δ(·, W^k)`
//! starting from the current iterate. If the PCG result does worse than a
//! single gradient step, the gradient step is taken instead.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Result, UnwrapError};
use crate::objective::{
    candidate_step, eval_f_delta, h_delta_unchecked, lipschitz_constant, update_weights, IrlsWeights,
    ModelParams,
};
use crate::operators::{apply_s, apply_system, apply_t, build_rhs, SystemVector};
use crate::pcg::{pcg_solve, PcgOptions};
use crate::phase::{
    center_in_place, wrapped_gradients, GradientField, PhaseGrid, PhaseInterval, WeightField, WrappedPhase,
};
use crate::preconditioner::{
    apply_preconditioner, build_spectral_cache_with, PreconditionerState, SpectralMethod,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsParams {
    /// CG budget at the first outer iteration.
    pub max_iter_cg_start: usize,
    /// Relative improvement below which the budget grows or the run stops.
    pub rel_improvement_tol: f64,
    pub cg_growth_factor: f64,
    pub max_outer_iters: usize,
    pub max_cg_iters_cap: usize,
    pub cg_rel_tol: f64,
    pub spectral: SpectralMethod,
}

impl Default for IrlsParams {
    fn default() -> Self {
        Self {
            max_iter_cg_start: 5,
            rel_improvement_tol: 1e-3,
            cg_growth_factor: 1.7,
            max_outer_iters: 100,
            max_cg_iters_cap: 10_000,
            cg_rel_tol: 1e-10,
            spectral: SpectralMethod::Numeric,
        }
    }
}

impl IrlsParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(UnwrapError::InvalidArgument(msg));
        if self.max_iter_cg_start < 1 {
            return bad("initial CG budget must be at least 1".into());
        }
        if !(self.rel_improvement_tol > 0.0 && self.rel_improvement_tol.is_finite()) {
            return bad(format!(
                "eps_tol must be positive, got {}",
                self.rel_improvement_tol
            ));
        }
        if !(self.cg_growth_factor > 1.0 && self.cg_growth_factor.is_finite()) {
            return bad(format!(
                "CG growth factor must exceed 1, got {}",
                self.cg_growth_factor
            ));
        }
        if self.max_cg_iters_cap < self.max_iter_cg_start {
            return bad(format!(
                "CG cap {} is below the initial budget {}",
                self.max_cg_iters_cap, self.max_iter_cg_start
            ));
        }
        if self.max_outer_iters < 1 {
            return bad("max_outer_iters must be at least 1".into());
        }
        if self.cg_rel_tol.is_nan() || self.cg_rel_tol < 0.0 {
            return bad(format!(
                "cg_rel_tol must be non-negative, got {}",
                self.cg_rel_tol
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgBudget {
    Keep,
    Stop,
    Grow(usize),
}

/// Budget rule: keep on real progress, grow once on a stall, stop on a
/// stall right after growing (or when the cap is reached).
pub fn cg_budget_update(delta_rel: f64, m_prev: usize, m_prev2: usize, params: &IrlsParams) -> CgBudget {
    if delta_rel > params.rel_improvement_tol {
        return CgBudget::Keep;
    }
    if m_prev != m_prev2 || m_prev >= params.max_cg_iters_cap {
        return CgBudget::Stop;
    }
    let grown = (params.cg_growth_factor * m_prev as f64 - 1e-9).ceil() as usize;
    CgBudget::Grow(grown.max(m_prev + 1).min(params.max_cg_iters_cap))
}

/// `(h_old − h_new) / h_old`.
pub fn relative_improvement(h_old_w: f64, h_new_w: f64) -> Result<f64> {
    if h_old_w.is_nan() || h_old_w <= 0.0 {
        return Err(UnwrapError::InvalidArgument(format!(
            "objective must be positive, got {h_old_w}"
        )));
    }
    Ok((h_old_w - h_new_w) / h_old_w)
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsRecord {
    pub k: usize,
    pub m_cg: usize,
    /// `None` at `k = 0`.
    pub delta_rel: Option<f64>,
    /// `H_δ(x^{k+1}, W^k)`
    pub h_delta: f64,
    pub cg_iters: usize,
    /// Whether the PCG output passed the sufficient-decrease test.
    pub sufficient_decrease: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The budget rule asked to stop.
    Stalled,
    MaxOuterIters,
    /// Nothing to solve (a single pixel).
    NoArcs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IrlsTrace {
    pub records: Vec<IrlsRecord>,
    pub stop: Option<StopReason>,
}

impl IrlsTrace {
    pub fn fallback_count(&self) -> usize {
        self.records.iter().filter(|r| r.fallback).count()
    }
}

#[derive(Debug, Clone)]
pub struct UnwrapOutput {
    /// Mean-zero unwrapped phase.
    pub unwrapped: PhaseGrid,
    /// Final `(U, V^v, V^h)`.
    pub state: SystemVector,
    pub trace: IrlsTrace,
    pub f_delta: f64,
}

/// Unwraps a wrapped image using gradients in the given principal interval.
pub fn unwrap(
    x: &WrappedPhase,
    c: &WeightField,
    interval: PhaseInterval,
    model: &ModelParams,
    params: &IrlsParams,
) -> Result<UnwrapOutput> {
    let (n, m) = x.dim();
    let g = wrapped_gradients(x, interval);
    unwrap_with_gradients(n, m, &g, c, model, params)
}

pub fn unwrap_with_gradients(
    n: usize,
    m: usize,
    g: &GradientField,
    c: &WeightField,
    model: &ModelParams,
    params: &IrlsParams,
) -> Result<UnwrapOutput> {
    model.validate()?;
    params.validate()?;
    check_shape("gradient field", (n, m), g.grid_dim())?;
    check_shape("vertical gradients", (n - 1, m), g.gv.dim())?;
    check_shape("horizontal gradients", (n, m - 1), g.gh.dim())?;
    check_shape("vertical weights", (n - 1, m), c.cv().dim())?;
    check_shape("horizontal weights", (n, m - 1), c.ch().dim())?;

    let u0 = Array2::zeros((n, m));
    let mut x = SystemVector {
        vv: apply_s(u0.view()) - &g.gv,
        vh: apply_t(u0.view()) - &g.gh,
        u: u0,
    };
    let mut trace = IrlsTrace::default();
    if g.arc_count() == 0 {
        trace.stop = Some(StopReason::NoArcs);
        return Ok(UnwrapOutput {
            unwrapped: PhaseGrid::new(x.u.clone())?,
            f_delta: 0.0,
            state: x,
            trace,
        });
    }

    let cache = Arc::new(build_spectral_cache_with(n, m, params.spectral)?);
    let b = build_rhs(g, model.tau)?;
    let lipschitz = lipschitz_constant(c, model);
    let check = |value: f64, k: usize, what: &str| {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(UnwrapError::NumericalBreakdown {
                iteration: k,
                detail: format!("non-finite {what}"),
            })
        }
    };

    let mut w_prev: Option<IrlsWeights> = None;
    // m_CG(k-1), m_CG(k-2); m_CG(-1) is taken equal to m_CG(0)
    let (mut m_prev, mut m_prev2) = (params.max_iter_cg_start, params.max_iter_cg_start);
    for k in 0..params.max_outer_iters {
        let w = update_weights(&x, c, model.delta)?;
        let (m_cg, delta_rel) = match &w_prev {
            None => (params.max_iter_cg_start, None),
            Some(old) => {
                let h_old = check(h_delta_unchecked(&x, old, g, c, model), k, "objective")?;
                let h_new = check(h_delta_unchecked(&x, &w, g, c, model), k, "objective")?;
                let delta = relative_improvement(h_old, h_new)?;
                match cg_budget_update(delta, m_prev, m_prev2, params) {
                    CgBudget::Keep => (m_prev, Some(delta)),
                    CgBudget::Grow(next) => (next, Some(delta)),
                    CgBudget::Stop => {
                        trace.stop = Some(StopReason::Stalled);
                        break;
                    }
                }
            }
        };

        let d = w.diagonal(c);
        let pc = PreconditionerState::new(Arc::clone(&cache), &d, model.tau)?;
        let outcome = pcg_solve(
            |v| apply_system(v, &d, model.tau),
            |r| apply_preconditioner(r, &pc),
            &b,
            &x,
            PcgOptions {
                max_iters: m_cg,
                rel_tol: params.cg_rel_tol,
            },
        )
        .map_err(|e| match e {
            UnwrapError::NumericalBreakdown { detail, .. } => {
                UnwrapError::NumericalBreakdown { iteration: k, detail }
            }
            other => other,
        })?;

        let h_pcg = check(h_delta_unchecked(&outcome.x, &w, g, c, model), k, "objective")?;
        let step = candidate_step(&x, &w, g, c, model, lipschitz)?;
        let h_step = check(h_delta_unchecked(&step, &w, g, c, model), k, "objective")?;
        let accepted = h_pcg <= h_step;
        let (mut next, h_next) = if accepted {
            (outcome.x, h_pcg)
        } else {
            (step, h_step)
        };
        center_in_place(&mut next.u);

        trace.records.push(IrlsRecord {
            k,
            m_cg,
            delta_rel,
            h_delta: h_next,
            cg_iters: outcome.iterations,
            sufficient_decrease: accepted,
            fallback: !accepted,
        });
        x = next;
        w_prev = Some(w);
        m_prev2 = m_prev;
        m_prev = m_cg;
    }
    if trace.stop.is_none() {
        trace.stop = Some(StopReason::MaxOuterIters);
    }

    let f_delta = eval_f_delta(&x, g, c, model)?;
    Ok(UnwrapOutput {
        unwrapped: PhaseGrid::new(x.u.clone())?,
        state: x,
        trace,
        f_delta,
    })
}
