//! Dense spectral study of `A` against the preconditioned `C* A C*`.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::dense::{positive_eigenvalues, spectral_function, DEFAULT_REL_CUT};
use crate::error::{Result, UnwrapError};
use crate::objective::ModelParams;
use crate::operators::{materialize_dense_system, DiagonalWeights};
use crate::preconditioner::materialize_dense_preconditioner;
use crate::rng::CounterRng;

/// Largest grid (in pixels) accepted by [`conditioning_report`].
pub const REPORT_PIXEL_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub tau: f64,
    pub seed: u64,
    pub eig_a: Vec<f64>,
    pub eig_pre: Vec<f64>,
    pub kappa_a: f64,
    pub kappa_pre: f64,
    pub rho_a: f64,
    pub rho_pre: f64,
}

/// `κ = λ_max / λ_min` over the given positive eigenvalues.
pub fn condition_number(eig: &[f64]) -> f64 {
    match (eig.first(), eig.last()) {
        (Some(lo), Some(hi)) => hi / lo,
        _ => f64::NAN,
    }
}

/// `ρ = (√κ − 1) / (√κ + 1)`.
pub fn cg_rate(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Slack diagonals with entries uniform in `(0, 1/δ]`.
pub fn random_diagonal(n: usize, m: usize, delta: f64, seed: u64) -> DiagonalWeights {
    let mut rng = CounterRng::new(seed);
    let mut draw = |shape| Array2::from_shape_fn(shape, |_| (1.0 - rng.next_f64()) / delta);
    let dv = draw((n.saturating_sub(1), m));
    let dh = draw((n, m.saturating_sub(1)));
    DiagonalWeights { dv, dh }
}

/// `C = D^{1/2}` and `C* = (D^+)^{1/2}`, both without the zero mode.
pub fn preconditioner_factors(d: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = spectral_function(d, DEFAULT_REL_CUT, f64::sqrt);
    let c_star = spectral_function(d, DEFAULT_REL_CUT, |g| 1.0 / g.sqrt());
    (c, c_star)
}

pub fn conditioning_report(
    n: usize,
    m: usize,
    delta: f64,
    tau: f64,
    seed: u64,
) -> Result<ConditioningReport> {
    ModelParams::new(tau, delta)?;
    if n == 0 || m == 0 {
        return Err(UnwrapError::InvalidArgument(format!(
            "grid must be at least 1x1, got {n}x{m}"
        )));
    }
    if n * m > REPORT_PIXEL_LIMIT {
        return Err(UnwrapError::ResourceLimit(format!(
            "spectral report limited to {REPORT_PIXEL_LIMIT} pixels, got {n}x{m}"
        )));
    }
    let d = random_diagonal(n, m, delta, seed);
    let a = materialize_dense_system(n, m, &d, tau)?;
    let dd = materialize_dense_preconditioner(n, m, &d, tau)?;
    let (_, c_star) = preconditioner_factors(&dd);
    let pre = &c_star * &a * &c_star;
    let pre = (&pre + pre.transpose()) * 0.5;

    let eig_a = positive_eigenvalues(&a, DEFAULT_REL_CUT);
    let eig_pre = positive_eigenvalues(&pre, DEFAULT_REL_CUT);
    let kappa_a = condition_number(&eig_a);
    let kappa_pre = condition_number(&eig_pre);
    Ok(ConditioningReport {
        n,
        m,
        delta,
        tau,
        seed,
        rho_a: cg_rate(kappa_a),
        rho_pre: cg_rate(kappa_pre),
        eig_a,
        eig_pre,
        kappa_a,
        kappa_pre,
    })
}
