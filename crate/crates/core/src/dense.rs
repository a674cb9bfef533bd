//! Dense symmetric helpers for oracle-scale problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues at or below `rel_cut · λ_max` are treated as zero.
pub const DEFAULT_REL_CUT: f64 = 1e-10;

fn cutoff(eig: &SymmetricEigen<f64, nalgebra::Dyn>, rel_cut: f64) -> f64 {
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    rel_cut * lmax
}

/// Minimum-norm solution of `A x = b` for symmetric PSD `A`.
pub fn symmetric_pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_cut: f64) -> DVector<f64> {
    let eig = a.clone().symmetric_eigen();
    let cut = cutoff(&eig, rel_cut);
    let mut coeffs = eig.eigenvectors.transpose() * b;
    for (c, &l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c = if l > cut { *c / l } else { 0.0 };
    }
    &eig.eigenvectors * coeffs
}

/// `Σ f(γ_i) d_i d_iᵀ` over eigenpairs with `γ_i > rel_cut · γ_max`.
pub fn spectral_function(a: &DMatrix<f64>, rel_cut: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let cut = cutoff(&eig, rel_cut);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &g) in eig.eigenvalues.iter().enumerate() {
        if g > cut {
            let d = eig.eigenvectors.column(k);
            out += (d * d.transpose()) * f(g);
        }
    }
    out
}

/// Strictly positive eigenvalues (above the relative cutoff), ascending.
pub fn positive_eigenvalues(a: &DMatrix<f64>, rel_cut: f64) -> Vec<f64> {
    let eig = a.clone().symmetric_eigen();
    let cut = cutoff(&eig, rel_cut);
    let mut out: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&l| l > cut).collect();
    out.sort_by(f64::total_cmp);
    out
}
