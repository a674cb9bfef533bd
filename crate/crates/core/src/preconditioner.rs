//! Block-diagonal preconditioner for the IRLS normal equations.
//!
//! ```text
//! D = diag( (I ⊗ SᵀS + TTᵀ ⊗ I)/τ,  D^v + I/τ,  D^h + I/τ )
//! ```
//!
//! The slack blocks are diagonal. The pixel block is a Sylvester equation
//! `SᵀS Z + Z TTᵀ = τ R`, diagonalized once by the eigenbases of the two
//! one-dimensional Neumann second-difference operators. Its constant mode
//! is singular and is dropped, so `D` shares the nullspace of `A`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{check_shape, Result, UnwrapError};
use crate::operators::{check_dense_size, dense_s, DiagonalWeights, SystemVector};
use crate::phase::center_in_place;

/// How the one-dimensional eigenbases are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpectralMethod {
    /// Symmetric eigensolver on the explicit stencil.
    #[default]
    Numeric,
    /// Closed-form cosine basis.
    Analytic,
}

/// Eigendecompositions `SᵀS = P_S Λ_S P_Sᵀ` and `TTᵀ = P_T Λ_T P_Tᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    pub lambda_s: Array1<f64>,
    pub lambda_t: Array1<f64>,
    pub basis_s: Array2<f64>,
    pub basis_t: Array2<f64>,
}

impl SpectralCache {
    pub fn grid_dim(&self) -> (usize, usize) {
        (self.lambda_s.len(), self.lambda_t.len())
    }
}

/// Dense `n × n` Neumann second-difference matrix (`SᵀS` for `n` rows).
pub fn second_difference(n: usize) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let s = dense_s(n);
    s.transpose() * s
}

fn numeric_decomposition(n: usize) -> (Array1<f64>, Array2<f64>) {
    let eig = second_difference(n).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut lambda = Array1::zeros(n);
    let mut basis = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        lambda[k] = eig.eigenvalues[src];
        for i in 0..n {
            basis[[i, k]] = eig.eigenvectors[(i, src)];
        }
    }
    // pin the constant mode exactly
    lambda[0] = 0.0;
    basis.column_mut(0).fill(1.0 / (n as f64).sqrt());
    (lambda, basis)
}

fn analytic_decomposition(n: usize) -> (Array1<f64>, Array2<f64>) {
    let nf = n as f64;
    let lambda = Array1::from_shape_fn(n, |k| {
        if k == 0 {
            0.0
        } else {
            2.0 - 2.0 * (PI * k as f64 / nf).cos()
        }
    });
    let basis = Array2::from_shape_fn((n, n), |(i, k)| {
        if k == 0 {
            1.0 / nf.sqrt()
        } else {
            (2.0 / nf).sqrt() * (PI * k as f64 * (i as f64 + 0.5) / nf).cos()
        }
    });
    (lambda, basis)
}

pub fn build_spectral_cache(n: usize, m: usize) -> Result<SpectralCache> {
    build_spectral_cache_with(n, m, SpectralMethod::Numeric)
}

pub fn build_spectral_cache_with(n: usize, m: usize, method: SpectralMethod) -> Result<SpectralCache> {
    if n == 0 || m == 0 {
        return Err(UnwrapError::InvalidArgument(format!(
            "grid must be at least 1x1, got {n}x{m}"
        )));
    }
    let decompose = match method {
        SpectralMethod::Numeric => numeric_decomposition,
        SpectralMethod::Analytic => analytic_decomposition,
    };
    let (lambda_s, basis_s) = decompose(n);
    let (lambda_t, basis_t) = if m == n {
        (lambda_s.clone(), basis_s.clone())
    } else {
        decompose(m)
    };
    Ok(SpectralCache {
        lambda_s,
        lambda_t,
        basis_s,
        basis_t,
    })
}

/// Solves `SᵀS Z + Z TTᵀ = τ (R − mean(R))` for the mean-zero `Z`.
pub fn sylvester_solve(r: ArrayView2<f64>, tau: f64, cache: &SpectralCache) -> Result<Array2<f64>> {
    check_tau(tau)?;
    check_shape("Sylvester right-hand side", cache.grid_dim(), r.dim())?;
    Ok(sylvester_unchecked(r, tau, cache))
}

fn sylvester_unchecked(r: ArrayView2<f64>, tau: f64, cache: &SpectralCache) -> Array2<f64> {
    let mut rc = r.to_owned();
    center_in_place(&mut rc);
    let mut z = cache.basis_s.t().dot(&rc).dot(&cache.basis_t);
    Zip::indexed(&mut z).for_each(|(i, j), v| {
        let denom = cache.lambda_s[i] + cache.lambda_t[j];
        *v = if i == 0 && j == 0 { 0.0 } else { tau * *v / denom };
    });
    cache.basis_s.dot(&z).dot(&cache.basis_t.t())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(UnwrapError::InvalidArgument(format!(
            "tau must be positive, got {tau}"
        )))
    }
}

/// The preconditioner `D` for one set of diagonal weights.
#[derive(Debug, Clone)]
pub struct PreconditionerState {
    pub cache: Arc<SpectralCache>,
    /// `D^v + 1/τ`
    pub dv: Array2<f64>,
    /// `D^h + 1/τ`
    pub dh: Array2<f64>,
    pub tau: f64,
}

impl PreconditionerState {
    pub fn new(cache: Arc<SpectralCache>, d: &DiagonalWeights, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let (n, m) = cache.grid_dim();
        check_shape("vertical diagonal", (n - 1, m), d.dv.dim())?;
        check_shape("horizontal diagonal", (n, m - 1), d.dh.dim())?;
        let inv_tau = 1.0 / tau;
        Ok(Self {
            dv: d.dv.mapv(|x| x + inv_tau),
            dh: d.dh.mapv(|x| x + inv_tau),
            cache,
            tau,
        })
    }
}

/// `z = D⁺ r`, projecting the pixel block of `r` onto the range first.
pub fn apply_preconditioner(r: &SystemVector, pc: &PreconditionerState) -> Result<SystemVector> {
    check_shape("residual", pc.cache.grid_dim(), r.grid_dim())?;
    Ok(apply_preconditioner_unchecked(r, pc))
}

pub(crate) fn apply_preconditioner_unchecked(r: &SystemVector, pc: &PreconditionerState) -> SystemVector {
    SystemVector {
        u: sylvester_unchecked(r.u.view(), pc.tau, &pc.cache),
        vv: &r.vv / &pc.dv,
        vh: &r.vh / &pc.dh,
    }
}

/// Dense `D` in the column-stacked layout of [`crate::operators::materialize_dense_system`].
pub fn materialize_dense_preconditioner(
    n: usize,
    m: usize,
    d: &DiagonalWeights,
    tau: f64,
) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_dense_size(n, m)?;
    check_shape("vertical diagonal", (n - 1, m), d.dv.dim())?;
    check_shape("horizontal diagonal", (n, m - 1), d.dh.dim())?;
    let nm = n * m;
    let (kv, kh) = ((n - 1) * m, n * (m - 1));
    let inv_tau = 1.0 / tau;
    let lap = DMatrix::<f64>::identity(m, m).kronecker(&second_difference(n))
        + second_difference(m).kronecker(&DMatrix::<f64>::identity(n, n));
    let mut out = DMatrix::zeros(nm + kv + kh, nm + kv + kh);
    out.view_mut((0, 0), (nm, nm)).copy_from(&(lap * inv_tau));
    // column-stacked: entry (i, j) of an a×b block sits at i + j·a
    for ((i, j), &v) in d.dv.indexed_iter() {
        let k = nm + i + j * (n - 1);
        out[(k, k)] = v + inv_tau;
    }
    for ((i, j), &v) in d.dh.indexed_iter() {
        let k = nm + kv + i + j * n;
        out[(k, k)] = v + inv_tau;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::apply_system;
    use crate::rng::CounterRng;
    use nalgebra::DVector;

    fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
    }

    fn random_grid(n: usize, m: usize, rng: &mut CounterRng) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.uniform(-1.0, 1.0))
    }

    fn random_system(n: usize, m: usize, rng: &mut CounterRng) -> SystemVector {
        SystemVector {
            u: random_grid(n, m, rng),
            vv: random_grid(n - 1, m, rng),
            vh: random_grid(n, m - 1, rng),
        }
    }

    fn random_diag(n: usize, m: usize, hi: f64, rng: &mut CounterRng) -> DiagonalWeights {
        DiagonalWeights {
            dv: Array2::from_shape_fn((n - 1, m), |_| rng.uniform(0.0, hi)),
            dh: Array2::from_shape_fn((n, m - 1), |_| rng.uniform(0.0, hi)),
        }
    }

    fn cache_invariants(cache: &SpectralCache) {
        let (n, m) = cache.grid_dim();
        for (lambda, basis, size) in [
            (&cache.lambda_s, &cache.basis_s, n),
            (&cache.lambda_t, &cache.basis_t, m),
        ] {
            let p = to_na(basis);
            let eye = DMatrix::<f64>::identity(size, size);
            assert!((p.transpose() * &p - eye).abs().max() < 1e-10);
            let lam = DMatrix::from_diagonal(&DVector::from_iterator(size, lambda.iter().copied()));
            assert!((&p * lam * p.transpose() - second_difference(size)).abs().max() < 1e-10);
            assert_eq!(lambda.iter().filter(|&&l| l == 0.0).count(), 1);
            assert!(lambda.iter().skip(1).all(|&l| l > 0.0));
            assert!(lambda.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigenvalue_examples() {
        for method in [SpectralMethod::Numeric, SpectralMethod::Analytic] {
            let c = build_spectral_cache_with(2, 3, method).unwrap();
            assert!((c.lambda_s[1] - 2.0).abs() < 1e-12);
            assert!((c.lambda_t[1] - 1.0).abs() < 1e-12);
            assert!((c.lambda_t[2] - 3.0).abs() < 1e-12);
            let c = build_spectral_cache_with(1, 1, method).unwrap();
            assert_eq!(c.lambda_s.to_vec(), vec![0.0]);
            assert_eq!(c.basis_s[[0, 0]], 1.0);
        }
        assert!(build_spectral_cache(0, 3).is_err());
    }

    #[test]
    fn cache_invariants_hold() {
        for method in [SpectralMethod::Numeric, SpectralMethod::Analytic] {
            for (n, m) in [(1, 4), (2, 2), (5, 3), (16, 16), (31, 7), (64, 40)] {
                cache_invariants(&build_spectral_cache_with(n, m, method).unwrap());
            }
        }
    }

    #[test]
    fn numeric_and_analytic_eigenvalues_agree() {
        let a = build_spectral_cache_with(37, 12, SpectralMethod::Numeric).unwrap();
        let b = build_spectral_cache_with(37, 12, SpectralMethod::Analytic).unwrap();
        assert!((&a.lambda_s - &b.lambda_s).iter().all(|d| d.abs() < 1e-10));
        assert!((&a.lambda_t - &b.lambda_t).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn sylvester_examples() {
        let cache = build_spectral_cache(2, 2).unwrap();
        let z = sylvester_solve(Array2::zeros((2, 2)).view(), 1.0, &cache).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        let r = ndarray::array![[1.0, -1.0], [-1.0, 1.0]];
        let z = sylvester_solve(r.view(), 1.0, &cache).unwrap();
        let expected = ndarray::array![[0.25, -0.25], [-0.25, 0.25]];
        assert!((&z - &expected).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn sylvester_residual_and_mean() {
        let mut rng = CounterRng::new(3);
        for method in [SpectralMethod::Numeric, SpectralMethod::Analytic] {
            let cache = build_spectral_cache_with(8, 8, method).unwrap();
            for _ in 0..10 {
                let mut r = random_grid(8, 8, &mut rng);
                center_in_place(&mut r);
                let tau = rng.uniform(0.01, 2.0);
                let z = sylvester_solve(r.view(), tau, &cache).unwrap();
                let s = to_na(&z);
                let lhs = second_difference(8) * &s + &s * second_difference(8);
                let rhs = to_na(&r) * tau;
                assert!((lhs - &rhs).norm() <= 1e-9 * rhs.norm());
                assert!(z.mean().unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sylvester_matches_dense_pseudo_inverse() {
        let mut rng = CounterRng::new(4);
        let (n, m) = (5, 3);
        let cache = build_spectral_cache(n, m).unwrap();
        let lap = DMatrix::<f64>::identity(m, m).kronecker(&second_difference(n))
            + second_difference(m).kronecker(&DMatrix::<f64>::identity(n, n));
        let pinv = lap.pseudo_inverse(1e-10).unwrap();
        for _ in 0..5 {
            let r = random_grid(n, m, &mut rng);
            let z = sylvester_solve(r.view(), 0.7, &cache).unwrap();
            let rv = DVector::from_iterator(n * m, r.t().iter().copied());
            let dense = &pinv * rv * 0.7;
            let zv = DVector::from_iterator(n * m, z.t().iter().copied());
            assert!((zv - dense).abs().max() < 1e-10);
        }
    }

    #[test]
    fn preconditioner_examples() {
        let mut rng = CounterRng::new(5);
        let cache = Arc::new(build_spectral_cache(4, 5).unwrap());
        let tau = 0.3;
        let pc = PreconditionerState::new(cache, &DiagonalWeights::zeros(4, 5), tau).unwrap();
        let z = apply_preconditioner(&SystemVector::zeros(4, 5), &pc).unwrap();
        assert_eq!(z.norm(), 0.0);
        let r = random_system(4, 5, &mut rng);
        let z = apply_preconditioner(&r, &pc).unwrap();
        assert!((&z.vv - &(&r.vv * tau)).iter().all(|d| d.abs() < 1e-14));
        assert!(pc.dv.iter().chain(pc.dh.iter()).all(|&d| d >= 1.0 / tau));
        assert!(apply_preconditioner(&SystemVector::zeros(3, 5), &pc).is_err());
    }

    #[test]
    fn dense_preconditioner_inverts_on_range() {
        let mut rng = CounterRng::new(6);
        let (n, m, tau) = (4, 4, 0.05);
        let d = random_diag(n, m, 1e3, &mut rng);
        let cache = Arc::new(build_spectral_cache(n, m).unwrap());
        let pc = PreconditionerState::new(cache, &d, tau).unwrap();
        let dense = materialize_dense_preconditioner(n, m, &d, tau).unwrap();
        for _ in 0..5 {
            let r = random_system(n, m, &mut rng);
            let z = apply_preconditioner(&r, &pc).unwrap();
            let mut projected = r.clone();
            projected.project_out_nullspace();
            let lhs = &dense * z.to_dense();
            let rhs = projected.to_dense();
            assert!((lhs - &rhs).abs().max() < 1e-9 * (1.0 + rhs.abs().max()));
        }
    }

    #[test]
    fn preconditioner_is_symmetric_psd() {
        let mut rng = CounterRng::new(7);
        let (n, m) = (3, 4);
        let d = random_diag(n, m, 10.0, &mut rng);
        let pc = PreconditionerState::new(Arc::new(build_spectral_cache(n, m).unwrap()), &d, 0.2).unwrap();
        let dim = SystemVector::zeros(n, m).len();
        let mut mat = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            let col = apply_preconditioner(&SystemVector::from_dense(n, m, &e).unwrap(), &pc).unwrap();
            mat.set_column(k, &col.to_dense());
        }
        assert!((&mat - mat.transpose()).abs().max() < 1e-12);
        assert!(mat.symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn shared_nullspace() {
        let mut rng = CounterRng::new(8);
        let (n, m) = (6, 5);
        let d = random_diag(n, m, 1e6, &mut rng);
        let pc = PreconditionerState::new(Arc::new(build_spectral_cache(n, m).unwrap()), &d, 1e-2).unwrap();
        for _ in 0..10 {
            let x = random_system(n, m, &mut rng);
            let ax = apply_system(&x, &d, 1e-2).unwrap();
            let z = apply_preconditioner(&ax, &pc).unwrap();
            assert!(z.u.sum().abs() < 1e-9 * (1.0 + z.u.iter().map(|v| v.abs()).sum::<f64>()));
        }
        let mut constant = SystemVector::zeros(n, m);
        constant.u.fill(3.0);
        let dense = materialize_dense_preconditioner(n, m, &d, 1e-2).unwrap();
        assert!((dense * constant.to_dense()).abs().max() < 1e-9);
    }
}
