//! Matrix-free difference operators and the penalized normal-equation map.
//!
//! `S` is the `(N-1) x N` forward-difference matrix acting on columns of `U`
//! (`S U` are vertical differences) and `T` is the `M x (M-1)` matrix for which
//! `U T` are horizontal differences. Everything here works on grid-shaped
//! arrays; [`materialize_dense_system`] assembles the vectorized matrix from
//! Kronecker products for use as a test oracle only.

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array2, ArrayView2, Zip};

use crate::error::{check_shape, Result, UnwrapError};
use crate::phase::GradientField;

/// Unknowns (or right-hand side) of the inner linear system in grid layout:
/// `u` is `N x M`, `vv` is `(N-1) x M`, `vh` is `N x (M-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemVector {
    pub u: Array2<f64>,
    pub vv: Array2<f64>,
    pub vh: Array2<f64>,
}

impl SystemVector {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            u: Array2::zeros((n, m)),
            vv: Array2::zeros((n.saturating_sub(1), m)),
            vh: Array2::zeros((n, m.saturating_sub(1))),
        }
    }

    pub fn from_parts(u: Array2<f64>, vv: Array2<f64>, vh: Array2<f64>) -> Result<Self> {
        let (n, m) = u.dim();
        check_shape("vertical slack", (n.saturating_sub(1), m), vv.dim())?;
        check_shape("horizontal slack", (n, m.saturating_sub(1)), vh.dim())?;
        Ok(Self { u, vv, vh })
    }

    pub fn grid_dim(&self) -> (usize, usize) {
        self.u.dim()
    }

    /// Total number of scalar unknowns, `NM + (N-1)M + N(M-1)`.
    pub fn len(&self) -> usize {
        self.u.len() + self.vv.len() + self.vh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot2(&self.u, &other.u) + dot2(&self.vv, &other.vv) + dot2(&self.vh, &other.vh)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.u.scaled_add(alpha, &other.u);
        self.vv.scaled_add(alpha, &other.vv);
        self.vh.scaled_add(alpha, &other.vh);
    }

    /// `self = other + beta * self`
    pub fn xpby(&mut self, other: &Self, beta: f64) {
        Zip::from(&mut self.u)
            .and(&other.u)
            .for_each(|a, &b| *a = b + beta * *a);
        Zip::from(&mut self.vv)
            .and(&other.vv)
            .for_each(|a, &b| *a = b + beta * *a);
        Zip::from(&mut self.vh)
            .and(&other.vh)
            .for_each(|a, &b| *a = b + beta * *a);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.u *= alpha;
        self.vv *= alpha;
        self.vh *= alpha;
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            u: &self.u - &other.u,
            vv: &self.vv - &other.vv,
            vh: &self.vh - &other.vh,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(self.vv.iter())
            .chain(self.vh.iter())
            .all(|v| v.is_finite())
    }

    /// Removes the component along the nullspace vector `(1, 0, 0)`.
    pub fn project_out_nullspace(&mut self) {
        crate::phase::center_in_place(&mut self.u);
    }

    /// Column-stacked vectorization `(vec U; vec V^v; vec V^h)`.
    pub fn to_dense(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        for block in [&self.u, &self.vv, &self.vh] {
            out.extend(block.t().iter().copied());
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`SystemVector::to_dense`] for an `n x m` grid.
    pub fn from_dense(n: usize, m: usize, v: &DVector<f64>) -> Result<Self> {
        let mut x = Self::zeros(n, m);
        if v.len() != x.len() {
            return Err(UnwrapError::InvalidArgument(format!(
                "dense vector has length {}, expected {}",
                v.len(),
                x.len()
            )));
        }
        let mut offset = 0;
        for block in [&mut x.u, &mut x.vv, &mut x.vh] {
            let (r, c) = block.dim();
            for j in 0..c {
                for i in 0..r {
                    block[[i, j]] = v[offset + i + j * r];
                }
            }
            offset += r * c;
        }
        Ok(x)
    }
}

fn dot2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Diagonals `D^v`, `D^h` of the slack blocks, stored as grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeights {
    pub dv: Array2<f64>,
    pub dh: Array2<f64>,
}

impl DiagonalWeights {
    pub fn new(dv: Array2<f64>, dh: Array2<f64>) -> Result<Self> {
        for d in dv.iter().chain(dh.iter()) {
            if !d.is_finite() || *d < 0.0 {
                return Err(UnwrapError::InvalidArgument(format!(
                    "diagonal weight {d} must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { dv, dh })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            dv: Array2::zeros((n.saturating_sub(1), m)),
            dh: Array2::zeros((n, m.saturating_sub(1))),
        }
    }

    fn check_grid(&self, n: usize, m: usize) -> Result<()> {
        check_shape("vertical diagonal", (n.saturating_sub(1), m), self.dv.dim())?;
        check_shape("horizontal diagonal", (n, m.saturating_sub(1)), self.dh.dim())
    }
}

/// `S U`: vertical forward differences, `(N-1) x M`.
pub fn apply_s(u: ArrayView2<f64>) -> Array2<f64> {
    if u.nrows() < 2 {
        return Array2::zeros((0, u.ncols()));
    }
    &u.slice(s![1.., ..]) - &u.slice(s![..-1, ..])
}

/// `Sᵀ V`: adjoint of [`apply_s`], `N x M`.
pub fn apply_s_transpose(v: ArrayView2<f64>) -> Array2<f64> {
    let (arcs, m) = v.dim();
    let n = arcs + 1;
    let mut out = Array2::zeros((n, m));
    if arcs == 0 {
        return out;
    }
    out.slice_mut(s![..-1, ..]).assign(&(-&v));
    let mut tail = out.slice_mut(s![1.., ..]);
    tail += &v;
    out
}

/// `U T`: horizontal forward differences, `N x (M-1)`.
pub fn apply_t(u: ArrayView2<f64>) -> Array2<f64> {
    if u.ncols() < 2 {
        return Array2::zeros((u.nrows(), 0));
    }
    &u.slice(s![.., 1..]) - &u.slice(s![.., ..-1])
}

/// `V Tᵀ`: adjoint of [`apply_t`], `N x M`.
pub fn apply_t_transpose(v: ArrayView2<f64>) -> Array2<f64> {
    let (n, arcs) = v.dim();
    let m = arcs + 1;
    let mut out = Array2::zeros((n, m));
    if arcs == 0 {
        return out;
    }
    out.slice_mut(s![.., ..-1]).assign(&(-&v));
    let mut tail = out.slice_mut(s![.., 1..]);
    tail += &v;
    out
}

/// `SᵀS U + U TTᵀ`, the separable second-difference operator with free boundaries.
pub fn apply_laplacian(u: ArrayView2<f64>) -> Array2<f64> {
    apply_s_transpose(apply_s(u).view()) + apply_t_transpose(apply_t(u).view())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(UnwrapError::InvalidArgument(format!(
            "penalty tau must be positive and finite, got {tau}"
        )))
    }
}

/// Applies the system matrix of the inner least-squares problem:
///
/// ```text
/// (1/τ)(SᵀS U + U TTᵀ − Sᵀ V^v − V^h Tᵀ)
/// D^v ⊙ V^v + (1/τ)(V^v − S U)
/// D^h ⊙ V^h + (1/τ)(V^h − U T)
/// ```
pub fn apply_system(x: &SystemVector, d: &DiagonalWeights, tau: f64) -> Result<SystemVector> {
    check_tau(tau)?;
    let (n, m) = x.grid_dim();
    d.check_grid(n, m)?;
    let inv_tau = 1.0 / tau;

    let su = apply_s(x.u.view());
    let ut = apply_t(x.u.view());
    let mut u = apply_s_transpose((&su - &x.vv).view());
    u += &apply_t_transpose((&ut - &x.vh).view());
    u *= inv_tau;

    let vv = Zip::from(&d.dv)
        .and(&x.vv)
        .and(&su)
        .map_collect(|&dv, &v, &s| dv * v + inv_tau * (v - s));
    let vh = Zip::from(&d.dh)
        .and(&x.vh)
        .and(&ut)
        .map_collect(|&dh, &v, &t| dh * v + inv_tau * (v - t));

    Ok(SystemVector { u, vv, vh })
}

/// Right-hand side `((1/τ)(Sᵀ G^v + G^h Tᵀ), −G^v/τ, −G^h/τ)`.
pub fn build_rhs(g: &GradientField, tau: f64) -> Result<SystemVector> {
    check_tau(tau)?;
    let inv_tau = 1.0 / tau;
    let mut u = apply_s_transpose(g.gv.view()) + apply_t_transpose(g.gh.view());
    u *= inv_tau;
    Ok(SystemVector {
        u,
        vv: g.gv.mapv(|v| -inv_tau * v),
        vh: g.gh.mapv(|v| -inv_tau * v),
    })
}

/// Largest grid (in pixels) the dense oracles will materialize.
pub const DENSE_PIXEL_LIMIT: usize = 4096;

/// Dense `S`, `(n-1) x n`.
pub fn dense_s(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n.saturating_sub(1), n, |i, j| {
        if j == i + 1 {
            1.0
        } else if j == i {
            -1.0
        } else {
            0.0
        }
    })
}

/// Dense `T`, `m x (m-1)`.
pub fn dense_t(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m.saturating_sub(1), |i, j| {
        if i == j + 1 {
            1.0
        } else if i == j {
            -1.0
        } else {
            0.0
        }
    })
}

pub(crate) fn check_dense_size(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(UnwrapError::InvalidArgument(format!(
            "grid must be non-empty, got {n}x{m}"
        )));
    }
    if n * m > DENSE_PIXEL_LIMIT {
        return Err(UnwrapError::ResourceLimit(format!(
            "dense materialization of a {n}x{m} grid exceeds {DENSE_PIXEL_LIMIT} pixels"
        )));
    }
    Ok(())
}

/// Dense `(NM + (N-1)M + N(M-1))²` system matrix assembled from Kronecker products,
/// in the column-stacked layout of [`SystemVector::to_dense`].
pub fn materialize_dense_system(n: usize, m: usize, d: &DiagonalWeights, tau: f64) -> Result<DMatrix<f64>> {
    check_dense_size(n, m)?;
    check_tau(tau)?;
    d.check_grid(n, m)?;
    let inv_tau = 1.0 / tau;
    let s = dense_s(n);
    let t = dense_t(m);
    let i_n = DMatrix::<f64>::identity(n, n);
    let i_m = DMatrix::<f64>::identity(m, m);

    let s_block = i_m.kronecker(&s); // vec(S U)
    let t_block = t.transpose().kronecker(&i_n); // vec(U T)
    let lap = i_m.kronecker(&(s.transpose() * &s)) + (&t * t.transpose()).kronecker(&i_n);

    let nu = n * m;
    let nv = s_block.nrows();
    let nh = t_block.nrows();
    let dim = nu + nv + nh;
    let mut a = DMatrix::zeros(dim, dim);

    a.view_mut((0, 0), (nu, nu)).copy_from(&(lap * inv_tau));
    a.view_mut((nu, 0), (nv, nu)).copy_from(&(&s_block * -inv_tau));
    a.view_mut((0, nu), (nu, nv))
        .copy_from(&(s_block.transpose() * -inv_tau));
    a.view_mut((nu + nv, 0), (nh, nu))
        .copy_from(&(&t_block * -inv_tau));
    a.view_mut((0, nu + nv), (nu, nh))
        .copy_from(&(t_block.transpose() * -inv_tau));

    let dv = d.dv.t().iter().copied().collect::<Vec<_>>();
    let dh = d.dh.t().iter().copied().collect::<Vec<_>>();
    for (k, dk) in dv.iter().enumerate() {
        a[(nu + k, nu + k)] = dk + inv_tau;
    }
    for (k, dk) in dh.iter().enumerate() {
        a[(nu + nv + k, nu + nv + k)] = dk + inv_tau;
    }
    Ok(a)
}
