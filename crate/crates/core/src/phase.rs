//! Phase grids, wrapping conventions, wrapped gradients and error metrics.

use std::f64::consts::{PI, TAU};

use ndarray::{s, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Result, UnwrapError};

/// Principal interval used when reducing a phase modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseInterval {
    /// `[0, 2π)`, the range of a wrapped image.
    ZeroToTwoPi,
    /// `[-π, π)`, the default for wrapped gradients.
    #[default]
    Symmetric,
}

impl PhaseInterval {
    pub fn lower(self) -> f64 {
        match self {
            PhaseInterval::ZeroToTwoPi => 0.0,
            PhaseInterval::Symmetric => -PI,
        }
    }
}

/// Reduces `x` into `[lo, lo + 2π)`.
pub fn wrap_to_principal(x: f64, interval: PhaseInterval) -> Result<f64> {
    if !x.is_finite() {
        return Err(UnwrapError::InvalidArgument(format!(
            "cannot wrap non-finite phase {x}"
        )));
    }
    Ok(wrap_unchecked(x, interval.lower()))
}

#[inline]
pub(crate) fn wrap_unchecked(x: f64, lo: f64) -> f64 {
    let k = ((x - lo) / TAU).floor();
    let mut y = x - k * TAU;
    // floor() can land one period off when x - lo sits on a multiple of 2π
    if y >= lo + TAU {
        y -= TAU;
    }
    if y < lo {
        y += TAU;
    }
    // y may round up to exactly lo + 2π after the correction above
    if y >= lo + TAU {
        y = lo;
    }
    y
}

/// An `N x M` grid of phase values in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    values: Array2<f64>,
}

impl PhaseGrid {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(UnwrapError::InvalidArgument(format!(
                "phase grid must be non-empty, got {n}x{m}"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(UnwrapError::InvalidArgument(format!(
                "phase grid contains non-finite value {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "phase grid must be non-empty");
        Self {
            values: Array2::zeros((rows, cols)),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }
}

/// A phase grid whose values all lie in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedPhase(PhaseGrid);

impl WrappedPhase {
    /// Accepts a grid that is already in `[0, 2π)`.
    pub fn new(grid: PhaseGrid) -> Result<Self> {
        if let Some(bad) = grid.values.iter().find(|v| !(0.0..TAU).contains(*v)) {
            return Err(UnwrapError::InvalidArgument(format!(
                "wrapped phase value {bad} outside [0, 2pi)"
            )));
        }
        Ok(Self(grid))
    }

    /// Wraps arbitrary phase values into `[0, 2π)`.
    pub fn wrap(grid: &PhaseGrid) -> Self {
        Self(PhaseGrid {
            values: grid.values.mapv(|v| wrap_unchecked(v, 0.0)),
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.0
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn into_grid(self) -> PhaseGrid {
        self.0
    }
}

/// Wrapped vertical and horizontal phase differences.
///
/// `gv` is `(N-1) x M`, `gh` is `N x (M-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gv: Array2<f64>,
    pub gh: Array2<f64>,
}

impl GradientField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            gv: Array2::zeros((rows.saturating_sub(1), cols)),
            gh: Array2::zeros((rows, cols.saturating_sub(1))),
        }
    }

    /// Grid dimensions `(N, M)` of the image these gradients came from.
    pub fn grid_dim(&self) -> (usize, usize) {
        (self.gh.nrows(), self.gv.ncols())
    }

    pub fn arc_count(&self) -> usize {
        self.gv.len() + self.gh.len()
    }
}

/// Wrapped gradients of a wrapped image, reduced into `interval`.
pub fn wrapped_gradients(x: &WrappedPhase, interval: PhaseInterval) -> GradientField {
    let v = x.values();
    let lo = interval.lower();
    let gv = (&v.slice(s![1.., ..]) - &v.slice(s![..-1, ..])).mapv(|d| wrap_unchecked(d, lo));
    let gh = (&v.slice(s![.., 1..]) - &v.slice(s![.., ..-1])).mapv(|d| wrap_unchecked(d, lo));
    GradientField { gv, gh }
}

/// Nonnegative arc weights `C^v`, `C^h`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    cv: Array2<f64>,
    ch: Array2<f64>,
}

impl WeightField {
    /// Validates shapes against an `rows x cols` image and the weight invariants.
    pub fn new(cv: Array2<f64>, ch: Array2<f64>, rows: usize, cols: usize) -> Result<Self> {
        check_shape("vertical weights", (rows.saturating_sub(1), cols), cv.dim())?;
        check_shape("horizontal weights", (rows, cols.saturating_sub(1)), ch.dim())?;
        for w in cv.iter().chain(ch.iter()) {
            if !w.is_finite() || *w < 0.0 {
                return Err(UnwrapError::InvalidArgument(format!(
                    "arc weight {w} must be finite and nonnegative"
                )));
            }
        }
        let arcs = cv.len() + ch.len();
        if arcs > 0 && cv.iter().chain(ch.iter()).all(|w| *w == 0.0) {
            return Err(UnwrapError::InvalidArgument(
                "at least one arc weight must be positive".into(),
            ));
        }
        Ok(Self { cv, ch })
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            cv: Array2::ones((rows.saturating_sub(1), cols)),
            ch: Array2::ones((rows, cols.saturating_sub(1))),
        }
    }

    pub fn cv(&self) -> &Array2<f64> {
        &self.cv
    }

    pub fn ch(&self) -> &Array2<f64> {
        &self.ch
    }

    /// Largest weight over both fields (0 when there are no arcs).
    pub fn c_max(&self) -> f64 {
        self.cv.iter().chain(self.ch.iter()).fold(0.0, |a, &b| a.max(b))
    }
}

/// Error of an estimate against a reference after removing the best constant shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub alpha: f64,
    #[serde(skip)]
    pub error_grid: Array2<f64>,
    pub max_abs: f64,
    pub rmse: f64,
    pub congruent_fraction: f64,
}

/// Tolerance (in cycles) for counting a pixel as congruent.
pub const CONGRUENCE_TOL_CYCLES: f64 = 1e-3;

/// `E = x_u - (u + alpha)`, with `alpha` the least-squares optimal shift.
///
/// `congruent_fraction` counts pixels whose shifted error is within
/// [`CONGRUENCE_TOL_CYCLES`] of a multiple of 2π.
pub fn shift_error(u: &PhaseGrid, x_u: &PhaseGrid) -> Result<ErrorReport> {
    check_shape("estimate vs reference", x_u.dim(), u.dim())?;
    let diff = &x_u.values - &u.values;
    let count = diff.len() as f64;
    let alpha = diff.sum() / count;
    let error_grid = diff.mapv(|d| d - alpha);
    let max_abs = error_grid.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    let rmse = (error_grid.iter().map(|e| e * e).sum::<f64>() / count).sqrt();
    let congruent = error_grid
        .iter()
        .filter(|e| {
            let cycles = *e / TAU;
            (cycles - cycles.round()).abs() <= CONGRUENCE_TOL_CYCLES
        })
        .count();
    Ok(ErrorReport {
        alpha,
        error_grid,
        max_abs,
        rmse,
        congruent_fraction: congruent as f64 / count,
    })
}

/// Snaps `u` to the nearest value congruent to `x` modulo 2π, pixel by pixel.
pub fn congruent_round(u: &PhaseGrid, x: &WrappedPhase) -> Result<PhaseGrid> {
    check_shape("estimate vs wrapped input", x.dim(), u.dim())?;
    let values = Zip::from(u.values())
        .and(x.values())
        .map_collect(|&u, &x| x + TAU * ((u - x) / TAU).round());
    Ok(PhaseGrid { values })
}

/// Subtracts the mean so the grid sums to zero.
pub fn center_mean_zero(u: &PhaseGrid) -> PhaseGrid {
    let mean = u.mean();
    PhaseGrid {
        values: u.values.mapv(|v| v - mean),
    }
}

pub(crate) fn center_in_place(u: &mut Array2<f64>) {
    let mean = u.sum() / u.len() as f64;
    u.mapv_inplace(|v| v - mean);
}
