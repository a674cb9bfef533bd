//! Seeded synthetic scenes for tests, benchmarks and acceptance runs.
//!
//! All randomness comes from [`CounterRng`], so a [`SceneSpec`] fully
//! determines the output bits.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnwrapError};
use crate::phase::{wrap_unchecked, PhaseGrid, WrappedPhase};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Planar phase with seeded direction; slope `amplitude / feature_scale` rad/pixel.
    Ramp,
    /// Sum of seeded Gaussians of width around `feature_scale` and height up to `amplitude`.
    GaussianBumps,
    /// Step of height `amplitude` across a seeded polyline with a vertex every
    /// `feature_scale` columns. Straight when `feature_scale` spans the grid.
    PlateauDiscontinuity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub rows: usize,
    pub cols: usize,
    pub amplitude: f64,
    pub feature_scale: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(UnwrapError::InvalidArgument(format!(
                "scene must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(UnwrapError::InvalidArgument(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(UnwrapError::InvalidArgument(format!(
                "feature scale must be positive, got {}",
                self.feature_scale
            )));
        }
        Ok(())
    }
}

/// Ground-truth unwrapped phase.
pub fn generate_scene(spec: &SceneSpec) -> Result<PhaseGrid> {
    spec.validate()?;
    let mut rng = CounterRng::new(spec.seed);
    let values = match spec.kind {
        SceneKind::Ramp => {
            let slope = spec.amplitude / spec.feature_scale;
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            return ramp_scene(spec.rows, spec.cols, slope * theta.cos(), slope * theta.sin());
        }
        SceneKind::GaussianBumps => bumps(spec, &mut rng),
        SceneKind::PlateauDiscontinuity => plateau(spec, &mut rng),
    };
    PhaseGrid::new(values)
}

/// `U[i][j] = a·i + b·j`.
pub fn ramp_scene(rows: usize, cols: usize, a: f64, b: f64) -> Result<PhaseGrid> {
    PhaseGrid::new(Array2::from_shape_fn((rows, cols), |(i, j)| {
        a * i as f64 + b * j as f64
    }))
}

fn bumps(spec: &SceneSpec, rng: &mut CounterRng) -> Array2<f64> {
    let (rows, cols) = (spec.rows as f64, spec.cols as f64);
    let count = (rows * cols / (spec.feature_scale * spec.feature_scale))
        .ceil()
        .clamp(1.0, 64.0) as usize;
    let params: Vec<[f64; 4]> = (0..count)
        .map(|_| {
            let ci = rng.uniform(0.0, rows);
            let cj = rng.uniform(0.0, cols);
            let sigma = spec.feature_scale * rng.uniform(0.5, 1.0);
            let height = spec.amplitude * rng.uniform(-1.0, 1.0);
            [ci, cj, sigma, height]
        })
        .collect();
    Array2::from_shape_fn((spec.rows, spec.cols), |(i, j)| {
        params
            .iter()
            .map(|&[ci, cj, sigma, h]| {
                let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                h * (-r2 / (2.0 * sigma * sigma)).exp()
            })
            .sum()
    })
}

/// Row of the seam at every column.
fn seam_rows(spec: &SceneSpec, rng: &mut CounterRng) -> Vec<f64> {
    let (rows, cols) = (spec.rows as f64, spec.cols);
    let mut draw = || rng.uniform(0.25 * rows, 0.75 * rows);
    let step = spec.feature_scale;
    let last = (cols - 1) as f64;
    if step >= last {
        let r = draw();
        return vec![r; cols];
    }
    let mut knots = Vec::new();
    let mut at = 0.0;
    while at < last {
        knots.push((at, draw()));
        at += step;
    }
    knots.push((last, draw()));
    (0..cols)
        .map(|j| {
            let x = j as f64;
            let seg = knots
                .windows(2)
                .find(|w| x <= w[1].0)
                .unwrap_or(&knots[knots.len() - 2..]);
            let (x0, y0) = seg[0];
            let (x1, y1) = seg[1];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
        .collect()
}

fn plateau(spec: &SceneSpec, rng: &mut CounterRng) -> Array2<f64> {
    if spec.cols == 1 {
        let r = rng.uniform(0.25 * spec.rows as f64, 0.75 * spec.rows as f64);
        return Array2::from_shape_fn(
            (spec.rows, 1),
            |(i, _)| if i as f64 >= r { spec.amplitude } else { 0.0 },
        );
    }
    let seam = seam_rows(spec, rng);
    Array2::from_shape_fn((spec.rows, spec.cols), |(i, j)| {
        if i as f64 >= seam[j] {
            spec.amplitude
        } else {
            0.0
        }
    })
}

/// Wraps ground truth into `[0, 2π)`.
pub fn wrap_scene(u: &PhaseGrid) -> WrappedPhase {
    WrappedPhase::wrap(u)
}

/// Adds seeded `N(0, σ²)` noise and re-wraps.
pub fn add_phase_noise(x: &WrappedPhase, sigma: f64, seed: u64) -> Result<WrappedPhase> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(UnwrapError::InvalidArgument(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = CounterRng::new(seed);
    let noisy = x
        .values()
        .mapv(|v| wrap_unchecked(v + sigma * rng.next_gaussian(), 0.0));
    WrappedPhase::new(PhaseGrid::new(noisy)?)
}

/// Largest absolute difference between 4-neighbors.
pub fn max_neighbor_difference(u: &PhaseGrid) -> f64 {
    let v = u.values();
    let (n, m) = v.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            if i + 1 < n {
                worst = worst.max((v[[i + 1, j]] - v[[i, j]]).abs());
            }
            if j + 1 < m {
                worst = worst.max((v[[i, j + 1]] - v[[i, j]]).abs());
            }
        }
    }
    worst
}
