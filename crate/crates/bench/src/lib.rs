//! Shared fixtures for the solver benchmarks.

use std::sync::Arc;

use l1unwrap::diagnostics::random_diagonal;
use l1unwrap::{
    add_phase_noise, build_rhs, build_spectral_cache, generate_scene, wrap_scene, CounterRng,
    DiagonalWeights, GradientField, PreconditionerState, SceneKind, SceneSpec, SystemVector, WrappedPhase,
};
use ndarray::Array2;

pub const TAU: f64 = 1e-2;

/// Wrapped Gaussian-bump scene with additive phase noise.
pub fn noisy_scene(n: usize, sigma: f64, seed: u64) -> WrappedPhase {
    let truth = generate_scene(&SceneSpec {
        kind: SceneKind::GaussianBumps,
        rows: n,
        cols: n,
        amplitude: 0.2 * n as f64,
        feature_scale: n as f64 / 4.0,
        seed,
    })
    .expect("valid scene");
    add_phase_noise(&wrap_scene(&truth), sigma, seed + 1).expect("valid noise")
}

pub struct LinearProblem {
    pub d: DiagonalWeights,
    pub b: SystemVector,
    pub pc: PreconditionerState,
}

/// Inner system with random slack weights up to `1/delta`.
pub fn linear_problem(n: usize, delta: f64, seed: u64) -> LinearProblem {
    let d = random_diagonal(n, n, delta, seed);
    let mut rng = CounterRng::new(seed + 1);
    let g = GradientField {
        gv: Array2::from_shape_fn((n - 1, n), |_| rng.uniform(-3.0, 3.0)),
        gh: Array2::from_shape_fn((n, n - 1), |_| rng.uniform(-3.0, 3.0)),
    };
    let b = build_rhs(&g, TAU).expect("valid rhs");
    let cache = Arc::new(build_spectral_cache(n, n).expect("valid grid"));
    let pc = PreconditionerState::new(cache, &d, TAU).expect("valid preconditioner");
    LinearProblem { d, b, pc }
}
