//! L1-norm phase unwrapping by iteratively reweighted least squares.
//!
//! The solver minimizes a weighted L1 misfit between the gradients of the
//! unwrapped phase and the wrapped gradients of the input, with a quadratic
//! penalty coupling the two. Each outer step solves a large sparse system
//! by preconditioned conjugate gradient; the pixel block of the
//! preconditioner is a Sylvester equation solved in a precomputed eigenbasis.
//!
//! ```
//! use l1unwrap::{
//!     generate_scene, unwrap, wrap_scene, IrlsParams, ModelParams, PhaseInterval, SceneKind,
//!     SceneSpec, WeightField, shift_error,
//! };
//!
//! let truth = generate_scene(&SceneSpec {
//!     kind: SceneKind::Ramp,
//!     rows: 24,
//!     cols: 24,
//!     amplitude: 3.0,
//!     feature_scale: 10.0,
//!     seed: 1,
//! })?;
//! let wrapped = wrap_scene(&truth);
//! let out = unwrap(
//!     &wrapped,
//!     &WeightField::uniform(24, 24),
//!     PhaseInterval::Symmetric,
//!     &ModelParams::default(),
//!     &IrlsParams::default(),
//! )?;
//! assert!(shift_error(&out.unwrapped, &truth)?.max_abs < 1e-2);
//! # Ok::<(), l1unwrap::UnwrapError>(())
//! ```

pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod irls;
pub mod objective;
pub mod operators;
pub mod pcg;
pub mod phase;
pub mod preconditioner;
pub mod rng;
pub mod synth;

pub use diagnostics::{conditioning_report, ConditioningReport};
pub use error::{Result, UnwrapError};
pub use irls::{
    cg_budget_update, relative_improvement, unwrap, unwrap_with_gradients, CgBudget, IrlsParams, IrlsRecord,
    IrlsTrace, StopReason, UnwrapOutput,
};
pub use objective::{
    candidate_step, eval_f, eval_f_delta, eval_h_delta, lipschitz_constant, sufficient_decrease_holds,
    update_weights, IrlsWeights, ModelParams,
};
pub use operators::{apply_system, build_rhs, materialize_dense_system, DiagonalWeights, SystemVector};
pub use pcg::{pcg_solve, PcgOptions, PcgOutcome};
pub use phase::{
    center_mean_zero, congruent_round, shift_error, wrap_to_principal, wrapped_gradients, ErrorReport,
    GradientField, PhaseGrid, PhaseInterval, WeightField, WrappedPhase,
};
pub use preconditioner::{
    apply_preconditioner, build_spectral_cache, sylvester_solve, PreconditionerState, SpectralCache,
    SpectralMethod,
};
pub use rng::CounterRng;
pub use synth::{add_phase_noise, generate_scene, wrap_scene, SceneKind, SceneSpec};
