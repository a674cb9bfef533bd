//! Command-line front end: `unwrap`, `synth`, `error` and `spectrum`.
//!
//! Arrays are exchanged as NPY v1.0 files (see [`npy`]). Exit codes:
//! 0 success, 1 invalid arguments or output failure, 2 malformed or missing
//! input file, 3 dimension mismatch, 4 numerical breakdown.

pub mod npy;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;

use l1unwrap::{
    add_phase_noise, conditioning_report, congruent_round, generate_scene, shift_error, unwrap, wrap_scene,
    IrlsParams, IrlsRecord, ModelParams, PhaseGrid, PhaseInterval, SceneKind, SceneSpec, SpectralMethod,
    UnwrapError, WeightField, WrappedPhase,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<UnwrapError> for CliError {
    fn from(e: UnwrapError) -> Self {
        match e {
            UnwrapError::DimensionMismatch { .. } => CliError::Dimension(e.to_string()),
            UnwrapError::NumericalBreakdown { .. } => CliError::Numerical(e.to_string()),
            UnwrapError::InvalidArgument(_) | UnwrapError::ResourceLimit(_) => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "l1unwrap", version, about = "L1-norm phase unwrapping by IRLS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unwrap a wrapped phase image.
    Unwrap(UnwrapArgs),
    /// Generate a synthetic scene.
    Synth(SynthArgs),
    /// Compare an estimate with ground truth after the optimal constant shift.
    Error(ErrorArgs),
    /// Dense conditioning study of the system and preconditioned matrices.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntervalArg {
    /// [-π, π)
    Symmetric,
    /// [0, 2π)
    ZeroTwoPi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpectralArg {
    Numeric,
    Analytic,
}

#[derive(Debug, Args)]
pub struct UnwrapArgs {
    /// Wrapped phase (values outside [0, 2π) are wrapped first).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Vertical arc weights, (N-1) x M.
    #[arg(long, requires = "ch")]
    pub cv: Option<PathBuf>,
    /// Horizontal arc weights, N x (M-1).
    #[arg(long, requires = "cv")]
    pub ch: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-2)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 5)]
    pub cg_start: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_tol: f64,
    #[arg(long, default_value_t = 1.7)]
    pub cg_growth: f64,
    #[arg(long, default_value_t = 10_000)]
    pub cg_cap: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub cg_rel_tol: f64,
    /// Principal interval for wrapped gradients.
    #[arg(long, value_enum, default_value_t = IntervalArg::Symmetric)]
    pub interval: IntervalArg,
    #[arg(long, value_enum, default_value_t = SpectralArg::Numeric)]
    pub spectral: SpectralArg,
    /// Snap the output to the nearest image congruent with the input.
    #[arg(long)]
    pub congruent: bool,
    /// Per-iteration trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Weighting {
    Uniform,
    Files { cv: PathBuf, ch: PathBuf },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelParams,
    pub irls: IrlsParams,
    pub weighting: Weighting,
    pub interval: PhaseInterval,
}

impl RunConfig {
    pub fn from_args(a: &UnwrapArgs) -> CliResult<Self> {
        let model = ModelParams::new(a.tau, a.delta)?;
        let irls = IrlsParams {
            max_iter_cg_start: a.cg_start,
            rel_improvement_tol: a.eps_tol,
            cg_growth_factor: a.cg_growth,
            max_outer_iters: a.max_outer,
            max_cg_iters_cap: a.cg_cap,
            cg_rel_tol: a.cg_rel_tol,
            spectral: match a.spectral {
                SpectralArg::Numeric => SpectralMethod::Numeric,
                SpectralArg::Analytic => SpectralMethod::Analytic,
            },
        };
        irls.validate()?;
        let weighting = match (&a.cv, &a.ch) {
            (Some(cv), Some(ch)) => Weighting::Files {
                cv: cv.clone(),
                ch: ch.clone(),
            },
            _ => Weighting::Uniform,
        };
        let interval = match a.interval {
            IntervalArg::Symmetric => PhaseInterval::Symmetric,
            IntervalArg::ZeroTwoPi => PhaseInterval::ZeroToTwoPi,
        };
        Ok(Self {
            model,
            irls,
            weighting,
            interval,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Ramp,
    GaussianBumps,
    PlateauDiscontinuity,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    /// Radians.
    #[arg(long)]
    pub amplitude: f64,
    /// Pixels.
    #[arg(long)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the wrapped image (implied by --out-wrapped).
    #[arg(long, requires = "out_wrapped")]
    pub wrap: bool,
    /// Gaussian phase noise added to the wrapped image.
    #[arg(long, default_value_t = 0.0, requires = "out_wrapped")]
    pub noise_sigma: f64,
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
    #[arg(long)]
    pub out_wrapped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErrorArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

/// One trace line.
#[derive(Debug, Serialize)]
struct TraceLine {
    k: usize,
    m_cg: usize,
    delta_rel: Option<f64>,
    h_delta: f64,
    cg_iters: usize,
    fallback: bool,
}

impl From<&IrlsRecord> for TraceLine {
    fn from(r: &IrlsRecord) -> Self {
        Self {
            k: r.k,
            m_cg: r.m_cg,
            delta_rel: r.delta_rel,
            h_delta: r.h_delta,
            cg_iters: r.cg_iters,
            fallback: r.fallback,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorSummary {
    alpha: f64,
    max_abs: f64,
    rmse: f64,
    congruent_fraction: f64,
}

fn read_grid(path: &Path, what: &str) -> CliResult<Array2<f64>> {
    npy::read(path).map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

fn read_phase(path: &Path, what: &str) -> CliResult<PhaseGrid> {
    PhaseGrid::new(read_grid(path, what)?)
        .map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

fn write_grid(path: &Path, a: &Array2<f64>) -> CliResult<()> {
    npy::write(path, a, npy::Dtype::F8).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report types serialize")
}

fn load_weights(w: &Weighting, n: usize, m: usize) -> CliResult<WeightField> {
    match w {
        Weighting::Uniform => Ok(WeightField::uniform(n, m)),
        Weighting::Files { cv, ch } => {
            let cv = read_grid(cv, "vertical weights")?;
            let ch = read_grid(ch, "horizontal weights")?;
            WeightField::new(cv, ch, n, m).map_err(|e| match e {
                UnwrapError::DimensionMismatch { .. } => CliError::Dimension(e.to_string()),
                other => CliError::Input(format!("weights: {other}")),
            })
        }
    }
}

pub fn cmd_unwrap(a: &UnwrapArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::from_args(a)?;
    let raw = read_phase(&a.input, "input")?;
    let x = WrappedPhase::wrap(&raw);
    let (n, m) = x.dim();
    let c = load_weights(&cfg.weighting, n, m)?;
    let result = unwrap(&x, &c, cfg.interval, &cfg.model, &cfg.irls)?;
    let u = if a.congruent {
        congruent_round(&result.unwrapped, &x)?
    } else {
        result.unwrapped.clone()
    };
    write_grid(&a.output, u.values())?;
    if let Some(path) = &a.trace {
        let file = File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        for r in &result.trace.records {
            writeln!(w, "{}", to_json(&TraceLine::from(r)))
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        }
        w.flush()
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    let _ = writeln!(
        out,
        "unwrapped {n}x{m}: {} outer iterations, {} CG iterations, {} fallbacks, F_delta = {:.6e}",
        result.trace.records.len(),
        result.trace.records.iter().map(|r| r.cg_iters).sum::<usize>(),
        result.trace.fallback_count(),
        result.f_delta
    );
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.out_truth.is_none() && a.out_wrapped.is_none() {
        return Err(CliError::Usage(
            "nothing to write: give --out-truth and/or --out-wrapped".into(),
        ));
    }
    let spec = SceneSpec {
        kind: match a.kind {
            KindArg::Ramp => SceneKind::Ramp,
            KindArg::GaussianBumps => SceneKind::GaussianBumps,
            KindArg::PlateauDiscontinuity => SceneKind::PlateauDiscontinuity,
        },
        rows: a.rows,
        cols: a.cols,
        amplitude: a.amplitude,
        feature_scale: a.scale,
        seed: a.seed,
    };
    let truth = generate_scene(&spec)?;
    if let Some(path) = &a.out_truth {
        write_grid(path, truth.values())?;
    }
    if let Some(path) = &a.out_wrapped {
        // noise stream is decoupled from the scene stream
        let wrapped = add_phase_noise(&wrap_scene(&truth), a.noise_sigma, a.seed ^ 0x6E6F_6973_6500_0000)?;
        write_grid(path, wrapped.values())?;
    }
    let _ = writeln!(out, "generated {}x{} scene", a.rows, a.cols);
    Ok(())
}

pub fn cmd_error(a: &ErrorArgs, out: &mut dyn Write) -> CliResult<()> {
    let estimate = read_phase(&a.estimate, "estimate")?;
    let truth = read_phase(&a.truth, "truth")?;
    let r = shift_error(&estimate, &truth)?;
    let json = to_json(&ErrorSummary {
        alpha: r.alpha,
        max_abs: r.max_abs,
        rmse: r.rmse,
        congruent_fraction: r.congruent_fraction,
    });
    if let Some(path) = &a.json_out {
        write_text(path, &json)?;
    }
    let _ = writeln!(out, "{json}");
    Ok(())
}

pub fn cmd_spectrum(a: &SpectrumArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = conditioning_report(a.n, a.m, a.delta, a.tau, a.seed)?;
    let json = to_json(&report);
    match &a.json_out {
        Some(path) => {
            write_text(path, &json)?;
            let _ = writeln!(
                out,
                "kappa_a = {:.6e}, kappa_pre = {:.6e}, rho_a = {:.6}, rho_pre = {:.6}",
                report.kappa_a, report.kappa_pre, report.rho_a, report.rho_pre
            );
        }
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Unwrap(a) => cmd_unwrap(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Error(a) => cmd_error(a, out),
        Command::Spectrum(a) => cmd_spectrum(a, out),
    }
}
