//! Finite element solver for Landau-Lifshitz-Gilbert magnetization dynamics.
//!
//! The central object is the tangent-plane θ-scheme: at each step the update
//! velocity `v` is solved for in the discrete tangent space of the current
//! unit magnetization `m` (per-node constraint `v_n · m_n = 0`), then the
//! nodal values are renormalized. The scheme dissipates exchange energy
//! unconditionally for θ ∈ (1/2, 1] on meshes whose stiffness matrix has no
//! positive off-diagonal entries.
//!
//! Modules, bottom up: [`vec3`] small vector helpers, [`sparse`] CSR storage
//! and the iterative solver, [`mesh`] structured meshes and quality checks,
//! [`field`] nodal vector fields, [`fem`] P1 operator assembly, [`torque`]
//! separable spin-torque models, [`tangent`] the per-step constrained solve,
//! [`stepper`] the time loop and diagnostics, [`spectral`] a 1D cosine-basis
//! cross-check solver, [`config`]/[`experiment`] the run description and the
//! file-writing driver used by the CLI.

use std::path::PathBuf;

pub mod config;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod mesh;
pub mod sparse;
pub mod spectral;
pub mod stepper;
pub mod tangent;
pub mod torque;
pub mod vec3;

/// Errors produced by any layer of the solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed mesh or field file (line numbers are 1-based).
    #[error("format error in {path} line {line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    /// A constructed or loaded mesh violates a structural invariant.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    /// Mismatched sizes or out-of-range arguments between components.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Configuration file rejected (parse error or failed validation).
    #[error("config error: {0}")]
    Config(String),
    /// The iterative linear solver exhausted its budget.
    #[error("linear solve did not converge: residual {residual:.3e} after {iters} iterations (tol {tol:.1e})")]
    SolverFailure {
        residual: f64,
        iters: usize,
        tol: f64,
    },
    /// A nodal norm fell below the normalization guard; upstream tangency
    /// must have been violated for this to happen.
    #[error("normalization failed at node {node}: |u| = {norm:.3e} < {min_norm}")]
    DegenerateNode {
        node: usize,
        norm: f64,
        min_norm: f64,
    },
    /// A run-time invariant of the scheme was breached.
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// The explicit spectral integrator produced a non-finite state.
    #[error("spectral integration blew up at t = {time:.6}: {msg}")]
    SpectralBlowup { time: f64, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code category used by the CLI: 2 config, 3 solver,
    /// 4 invariant violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format { .. } | Error::InvalidArgument(_) | Error::InvalidMesh(_) => 2,
            Error::SolverFailure { .. } | Error::SpectralBlowup { .. } => 3,
            Error::Invariant(_) | Error::DegenerateNode { .. } => 4,
            _ => 1,
        }
    }
}
