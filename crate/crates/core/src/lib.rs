//! # distortcox
//!
//! Cox proportional-hazards regression when one covariate is only observed
//! through a multiplicative distortion `X̃ = φ(U)·X` driven by an observed
//! confounder `U`, with `φ` unknown but `E φ(U) = 1`.
//!
//! The workflow is:
//!
//! 1. pick a bandwidth for `U` by least-squares cross-validation
//!    ([`kernel::select_bandwidth`]);
//! 2. estimate `φ` by Nadaraya-Watson smoothing and calibrate the covariate,
//!    `X̂ = X̃ / φ̂(U)` ([`calibration::calibrate`]);
//! 3. maximise the Cox partial likelihood with `X̂` ([`cox::fit`]);
//! 4. correct the standard error of the distorted coefficient for the
//!    calibration step ([`cox::sandwich_variance`]).
//!
//! [`simulation`] regenerates the Monte Carlo comparison of the calibrated,
//! naive and oracle estimators, [`km`] provides Kaplan-Meier curves, and
//! [`cli`] wires everything into the `distortcox` binary.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory:
//!
//! ```bash
//! cargo run --release -p distortcox --example bandwidth_selection
//! cargo run --release -p distortcox --example calibrate_covariate
//! cargo run --release -p distortcox --example cox_fit
//! cargo run --release -p distortcox --example kaplan_meier
//! cargo run --release -p distortcox --example simulation_study
//! cargo run --release -p distortcox --example csv_workflow
//! ```

pub mod calibration;
pub mod cli;
pub mod cox;
pub mod data;
pub mod kernel;
pub mod km;
pub mod numeric;
pub mod rng;
pub mod simulation;

pub use calibration::{calibrate, CalibrationResult};
pub use cox::{fit, sandwich_variance, CoxData, CoxFit, FitOptions, VarianceEstimate};
pub use data::{ColumnMapping, Dataset, SurvivalRecord};
pub use kernel::{Bandwidth, BandwidthGrid};
pub use km::{km_estimate, KMCurve};
pub use simulation::{DistortionSpec, Method, SimulationConfig, SimulationSummary};

use thiserror::Error;

/// Errors surfaced by the command-line workflows, grouped into families that
/// map to stable process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Kernel(#[from] kernel::KernelError),
    #[error(transparent)]
    Calibration(#[from] calibration::CalibrationError),
    #[error(transparent)]
    Cox(#[from] cox::CoxError),
    #[error(transparent)]
    Km(#[from] km::KmError),
    #[error(transparent)]
    Simulation(#[from] simulation::SimulationError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Config { line, message: message.into() }
    }

    /// Process exit code for this error family.
    ///
    /// | code | family |
    /// |------|--------|
    /// | 2 | usage or configuration |
    /// | 3 | file I/O |
    /// | 4 | data values (parse errors, nothing left after filtering) |
    /// | 5 | schema (missing or clashing columns, no truth column) |
    /// | 6 | smoothing and calibration |
    /// | 7 | Cox model fitting and variance |
    /// | 8 | simulation study |
    pub fn exit_code(&self) -> i32 {
        use data::DataError as D;
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Data(D::Io { .. }) => 3,
            Error::Data(D::MissingColumn(_) | D::DuplicateMapping(_) | D::NoTruth) => 5,
            Error::Data(D::Cox(_)) | Error::Cox(_) => 7,
            Error::Data(_) | Error::Km(_) => 4,
            Error::Kernel(_) | Error::Calibration(_) => 6,
            Error::Simulation(_) => 8,
        }
    }
}
