//! Generative modeling of resistive-memory (ReRAM) switching statistics plus a
//! resistive crossbar circuit simulator.
//!
//! The library learns cycle-to-cycle (C2C) and device-to-device (D2D)
//! variability from raw bipolar I,V sweep data and generates statistically
//! faithful virtual devices that can be read and written individually or
//! inside crossbar arrays with resistive leads.
//!
//! Pipeline, training direction:
//!
//! 1. [`features`] — extract per-cycle feature vectors (R_HRS, V_SET, R_LRS,
//!    V_RESET) and the global I(V) shape (limiting polynomials, RESET
//!    curvature) from sweep traces.
//! 2. [`transforms`] — per-device affine standardization followed by an
//!    element-wise polynomial quantile transform onto standard normals.
//! 3. [`var_process`] — fit a VAR(p) stochastic process to the normalized
//!    feature series.
//! 4. [`d2d_gmm`] — fit a Gaussian mixture over per-device mean/std block
//!    vectors to capture D2D structure, including defect sub-populations.
//!
//! Generative direction: [`cell`] realizes an independent VAR process per
//! virtual device, de-normalizes through sampled device statistics, and
//! reconstructs the quasi-static I(V) loop; [`crossbar`] wires cells into
//! arrays with lead resistance and solves the coupled nodal equations.
//!
//! [`synthio`] provides a fully specified reference model, synthetic dataset
//! generation, and the end-to-end training entry point. [`iomodel`] handles
//! model-file serialization and Verilog-A parameter emission. [`bench`] holds
//! the read/write throughput harness.

pub mod bench;
pub mod cell;
pub mod crossbar;
pub mod d2d_gmm;
pub mod features;
pub mod iomodel;
pub mod linalg;
pub mod mathfn;
pub mod pgm;
pub mod stats;
pub mod synthio;
pub mod transforms;
pub mod var_process;

pub use cell::{CellState, ModelParams};
pub use crossbar::{Crossbar, Drive, SolveReport};
pub use features::{FeatureSeries, FeatureVector, IvShape, SweepDataset};
pub use synthio::{TrainConfig, TrainingReport, ValidationReport};

/// Crate-level error aggregating the per-module failures so that pipeline
/// stages compose with `?`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Transform(#[from] transforms::TransformError),
    #[error(transparent)]
    Var(#[from] var_process::VarError),
    #[error(transparent)]
    Gmm(#[from] d2d_gmm::GmmError),
    #[error(transparent)]
    Solve(#[from] crossbar::SolveError),
    #[error(transparent)]
    ModelIo(#[from] iomodel::ModelIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
