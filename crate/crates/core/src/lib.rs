//! Energy-transition recurrent network (PETNN) built from scratch.
//!
//! - [`linalg`]: dense vectors and matrices, seeded generator, initialization
//! - [`cell`]: the recurrent cell, its update-strategy variants and analytic backward pass
//! - [`train`]: BPTT, losses, Adam, state-retention policies, checkpoints
//! - [`tasks`]: synthetic long-dependency tasks and CSV time-series windowing
//! - [`eval`]: metrics, efficiency accounting and state-trace export
//! - [`run`]: JSON run configuration and the experiment drivers behind the CLI

pub mod baseline;
pub mod cell;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod linalg;
pub mod model;
pub mod params;
pub mod run;
pub mod tasks;
pub mod train;

pub use cell::{CellConfig, CellParams, CellState, StepTrace, UpdateVariant};
pub use error::{Error, Result};
pub use linalg::{InitScheme, Matrix, Rng, Vector};
pub use model::{Model, ModelKind};
pub use params::Parameters;
pub use tasks::SequenceBatch;
pub use train::{ResetPolicy, TrainConfig, Trainer};
