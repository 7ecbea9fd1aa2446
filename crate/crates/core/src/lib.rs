//! Training-free image restoration with flow-matching priors.
//!
//! An unconditional velocity field is steered toward a degraded observation
//! by mask-guided fusion, with optional trajectory-correction passes that
//! project the state to the data endpoint and renoise it back. Priors come
//! in two flavours: an exactly tractable Gaussian mixture
//! ([`analytic::GmmPrior`]) and a small trained network
//! ([`neural::MlpVelocityNet`]).
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability, and the `maskflow` binary for the command-line front end.

pub mod analytic;
pub mod cli;
pub mod degradation;
pub mod error;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod restoration;
pub mod tensor;

pub use analytic::GmmPrior;
pub use degradation::{degrade, DegradationKind, DegradationTask, Observation};
pub use error::{Error, Result};
pub use flow::{CountingField, TimeGrid, VelocityField};
pub use neural::MlpVelocityNet;
pub use restoration::{restore, RestorationConfig, RestorationReport};
pub use tensor::{BinaryMask, ImageTensor, SeededRng, Shape};
