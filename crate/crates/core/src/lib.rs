//! Spectral Galerkin simulation and large-deviation diagnostics for the stochastic
//! Landau-Lifshitz-Navier-Stokes equations on the 3-torus.

pub mod basis;
pub mod error;
pub mod experiments;
pub mod dynamics;
pub mod noise;
pub mod rate;
pub mod stats;

pub use basis::{Basis, ModeIndex, NormKind, Parity, SpectralField, TrilinearTable};
pub use error::{Error, Result};
pub use noise::NoiseParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
