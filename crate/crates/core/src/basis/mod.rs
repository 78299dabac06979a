//! Real divergence-free Stokes eigenbasis of the 3-torus and spectral algebra.

mod field;
pub mod io;
mod mode;
mod physical;
mod trilinear;

pub use field::{Basis, NormKind, SpectralField};
pub(crate) use field::{dot, homogeneous_dual_sq};
pub use mode::{
    canonicalize, eigenvalue, enumerate_modes, half_lattice, is_canonical, leray_project,
    modes_of, polarization_vectors, ModeIndex, Parity,
};
pub use physical::{evaluate_physical, min_grid, project_physical, PhysicalField};
pub use trilinear::{nonlinear_term, trilinear_coeff, TrilinearTable};
