//! Nonlocal quantum hydrodynamics on a periodic 1D grid.
//!
//! The crate follows one derivation end to end. A radial interaction kernel
//! ([`kernel`]) supplies a length `a` and normalised moments `c_2n`. These
//! set the coefficients of a hierarchy of nonlocal chemical potentials
//! ([`nonlocal`]) whose leading member is Bohm's quantum potential. The
//! resulting Madelung fluid is evolved in time ([`hydro`]) and checked
//! against an independent split-step Schrödinger solver ([`qm_oracle`]).

pub mod error;
pub mod fields;
pub mod hydro;
pub mod kernel;
pub mod nonlocal;
pub mod qm_oracle;
mod quad;
pub mod scenario;

pub use error::{Error, Result};
pub use fields::{integrate, spectral_gradient, spectral_laplacian, Grid, ScalarField};
pub use hydro::{HydroState, Monitors, Regularization};
pub use kernel::{KernelSpec, MomentSource, MomentTable};
pub use nonlocal::{BohmForm, ExternalPotential, PhysicalParams};
pub use qm_oracle::{CompareMetrics, WaveState};
