//! Operator algebra and spectra for a cavity field bounded by a moving
//! mirror, expanded to quadratic order in the mirror displacement.
//!
//! The crate is organised bottom-up:
//!
//! * [`mode_mixing`]: cavity geometry and the mode-overlap coefficients.
//! * [`fock_space`]: truncated multimode Fock bases and sparse operators.
//! * [`operators`]: radiation-pressure operators, normal ordering, vacuum
//!   sums and the optical-spring shift.
//! * [`gauge_series`]: operators graded in the mirror displacement, the
//!   position-dependent gauge transformation, and identity audits.
//! * [`spectra`]: the final Hamiltonian, eigensolvers, perturbative oracle,
//!   scaling ratios and parameter sweeps.
//!
//! Everything is generic over the scalar type. The `*64` aliases below fix
//! it to `f64`, which is what the tolerances in the test-suite assume.

pub mod error;
pub mod fock_space;
pub mod gauge_series;
pub mod mode_mixing;
pub mod operators;
pub mod scalar;
pub mod spectra;

pub use error::{Error, Result};
pub use fock_space::{FieldOperator, FockBasis, FockLayout, FockSpace, Slot};
pub use gauge_series::{AuditReport, GradedOperator, Monomial};
pub use mode_mixing::{MixingKind, MixingMatrix, ModeGrid};
pub use operators::{HamiltonianTerms, SystemParams};
pub use scalar::{hbar, Coefficient, Real, C};
pub use spectra::{ModelFlags, SolverKind, SpectrumResult};

pub type ModeGrid64 = ModeGrid<f64>;
pub type MixingMatrix64 = MixingMatrix<f64>;
pub type FieldOperator64 = FieldOperator<f64>;
pub type GradedOperator64 = GradedOperator<f64>;
pub type SystemParams64 = SystemParams<f64>;
pub type HamiltonianTerms64 = HamiltonianTerms<f64>;
pub type SpectrumResult64 = SpectrumResult<f64>;
