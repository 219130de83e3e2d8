//! Pulse design, analysis and simulation for drift-robust Mølmer–Sørensen
//! gates on linear ion chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`modes`]: motional mode data ([`ModeSpec`]) from analytic two-ion
//!   formulas, a Coulomb-chain model, or measured JSON files.
//! * [`pulse`]: piecewise-constant FM/AM pulse programs and the
//!   transformations used to build composite gates.
//! * [`kernel`]: closed-form displacement, rotation angle, their drift
//!   derivatives and the gate-error decomposition.
//! * [`optimizer`]: time-symmetric robust FM pulse search.
//! * [`arobust`]: angle-robust composite construction (mirror, amplitude
//!   weighting, higher-order suppression).
//! * [`filter`]: displacement / rotation-angle filter functions and
//!   spectral error integrals.
//! * [`sim`]: analytic and master-equation prediction of measured
//!   populations, parity contrast and Bell fidelity.
//! * [`cli`]: batch front-end used by the `msgate` binary.
//!
//! Angular frequencies are rad/s and times are seconds everywhere in memory;
//! files store cyclic frequencies in Hz.

pub mod arobust;
pub mod cli;
pub mod error;
pub mod filter;
pub mod kernel;
mod moments;
pub mod modes;
mod ode;
pub mod optimizer;
pub mod pulse;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
pub use kernel::{GateDiagnostics, IonPair};
pub use modes::ModeSpec;
pub use pulse::{DetuningOffset, PulseProgram, Segment};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Target two-qubit rotation angle of a maximally entangling XX gate.
pub const TARGET_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

pub(crate) const TWO_PI: f64 = std::f64::consts::TAU;
