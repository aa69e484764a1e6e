//! Numerical model of a two-stage, laser-driven, on-chip free-electron spin
//! polarizer: spin-dependent near-field phase modulation, free drift into
//! spin-correlated bunches, and a phase-matched spin-rotation stage.

pub mod bessel;
pub mod coupling;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod nearfields;
pub mod observables;
pub mod physconst;
pub mod pinem;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
