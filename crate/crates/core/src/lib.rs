//! Optimal control of time-dependent quantum targets.
//!
//! The crate maximizes the time-averaged expectation value of a
//! positive-semidefinite target operator `O(t)` over a laser field `ε(t)`,
//! penalized by the field fluence, for a two-level system and for a
//! one-dimensional grid atom. The optimizer is the two-parameter `(η, γ)`
//! forward/backward iteration with immediate field feedback; its time
//! discretization keeps the functional monotonically non-decreasing from one
//! iteration to the next.
//!
//! Everything here is `no_std` (with `alloc`); file formats, configuration
//! and the command line live in the companion `tdoc` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod control;
pub mod eigen;
mod error;
pub mod fft;
pub mod field;
pub mod grid;
mod linalg;
pub mod mask;
pub mod propagation;
pub mod state;
pub mod system;
pub mod target;

pub use error::Error;

pub use num_complex::Complex64;

/// Crate version, echoed into run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;
