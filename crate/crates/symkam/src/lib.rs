//! Invariant-torus engine for symplectic one-step maps of nearly
//! integrable Hamiltonian systems.
//!
//! The pipeline: represent a symplectic integrator in mixed-variable
//! generating-function form, run a constructive conjugation loop that
//! straightens an invariant torus into a rigid rotation with a drifted
//! frequency, sieve Diophantine parameter sets, and verify the drift and
//! measure scaling laws empirically.

pub mod cli;
pub mod config;
pub mod error;
pub mod fourier;
pub mod gfmaps;
pub mod homological;
pub mod kamcore;
pub mod models;
pub mod report;
pub mod sieve;
pub mod verify;

pub use error::{Error, Result};
