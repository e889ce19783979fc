//! Quantum kicked rotator simulated on an `n_q`-qubit register, with repeated
//! projective measurement of one qubit.
//!
//! The crate provides the state type and map ([`qstate`], [`rotator`],
//! [`circuit`]), measurement backends ([`measurement`], [`density`]),
//! observables and fits ([`observables`]), and the ensemble runner with
//! sweeps, checkpoints and output ([`experiment`], [`sweep`], [`output`]).

pub mod checkpoint;
pub mod circuit;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod experiment;
pub mod measurement;
pub mod observables;
pub mod output;
pub mod presets;
pub mod qstate;
pub mod rng;
pub mod rotator;
pub mod sweep;

pub use error::{Error, Result};
