//! Discrete-time epidemic simulation with adaptive pooled (Dorfman) testing.
//!
//! The crate is organized around five pieces:
//!
//! - [`epidemic`]: population state and the stochastic transition dynamics for
//!   the community-structured (SBM) model and the simplified i.i.d. model.
//! - [`dorfman`]: closed-form per-person test and quarantine cost calculus and
//!   integer group-size optimization for static two-stage pooled testing.
//! - [`horizon`]: expected-pipeline recursion and backward-induction group-size
//!   optimization over a finite testing horizon for the i.i.d. model.
//! - [`protocol`]: day-by-day test scheduling — the adaptive two-stage scheduler
//!   with its one-day result delay and quarantine policies, and the non-adaptive
//!   CCA baseline with definite-defective decoding.
//! - [`engine`]: the daily phase loop, per-day metrics, and seeded Monte Carlo
//!   batches.
//!
//! [`config`] and [`experiment`] provide the JSON experiment configuration,
//! named presets, and file output used by the `epipool` CLI.

pub mod config;
pub mod dorfman;
pub mod engine;
pub mod epidemic;
pub mod error;
pub mod experiment;
pub mod horizon;
pub mod protocol;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
