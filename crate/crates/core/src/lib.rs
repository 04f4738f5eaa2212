//! Monte Carlo twin of a pulsed-excitation, single-photon lifetime measurement on one
//! trapped ion, plus the analysis chain that turns photon-arrival histograms into
//! lifetimes with separated statistical and systematic errors.
//!
//! The crate is split into three layers:
//!
//! - [`sim`] generates timestamp streams: excitation, spontaneous emission (optionally
//!   with quantum-beat modulation), detector response, TDC digitization and background.
//! - [`analysis`] folds and inverts histograms, fits single exponentials by Poisson
//!   maximum likelihood, scans the fit start time and matches convolved templates.
//! - [`io`] handles the flat config format, histogram/event files, manifests and reports.
//!
//! Parallel execution is provided by rayon behind the `parallel` feature (on by
//! default). Every random draw comes from a counter-based stream keyed by the run seed
//! and the cycle index, so outputs do not depend on the worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod analysis;
pub mod error;
pub mod exec;
pub mod io;
pub mod rng;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
pub use exec::Execution;
