//! Agents on a long-range random graph over a window of Z², each playing a
//! memory-based strategy that eventually stops losing.
//!
//! The crate is organised bottom-up:
//!
//! * [`rng`]: keyed counter-based randomness shared by coupled runs.
//! * [`lattice`] and [`graph`]: windows, distances, the random graph and feelings.
//! * [`strategy`]: the record-set strategy and baseline rules.
//! * [`dynamics`]: Poisson clocks, rewards, and full runs.
//! * [`observables`]: energy, fixation statistics, tail bounds, Nash replay.
//! * [`mixing`]: coupled runs with different frames, subbox fronts, TV estimates.
//! * [`config`] and [`harness`]: experiment configuration and orchestration.
//! * [`format`]: the text and CSV formats read and written by the harness.
//! * [`oracle`]: naive reference implementations used for cross-checks.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod graph;
pub mod harness;
pub mod lattice;
pub mod mixing;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod strategy;

pub use error::{Error, Result};
