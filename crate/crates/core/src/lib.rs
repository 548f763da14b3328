//! Pulsed Bell-test simulation and randomness metering.
//!
//! The pipeline mirrors a time-tagged photon experiment:
//!
//! 1. [`source`] emits per-station detection events for a pulse train, with
//!    outcomes drawn from a pluggable [`model::OutcomeModel`].
//! 2. [`timetag`] matches the two stations into coincidences, labels each with
//!    a within-pulse slice, and extracts per-slice binary sequences.
//! 3. [`bell`] estimates CHSH per slice, the S-vs-window decay curve and the
//!    ensemble-vs-time-average ergodicity gap.
//! 4. [`randommeter`] runs a small test battery and a dictionary compressor
//!    over the sequences, producing the rejection-rate curve R(t) and a
//!    scenario verdict.

pub mod bell;
pub mod error;
pub mod model;
pub mod randommeter;
pub mod source;
pub mod stats;
pub mod streams;
pub mod timetag;

pub use error::{Error, Result};
