//! Polar-coded secure transmission over two-receiver channels: reliability
//! construction, chaining codecs for the wiretap and broadcast-with-
//! confidential-component settings, and secrecy-leakage measurement.
//!
//! The building blocks compose bottom-up: [`channel`] defines channel
//! models and joint specifications, [`polar`] the transform and the
//! successive-cancellation recursion, [`reliability`] the per-index
//! statistics, [`partition`] the coordinate layouts, [`wiretap`] and
//! [`bcc`] the codecs, [`eval`] the measurement harness, and [`config`]
//! the experiment schema the CLI consumes. Everything random flows from a
//! single master seed through [`rng`], so every result is reproducible.

pub mod bcc;
pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod partition;
pub mod polar;
pub mod reliability;
pub mod rng;
pub mod wiretap;
