//! Learn functional models of black-box peripheral devices from
//! input/output observations.
//!
//! The pipeline: [`machines`] simulate the devices, [`dataset`] records
//! random command sequences with their [`encoding`], [`rnn`] provides the
//! GRU sequence learner, [`training`] runs the stopping-rule protocol and
//! experiments, and [`evaluation`] scores exact mimicry.

pub mod dataset;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod machines;
pub mod pipeline;
pub mod rnn;
pub mod training;

pub use error::{Error, FormatError, Result};
