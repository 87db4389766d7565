//! Liquid state machine simulation with reservoir ensembles.
//!
//! The crate covers the whole pipeline: event-stream preprocessing
//! ([`preprocess`]), LIF population dynamics ([`neuron`]), grid reservoirs
//! with distance-offset connectivity ([`topology`]), input wiring
//! ([`input_map`]), the multi-length-scale and temporally partitioned
//! ensembles ([`ensemble`]), the linear readout ([`readout`]) and the
//! experiment harness ([`harness`]).

pub mod config;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod input_map;
pub mod neuron;
pub mod preprocess;
pub mod readout;
pub mod rng;
pub mod topology;

pub use error::{LsmError, Result};
