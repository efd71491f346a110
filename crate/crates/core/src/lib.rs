//! Spiking-network gesture recognition from multi-electrode EMG on a
//! simulated analog neuromorphic substrate.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datapipe;
pub mod dynamics;
pub mod encoders;
pub mod engine;
pub mod error;
pub mod harness;
pub mod io;
pub mod learning;
pub mod signal;
pub mod topology;

pub use error::{Error, Result};
pub use signal::{AnalogRecording, Spike, SpikeTrain};
