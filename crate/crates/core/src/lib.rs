//! Streaming hierarchical memory for long frame streams.
//!
//! Frames pass an optical-flow gate, are encoded and buffered into chunks,
//! compressed by k-means into a caption-indexed tree, and queried through
//! greedy similarity descent plus dialogue recall.

pub mod config;
pub mod error;
pub mod frame_gate;
pub mod harness;
pub mod hashing;
pub mod matrix;
pub mod memory;
pub mod pipeline;
pub mod ports;
pub mod retrieval;

pub use config::{EngineConfig, Preset};
pub use error::{Error, Result};
pub use matrix::Matrix;
