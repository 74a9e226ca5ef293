//! Multi-source video domain adaptation by temporal attentive moment
//! alignment, operating on frame-level feature sequences.

pub mod alignment;
pub mod attention;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod model;
pub mod numkernel;
pub mod temporal;

pub use error::{Error, Result};
