//! Learned scheduling for single-machine min-sum problems.

pub mod error;
pub mod model;
pub mod oracle;
pub mod tiform;
pub mod datagen;
pub mod nn;
pub mod decode;
pub mod online;
pub mod train;
pub mod bench;

pub use error::{Error, Result};
