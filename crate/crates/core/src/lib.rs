//! Driver action localization from whole-body pose and spatio-temporal
//! video embeddings.

pub mod error;
pub mod data_io;
pub mod localization;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pose;
pub mod synth;

pub use error::{Error, Result};
