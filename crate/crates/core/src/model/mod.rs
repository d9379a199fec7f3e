//! Pose and spatio-temporal fusion network, its training and inference.

pub mod adam;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod infer;
pub mod lstm;
pub mod network;
pub mod ops;
pub mod params;
pub mod train;

pub use adam::AdamState;
pub use config::{LossConfig, ModelConfig};
pub use dataset::{build_batch, frame_labels, window_indices, Dataset, LabeledStream, SampleRef, VideoStream};
pub use infer::{frame_probabilities, infer, segment_probabilities};
pub use network::{fuse_tokens, head_forward, BatchInput, FeatureNorm, FusionModel};
pub use params::FusionParams;
pub use train::{train, TrainOutcome};
