//! File formats and dataset assembly.
//!
//! * keypoints: JSON Lines, one frame per line
//! * feature streams (embeddings, pose features, frame probabilities): the
//!   `STEM` binary container
//! * annotations and predictions: CSV
//! * model checkpoints: the `DCKP` binary container

mod annotations;
mod checkpoint;
mod container;
mod keypoints;
mod segments;

pub use annotations::{
    read_annotations, read_predictions, write_annotations, write_predictions, AnnotationRecord, PredictionRecord,
    NUM_CLASSES,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, Tensor, CHECKPOINT_VERSION};
pub use container::{
    read_embeddings, read_stream, write_stream, EmbeddingSegment, StreamHeader, FeatureStream, STEM_MAGIC, STEM_VERSION,
};
pub use keypoints::{read_keypoints, write_keypoints, KeypointReader};
pub use segments::{coverage_counts, enumerate_segments, segment_majority_label, SegmentIndex};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
