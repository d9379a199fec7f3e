//! Glue between the on-disk formats and the in-memory pipeline stages.
//!
//! Per-frame streams (pose features, frame probabilities) are stored in the
//! `STEM` container with `segment_len = stride = 1`.

use std::path::Path;

use ndarray::Array2;

use crate::data_io::{FeatureStream, PredictionRecord};
use crate::error::{Error, Result};
use crate::localization::ActivityInterval;
use crate::model::{ModelConfig, VideoStream};
use crate::pose::{CameraIntrinsics, FeatureExtractor, FeatureLayout, KeypointFrame};

/// Pose features of one camera, ready to be written.
#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    pub stream: FeatureStream,
    /// Frames that reused an earlier head pose.
    pub substituted: usize,
}

/// Runs the feature extractor over a camera's frames.
///
/// Frames must come from one video and camera with consecutive indices.
pub fn extract_features<I>(frames: I, layout: &FeatureLayout, intrinsics: CameraIntrinsics) -> Result<ExtractedFeatures>
where
    I: IntoIterator<Item = Result<KeypointFrame>>,
{
    let mut ex = FeatureExtractor::new(layout.clone(), intrinsics)?;
    let dim = layout.pose_dim();
    let mut data = Vec::new();
    let mut first: Option<(String, u32, u64)> = None;
    for (i, frame) in frames.into_iter().enumerate() {
        let frame = frame?;
        match &first {
            None => first = Some((frame.video_id.clone(), frame.camera, frame.frame_index)),
            Some((video, camera, start)) => {
                if &frame.video_id != video || frame.camera != *camera {
                    return Err(Error::Input(format!(
                        "frame {i} belongs to {}/camera {}, expected {video}/camera {camera}",
                        frame.video_id, frame.camera
                    )));
                }
                if frame.frame_index != start + i as u64 {
                    return Err(Error::Input(format!("frame {i} has index {}, expected {}", frame.frame_index, start + i as u64)));
                }
            }
        }
        let f = ex.process(&frame)?;
        data.extend(f.values.iter().map(|&v| v as f32));
    }
    Ok(ExtractedFeatures { stream: FeatureStream::new(dim, 1, 1, data)?, substituted: ex.substituted() })
}

/// Rows of a stream as an `f64` matrix.
pub fn to_matrix(fs: &FeatureStream) -> Array2<f64> {
    Array2::from_shape_fn((fs.len(), fs.feat_dim()), |(i, j)| fs.data[i * fs.feat_dim() + j] as f64)
}

fn per_frame(fs: &FeatureStream, what: &str) -> Result<()> {
    if fs.header.segment_len != 1 || fs.header.stride != 1 {
        return Err(Error::Schema(format!(
            "{what} must have one row per frame, found segment_len {} and stride {}",
            fs.header.segment_len, fs.header.stride
        )));
    }
    Ok(())
}

/// Pairs a camera's pose features with its embeddings for `cfg`.
///
/// The pose stream is ignored when the model has no pose branch.
pub fn video_stream(pose: Option<&FeatureStream>, embed: &FeatureStream, cfg: &ModelConfig) -> Result<VideoStream> {
    if embed.header.segment_len as usize != cfg.segment_len {
        return Err(Error::Shape(format!(
            "embeddings cover {}-frame segments, model expects {}",
            embed.header.segment_len, cfg.segment_len
        )));
    }
    let pose = match (pose, cfg.uses_pose()) {
        (Some(p), true) => {
            per_frame(p, "pose features")?;
            Some(to_matrix(p))
        }
        (None, true) => return Err(Error::Input("model uses pose features but none were given".into())),
        _ => None,
    };
    let stream = VideoStream { pose, embed: to_matrix(embed), stride: embed.header.stride as usize };
    stream.check(cfg)?;
    Ok(stream)
}

pub fn probability_stream(probs: &Array2<f64>) -> Result<FeatureStream> {
    FeatureStream::new(probs.ncols(), 1, 1, probs.iter().map(|&v| v as f32).collect())
}

pub fn read_probabilities(fs: &FeatureStream) -> Result<Array2<f64>> {
    per_frame(fs, "frame probabilities")?;
    Ok(to_matrix(fs))
}

/// Video id implied by a file name such as `drive01_cam2.probs.stem`: the
/// part before `_cam`, or else before the first dot.
pub fn video_id_from_path(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let base = name.split('.').next().unwrap_or_default();
    match base.rfind("_cam") {
        Some(i) if i > 0 => base[..i].to_string(),
        _ => base.to_string(),
    }
}

pub fn predictions(video_id: &str, intervals: &[ActivityInterval]) -> Vec<PredictionRecord> {
    intervals
        .iter()
        .map(|a| PredictionRecord {
            video_id: video_id.to_string(),
            class_id: a.class_id,
            start_frame: a.start_frame,
            end_frame: a.end_frame,
            peak_height: a.peak_height,
        })
        .collect()
}

/// Seconds to whole frames.
pub fn seconds_to_frames(seconds: f64, fps: f64) -> Result<u64> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Input(format!("fps must be positive, got {fps}")));
    }
    Ok((seconds * fps).round() as u64)
}
