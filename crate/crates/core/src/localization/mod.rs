//! Scene-level temporal localization from frame probabilities.

mod peaks;

pub use peaks::{activity_bounds, find_peaks, median_filter, Peak};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeConfig {
    pub median_width: usize,
    pub min_height: f64,
    pub min_width_frames: usize,
    pub o_max: f64,
    pub num_cameras: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { median_width: 351, min_height: 0.1, min_width_frames: 200, o_max: 0.5, num_cameras: 3 }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_width % 2 == 0 {
            return Err(Error::Config(format!("median width must be odd, got {}", self.median_width)));
        }
        if !(self.min_height > 0.0 && self.min_height < 1.0) {
            return Err(Error::Config(format!("min_height must lie in (0, 1), got {}", self.min_height)));
        }
        if !(0.0..=1.0).contains(&self.o_max) {
            return Err(Error::Config(format!("o_max must lie in [0, 1], got {}", self.o_max)));
        }
        if self.num_cameras == 0 {
            return Err(Error::Config("at least one camera is required".into()));
        }
        Ok(())
    }
}

/// A detected activity, `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub class_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub peak_height: f64,
}

/// Elementwise mean over cameras. Values are combined in sorted order, so
/// the result does not depend on camera order, and as offsets from the
/// smallest, so identical streams average to themselves exactly.
pub fn average_cameras(streams: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    let first = streams.first().ok_or_else(|| Error::Input("no camera streams".into()))?;
    if let Some(bad) = streams.iter().find(|s| s.raw_dim() != first.raw_dim()) {
        return Err(Error::Shape(format!("camera streams differ in shape: {:?} vs {:?}", first.shape(), bad.shape())));
    }
    let c = streams.len() as f64;
    let mut vals = Vec::with_capacity(streams.len());
    Ok(Array2::from_shape_fn(first.raw_dim(), |idx| {
        vals.clear();
        vals.extend(streams.iter().map(|s| s[idx]));
        vals.sort_by(f64::total_cmp);
        let lo = vals[0];
        lo + vals.iter().map(|v| v - lo).sum::<f64>() / c
    }))
}

/// `|a ∩ b| / |a ∪ b|` of half-open frame ranges.
pub fn interval_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn priority(a: &ActivityInterval, b: &ActivityInterval) -> std::cmp::Ordering {
    b.peak_height
        .total_cmp(&a.peak_height)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.start_frame.cmp(&b.start_frame))
        .then(a.end_frame.cmp(&b.end_frame))
}

/// Greedy suppression across classes: highest peak first, keeping a
/// prediction only if its IoU with every kept one is at most `o_max`.
/// Returns the kept predictions in priority order.
pub fn dedup(preds: &[ActivityInterval], o_max: f64) -> Vec<ActivityInterval> {
    let mut sorted = preds.to_vec();
    sorted.sort_by(priority);
    let mut kept: Vec<ActivityInterval> = Vec::new();
    for p in sorted {
        if kept.iter().all(|k| interval_iou((k.start_frame, k.end_frame), (p.start_frame, p.end_frame)) <= o_max) {
            kept.push(p);
        }
    }
    kept
}

/// Intervals of one class signal: filter, detect peaks, bound them.
pub fn localize_class(signal: &[f64], class_id: usize, cfg: &LocalizeConfig) -> Result<Vec<ActivityInterval>> {
    let filtered = median_filter(signal, cfg.median_width)?;
    Ok(find_peaks(&filtered, cfg.min_height, cfg.min_width_frames)
        .into_iter()
        .map(|p| {
            let (start, end) = activity_bounds(&filtered, &p);
            ActivityInterval { class_id, start_frame: start as u64, end_frame: end as u64, peak_height: p.height.clamp(0.0, 1.0) }
        })
        .collect())
}

/// Activities of a scene given its `num_frames x n_classes` probabilities.
/// Class 0 is background and never emitted. Output is sorted by start frame.
pub fn localize(scene: &ArrayView2<f64>, cfg: &LocalizeConfig) -> Result<Vec<ActivityInterval>> {
    cfg.validate()?;
    if scene.nrows() == 0 {
        return Ok(Vec::new());
    }
    let per_class = (1..scene.ncols())
        .into_par_iter()
        .map(|class_id| localize_class(&scene.column(class_id).to_vec(), class_id, cfg))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<ActivityInterval> = per_class.into_iter().flatten().collect();
    let mut kept = dedup(&all, cfg.o_max);
    kept.sort_by(|a, b| a.start_frame.cmp(&b.start_frame).then(a.class_id.cmp(&b.class_id)));
    Ok(kept)
}

/// Averages the camera streams, then localizes.
pub fn localize_scene(streams: &[ArrayView2<f64>], cfg: &LocalizeConfig) -> Result<Vec<ActivityInterval>> {
    cfg.validate()?;
    if streams.len() != cfg.num_cameras {
        return Err(Error::Input(format!("expected {} camera streams, got {}", cfg.num_cameras, streams.len())));
    }
    localize(&average_cameras(streams)?.view(), cfg)
}
