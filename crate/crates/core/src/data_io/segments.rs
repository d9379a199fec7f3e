use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sliding-window segmentation of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentIndex {
    pub segment_len: usize,
    pub stride: usize,
    pub num_frames: usize,
}

impl SegmentIndex {
    pub fn new(segment_len: usize, stride: usize, num_frames: usize) -> Result<Self> {
        if segment_len == 0 || stride == 0 {
            return Err(Error::Config("segment length and stride must be at least 1".into()));
        }
        Ok(Self { segment_len, stride, num_frames })
    }

    pub fn num_segments(&self) -> usize {
        if self.num_frames < self.segment_len {
            0
        } else {
            (self.num_frames - self.segment_len) / self.stride + 1
        }
    }
}

/// Half-open `(start, end)` frame ranges of every segment, in start order.
pub fn enumerate_segments(idx: &SegmentIndex) -> Result<Vec<(usize, usize)>> {
    if idx.segment_len == 0 || idx.stride == 0 {
        return Err(Error::Config("segment length and stride must be at least 1".into()));
    }
    if idx.num_frames < idx.segment_len {
        return Err(Error::InsufficientData(format!(
            "{} frames is fewer than one {}-frame segment",
            idx.num_frames, idx.segment_len
        )));
    }
    Ok((0..idx.num_segments())
        .map(|i| {
            let s = i * idx.stride;
            (s, s + idx.segment_len)
        })
        .collect())
}

/// Number of segments containing each frame.
pub fn coverage_counts(idx: &SegmentIndex) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; idx.num_frames];
    for (s, e) in enumerate_segments(idx)? {
        for c in &mut counts[s..e] {
            *c += 1;
        }
    }
    Ok(counts)
}

/// Most frequent label; ties go to the smallest class id.
pub fn segment_majority_label(frame_labels: &[usize]) -> usize {
    let max_label = frame_labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    for &l in frame_labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}
