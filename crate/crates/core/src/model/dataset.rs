//! Streams of per-frame pose features and per-segment embeddings, and the
//! windowed batches cut from them.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::network::{BatchInput, FeatureNorm};
use super::ops::density_target;
use crate::data_io::{segment_majority_label, AnnotationRecord};
use crate::error::{Error, Result};

/// One camera's view of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoStream {
    /// `num_frames x pose_dim`; absent when the pose branch is disabled.
    pub pose: Option<Array2<f64>>,
    /// `num_segments x n_f`, segment `i` starting at frame `i * stride`.
    pub embed: Array2<f64>,
    pub stride: usize,
}

impl VideoStream {
    pub fn num_segments(&self) -> usize {
        self.embed.nrows()
    }

    pub fn num_frames(&self, segment_len: usize) -> usize {
        match self.num_segments() {
            0 => self.pose.as_ref().map_or(0, |p| p.nrows()),
            n => (n - 1) * self.stride + segment_len,
        }
    }

    /// Checks the stream against the model's dimensions.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.embed.ncols() != cfg.n_f {
            return Err(Error::Shape(format!("embeddings have dimension {}, model expects n_f = {}", self.embed.ncols(), cfg.n_f)));
        }
        if self.num_segments() == 0 {
            return Err(Error::InsufficientData(format!("no complete {}-frame segment", cfg.segment_len)));
        }
        match (&self.pose, cfg.uses_pose()) {
            (Some(p), true) => {
                if p.ncols() != cfg.pose_dim {
                    return Err(Error::Shape(format!("pose features have dimension {}, model expects {}", p.ncols(), cfg.pose_dim)));
                }
                if p.nrows() < cfg.segment_len {
                    return Err(Error::InsufficientData(format!("{} frames is fewer than one {}-frame segment", p.nrows(), cfg.segment_len)));
                }
                let need = self.num_frames(cfg.segment_len);
                if p.nrows() != need {
                    return Err(Error::Shape(format!("{} pose frames but {} embedding segments imply {need}", p.nrows(), self.num_segments())));
                }
            }
            (None, true) => return Err(Error::Input("model uses pose features but none were given".into())),
            _ => {}
        }
        Ok(())
    }

    /// Copy with the model's feature normalization applied.
    pub fn normalized(&self, norm: &FeatureNorm) -> Self {
        Self {
            pose: self.pose.as_ref().map(|p| norm.normalize_pose(&p.view())),
            embed: norm.normalize_embed(&self.embed.view()),
            stride: self.stride,
        }
    }
}

/// Segment indices of the window centered on `center`, clamped at the
/// stream ends.
pub fn window_indices(center: usize, num_segments: usize, cfg: &ModelConfig) -> Vec<usize> {
    let c = cfg.center_token() as isize;
    let last = num_segments as isize - 1;
    (0..cfg.window_tokens as isize)
        .map(|k| (center as isize + (k - c) * cfg.token_gap as isize).clamp(0, last) as usize)
        .collect()
}

/// Frame labels of a video from its annotations; unannotated frames are
/// class 0.
pub fn frame_labels(records: &[AnnotationRecord], num_frames: usize) -> Vec<usize> {
    let mut labels = vec![0usize; num_frames];
    for r in records {
        let end = (r.end_frame as usize).min(num_frames);
        for l in labels.iter_mut().take(end).skip(r.start_frame as usize) {
            *l = r.class_id;
        }
    }
    labels
}

#[derive(Debug, Clone)]
pub struct LabeledStream {
    pub stream: VideoStream,
    pub frame_labels: Vec<usize>,
}

/// A training example: the window centered on one segment of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub stream: usize,
    pub segment: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub streams: Vec<LabeledStream>,
    pub samples: Vec<SampleRef>,
}

impl Dataset {
    /// Every segment of every stream becomes a sample.
    pub fn new(streams: Vec<LabeledStream>, cfg: &ModelConfig) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, s) in streams.iter().enumerate() {
            s.stream.check(cfg)?;
            let need = s.stream.num_frames(cfg.segment_len);
            if s.frame_labels.len() < need {
                return Err(Error::Shape(format!("stream {i} has {} frame labels, needs {need}", s.frame_labels.len())));
            }
            samples.extend((0..s.stream.num_segments()).map(|segment| SampleRef { stream: i, segment }));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        Ok(Self { streams, samples })
    }

    /// Keeps `n` samples spread evenly over the current list.
    pub fn subsample_even(&mut self, n: usize) {
        let total = self.samples.len();
        if n == 0 || n >= total {
            return;
        }
        self.samples = (0..n).map(|i| self.samples[i * total / n]).collect();
    }

    /// Keeps `n` samples drawn without replacement with a seeded stream.
    pub fn subsample_random(&mut self, n: usize, seed: u64) {
        if n >= self.samples.len() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.samples.shuffle(&mut rng);
        self.samples.truncate(n);
        self.samples.sort_by_key(|s| (s.stream, s.segment));
    }

    pub fn segment_frame_labels(&self, r: SampleRef, segment_len: usize) -> &[usize] {
        let s = &self.streams[r.stream];
        let start = r.segment * s.stream.stride;
        &s.frame_labels[start..start + segment_len]
    }

    pub fn majority_label(&self, r: SampleRef, segment_len: usize) -> usize {
        segment_majority_label(self.segment_frame_labels(r, segment_len))
    }

    pub fn target(&self, r: SampleRef, cfg: &ModelConfig, beta: f64) -> Vec<f64> {
        density_target(self.segment_frame_labels(r, cfg.segment_len), beta, cfg.n_classes)
    }
}

/// Assembles the windows around `refs` into one network input.
pub fn build_batch(streams: &[&VideoStream], refs: &[SampleRef], cfg: &ModelConfig) -> BatchInput {
    let w = cfg.window_tokens;
    let tokens = refs.len() * w;
    let mut embed = Array2::zeros((tokens, cfg.n_f));
    let mut pose = cfg.uses_pose().then(|| Array2::zeros((cfg.segment_len * tokens, cfg.pose_dim)));
    for (b, r) in refs.iter().enumerate() {
        let st = streams[r.stream];
        for (k, seg) in window_indices(r.segment, st.num_segments(), cfg).into_iter().enumerate() {
            let token = b * w + k;
            embed.row_mut(token).assign(&st.embed.row(seg));
            if let (Some(dst), Some(src)) = (pose.as_mut(), st.pose.as_ref()) {
                let start = seg * st.stride;
                for t in 0..cfg.segment_len {
                    dst.row_mut(t * tokens + token).assign(&src.row(start + t));
                }
            }
        }
    }
    BatchInput { pose, embed, windows: refs.len() }
}
