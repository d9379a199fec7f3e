//! Sliding-window inference: segment probabilities averaged onto frames.

use ndarray::{s, Array2};

use super::dataset::{window_indices, VideoStream};
use super::lstm::embed_segments;
use super::network::FusionModel;
use super::ops::softmax_rows_inplace;
use crate::error::Result;

const CHUNK: usize = 512;

/// Plain-softmax class probabilities of every segment, `num_segments x n_classes`.
pub fn segment_probabilities(model: &FusionModel, raw: &VideoStream) -> Result<Array2<f64>> {
    let cfg = &model.config;
    raw.check(cfg)?;
    let stream = raw.normalized(&model.norm);
    let n = stream.num_segments();
    let mut tokens_src = stream.embed.clone();
    if let (Some(p), Some(pose)) = (&model.params.lstm, &stream.pose) {
        tokens_src += &embed_segments(p, &pose.view(), cfg.segment_len, stream.stride, CHUNK);
    }
    let w = cfg.window_tokens;
    let mut out = Array2::zeros((n, cfg.n_classes));
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let mut tokens = Array2::zeros((len * w, cfg.n_f));
        for b in 0..len {
            for (k, seg) in window_indices(start + b, n, cfg).into_iter().enumerate() {
                tokens.row_mut(b * w + k).assign(&tokens_src.row(seg));
            }
        }
        let mut logits = model.logits_from_tokens(tokens);
        softmax_rows_inplace(&mut logits);
        out.slice_mut(s![start..start + len, ..]).assign(&logits);
        start += len;
    }
    Ok(out)
}

/// Each frame's probability is the mean over the segments that contain it.
pub fn frame_probabilities(segment_probs: &Array2<f64>, segment_len: usize, stride: usize) -> Array2<f64> {
    let n = segment_probs.nrows();
    let classes = segment_probs.ncols();
    if n == 0 {
        return Array2::zeros((0, classes));
    }
    let frames = (n - 1) * stride + segment_len;
    let mut sum = Array2::<f64>::zeros((frames, classes));
    let mut count = vec![0usize; frames];
    for (i, row) in segment_probs.rows().into_iter().enumerate() {
        let a = i * stride;
        for f in a..a + segment_len {
            sum.row_mut(f).scaled_add(1.0, &row);
            count[f] += 1;
        }
    }
    for (mut row, &c) in sum.rows_mut().into_iter().zip(&count) {
        row /= c as f64;
    }
    sum
}

/// Per-frame class probabilities of one camera stream.
pub fn infer(model: &FusionModel, stream: &VideoStream) -> Result<Array2<f64>> {
    let seg = segment_probabilities(model, stream)?;
    Ok(frame_probabilities(&seg, model.config.segment_len, stream.stride))
}
