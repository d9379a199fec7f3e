//! Single-layer LSTM over the pose features of a segment; its final hidden
//! state is the segment's pose embedding.
//!
//! Batched inputs are time-major: row `t * S + s` holds step `t` of
//! sequence `s`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::ops::sigmoid;
use super::params::LstmParams;

pub struct LstmCache {
    x: Array2<f64>,
    seqs: usize,
    /// Activated gates per step, `S x 4n` in i/f/g/o order.
    gates: Vec<Array2<f64>>,
    /// Cell states `c_0..c_T`.
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
    /// Hidden states `h_0..h_T`.
    hidden: Vec<Array2<f64>>,
}

/// Applies the gate nonlinearities in place and advances `(h, c)`.
fn step(pre: &mut Array2<f64>, h: &mut Array2<f64>, c: &mut Array2<f64>, n: usize) -> Array2<f64> {
    let mut tanh_c = Array2::zeros(c.raw_dim());
    for (((mut g, mut hr), mut cr), mut tr) in pre
        .rows_mut()
        .into_iter()
        .zip(h.rows_mut())
        .zip(c.rows_mut())
        .zip(tanh_c.rows_mut())
    {
        for j in 0..n {
            let i = sigmoid(g[j]);
            let f = sigmoid(g[n + j]);
            let gg = g[2 * n + j].tanh();
            let o = sigmoid(g[3 * n + j]);
            g[j] = i;
            g[n + j] = f;
            g[2 * n + j] = gg;
            g[3 * n + j] = o;
            cr[j] = f * cr[j] + i * gg;
            tr[j] = cr[j].tanh();
            hr[j] = o * tr[j];
        }
    }
    tanh_c
}

/// Runs `seqs` sequences of equal length from a zero state.
pub fn forward_batch(p: &LstmParams, x: Array2<f64>, seqs: usize) -> (Array2<f64>, LstmCache) {
    let n = p.w_h.nrows();
    let steps = x.nrows() / seqs;
    debug_assert_eq!(steps * seqs, x.nrows());
    let proj = x.dot(&p.w_x) + &p.b;
    let mut h = Array2::zeros((seqs, n));
    let mut c = Array2::zeros((seqs, n));
    let mut cache = LstmCache {
        x: Array2::zeros((0, 0)),
        seqs,
        gates: Vec::with_capacity(steps),
        cells: vec![c.clone()],
        tanh_cells: Vec::with_capacity(steps),
        hidden: vec![h.clone()],
    };
    for t in 0..steps {
        let mut pre = proj.slice(s![t * seqs..(t + 1) * seqs, ..]).to_owned() + h.dot(&p.w_h);
        let tanh_c = step(&mut pre, &mut h, &mut c, n);
        cache.gates.push(pre);
        cache.cells.push(c.clone());
        cache.tanh_cells.push(tanh_c);
        cache.hidden.push(h.clone());
    }
    cache.x = x;
    (h, cache)
}

/// Backpropagates `d_out` (gradient of the final hidden states) and
/// accumulates parameter gradients into `grad`.
pub fn backward_batch(p: &LstmParams, cache: &LstmCache, d_out: &Array2<f64>, grad: &mut LstmParams) {
    let n = p.w_h.nrows();
    let seqs = cache.seqs;
    let steps = cache.gates.len();
    let mut dh = d_out.clone();
    let mut dc: Array2<f64> = Array2::zeros((seqs, n));
    let mut d_pre_all = Array2::zeros((steps * seqs, 4 * n));
    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let tanh_c = &cache.tanh_cells[t];
        let c_prev = &cache.cells[t];
        let mut d_pre = d_pre_all.slice_mut(s![t * seqs..(t + 1) * seqs, ..]);
        for r in 0..seqs {
            for j in 0..n {
                let (i, f, g, o) = (gates[[r, j]], gates[[r, n + j]], gates[[r, 2 * n + j]], gates[[r, 3 * n + j]]);
                let tc = tanh_c[[r, j]];
                let dh_rj = dh[[r, j]];
                let d_o = dh_rj * tc;
                let dc_rj = dc[[r, j]] + dh_rj * o * (1.0 - tc * tc);
                d_pre[[r, j]] = dc_rj * g * i * (1.0 - i);
                d_pre[[r, n + j]] = dc_rj * c_prev[[r, j]] * f * (1.0 - f);
                d_pre[[r, 2 * n + j]] = dc_rj * i * (1.0 - g * g);
                d_pre[[r, 3 * n + j]] = d_o * o * (1.0 - o);
                dc[[r, j]] = dc_rj * f;
            }
        }
        grad.w_h += &cache.hidden[t].t().dot(&d_pre);
        dh = d_pre.dot(&p.w_h.t());
    }
    grad.w_x += &cache.x.t().dot(&d_pre_all);
    grad.b += &d_pre_all.sum_axis(Axis(0));
}

/// Final hidden state of one `T x pose_dim` sequence.
pub fn lstm_forward(p: &LstmParams, pose_seq: &ArrayView2<f64>) -> Array1<f64> {
    let (h, _) = forward_batch(p, pose_seq.to_owned(), 1);
    h.row(0).to_owned()
}

/// Pose embeddings of every segment of a frame stream.
///
/// `pose` is `num_frames x pose_dim`; segment `i` covers frames
/// `[i * stride, i * stride + segment_len)`. The input projection is shared
/// across overlapping segments.
pub fn embed_segments(p: &LstmParams, pose: &ArrayView2<f64>, segment_len: usize, stride: usize, chunk: usize) -> Array2<f64> {
    let n = p.w_h.nrows();
    let num_frames = pose.nrows();
    if num_frames < segment_len {
        return Array2::zeros((0, n));
    }
    let num_segments = (num_frames - segment_len) / stride + 1;
    let proj = pose.dot(&p.w_x) + &p.b;
    let mut out = Array2::zeros((num_segments, n));
    let chunk = chunk.max(1);
    let mut start = 0;
    while start < num_segments {
        let len = chunk.min(num_segments - start);
        let mut h = Array2::zeros((len, n));
        let mut c = Array2::zeros((len, n));
        for t in 0..segment_len {
            let rows: Vec<usize> = (start..start + len).map(|i| i * stride + t).collect();
            let mut pre = if stride == 1 {
                proj.slice(s![rows[0]..rows[0] + len, ..]).to_owned()
            } else {
                proj.select(Axis(0), &rows)
            };
            pre += &h.dot(&p.w_h);
            step(&mut pre, &mut h, &mut c, n);
        }
        out.slice_mut(s![start..start + len, ..]).assign(&h);
        start += len;
    }
    out
}
