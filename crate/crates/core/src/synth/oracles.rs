//! Direct, unoptimized reference implementations used to cross-check the
//! production code.

use crate::localization::{interval_iou, ActivityInterval, Peak};
use crate::model::{BatchInput, FusionModel, FusionParams};

/// Median of the clamped window around every sample, by full sort.
pub fn naive_median(signal: &[f64], width: usize) -> Vec<f64> {
    let half = (width / 2) as isize;
    let n = signal.len() as isize;
    (0..n)
        .map(|i| {
            let mut w: Vec<f64> = (i - half..=i + half).map(|j| signal[j.clamp(0, n - 1) as usize]).collect();
            w.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            w[half as usize]
        })
        .collect()
}

/// Peaks by scanning every sample independently.
pub fn naive_peaks(signal: &[f64], min_height: f64, min_width: usize) -> Vec<Peak> {
    let n = signal.len();
    let mut out = Vec::new();
    for i in 0..n {
        let v = signal[i];
        if v < min_height {
            continue;
        }
        let mut l = i;
        while l > 0 && signal[l - 1] == v {
            l -= 1;
        }
        let mut r = i;
        while r + 1 < n && signal[r + 1] == v {
            r += 1;
        }
        let left_lower = l == 0 || signal[l - 1] < v;
        let right_lower = r == n - 1 || signal[r + 1] < v;
        if !(left_lower && right_lower) || i != (l + r) / 2 {
            continue;
        }
        let left_base = (0..=i).rev().take_while(|&k| signal[k] >= min_height).last().unwrap_or(i);
        let right_base = (i..n).take_while(|&k| signal[k] >= min_height).last().unwrap_or(i) + 1;
        if right_base - left_base >= min_width {
            out.push(Peak { index: i, height: v, left_base, right_base });
        }
    }
    out
}

/// Suppression by repeatedly selecting the best remaining prediction.
pub fn naive_dedup(preds: &[ActivityInterval], o_max: f64) -> Vec<ActivityInterval> {
    let better = |a: &ActivityInterval, b: &ActivityInterval| {
        if a.peak_height != b.peak_height {
            return a.peak_height > b.peak_height;
        }
        (a.class_id, a.start_frame, a.end_frame) < (b.class_id, b.start_frame, b.end_frame)
    };
    let mut remaining: Vec<ActivityInterval> = preds.to_vec();
    let mut kept: Vec<ActivityInterval> = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            if better(&remaining[k], &remaining[best]) {
                best = k;
            }
        }
        let p = remaining.remove(best);
        let mut ok = true;
        for k in &kept {
            if interval_iou((k.start_frame, k.end_frame), (p.start_frame, p.end_frame)) > o_max {
                ok = false;
            }
        }
        if ok {
            kept.push(p);
        }
    }
    kept
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = f(&x);
            x[i] = theta[i] - h;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central finite differences of the mean batch loss for every parameter.
pub fn fd_gradients(model: &FusionModel, batch: &BatchInput, targets: &[Vec<f64>], beta: f64, h: f64) -> FusionParams {
    let mut probe = model.clone();
    let mut grad = model.params.zeros_like();
    let count = model.params.tensors().len();
    for t in 0..count {
        let len = model.params.tensors()[t].values.len();
        for i in 0..len {
            let orig = model.params.tensors()[t].values[i];
            probe.params.tensors_mut()[t].values[i] = orig + h;
            let up = probe.loss(batch, targets, beta);
            probe.params.tensors_mut()[t].values[i] = orig - h;
            let down = probe.loss(batch, targets, beta);
            probe.params.tensors_mut()[t].values[i] = orig;
            grad.tensors_mut()[t].values[i] = (up - down) / (2.0 * h);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_constant() {
        assert_eq!(naive_median(&[0.3; 12], 5), vec![0.3; 12]);
    }

    #[test]
    fn dedup_of_one() {
        let p = ActivityInterval { class_id: 2, start_frame: 3, end_frame: 9, peak_height: 0.4 };
        assert_eq!(naive_dedup(&[p], 0.5), vec![p]);
    }

    #[test]
    fn quadratic_derivative() {
        for theta in [-1.5, 0.0, 0.7, 3.0] {
            let g = fd_gradient(|x| x[0] * x[0], &[theta], 1e-4);
            assert!((g[0] - 2.0 * theta).abs() < 1e-6);
        }
    }

    #[test]
    fn peaks_of_triangle() {
        let s: Vec<f64> = (0..50).map(|i| (1.0 - (i as f64 - 20.0).abs() / 10.0).max(0.0)).collect();
        let p = naive_peaks(&s, 0.05, 5);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].index, 20);
        assert_eq!((p[0].left_base, p[0].right_base), (11, 30));
    }
}
