use crate::error::{Error, Result};

/// A local maximum of a 1-D signal together with the extent of the
/// above-threshold region containing it, `[left_base, right_base)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub left_base: usize,
    pub right_base: usize,
}

/// Sliding-window median with nearest-edge padding.
pub fn median_filter(signal: &[f64], width: usize) -> Result<Vec<f64>> {
    if width % 2 == 0 {
        return Err(Error::Config(format!("median width must be odd, got {width}")));
    }
    if signal.is_empty() {
        return Err(Error::Input("median filter of an empty signal".into()));
    }
    let half = (width / 2) as isize;
    let n = signal.len() as isize;
    let at = |i: isize| signal[i.clamp(0, n - 1) as usize];
    let mut window: Vec<f64> = (-half..=half).map(at).collect();
    window.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(signal.len());
    out.push(window[half as usize]);
    for i in 1..n {
        let leaving = at(i - 1 - half);
        let pos = window.partition_point(|v| v.total_cmp(&leaving).is_lt());
        window.remove(pos);
        let entering = at(i + half);
        let pos = window.partition_point(|v| v.total_cmp(&entering).is_lt());
        window.insert(pos, entering);
        out.push(window[half as usize]);
    }
    Ok(out)
}

/// Local maxima (plateaus reported at their midpoint) at least `min_height`
/// high whose above-threshold region spans at least `min_width` samples.
/// Samples outside the signal count as lower than any sample inside.
pub fn find_peaks(signal: &[f64], min_height: f64, min_width: usize) -> Vec<Peak> {
    let n = signal.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut r = i;
        while r + 1 < n && signal[r + 1] == signal[i] {
            r += 1;
        }
        let rises = i == 0 || signal[i - 1] < signal[i];
        let falls = r + 1 == n || signal[r + 1] < signal[i];
        if rises && falls && signal[i] >= min_height {
            let mut a = i;
            while a > 0 && signal[a - 1] >= min_height {
                a -= 1;
            }
            let mut b = r + 1;
            while b < n && signal[b] >= min_height {
                b += 1;
            }
            if b - a >= min_width {
                peaks.push(Peak { index: (i + r) / 2, height: signal[i], left_base: a, right_base: b });
            }
        }
        i = r + 1;
    }
    peaks
}

/// `[start, end)` of the activity around `peak`: the start is the frame
/// after the steepest rise in `[left_base, index]`, the end the frame after
/// the steepest fall in `[index, right_base)`. Without any rise (fall) the
/// region base is used. Ties go to the earliest frame.
pub fn activity_bounds(signal: &[f64], peak: &Peak) -> (usize, usize) {
    let n = signal.len();
    let mut start = peak.left_base;
    let mut best_rise = 0.0;
    for j in peak.left_base.max(1)..=peak.index {
        let d = signal[j] - signal[j - 1];
        if d > best_rise {
            best_rise = d;
            start = j;
        }
    }
    let mut end = peak.right_base;
    let mut best_fall = 0.0;
    for j in peak.index + 1..=peak.right_base.min(n - 1) {
        let d = signal[j] - signal[j - 1];
        if d < best_fall {
            best_fall = d;
            end = j;
        }
    }
    (start, end)
}
