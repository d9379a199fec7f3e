//! Overlap score, one-to-one activity matching and detection scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_io::{AnnotationRecord, PredictionRecord};
use crate::localization::ActivityInterval;

/// A classed `[start, end)` frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub class_id: usize,
    pub start: u64,
    pub end: u64,
}

impl From<&AnnotationRecord> for Span {
    fn from(r: &AnnotationRecord) -> Self {
        Self { class_id: r.class_id, start: r.start_frame, end: r.end_frame }
    }
}

impl From<&PredictionRecord> for Span {
    fn from(r: &PredictionRecord) -> Self {
        Self { class_id: r.class_id, start: r.start_frame, end: r.end_frame }
    }
}

impl From<&ActivityInterval> for Span {
    fn from(r: &ActivityInterval) -> Self {
        Self { class_id: r.class_id, start: r.start_frame, end: r.end_frame }
    }
}

/// Temporal IoU of `p` and `g`, or 0 when either endpoint of `p` lies more
/// than `window` frames from the corresponding endpoint of `g`.
pub fn overlap_score(p: (u64, u64), g: (u64, u64), window: u64) -> f64 {
    let near = |a: u64, b: u64| a.abs_diff(b) <= window;
    if !near(p.0, g.0) || !near(p.1, g.1) {
        return 0.0;
    }
    let inter = p.1.min(g.1).saturating_sub(p.0.max(g.0));
    let union = p.1.max(g.1) - p.0.min(g.0);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MatchResult {
    /// `(pred index, gt index, os)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Greedy one-to-one matching of same-class pairs with positive overlap
/// score, best score first; ties go to the earlier ground truth, then the
/// earlier prediction.
pub fn match_activities(preds: &[Span], gts: &[Span], window: u64) -> MatchResult {
    let mut cand = Vec::new();
    for (pi, p) in preds.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            if p.class_id != g.class_id {
                continue;
            }
            let os = overlap_score((p.start, p.end), (g.start, g.end), window);
            if os > 0.0 {
                cand.push((pi, gi, os));
            }
        }
    }
    cand.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(gts[a.1].start.cmp(&gts[b.1].start))
            .then(preds[a.0].start.cmp(&preds[b.0].start))
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (pi, gi, os) in cand {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            pairs.push((pi, gi, os));
        }
    }
    MatchResult {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&i| !gt_used[i]).collect(),
    }
}

/// Mean overlap score over matched pairs and unmatched activities; 1 when
/// there is nothing to score.
pub fn final_os(m: &MatchResult) -> f64 {
    let n = m.pairs.len() + m.unmatched_preds.len() + m.unmatched_gts.len();
    if n == 0 {
        return 1.0;
    }
    m.pairs.iter().map(|p| p.2).sum::<f64>() / n as f64
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `(precision, recall, f1)`; zero denominators give 0.
pub fn prf1(m: &MatchResult) -> (f64, f64, f64) {
    let tp = m.pairs.len();
    let precision = ratio(tp, tp + m.unmatched_preds.len());
    let recall = ratio(tp, tp + m.unmatched_gts.len());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub os: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Scores {
    fn from_parts(os_sum: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let m = MatchResult { pairs: vec![(0, 0, 0.0); tp], unmatched_preds: vec![0; fp], unmatched_gts: vec![0; fn_] };
        let (precision, recall, f1) = prf1(&m);
        let n = tp + fp + fn_;
        let os = if n == 0 { 1.0 } else { os_sum / n as f64 };
        Self { os, precision, recall, f1, tp, fp, fn_ }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub os: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_class: BTreeMap<usize, Scores>,
    pub per_video: BTreeMap<String, Scores>,
}

#[derive(Default)]
struct Tally {
    os_sum: f64,
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Tally {
    fn scores(&self) -> Scores {
        Scores::from_parts(self.os_sum, self.tp, self.fp, self.fn_)
    }
}

/// Matches predictions to ground truth video by video and aggregates the
/// scores globally, per class and per video.
pub fn evaluate(preds: &[PredictionRecord], gts: &[AnnotationRecord], window: u64) -> Report {
    let mut videos: BTreeMap<&str, (Vec<Span>, Vec<Span>)> = BTreeMap::new();
    for p in preds {
        videos.entry(&p.video_id).or_default().0.push(p.into());
    }
    for g in gts {
        videos.entry(&g.video_id).or_default().1.push(g.into());
    }
    let mut total = Tally::default();
    let mut per_class: BTreeMap<usize, Tally> = BTreeMap::new();
    let mut per_video = BTreeMap::new();
    for (video, (ps, gs)) in &videos {
        let m = match_activities(ps, gs, window);
        let mut v = Tally::default();
        for &(pi, _, os) in &m.pairs {
            let c = per_class.entry(ps[pi].class_id).or_default();
            c.os_sum += os;
            c.tp += 1;
            v.os_sum += os;
            v.tp += 1;
        }
        for &pi in &m.unmatched_preds {
            per_class.entry(ps[pi].class_id).or_default().fp += 1;
            v.fp += 1;
        }
        for &gi in &m.unmatched_gts {
            per_class.entry(gs[gi].class_id).or_default().fn_ += 1;
            v.fn_ += 1;
        }
        total.os_sum += v.os_sum;
        total.tp += v.tp;
        total.fp += v.fp;
        total.fn_ += v.fn_;
        per_video.insert(video.to_string(), v.scores());
    }
    let s = total.scores();
    Report {
        os: s.os,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        tp: s.tp,
        fp: s.fp,
        fn_: s.fn_,
        per_class: per_class.into_iter().map(|(k, t)| (k, t.scores())).collect(),
        per_video,
    }
}
