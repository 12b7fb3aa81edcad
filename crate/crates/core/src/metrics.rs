//! Frame, segmental, trajectory and latency metrics, plus the per-fold
//! evaluation report.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::GestureLabel;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Frame budget at 30 Hz, in milliseconds.
pub const REAL_TIME_BUDGET_MS: f64 = 1000.0 / 30.0;
pub const F1_THRESHOLDS: [u32; 3] = [10, 25, 50];

/// Anything usable as a per-frame label. Unlabeled frames never form
/// segments.
pub trait FrameLabel: Copy + PartialEq + Debug {
    fn is_unlabeled(&self) -> bool {
        false
    }
}

impl FrameLabel for usize {}
impl FrameLabel for u8 {}
impl FrameLabel for char {}

impl FrameLabel for Option<usize> {
    fn is_unlabeled(&self) -> bool {
        self.is_none()
    }
}

impl FrameLabel for GestureLabel {
    fn is_unlabeled(&self) -> bool {
        !self.is_labeled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment<L> {
    pub label: L,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl<L> Segment<L> {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iou(&self, other: &Segment<L>) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        let inter = if hi >= lo { hi - lo + 1 } else { 0 };
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

/// Maximal runs of equal labels, in order, with unlabeled runs dropped.
pub fn segments_from_labels<L: FrameLabel>(labels: &[L]) -> Vec<Segment<L>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1] == labels[i] {
            j += 1;
        }
        if !labels[i].is_unlabeled() {
            out.push(Segment {
                label: labels[i],
                start: i,
                end: j,
            });
        }
        i = j + 1;
    }
    out
}

fn levenshtein<L: PartialEq>(a: &[L], b: &[L]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100·(1 − lev/max(|pred segs|, |true segs|))`, clamped at 0.
pub fn edit_score<L: FrameLabel>(pred: &[L], truth: &[L]) -> f64 {
    let p: Vec<L> = segments_from_labels(pred).into_iter().map(|s| s.label).collect();
    let t: Vec<L> = segments_from_labels(truth).into_iter().map(|s| s.label).collect();
    let denom = p.len().max(t.len());
    if denom == 0 {
        return 100.0;
    }
    (100.0 * (1.0 - levenshtein(&p, &t) as f64 / denom as f64)).max(0.0)
}

/// Segmental F1 at an IoU threshold of `k` percent (strictly exceeded).
///
/// Predicted segments are visited in order; each is matched to the
/// unmatched same-label true segment of highest IoU (earliest on ties).
pub fn f1_at_k<L: PartialEq>(pred: &[Segment<L>], truth: &[Segment<L>], k: u32) -> f64 {
    if pred.is_empty() && truth.is_empty() {
        return 100.0;
    }
    let thresh = k as f64 / 100.0;
    let mut used = vec![false; truth.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in truth.iter().enumerate() {
            if used[j] || t.label != p.label {
                continue;
            }
            let iou = p.iou(t);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou > thresh => {
                used[j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    let fn_ = truth.len() - tp;
    100.0 * 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Percentage of labelled frames predicted correctly; `None` if no frame is
/// labelled.
pub fn frame_accuracy(pred: &[usize], truth: &[Option<usize>]) -> Option<f64> {
    let (mut ok, mut n) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if let Some(t) = t {
            n += 1;
            ok += usize::from(p == t);
        }
    }
    (n > 0).then(|| 100.0 * ok as f64 / n as f64)
}

/// Most frequent value, lowest on ties.
pub fn majority(labels: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut counts: Vec<usize> = Vec::new();
    for l in labels {
        if l >= counts.len() {
            counts.resize(l + 1, 0);
        }
        counts[l] += 1;
    }
    let max = *counts.iter().max()?;
    (max > 0).then(|| counts.iter().position(|&c| c == max).expect("max exists"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    pub rmse: [f64; 6],
    pub mae: [f64; 6],
    /// `None` where every ground-truth value is (near) zero.
    pub mape: [Option<f64>; 6],
}

/// Column-wise RMSE and MAE (mm) and MAPE (%). MAPE skips truth values with
/// magnitude below 1e-6.
pub fn trajectory_errors(pred: &Tensor2, truth: &Tensor2) -> Result<TrajectoryErrors> {
    pred.check_same_shape(truth, "trajectory_errors")?;
    if pred.cols() != 6 || pred.rows() == 0 {
        return Err(Error::dim("trajectory_errors", "N×6 with N ≥ 1", pred.shape_str()));
    }
    let n = pred.rows() as f64;
    let mut out = TrajectoryErrors {
        rmse: [0.0; 6],
        mae: [0.0; 6],
        mape: [None; 6],
    };
    for c in 0..6 {
        let (mut sq, mut ab, mut pct, mut np) = (0.0, 0.0, 0.0, 0usize);
        for r in 0..pred.rows() {
            let (p, t) = (pred[(r, c)], truth[(r, c)]);
            let e = p - t;
            sq += e * e;
            ab += e.abs();
            if t.abs() >= 1e-6 {
                pct += (e / t).abs();
                np += 1;
            }
        }
        out.rmse[c] = (sq / n).sqrt();
        out.mae[c] = ab / n;
        out.mape[c] = (np > 0).then(|| 100.0 * pct / np as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub over_budget: bool,
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Statistics of per-window latencies in milliseconds after dropping the
/// first `warmup` samples.
pub fn latency_stats(samples_ms: &[f64], warmup: usize) -> Result<LatencyStats> {
    let kept = samples_ms.get(warmup..).unwrap_or(&[]);
    if kept.is_empty() {
        return Err(Error::Contract(format!(
            "no latency samples left after discarding {warmup} warmup runs"
        )));
    }
    let mut sorted = kept.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(LatencyStats {
        samples: kept.len(),
        mean_ms: mean,
        p50_ms: percentile(&sorted, 50.0),
        p99_ms: percentile(&sorted, 99.0),
        over_budget: mean > REAL_TIME_BUDGET_MS,
    })
}

/// Accuracy and segmental scores for one gesture stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureMetrics {
    pub windows: usize,
    pub accuracy: f64,
    pub window_accuracy: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
}

/// Collects per-window gesture scores. Frame accuracy pools all labelled
/// frames; segmental scores are averaged over windows.
#[derive(Debug, Clone, Default)]
pub struct GestureAccumulator {
    correct: usize,
    labelled: usize,
    window_hits: usize,
    windows: usize,
    edit: f64,
    f1: [f64; 3],
}

impl GestureAccumulator {
    /// Windows without any labelled frame are ignored.
    pub fn add(&mut self, pred: &[usize], truth: &[Option<usize>]) {
        let n = truth.iter().filter(|t| t.is_some()).count();
        if n == 0 {
            return;
        }
        self.labelled += n;
        self.correct += pred.iter().zip(truth).filter(|(p, t)| Some(**p) == **t).count();
        let labelled_pred = pred.iter().zip(truth).filter(|(_, t)| t.is_some()).map(|(p, _)| *p);
        let labelled_true = truth.iter().flatten().copied();
        self.window_hits += usize::from(majority(labelled_pred) == majority(labelled_true));
        self.windows += 1;
        let pred_opt: Vec<Option<usize>> = pred.iter().map(|&p| Some(p)).collect();
        self.edit += edit_score(&pred_opt, truth);
        let ps = segments_from_labels(&pred_opt);
        let ts = segments_from_labels(truth);
        for (acc, k) in self.f1.iter_mut().zip(F1_THRESHOLDS) {
            *acc += f1_at_k(&ps, &ts, k);
        }
    }

    pub fn finish(&self) -> Option<GestureMetrics> {
        (self.windows > 0).then(|| {
            let w = self.windows as f64;
            GestureMetrics {
                windows: self.windows,
                accuracy: 100.0 * self.correct as f64 / self.labelled as f64,
                window_accuracy: 100.0 * self.window_hits as f64 / w,
                edit: self.edit / w,
                f1_10: self.f1[0] / w,
                f1_25: self.f1[1] / w,
                f1_50: self.f1[2] / w,
            }
        })
    }
}

/// Pools predicted and true trajectory rows across windows.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryAccumulator {
    pred: Vec<f64>,
    truth: Vec<f64>,
}

impl TrajectoryAccumulator {
    pub fn add(&mut self, pred: &Tensor2, truth: &Tensor2) {
        self.pred.extend_from_slice(pred.data());
        self.truth.extend_from_slice(truth.data());
    }

    pub fn finish(&self) -> Result<Option<TrajectoryErrors>> {
        if self.pred.is_empty() {
            return Ok(None);
        }
        let n = self.pred.len() / 6;
        let p = Tensor2::from_vec(n, 6, self.pred.clone())?;
        let t = Tensor2::from_vec(n, 6, self.truth.clone())?;
        trajectory_errors(&p, &t).map(Some)
    }
}

/// Metrics for one leave-one-user-out fold (or the aggregate row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: String,
    pub recognition: Option<GestureMetrics>,
    /// Prediction with ground-truth observed gestures in the memory.
    pub prediction_gt: Option<GestureMetrics>,
    /// Prediction with recognized observed gestures in the memory.
    pub prediction_rec: Option<GestureMetrics>,
    pub trajectory_gt: Option<TrajectoryErrors>,
    pub trajectory_rec: Option<TrajectoryErrors>,
    pub latency: Option<LatencyStats>,
    /// Test trials too short for a single window.
    pub short_trials: Vec<String>,
    /// SHA-256 over the sorted ids of the fold's training trials.
    #[serde(default)]
    pub train_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_selection: String,
    pub folds: Vec<FoldReport>,
    pub aggregate: FoldReport,
}

fn mean_of<'a>(xs: impl Iterator<Item = Option<f64>> + 'a) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_gesture(xs: &[Option<GestureMetrics>]) -> Option<GestureMetrics> {
    let present: Vec<&GestureMetrics> = xs.iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let m = |f: fn(&GestureMetrics) -> f64| present.iter().map(|g| f(g)).sum::<f64>() / present.len() as f64;
    Some(GestureMetrics {
        windows: present.iter().map(|g| g.windows).sum(),
        accuracy: m(|g| g.accuracy),
        window_accuracy: m(|g| g.window_accuracy),
        edit: m(|g| g.edit),
        f1_10: m(|g| g.f1_10),
        f1_25: m(|g| g.f1_25),
        f1_50: m(|g| g.f1_50),
    })
}

fn mean_traj(xs: &[Option<TrajectoryErrors>]) -> Option<TrajectoryErrors> {
    let present: Vec<&TrajectoryErrors> = xs.iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let n = present.len() as f64;
    let mut out = TrajectoryErrors {
        rmse: [0.0; 6],
        mae: [0.0; 6],
        mape: [None; 6],
    };
    for c in 0..6 {
        out.rmse[c] = present.iter().map(|t| t.rmse[c]).sum::<f64>() / n;
        out.mae[c] = present.iter().map(|t| t.mae[c]).sum::<f64>() / n;
        out.mape[c] = mean_of(present.iter().map(|t| t.mape[c]));
    }
    Some(out)
}

fn mean_latency(xs: &[Option<LatencyStats>]) -> Option<LatencyStats> {
    let present: Vec<&LatencyStats> = xs.iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let n = present.len() as f64;
    let mean = present.iter().map(|l| l.mean_ms).sum::<f64>() / n;
    Some(LatencyStats {
        samples: present.iter().map(|l| l.samples).sum(),
        mean_ms: mean,
        p50_ms: present.iter().map(|l| l.p50_ms).sum::<f64>() / n,
        p99_ms: present.iter().map(|l| l.p99_ms).sum::<f64>() / n,
        over_budget: mean > REAL_TIME_BUDGET_MS,
    })
}

impl EvalReport {
    /// Aggregates folds by unweighted mean.
    pub fn from_folds(feature_selection: String, folds: Vec<FoldReport>) -> Self {
        let g = |f: fn(&FoldReport) -> Option<GestureMetrics>| folds.iter().map(f).collect::<Vec<_>>();
        let t = |f: fn(&FoldReport) -> Option<TrajectoryErrors>| folds.iter().map(f).collect::<Vec<_>>();
        let aggregate = FoldReport {
            fold: "mean".into(),
            recognition: mean_gesture(&g(|f| f.recognition)),
            prediction_gt: mean_gesture(&g(|f| f.prediction_gt)),
            prediction_rec: mean_gesture(&g(|f| f.prediction_rec)),
            trajectory_gt: mean_traj(&t(|f| f.trajectory_gt)),
            trajectory_rec: mean_traj(&t(|f| f.trajectory_rec)),
            latency: mean_latency(&folds.iter().map(|f| f.latency).collect::<Vec<_>>()),
            short_trials: folds.iter().flat_map(|f| f.short_trials.iter().cloned()).collect(),
            train_fingerprint: None,
        };
        Self {
            feature_selection,
            folds,
            aggregate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["fold".to_string()];
        for stream in ["recognition", "prediction_gt", "prediction_rec"] {
            for m in [
                "windows",
                "accuracy",
                "window_accuracy",
                "edit",
                "f1_10",
                "f1_25",
                "f1_50",
            ] {
                h.push(format!("{stream}_{m}"));
            }
        }
        for src in ["gt", "rec"] {
            for m in ["rmse", "mae", "mape"] {
                for c in COORD_NAMES {
                    h.push(format!("traj_{src}_{m}_{c}"));
                }
            }
        }
        h.extend(
            [
                "latency_mean_ms",
                "latency_p50_ms",
                "latency_p99_ms",
                "latency_over_budget",
            ]
            .map(String::from),
        );
        h
    }

    fn csv_row(f: &FoldReport) -> Vec<String> {
        let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        let mut row = vec![f.fold.clone()];
        for g in [f.recognition, f.prediction_gt, f.prediction_rec] {
            row.push(g.map_or_else(String::new, |g| g.windows.to_string()));
            for m in [
                |g: GestureMetrics| g.accuracy,
                |g: GestureMetrics| g.window_accuracy,
                |g: GestureMetrics| g.edit,
                |g: GestureMetrics| g.f1_10,
                |g: GestureMetrics| g.f1_25,
                |g: GestureMetrics| g.f1_50,
            ] {
                row.push(num(g.map(m)));
            }
        }
        for t in [f.trajectory_gt, f.trajectory_rec] {
            for c in 0..6 {
                row.push(num(t.map(|t| t.rmse[c])));
            }
            for c in 0..6 {
                row.push(num(t.map(|t| t.mae[c])));
            }
            for c in 0..6 {
                row.push(num(t.and_then(|t| t.mape[c])));
            }
        }
        row.push(num(f.latency.map(|l| l.mean_ms)));
        row.push(num(f.latency.map(|l| l.p50_ms)));
        row.push(num(f.latency.map(|l| l.p99_ms)));
        row.push(f.latency.map_or_else(String::new, |l| l.over_budget.to_string()));
        row
    }

    /// One row per fold followed by the aggregate row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let werr = |e: csv::Error| Error::Data(format!("writing report CSV: {e}"));
        w.write_record(Self::csv_header()).map_err(werr)?;
        for f in self.folds.iter().chain(std::iter::once(&self.aggregate)) {
            w.write_record(Self::csv_row(f)).map_err(werr)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("writing report CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

pub const COORD_NAMES: [&str; 6] = ["x1", "y1", "z1", "x2", "y2", "z2"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments() {
        let s = segments_from_labels(&[1usize, 1, 2]);
        assert_eq!(
            s,
            vec![
                Segment {
                    label: 1,
                    start: 0,
                    end: 1
                },
                Segment {
                    label: 2,
                    start: 2,
                    end: 2
                }
            ]
        );
        assert_eq!(segments_from_labels(&[4usize; 7]).len(), 1);
        assert_eq!(segments_from_labels(&[None, Some(1usize), None]).len(), 1);
    }

    #[test]
    fn edit_examples() {
        assert_eq!(edit_score(&[1usize, 2, 3], &[1, 2, 3]), 100.0);
        let e = edit_score(&[1usize, 3], &[1, 2, 3]);
        assert!((e - 100.0 * (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(edit_score(&[1usize, 1, 2], &[3usize, 4, 4]), 0.0);
    }

    #[test]
    fn f1_examples() {
        let t = [Segment {
            label: 1,
            start: 0,
            end: 9,
        }];
        // IoU 3/10
        let p = [Segment {
            label: 1,
            start: 0,
            end: 2,
        }];
        assert_eq!(f1_at_k(&p, &t, 10), 100.0);
        assert_eq!(f1_at_k(&p, &t, 25), 100.0);
        assert_eq!(f1_at_k(&p, &t, 50), 0.0);
        let two = [
            Segment {
                label: 1,
                start: 0,
                end: 4,
            },
            Segment {
                label: 1,
                start: 5,
                end: 9,
            },
        ];
        // one TP, one FP, no FN
        assert!((f1_at_k(&two, &t, 10) - 100.0 * 2.0 / 3.0).abs() < 1e-12);
        let empty: [Segment<usize>; 0] = [];
        assert_eq!(f1_at_k(&empty, &empty, 50), 100.0);
    }

    #[test]
    fn trajectory_examples() {
        let t = Tensor2::filled(4, 6, 10.0);
        let e = trajectory_errors(&t, &t).unwrap();
        assert_eq!(e.rmse, [0.0; 6]);
        let p = t.map(|v| v + 3.0);
        let e = trajectory_errors(&p, &t).unwrap();
        assert!(e
            .rmse
            .iter()
            .zip(e.mae)
            .all(|(r, m)| (r - 3.0).abs() < 1e-12 && (m - 3.0).abs() < 1e-12));
        let e = trajectory_errors(&Tensor2::filled(1, 6, 9.0), &Tensor2::filled(1, 6, 10.0)).unwrap();
        assert!((e.mape[0].unwrap() - 10.0).abs() < 1e-12);
        let e = trajectory_errors(&Tensor2::filled(2, 6, 1.0), &Tensor2::zeros(2, 6)).unwrap();
        assert_eq!(e.mape[3], None);
    }

    #[test]
    fn latency() {
        let s = latency_stats(&[5.0; 20], 10).unwrap();
        assert_eq!((s.mean_ms, s.p50_ms, s.p99_ms), (5.0, 5.0, 5.0));
        assert!(!s.over_budget);
        let slow: Vec<f64> = (0..20).map(|i| 30.0 + i as f64).collect();
        let s = latency_stats(&slow, 10).unwrap();
        assert!(s.over_budget && s.p99_ms >= s.p50_ms);
        assert!(latency_stats(&[1.0; 10], 10).is_err());
    }

    #[test]
    fn accuracy_masks_unlabeled() {
        assert_eq!(frame_accuracy(&[1, 2, 3], &[Some(1), None, Some(0)]), Some(50.0));
        assert_eq!(frame_accuracy(&[1], &[None]), None);
        assert_eq!(majority([2, 1, 2, 1]), Some(1));
    }

    #[test]
    fn csv_has_one_row_per_fold_plus_mean() {
        let fold = FoldReport {
            fold: "B".into(),
            recognition: None,
            prediction_gt: None,
            prediction_rec: None,
            trajectory_gt: None,
            trajectory_rec: None,
            latency: None,
            short_trials: vec![],
            train_fingerprint: None,
        };
        let r = EvalReport::from_folds(
            "K14".into(),
            vec![
                fold.clone(),
                FoldReport {
                    fold: "C".into(),
                    ..fold
                },
            ],
        );
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 4);
        let width = EvalReport::csv_header().len();
        assert!(csv.lines().all(|l| l.split(',').count() == width));
    }
}
