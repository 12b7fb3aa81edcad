use super::transcript::GestureLabel;
use super::trial::{downsample, LabeledTrial};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Future gesture labels and positions following an observation window,
/// at the downsampled rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub labels: Vec<GestureLabel>,
    pub trajectory: Tensor2,
}

/// One tumbling observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub trial_id: String,
    /// First frame index in the source trial.
    pub start: usize,
    pub features: Tensor2,
    pub labels: Vec<GestureLabel>,
    pub trajectory: Tensor2,
    pub horizon: Option<Horizon>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Frame indices (relative to the window) on the downsampled grid.
    pub fn grid(&self, factor: usize) -> Vec<usize> {
        (0..self.len()).step_by(factor.max(1)).collect()
    }

    pub fn features_at_rate(&self, factor: usize) -> Tensor2 {
        self.features.select_rows(self.grid(factor).iter().copied())
    }

    pub fn labels_at_rate(&self, factor: usize) -> Vec<GestureLabel> {
        self.grid(factor).iter().map(|&i| self.labels[i]).collect()
    }

    /// Position at the last observed grid frame, the origin for delta
    /// trajectory prediction.
    pub fn last_position(&self, factor: usize) -> [f64; 6] {
        let last = *self.grid(factor).last().expect("non-empty window");
        self.trajectory.row(last).try_into().expect("6 columns")
    }
}

/// Tumbling windows of one trial. Windows without a full horizon are kept
/// (`horizon == None`) so recognition can still use them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowBatch {
    pub windows: Vec<Window>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn with_horizon(&self) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(|w| w.horizon.is_some())
    }
}

/// Cuts `trial` into non-overlapping windows of `w_obs` frames. Each window
/// is paired with the next `w_pred` frames of the trial downsampled by
/// `factor`, when the trial is long enough.
pub fn tumbling_windows(trial: &LabeledTrial, w_obs: usize, w_pred: usize, factor: usize) -> Result<WindowBatch> {
    if w_obs == 0 || factor == 0 || !w_obs.is_multiple_of(factor) {
        return Err(Error::Config(format!(
            "window length {w_obs} must be a positive multiple of the downsample factor {factor}"
        )));
    }
    let slow = downsample(trial, factor);
    let count = trial.frames() / w_obs;
    let mut windows = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * w_obs;
        let rows: Vec<usize> = (start..start + w_obs).collect();
        let h0 = (start + w_obs) / factor;
        let horizon = (w_pred > 0 && h0 + w_pred <= slow.frames()).then(|| {
            let idx: Vec<usize> = (h0..h0 + w_pred).collect();
            Horizon {
                labels: slow.labels[h0..h0 + w_pred].to_vec(),
                trajectory: slow.trajectory.select_rows(idx.iter().copied()),
            }
        });
        windows.push(Window {
            trial_id: trial.id.clone(),
            start,
            features: trial.features.select_rows(rows.iter().copied()),
            labels: trial.labels[start..start + w_obs].to_vec(),
            trajectory: trial.trajectory.select_rows(rows.iter().copied()),
            horizon,
        });
    }
    if windows.is_empty() {
        log::warn!(
            "trial {} has {} frames, shorter than one window",
            trial.id,
            trial.frames()
        );
    }
    Ok(WindowBatch { windows })
}
