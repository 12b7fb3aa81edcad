use serde::{Deserialize, Serialize};

use super::trial::LabeledTrial;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Standard deviations below this are treated as zero variance.
const MIN_STD: f64 = 1e-12;

/// One leave-one-user-out fold, as indices into the trial list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject, in sorted subject order.
pub fn louo_splits(trials: &[LabeledTrial]) -> Result<Vec<Fold>> {
    let mut subjects: Vec<&str> = trials.iter().map(|t| t.subject.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::Config(format!(
            "leave-one-user-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..trials.len()).partition(|&i| trials[i].subject == s);
            Fold {
                subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Fits on the rows of every matrix given; call with training data only.
    pub fn fit<'a>(mats: impl IntoIterator<Item = &'a Tensor2>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        let mut rows = Vec::new();
        for m in mats {
            if sum.is_empty() {
                sum = vec![0.0; m.cols()];
            } else if m.cols() != sum.len() {
                return Err(Error::dim(
                    "ZScore::fit",
                    format!("{} columns", sum.len()),
                    m.shape_str(),
                ));
            }
            rows.push(m);
            for r in 0..m.rows() {
                for (s, v) in sum.iter_mut().zip(m.row(r)) {
                    *s += v;
                }
            }
            n += m.rows();
        }
        if n == 0 {
            return Err(Error::Config("normalization fit on an empty training set".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        sq.resize(mean.len(), 0.0);
        for m in rows {
            for r in 0..m.rows() {
                for ((q, v), mu) in sq.iter_mut().zip(m.row(r)).zip(&mean) {
                    *q += (v - mu) * (v - mu);
                }
            }
        }
        let std = sq.iter().map(|q| (q / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero-variance features pass through untouched.
    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.dim() {
            return Err(Error::dim(
                "ZScore::apply",
                format!("{} columns", self.dim()),
                x.shape_str(),
            ));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if self.std[c] > MIN_STD {
                    *v = (*v - self.mean[c]) / self.std[c];
                }
            }
        }
        Ok(out)
    }

    pub fn apply_trial(&self, trial: &LabeledTrial) -> Result<LabeledTrial> {
        Ok(LabeledTrial {
            features: self.apply(&trial.features)?,
            ..trial.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(subject: &str) -> LabeledTrial {
        LabeledTrial {
            id: format!("{subject}-t"),
            subject: subject.into(),
            features: Tensor2::zeros(1, 1),
            labels: vec![crate::data::GestureLabel::Unlabeled],
            trajectory: Tensor2::zeros(1, 6),
            blocks: vec![],
        }
    }

    #[test]
    fn folds_partition() {
        let ts: Vec<_> = ["b", "a", "b", "c"].iter().map(|s| trial(s)).collect();
        let folds = louo_splits(&ts).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds[0].subject, "a");
        assert_eq!(folds[1].test, vec![0, 2]);
        assert_eq!(folds[1].train, vec![1, 3]);
        assert!(louo_splits(&ts[..1]).is_err());
    }

    #[test]
    fn zscore_constant_and_centered() {
        let train = Tensor2::from_rows(&[[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let z = ZScore::fit([&train]).unwrap();
        let n = z.apply(&train).unwrap();
        let mean0: f64 = (0..3).map(|r| n[(r, 0)]).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-9);
        assert!((0..3).all(|r| n[(r, 1)] == 5.0));
        let test = Tensor2::from_rows(&[[100.0, 0.0]]).unwrap();
        let nt = z.apply(&test).unwrap();
        assert!((nt[(0, 0)] - (100.0 - 3.0) / (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
