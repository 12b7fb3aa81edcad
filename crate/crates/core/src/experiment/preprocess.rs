//! Per-fold input transforms, fitted on training trials only.

use serde::{Deserialize, Serialize};

use crate::data::{pca_fit, ColumnBlock, FeatureKind, LabeledTrial, Pca, ZScore};
use crate::error::{Error, Result};
use crate::features::Modality;
use crate::nn::Tensor2;

/// Optional PCA over the segmentation-feature block followed by z-scoring
/// of every column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub pca: Option<Pca>,
    pub zscore: ZScore,
}

fn seg_block(trial: &LabeledTrial) -> Option<ColumnBlock> {
    trial.block(Modality::Extra(FeatureKind::VSeg)).cloned()
}

/// Replaces the columns of `block` with `pca.transform` of them.
fn project_block(trial: &LabeledTrial, block: &ColumnBlock, pca: &Pca) -> Result<LabeledTrial> {
    let x = &trial.features;
    let before = x.col_slice(0, block.start);
    let seg = pca.transform(&x.col_slice(block.start, block.len))?;
    let after_start = block.start + block.len;
    let after = x.col_slice(after_start, x.cols() - after_start);
    let features = Tensor2::hcat(&[&before, &seg, &after])?;
    let k = pca.output_dim();
    let blocks = trial
        .blocks
        .iter()
        .map(|b| {
            let mut b = b.clone();
            if b.modality == block.modality {
                b.len = k;
            } else if b.start > block.start {
                b.start = b.start - block.len + k;
            }
            b
        })
        .collect();
    Ok(LabeledTrial {
        features,
        blocks,
        ..trial.clone()
    })
}

impl Preprocessor {
    pub fn fit(train: &[&LabeledTrial], pca_components: usize) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Config("cannot fit preprocessing on an empty training set".into()))?;
        let pca = if pca_components > 0 {
            let block = seg_block(first).ok_or_else(|| {
                Error::Config("pca_components is set but the feature selection has no V_Seg block".into())
            })?;
            let stacked: Vec<Tensor2> = train
                .iter()
                .map(|t| t.features.col_slice(block.start, block.len))
                .collect();
            let rows: Vec<&[f64]> = stacked
                .iter()
                .flat_map(|m| (0..m.rows()).map(move |r| m.row(r)))
                .collect();
            Some(pca_fit(&Tensor2::from_rows(&rows)?, pca_components)?)
        } else {
            None
        };
        let projected = match &pca {
            Some(p) => {
                let block = seg_block(first).expect("checked above");
                train
                    .iter()
                    .map(|t| project_block(t, &block, p))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        let zscore = if pca.is_some() {
            ZScore::fit(projected.iter().map(|t| &t.features))?
        } else {
            ZScore::fit(train.iter().map(|t| &t.features))?
        };
        Ok(Self { pca, zscore })
    }

    pub fn apply(&self, trial: &LabeledTrial) -> Result<LabeledTrial> {
        let projected = match &self.pca {
            Some(p) => {
                let block = seg_block(trial)
                    .ok_or_else(|| Error::Data(format!("trial {} has no V_Seg block for PCA", trial.id)))?;
                project_block(trial, &block, p)?
            }
            None => trial.clone(),
        };
        self.zscore.apply_trial(&projected)
    }

    /// Width of transformed feature rows.
    pub fn output_dim(&self) -> usize {
        self.zscore.dim()
    }
}
