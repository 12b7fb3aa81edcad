use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, KinematicSubset};
use crate::error::{Error, Result};

/// One selectable input stream. The derived order is the fusion order:
/// kinematics first, then context, then the video representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Kinematic(KinematicSubset),
    Extra(FeatureKind),
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Kinematic(k) => k.name(),
            Modality::Extra(f) => f.name(),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "K38" => Ok(Modality::Kinematic(KinematicSubset::K38)),
            "K14" => Ok(Modality::Kinematic(KinematicSubset::K14)),
            _ => s.parse().map(Modality::Extra),
        }
    }
}

/// A validated, canonically ordered set of modalities, e.g. `K14+C+V_Spatial`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSelection {
    modalities: Vec<Modality>,
}

impl FeatureSelection {
    pub fn new(mut modalities: Vec<Modality>) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Config("feature selection is empty".into()));
        }
        modalities.sort();
        modalities.dedup();
        let kin = modalities
            .iter()
            .filter(|m| matches!(m, Modality::Kinematic(_)))
            .count();
        if kin > 1 {
            return Err(Error::Config("select at most one of K38 and K14".into()));
        }
        Ok(Self { modalities })
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn kinematics(&self) -> Option<KinematicSubset> {
        self.modalities.iter().find_map(|m| match m {
            Modality::Kinematic(k) => Some(*k),
            Modality::Extra(_) => None,
        })
    }

    pub fn extras(&self) -> impl Iterator<Item = FeatureKind> + '_ {
        self.modalities.iter().filter_map(|m| match m {
            Modality::Extra(f) => Some(*f),
            Modality::Kinematic(_) => None,
        })
    }
}

impl fmt::Display for FeatureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.modalities.iter().map(|m| m.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for FeatureSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split('+')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Modality>>>()?;
        Self::new(parts)
    }
}

impl TryFrom<String> for FeatureSelection {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSelection> for String {
    fn from(s: FeatureSelection) -> String {
        s.to_string()
    }
}

/// Concatenates per-modality vectors in canonical order, whatever order
/// they are supplied in.
pub fn fuse(parts: &[(Modality, &[f64])]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::Config("nothing to fuse: feature selection is empty".into()));
    }
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by_key(|&i| parts[i].0);
    if order.windows(2).any(|w| parts[w[0]].0 == parts[w[1]].0) {
        return Err(Error::Config("modality supplied twice".into()));
    }
    Ok(order.into_iter().flat_map(|i| parts[i].1.iter().copied()).collect())
}
