//! Dataset manifest: one trial per line,
//! `trial_id subject_id kinematics transcript [KIND=path ...]`.
//! Relative paths resolve against the manifest's directory; `#` starts a
//! comment.

use std::path::{Path, PathBuf};

use super::feature_file::{read_feature_matrix, FeatureKind};
use super::kinematics::parse_kinematics;
use super::transcript::parse_transcript;
use super::trial::{align_and_label, LabeledTrial};
use crate::error::{Error, Result};
use crate::features::FeatureSelection;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub trial_id: String,
    pub subject: String,
    pub kinematics: PathBuf,
    pub transcript: PathBuf,
    pub features: Vec<(FeatureKind, PathBuf)>,
}

pub fn parse_manifest_str(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(perr(
                "expected: trial_id subject_id kinematics transcript [KIND=path ...]".into(),
            ));
        }
        let mut features = Vec::new();
        for tok in &toks[4..] {
            let (kind, p) = tok
                .split_once('=')
                .ok_or_else(|| perr(format!("feature entry {tok:?} is not KIND=path")))?;
            let kind: FeatureKind = kind.parse().map_err(|e: Error| perr(e.to_string()))?;
            features.push((kind, base.join(p)));
        }
        out.push(ManifestEntry {
            trial_id: toks[0].to_string(),
            subject: toks[1].to_string(),
            kinematics: base.join(toks[2]),
            transcript: base.join(toks[3]),
            features,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_str(&text, path)
}

/// Writes entries as given; paths are written verbatim.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!(
            "{} {} {} {}",
            e.trial_id,
            e.subject,
            e.kinematics.display(),
            e.transcript.display()
        ));
        for (k, p) in &e.features {
            text.push_str(&format!(" {k}={}", p.display()));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_trial(entry: &ManifestEntry, selection: &FeatureSelection) -> Result<LabeledTrial> {
    let kin = parse_kinematics(&entry.kinematics)?;
    let transcript = parse_transcript(&entry.transcript)?;
    let mut mats = Vec::new();
    for kind in selection.extras() {
        let (_, p) = entry
            .features
            .iter()
            .find(|(k, _)| *k == kind)
            .ok_or_else(|| Error::Data(format!("trial {}: manifest lists no {kind} file", entry.trial_id)))?;
        mats.push(read_feature_matrix(p, kind)?);
    }
    align_and_label(&entry.trial_id, &entry.subject, &kin, &transcript, &mats, selection)
}

pub fn load_dataset(manifest: impl AsRef<Path>, selection: &FeatureSelection) -> Result<Vec<LabeledTrial>> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Data("manifest lists no trials".into()));
    }
    entries.iter().map(|e| load_trial(e, selection)).collect()
}
