//! 76-column robot kinematics, four 19-value manipulator blocks per frame.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KINEMATIC_COLUMNS: usize = 76;
pub const BLOCK_LEN: usize = 19;
/// Column offset of the first patient-side block (MTM-L, MTM-R precede it).
pub const PSM_OFFSET: usize = 2 * BLOCK_LEN;

/// Offsets inside one 19-value block.
pub mod block {
    pub const POSITION: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LINEAR_VELOCITY: usize = 12;
    pub const ANGULAR_VELOCITY: usize = 15;
    pub const GRIPPER: usize = 18;
}

/// Indices into the 38-value PSM vector that make up the 14-value subset:
/// position, linear velocity and gripper angle of each arm.
pub const K14_INDICES: [usize; 14] = [0, 1, 2, 12, 13, 14, 18, 19, 20, 21, 31, 32, 33, 37];

/// One 30 Hz sample: MTM-L, MTM-R, PSM-L, PSM-R blocks in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicFrame(pub [f64; KINEMATIC_COLUMNS]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KinematicSubset {
    K38,
    K14,
}

impl KinematicSubset {
    pub fn width(self) -> usize {
        match self {
            KinematicSubset::K38 => 2 * BLOCK_LEN,
            KinematicSubset::K14 => K14_INDICES.len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KinematicSubset::K38 => "K38",
            KinematicSubset::K14 => "K14",
        }
    }
}

impl KinematicFrame {
    pub fn zeros() -> Self {
        Self([0.0; KINEMATIC_COLUMNS])
    }

    pub fn psm(&self) -> &[f64] {
        &self.0[PSM_OFFSET..]
    }

    /// Determinant of the rotation matrix in block `b` (0..4).
    pub fn rotation_det(&self, b: usize) -> f64 {
        let r = &self.0[b * BLOCK_LEN + block::ROTATION..b * BLOCK_LEN + block::ROTATION + 9];
        r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) + r[2] * (r[3] * r[7] - r[4] * r[6])
    }

    /// Whether every rotation block is within 0.05 of a proper rotation.
    pub fn rotations_plausible(&self) -> bool {
        (0..4).all(|b| (self.rotation_det(b) - 1.0).abs() < 0.05)
    }

    /// PSM-left then PSM-right Cartesian positions, converted to millimetres.
    pub fn psm_positions_mm(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for arm in 0..2 {
            let base = PSM_OFFSET + arm * BLOCK_LEN + block::POSITION;
            for k in 0..3 {
                out[arm * 3 + k] = self.0[base + k] * 1000.0;
            }
        }
        out
    }
}

pub fn select_kinematic_subset(frame: &KinematicFrame, subset: KinematicSubset) -> Vec<f64> {
    let psm = frame.psm();
    match subset {
        KinematicSubset::K38 => psm.to_vec(),
        KinematicSubset::K14 => K14_INDICES.iter().map(|&i| psm[i]).collect(),
    }
}

/// Parses one whitespace-separated row. `line` is 1-based, for messages.
pub fn parse_kinematic_line(text: &str, path: &Path, line: usize) -> Result<KinematicFrame> {
    let mut frame = KinematicFrame::zeros();
    let mut n = 0;
    for tok in text.split_whitespace() {
        if n < KINEMATIC_COLUMNS {
            frame.0[n] = tok.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("non-numeric token {tok:?}"),
            })?;
            if !frame.0[n].is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("non-finite value {tok:?}"),
                });
            }
        }
        n += 1;
    }
    if n != KINEMATIC_COLUMNS {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("expected {KINEMATIC_COLUMNS} columns, found {n}"),
        });
    }
    Ok(frame)
}

pub fn parse_kinematics_reader(reader: impl BufRead, path: &Path) -> Result<Vec<KinematicFrame>> {
    let mut frames = Vec::new();
    let mut warned = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_kinematic_line(&line, path, i + 1)?;
        if !warned && !frame.rotations_plausible() {
            log::warn!("{}:{}: rotation block determinant far from 1", path.display(), i + 1);
            warned = true;
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn parse_kinematics(path: impl AsRef<Path>) -> Result<Vec<KinematicFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_kinematics_reader(std::io::BufReader::new(file), path)
}

/// Text form readable by [`parse_kinematics`]; values round-trip exactly.
pub fn format_kinematics(frames: &[KinematicFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        for (i, v) in f.0.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v:e}").expect("writing to String");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("kin.txt")
    }

    #[test]
    fn zero_row_parses() {
        let row = vec!["0"; 76].join(" ");
        let frames = parse_kinematics_reader(row.as_bytes(), p()).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(!frames[0].rotations_plausible());
    }

    #[test]
    fn n_rows_n_frames() {
        let row = vec!["1.5"; 76].join("\t");
        let text = format!("{row}\n{row}\n\n{row}\n");
        assert_eq!(parse_kinematics_reader(text.as_bytes(), p()).unwrap().len(), 3);
    }

    #[test]
    fn short_row_names_row() {
        let good = vec!["0"; 76].join(" ");
        let bad = vec!["0"; 75].join(" ");
        let err = parse_kinematics_reader(format!("{good}\n{bad}\n").as_bytes(), p()).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("75"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn non_numeric_is_parse_error() {
        let mut toks = vec!["0"; 76];
        toks[10] = "abc";
        assert!(matches!(
            parse_kinematics_reader(toks.join(" ").as_bytes(), p()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn subsets() {
        let mut f = KinematicFrame::zeros();
        for (i, v) in f.0.iter_mut().enumerate() {
            *v = i as f64;
        }
        let k38 = select_kinematic_subset(&f, KinematicSubset::K38);
        assert_eq!(k38.len(), 38);
        assert_eq!(k38[0], 38.0);
        let k14 = select_kinematic_subset(&f, KinematicSubset::K14);
        assert_eq!(k14.len(), 14);
        // PSM-L position, velocity, gripper; then PSM-R.
        assert_eq!(
            k14,
            vec![38., 39., 40., 50., 51., 52., 56., 57., 58., 59., 69., 70., 71., 75.]
        );
        let z = select_kinematic_subset(&KinematicFrame::zeros(), KinematicSubset::K14);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positions_in_mm() {
        let mut f = KinematicFrame::zeros();
        f.0[38] = 0.012;
        f.0[59] = -0.5;
        let p = f.psm_positions_mm();
        assert!((p[0] - 12.0).abs() < 1e-12);
        assert!((p[5] + 500.0).abs() < 1e-12);
    }
}
