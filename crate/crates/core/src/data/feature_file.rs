//! Precomputed per-frame feature matrices.
//!
//! Binary layout: 16-byte header (`b"SGFM"`, version, rows, cols as
//! little-endian u32) followed by `rows·cols` little-endian f32 values in
//! row-major order. A plain CSV reader is provided as a fallback.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub const FEATURE_MAGIC: [u8; 4] = *b"SGFM";
pub const FEATURE_VERSION: u32 = 1;

/// Which upstream extractor produced a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Surgical context state vector.
    C,
    VRes,
    VSpatial,
    VSeg,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::C,
        FeatureKind::VRes,
        FeatureKind::VSpatial,
        FeatureKind::VSeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::C => "C",
            FeatureKind::VRes => "V_Res",
            FeatureKind::VSpatial => "V_Spatial",
            FeatureKind::VSeg => "V_Seg",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feature kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub values: Tensor2,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

pub fn encode_feature_matrix(values: &Tensor2) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * values.data().len());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(values.cols() as u32).to_le_bytes());
    for &v in values.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_feature_matrix(bytes: &[u8], path: &Path) -> Result<Tensor2> {
    let bad = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 {
        return Err(bad("truncated feature header".into()));
    }
    if bytes[..4] != FEATURE_MAGIC {
        return Err(bad("not a feature matrix (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(bad(format!("unsupported feature file version {version}")));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(bad(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            rows * cols * 4,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

pub fn write_feature_matrix(path: impl AsRef<Path>, values: &Tensor2) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_feature_matrix(values)).map_err(|e| Error::io(path, e))
}

/// Comma-separated rows; a non-numeric first row is treated as a header.
pub fn read_feature_csv(path: &Path) -> Result<Tensor2> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    Tensor2::from_rows(&rows).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Reads a feature matrix, choosing the CSV reader for `.csv` files.
pub fn read_feature_matrix(path: impl AsRef<Path>, kind: FeatureKind) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let values = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_feature_csv(path)?
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_feature_matrix(&bytes, path)?
    };
    Ok(FeatureMatrix { kind, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_and_header_size() {
        let t = Tensor2::from_rows(&[[1.0, -2.5, 0.125], [3.0, 4.0, 5.0]]).unwrap();
        let bytes = encode_feature_matrix(&t);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(decode_feature_matrix(&bytes, Path::new("x")).unwrap(), t);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let t = Tensor2::from_rows(&[[1.0]]).unwrap();
        let mut bytes = encode_feature_matrix(&t);
        bytes[0] = b'X';
        assert!(decode_feature_matrix(&bytes, Path::new("x")).is_err());
        let bytes = encode_feature_matrix(&t);
        assert!(decode_feature_matrix(&bytes[..18], Path::new("x")).is_err());
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "a,b\n1,2\n3.5,4\n").unwrap();
        let m = read_feature_matrix(&p, FeatureKind::C).unwrap();
        assert_eq!(m.values.data(), &[1.0, 2.0, 3.5, 4.0]);
    }

    #[test]
    fn kind_names() {
        for k in FeatureKind::ALL {
            assert_eq!(k.name().parse::<FeatureKind>().unwrap(), k);
        }
    }
}
