//! On-disk formats for feature/logit bundles.
//!
//! Matrix files carry magic `CALB`, u32 version, u64 rows, u64 cols, then
//! row-major little-endian f32. Label files carry magic `CALL`, u32 version,
//! u64 length, then little-endian u32. A split is described by a JSON
//! manifest with `features`, `logits`, `labels` paths (relative to the
//! manifest) and an optional `class_counts` cross-check.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledEmbeddingSet;
use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"CALB";
const LABELS_MAGIC: &[u8; 4] = b"CALL";
const FORMAT_VERSION: u32 = 1;

/// Payload encoding for the files a manifest points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(FileFormat::Binary),
            "csv" => Ok(FileFormat::Csv),
            other => Err(Error::InvalidParam(format!(
                "unknown format {other:?}, expected binary or csv"
            ))),
        }
    }
}

/// JSON manifest describing one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub features: PathBuf,
    pub logits: PathBuf,
    pub labels: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<Vec<u64>>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Write a matrix in the binary format.
pub fn write_matrix(path: &Path, matrix: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for row in matrix.outer_iter() {
        for &v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix in the binary format.
pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(format_err(path, "bad magic, expected CALB"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf) as usize;

    let mut data = vec![0f32; rows * cols];
    let mut f32buf = [0u8; 4];
    for v in data.iter_mut() {
        r.read_exact(&mut f32buf)?;
        *v = f32::from_le_bytes(f32buf);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| format_err(path, format!("shape error: {e}")))
}

/// Write labels in the binary format.
pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(LABELS_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(labels.len() as u64).to_le_bytes())?;
    for &v in labels {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read labels in the binary format.
pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != LABELS_MAGIC {
        return Err(format_err(path, "bad magic, expected CALL"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let len = u64::from_le_bytes(u64buf) as usize;
    let mut labels = vec![0u32; len];
    for v in labels.iter_mut() {
        r.read_exact(&mut u32buf)?;
        *v = u32::from_le_bytes(u32buf);
    }
    Ok(labels)
}

/// Write a matrix as headerless CSV, one numeric row per line.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in matrix.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a headerless CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f32>> {
    let text = std::fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f32>, _> =
            line.split(',').map(|s| s.trim().parse::<f32>()).collect();
        let row = row.map_err(|e| format_err(path, format!("line {}: {e}", lineno + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(format_err(
                    path,
                    format!("line {}: expected {c} columns, got {}", lineno + 1, row.len()),
                ));
            }
            _ => {}
        }
        data.extend(row);
    }
    let cols = cols.ok_or_else(|| format_err(path, "empty file"))?;
    let rows = data.len() / cols;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| format_err(path, format!("shape error: {e}")))
}

/// Write labels as one integer per line.
pub fn write_labels_csv(path: &Path, labels: &[u32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &v in labels {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read one-integer-per-line labels.
pub fn read_labels_csv(path: &Path) -> Result<Vec<u32>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: u32 = line
            .trim()
            .parse()
            .map_err(|e| format_err(path, format!("line {}: {e}", lineno + 1)))?;
        labels.push(v);
    }
    Ok(labels)
}

/// Load a split from its manifest. Referenced paths are resolved relative
/// to the manifest's directory; the result is validated on construction.
pub fn load_set(manifest_path: &Path, format: FileFormat) -> Result<LabeledEmbeddingSet> {
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(manifest_path.to_path_buf()));
    }
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let features_path = base.join(&manifest.features);
    let logits_path = base.join(&manifest.logits);
    let labels_path = base.join(&manifest.labels);

    let (features, logits, labels) = match format {
        FileFormat::Binary => (
            read_matrix(&features_path)?,
            read_matrix(&logits_path)?,
            read_labels(&labels_path)?,
        ),
        FileFormat::Csv => (
            read_matrix_csv(&features_path)?,
            read_matrix_csv(&logits_path)?,
            read_labels_csv(&labels_path)?,
        ),
    };

    let set = LabeledEmbeddingSet::new(features, logits, labels)?;
    if let Some(expected) = &manifest.class_counts {
        if expected != set.class_counts() {
            return Err(format_err(
                manifest_path,
                format!(
                    "manifest class_counts {:?} disagree with labels {:?}",
                    expected,
                    set.class_counts()
                ),
            ));
        }
    }
    Ok(set)
}

/// Write a split (payload files plus manifest) into `dir`, returning the
/// manifest path. File names are fixed so reruns overwrite in place.
pub fn save_set(dir: &Path, set: &LabeledEmbeddingSet, format: FileFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (fname, lname, yname) = match format {
        FileFormat::Binary => ("features.bin", "logits.bin", "labels.bin"),
        FileFormat::Csv => ("features.csv", "logits.csv", "labels.csv"),
    };
    match format {
        FileFormat::Binary => {
            write_matrix(&dir.join(fname), set.features())?;
            write_matrix(&dir.join(lname), set.logits())?;
            write_labels(&dir.join(yname), set.labels())?;
        }
        FileFormat::Csv => {
            write_matrix_csv(&dir.join(fname), set.features())?;
            write_matrix_csv(&dir.join(lname), set.logits())?;
            write_labels_csv(&dir.join(yname), set.labels())?;
        }
    }
    let manifest = Manifest {
        features: PathBuf::from(fname),
        logits: PathBuf::from(lname),
        labels: PathBuf::from(yname),
        class_counts: Some(set.class_counts().to_vec()),
    };
    let manifest_path = dir.join("manifest.json");
    let mut w = BufWriter::new(File::create(&manifest_path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest_path)
}
