//! Dataset files: IDX (FashionMNIST), the FPEE labelled-embedding format, and CSV.
//!
//! FPEE layout, little-endian throughout:
//!
//! ```text
//! "FPEE" | u16 version = 1 | u32 n | u32 d | u32 C | n·d f32 (row-major) | n u32 labels
//! ```
//!
//! Features are stored as f32 and promoted to f64 on load.

use std::fs;
use std::path::Path;

use crate::error::{FpeError, Result};
use crate::math::Matrix;

pub const FPEE_MAGIC: &[u8; 4] = b"FPEE";
pub const FPEE_VERSION: u16 = 1;
const FPEE_HEADER: usize = 4 + 2 + 4 * 3;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrixDataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub class_count: usize,
    pub source: String,
}

pub type Dataset = LabeledMatrixDataset;

impl LabeledMatrixDataset {
    pub fn new(x: Matrix, y: Vec<usize>, class_count: usize, source: impl Into<String>) -> Result<Self> {
        let ds = LabeledMatrixDataset {
            x,
            y,
            class_count,
            source: source.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(FpeError::shape(format!(
                "{} rows but {} labels",
                self.x.rows(),
                self.y.len()
            )));
        }
        if let Some(bad) = self.y.iter().find(|&&c| c >= self.class_count) {
            return Err(FpeError::input(format!(
                "label {bad} out of range for {} classes",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// First `n` rows (all rows when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        LabeledMatrixDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            class_count: self.class_count,
            source: self.source.clone(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| FpeError::format(at as u64, format!("truncated header: missing {what}")))
}

/// Parses an IDX image file into `(n, rows·cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(FpeError::format(0, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let expected = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| FpeError::format(4, "image dimensions overflow"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(FpeError::format(
            16 + body.len().min(expected) as u64,
            format!("header promises {expected} pixel bytes, file holds {}", body.len()),
        ));
    }
    Ok((n, rows * cols, body))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(FpeError::format(0, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(FpeError::format(
            8 + body.len().min(n) as u64,
            format!("header promises {n} labels, file holds {}", body.len()),
        ));
    }
    Ok(body)
}

/// Loads an IDX image/label pair; pixels are scaled to `[0, 1]` by `/255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledMatrixDataset> {
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;
    idx_from_bytes(&images, &labels, &images_path.as_ref().display().to_string())
}

pub fn idx_from_bytes(images: &[u8], labels: &[u8], source: &str) -> Result<LabeledMatrixDataset> {
    let (n, d, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(FpeError::format(
            4,
            format!("{n} images but {} labels", labels.len()),
        ));
    }
    let x = Matrix::from_vec(n, d, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let y: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let class_count = y.iter().max().map_or(0, |&m| m + 1).max(10);
    LabeledMatrixDataset::new(x, y, class_count, format!("idx:{source}"))
}

/// Encodes images (`n` rows of `rows·cols` bytes) and labels as an IDX pair.
pub fn encode_idx(pixels: &[u8], rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let n = labels.len();
    assert_eq!(pixels.len(), n * rows * cols, "pixel count");
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

pub fn encode_fpee(ds: &LabeledMatrixDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let (n, d) = ds.x.shape();
    let mut out = Vec::with_capacity(FPEE_HEADER + 4 * n * (d + 1));
    out.extend_from_slice(FPEE_MAGIC);
    out.extend_from_slice(&FPEE_VERSION.to_le_bytes());
    for v in [n, d, ds.class_count] {
        let v = u32::try_from(v).map_err(|_| FpeError::input("dataset too large for FPEE"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in ds.x.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &c in &ds.y {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fpee(bytes: &[u8], source: &str) -> Result<LabeledMatrixDataset> {
    if bytes.len() < FPEE_HEADER {
        return Err(FpeError::format(bytes.len() as u64, "truncated FPEE header"));
    }
    if &bytes[..4] != FPEE_MAGIC {
        return Err(FpeError::format(0, "bad FPEE magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FPEE_VERSION {
        return Err(FpeError::format(4, format!("unsupported FPEE version {version}")));
    }
    let le = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (n, d, classes) = (le(6), le(10), le(14));
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(FPEE_HEADER))
        .ok_or_else(|| FpeError::format(6, "FPEE dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(FpeError::format(
            bytes.len().min(expected) as u64,
            format!("header promises {expected} bytes, file holds {}", bytes.len()),
        ));
    }
    let feats = &bytes[FPEE_HEADER..FPEE_HEADER + 4 * n * d];
    let x: Vec<f64> = feats
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let label_at = FPEE_HEADER + 4 * n * d;
    let mut y = Vec::with_capacity(n);
    for (i, c) in bytes[label_at..].chunks_exact(4).enumerate() {
        let label = u32::from_le_bytes(c.try_into().unwrap()) as usize;
        if label >= classes {
            return Err(FpeError::format(
                (label_at + 4 * i) as u64,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        y.push(label);
    }
    LabeledMatrixDataset::new(Matrix::from_vec(n, d, x)?, y, classes, format!("fpee:{source}"))
}

pub fn save_fpee(ds: &LabeledMatrixDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_fpee(ds)?)?;
    Ok(())
}

pub fn load_fpee(path: impl AsRef<Path>) -> Result<LabeledMatrixDataset> {
    let path = path.as_ref();
    decode_fpee(&fs::read(path)?, &path.display().to_string())
}

/// Reads a CSV with header `label,f0,f1,...`. Features are rounded through f32 so a CSV
/// and the equivalent FPEE file load to the same dataset. The class count defaults to
/// one more than the largest label.
pub fn load_csv(path: impl AsRef<Path>, class_count: Option<usize>) -> Result<LabeledMatrixDataset> {
    let path = path.as_ref();
    let fmt = |e: csv::Error| {
        let offset = e.position().map_or(0, |p| p.byte());
        FpeError::format(offset, e.to_string())
    };
    let mut reader = csv::Reader::from_path(path).map_err(fmt)?;
    let headers = reader.headers().map_err(fmt)?.clone();
    if headers.get(0) != Some("label") {
        return Err(FpeError::format(0, "CSV header must start with `label`"));
    }
    let d = headers.len() - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(fmt)?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |what: &str| FpeError::format(offset, format!("unparsable {what}"));
        y.push(record[0].trim().parse::<usize>().map_err(|_| bad("label"))?);
        for field in record.iter().skip(1) {
            let v: f32 = field.trim().parse().map_err(|_| bad("feature"))?;
            x.push(f64::from(v));
        }
    }
    let n = y.len();
    let classes = class_count.unwrap_or_else(|| y.iter().max().map_or(0, |&m| m + 1));
    LabeledMatrixDataset::new(
        Matrix::from_vec(n, d, x)?,
        y,
        classes,
        format!("csv:{}", path.display()),
    )
}

pub fn save_csv(ds: &LabeledMatrixDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FpeError::Io(e.into()))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| FpeError::Io(e.into()))?;
    for r in 0..ds.len() {
        let mut rec = vec![ds.y[r].to_string()];
        rec.extend(ds.x.row(r).iter().map(|&v| (v as f32).to_string()));
        w.write_record(&rec).map_err(|e| FpeError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
