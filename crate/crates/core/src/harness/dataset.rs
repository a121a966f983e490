use std::fs::File;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::region::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipPolicy {
    /// Out-of-bound values are moved to the nearest bound.
    #[default]
    Clip,
    /// Rows with any out-of-bound value are dropped.
    Reject,
}

/// A comma-separated file with a header row. Every column except the label
/// is a feature, in header order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label_column: String,
    pub feature_bounds: Vec<(f64, f64)>,
    pub label_bounds: (f64, f64),
    pub clip: ClipPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
    /// Rows with at least one clipped value.
    pub clipped_rows: usize,
    pub rejected_rows: usize,
}

impl DatasetSpec {
    pub fn domain(&self) -> Result<Region> {
        Region::from_bounds(&self.feature_bounds)
    }

    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if self.feature_bounds.is_empty() || !self.feature_bounds.iter().copied().all(ok) {
            return Err(Error::invalid("feature bounds must be finite, non-empty intervals"));
        }
        if !ok(self.label_bounds) {
            return Err(Error::invalid("label bounds must be a finite, non-empty interval"));
        }
        Ok(())
    }
}

fn load_err(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Load {
        row,
        column,
        message: message.into(),
    }
}

/// Reads and bounds a dataset. Rows and columns in errors are 1-based, with
/// the header as row 0.
pub fn load_dataset(spec: &DatasetSpec) -> Result<LoadedDataset> {
    spec.validate()?;
    let file = File::open(&spec.path)
        .map_err(|e| Error::Io(format!("{}: {e}", spec.path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| load_err(0, 0, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(load_err(0, 0, "empty file"));
    }
    let label_idx = header
        .iter()
        .position(|h| h.trim() == spec.label_column)
        .ok_or_else(|| load_err(0, 0, format!("no column named `{}`", spec.label_column)))?;
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    if feature_idx.len() != spec.feature_bounds.len() {
        return Err(load_err(
            0,
            0,
            format!(
                "{} feature columns but {} feature bounds",
                feature_idx.len(),
                spec.feature_bounds.len()
            ),
        ));
    }
    let d = feature_idx.len();
    let (ylo, yhi) = spec.label_bounds;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut clipped_rows = 0;
    let mut rejected_rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| load_err(row, 0, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(load_err(
                row,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let cell = |c: usize| -> Result<f64> {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| load_err(row, c + 1, format!("not a number: `{}`", &rec[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(load_err(row, c + 1, "non-finite value"))
            }
        };
        let mut x = Vec::with_capacity(d);
        for &c in &feature_idx {
            x.push(cell(c)?);
        }
        let mut y = cell(label_idx)?;
        let outside = x
            .iter()
            .zip(&spec.feature_bounds)
            .any(|(v, (lo, hi))| v < lo || v > hi)
            || y < ylo
            || y > yhi;
        if outside {
            match spec.clip {
                ClipPolicy::Reject => {
                    rejected_rows += 1;
                    continue;
                }
                ClipPolicy::Clip => {
                    clipped_rows += 1;
                    for (v, (lo, hi)) in x.iter_mut().zip(&spec.feature_bounds) {
                        *v = v.clamp(*lo, *hi);
                    }
                    y = y.clamp(ylo, yhi);
                }
            }
        }
        xs.extend(x);
        ys.push(y);
    }
    if ys.is_empty() {
        return Err(load_err(1, 0, "no data rows"));
    }
    Ok(LoadedDataset {
        x: DMatrix::from_row_slice(ys.len(), d, &xs),
        y: DVector::from_vec(ys),
        feature_names: feature_idx.iter().map(|&c| header[c].trim().to_string()).collect(),
        clipped_rows,
        rejected_rows,
    })
}
