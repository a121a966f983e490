//! Synthetic records from bin summaries.
//!
//! Bin `k` yields `c̃_k` records `x̃ = (s_k + ξ) / c̃_k`, `ỹ = (t_k + ζ) / c̃_k`
//! with fresh `ξ ~ N(0, c̃_k Δ_k² / μ_s²)` and `ζ ~ N(0, c̃_k B_y² / μ_t²)`.
//! Summing the records of a bin reproduces the law of the directly privatized
//! sums, so regression on the aggregated synthetic data matches the
//! regression route in distribution. Running both routes on the same data
//! spends the feature and label budgets twice.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::aggregation::PreparedBins;
use crate::error::{Error, Result};
use crate::gdp::{gaussian_noise, GdpBudget, RandomSource};
use crate::region::Region;
use crate::regression::{feature_noise_sd, PrivatizeOptions, PrivatizedSummaries};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub x: Vec<f64>,
    pub y: f64,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    records: Vec<SyntheticRecord>,
    regions: Vec<Region>,
    dim: usize,
}

impl SyntheticDataset {
    pub fn records(&self) -> &[SyntheticRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of bins the records were drawn from.
    pub fn bins(&self) -> usize {
        self.regions.len()
    }

    /// Bin boundaries, indexed by the records' `bin` field.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Records per bin.
    pub fn bin_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.bins()];
        for r in &self.records {
            counts[r.bin] += 1;
        }
        counts
    }

    /// Features as an n×d matrix and labels as a vector.
    pub fn to_matrix(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.len();
        let x = DMatrix::from_fn(n, self.dim, |j, i| self.records[j].x[i]);
        let y = DVector::from_fn(n, |j, _| self.records[j].y);
        (x, y)
    }

    /// Seeded Fisher–Yates shuffle of the record order.
    pub fn shuffle(&mut self, rng: &mut RandomSource) {
        for i in (1..self.records.len()).rev() {
            let j = rng.index(i + 1);
            self.records.swap(i, j);
        }
    }

    /// Clamps features into their bin and labels into `[-bound, bound]`.
    ///
    /// This breaks the distributional match with the regression route.
    pub fn clamp(&mut self, label_bound: f64) {
        for r in &mut self.records {
            let region = &self.regions[r.bin];
            for (i, v) in r.x.iter_mut().enumerate() {
                *v = v.clamp(region.lower()[i], region.upper()[i]);
            }
            r.y = r.y.clamp(-label_bound, label_bound);
        }
    }

    /// Writes `x_1,...,x_d,y[,bin]` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W, include_bin: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        if include_bin {
            header.push("bin".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            row.push(r.y.to_string());
            if include_bin {
                row.push(r.bin.to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads records written by [`write_csv`](Self::write_csv) with the bin
    /// column. Regions are not stored in the file and must be supplied.
    pub fn read_csv<R: Read>(reader: R, regions: Vec<Region>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[header.len() - 1] != "bin" {
            return Err(Error::Load {
                row: 0,
                column: header.len(),
                message: "expected trailing `bin` column".into(),
            });
        }
        let dim = header.len() - 2;
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let cell = |c: usize| -> Result<f64> {
                rec[c].trim().parse::<f64>().map_err(|e| Error::Load {
                    row: row + 1,
                    column: c + 1,
                    message: e.to_string(),
                })
            };
            let x = (0..dim).map(cell).collect::<Result<Vec<_>>>()?;
            let y = cell(dim)?;
            let bin = rec[dim + 1].trim().parse::<usize>().map_err(|e| Error::Load {
                row: row + 1,
                column: dim + 2,
                message: e.to_string(),
            })?;
            if bin >= regions.len() {
                return Err(Error::Load {
                    row: row + 1,
                    column: dim + 2,
                    message: format!("bin {bin} out of range"),
                });
            }
            records.push(SyntheticRecord { x, y, bin });
        }
        Ok(Self {
            records,
            regions,
            dim,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let (row, column) = e
        .position()
        .map(|p| (p.line() as usize, 0))
        .unwrap_or((0, 0));
    Error::Load {
        row,
        column,
        message: e.to_string(),
    }
}

/// Draws `c̃_k` synthetic records per bin, bins in order.
pub fn generate(
    prepared: &PreparedBins,
    mu_s: GdpBudget,
    mu_t: GdpBudget,
    options: PrivatizeOptions,
    rng: &mut RandomSource,
) -> SyntheticDataset {
    let d = prepared.dim();
    let mut records = Vec::new();
    for (k, bin) in prepared.bins().iter().enumerate() {
        let c = bin.noisy_count() as f64;
        let root_c = c.sqrt();
        let sds: Vec<f64> = feature_noise_sd(bin.sensitivity(), mu_s, options)
            .into_iter()
            .map(|sd| sd * root_c)
            .collect();
        let label_sd = options.noise.sd(prepared.label_bound() / mu_t.value()) * root_c;
        for _ in 0..bin.noisy_count() {
            let x = (0..d)
                .map(|i| (bin.feature_sum()[i] + gaussian_noise(sds[i], rng)) / c)
                .collect();
            let y = (bin.label_sum() + gaussian_noise(label_sd, rng)) / c;
            records.push(SyntheticRecord { x, y, bin: k });
        }
    }
    SyntheticDataset {
        records,
        regions: prepared.bins().iter().map(|b| b.region().clone()).collect(),
        dim: d,
    }
}

/// Per-bin sums of the synthetic records: `(Σ x̃, Σ ỹ)` for each bin.
pub fn aggregate(ds: &SyntheticDataset) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(vec![0.0; ds.dim], 0.0); ds.bins()];
    for r in &ds.records {
        let (sx, sy) = &mut out[r.bin];
        for (a, v) in sx.iter_mut().zip(&r.x) {
            *a += v;
        }
        *sy += r.y;
    }
    out
}

/// Rebuilds regression inputs from a synthetic dataset: aggregated sums,
/// weights from the per-bin record counts, and the public noise covariances
/// implied by the bin boundaries and `mu_s`.
pub fn summaries(
    ds: &SyntheticDataset,
    mu_s: GdpBudget,
    options: PrivatizeOptions,
) -> Result<PrivatizedSummaries> {
    let sums = aggregate(ds);
    let counts = ds.bin_counts();
    let k = ds.bins();
    let d = ds.dim;
    let mut s = DMatrix::zeros(k, d);
    let mut t = DVector::zeros(k);
    let mut w = DVector::zeros(k);
    let mut dv = DMatrix::zeros(k, d);
    for b in 0..k {
        if counts[b] == 0 {
            return Err(Error::invalid(format!("bin {b} has no records")));
        }
        let mut sens = crate::aggregation::sensitivity_vector(&ds.regions[b]);
        // an intercept column has unit sensitivity and no region coordinate
        sens.resize(d, 1.0);
        let sds = feature_noise_sd(&sens, mu_s, options);
        for i in 0..d {
            s[(b, i)] = sums[b].0[i];
            dv[(b, i)] = sds[i] * sds[i];
        }
        t[b] = sums[b].1;
        w[b] = 1.0 / counts[b] as f64;
    }
    PrivatizedSummaries::from_parts(s, t, w, dv)
}
