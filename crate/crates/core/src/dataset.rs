//! Assays, responses, standardization and CSV ingestion.
//!
//! Standardization centers each column and divides by its sample standard
//! deviation (divisor `n - 1`). The fitted means and scales are kept so that
//! held-out data can be mapped into the same space and predictions mapped
//! back out of it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{ensure_finite, Error, Result};

/// An `n x p` block of features with the centering/scaling that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AssayMatrix {
    values: Array2<f64>,
    col_means: Array1<f64>,
    col_scales: Array1<f64>,
    standardized: bool,
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 1 {
        Err(Error::EmptyInput { rows, cols })
    } else {
        Ok(())
    }
}

fn mean_and_sd(col: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl AssayMatrix {
    /// Wrap raw values without transforming them.
    pub fn raw(values: Array2<f64>) -> Result<Self> {
        check_shape(values.nrows(), values.ncols())?;
        ensure_finite(values.iter())?;
        let p = values.ncols();
        Ok(AssayMatrix {
            values,
            col_means: Array1::zeros(p),
            col_scales: Array1::ones(p),
            standardized: false,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn col_means(&self) -> ArrayView1<'_, f64> {
        self.col_means.view()
    }

    pub fn col_scales(&self) -> ArrayView1<'_, f64> {
        self.col_scales.view()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Map raw data with the same columns into this matrix's standardized space.
    pub fn transform(&self, raw: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} columns, got {}",
                self.ncols(),
                raw.ncols()
            )));
        }
        ensure_finite(raw.iter())?;
        let mut out = raw.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    /// Undo the stored standardization.
    pub fn destandardize(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }

    /// Rows `idx` as a new raw (unstandardized) matrix in original units.
    pub fn select_rows_raw(&self, idx: &[usize]) -> Array2<f64> {
        self.destandardize().select(Axis(0), idx)
    }
}

/// Center and scale every column to mean 0 and sample variance 1.
pub fn standardize(raw: ArrayView2<'_, f64>) -> Result<AssayMatrix> {
    check_shape(raw.nrows(), raw.ncols())?;
    ensure_finite(raw.iter())?;
    let p = raw.ncols();
    let mut values = raw.to_owned();
    let mut col_means = Array1::zeros(p);
    let mut col_scales = Array1::zeros(p);
    for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
        let (mean, sd) = mean_and_sd(col.view());
        // relative test so that large constant offsets still count as constant
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ConstantColumn(j));
        }
        col.mapv_inplace(|v| (v - mean) / sd);
        col_means[j] = mean;
        col_scales[j] = sd;
    }
    Ok(AssayMatrix {
        values,
        col_means,
        col_scales,
        standardized: true,
    })
}

/// The response vector with its centering/scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    values: Array1<f64>,
    mean: f64,
    scale: f64,
    standardized: bool,
}

impl Response {
    pub fn raw(values: Array1<f64>) -> Result<Self> {
        check_shape(values.len(), 1)?;
        ensure_finite(values.iter())?;
        Ok(Response {
            values,
            mean: 0.0,
            scale: 1.0,
            standardized: false,
        })
    }

    pub fn standardize(raw: ArrayView1<'_, f64>) -> Result<Self> {
        check_shape(raw.len(), 1)?;
        ensure_finite(raw.iter())?;
        let (mean, sd) = mean_and_sd(raw);
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ConstantColumn(0));
        }
        Ok(Response {
            values: raw.mapv(|v| (v - mean) / sd),
            mean,
            scale: sd,
            standardized: true,
        })
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Map values from the standardized space back to response units.
    pub fn inverse_transform(&self, standardized: ArrayView1<'_, f64>) -> Array1<f64> {
        standardized.mapv(|v| v * self.scale + self.mean)
    }

    pub fn transform(&self, raw: ArrayView1<'_, f64>) -> Array1<f64> {
        raw.mapv(|v| (v - self.mean) / self.scale)
    }

    pub fn destandardize(&self) -> Array1<f64> {
        self.inverse_transform(self.values.view())
    }
}

/// An ordered list of assays sharing the same observations.
#[derive(Debug, Clone)]
pub struct MultiAssaySet {
    assays: Vec<AssayMatrix>,
    concatenated: OnceLock<AssayMatrix>,
}

impl MultiAssaySet {
    pub fn new(assays: Vec<AssayMatrix>) -> Result<Self> {
        let first = assays.first().ok_or(Error::EmptyInput { rows: 0, cols: 0 })?;
        let n = first.nrows();
        for (k, a) in assays.iter().enumerate() {
            if a.nrows() != n {
                return Err(Error::RowMismatch {
                    assay: k,
                    expected: n,
                    found: a.nrows(),
                });
            }
        }
        Ok(MultiAssaySet {
            assays,
            concatenated: OnceLock::new(),
        })
    }

    /// Standardize every assay independently.
    pub fn standardized(raw: &[Array2<f64>]) -> Result<Self> {
        let assays = raw
            .iter()
            .map(|a| standardize(a.view()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(assays)
    }

    pub fn assays(&self) -> &[AssayMatrix] {
        &self.assays
    }

    pub fn len(&self) -> usize {
        self.assays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assays.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.assays[0].nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.assays.iter().map(AssayMatrix::ncols).collect()
    }

    /// Column offsets of each assay inside the concatenation, plus the total width.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.assays.len() + 1);
        let mut acc = 0;
        out.push(0);
        for a in &self.assays {
            acc += a.ncols();
            out.push(acc);
        }
        out
    }

    /// Map a concatenated column index to `(assay, column within assay)`.
    pub fn column_origin(&self, j: usize) -> Option<(usize, usize)> {
        let offsets = self.offsets();
        (0..self.assays.len())
            .find(|&k| j >= offsets[k] && j < offsets[k + 1])
            .map(|k| (k, j - offsets[k]))
    }

    /// Column-wise concatenation, built on first access.
    pub fn concatenated(&self) -> &AssayMatrix {
        self.concatenated
            .get_or_init(|| concat(&self.assays).expect("row counts validated in new()"))
    }

    /// Apply each assay's stored standardization to new raw blocks.
    pub fn transform(&self, raw: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        if raw.len() != self.assays.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} assays, got {}",
                self.assays.len(),
                raw.len()
            )));
        }
        self.assays
            .iter()
            .zip(raw)
            .map(|(a, r)| a.transform(r.view()))
            .collect()
    }
}

/// Column-wise concatenation of assays in order.
pub fn concat(assays: &[AssayMatrix]) -> Result<AssayMatrix> {
    let first = assays.first().ok_or(Error::EmptyInput { rows: 0, cols: 0 })?;
    let n = first.nrows();
    for (k, a) in assays.iter().enumerate() {
        if a.nrows() != n {
            return Err(Error::RowMismatch {
                assay: k,
                expected: n,
                found: a.nrows(),
            });
        }
    }
    let views: Vec<_> = assays.iter().map(|a| a.values.view()).collect();
    let values = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    let col_means = ndarray::concatenate(
        Axis(0),
        &assays.iter().map(|a| a.col_means.view()).collect::<Vec<_>>(),
    )
    .expect("1-d concat");
    let col_scales = ndarray::concatenate(
        Axis(0),
        &assays.iter().map(|a| a.col_scales.view()).collect::<Vec<_>>(),
    )
    .expect("1-d concat");
    Ok(AssayMatrix {
        values,
        col_means,
        col_scales,
        standardized: assays.iter().all(|a| a.standardized),
    })
}

/// Split a concatenated block back into per-assay blocks.
pub fn split_columns(x: ArrayView2<'_, f64>, widths: &[usize]) -> Result<Vec<Array2<f64>>> {
    let total: usize = widths.iter().sum();
    if total != x.ncols() {
        return Err(Error::BoundaryMismatch {
            declared: total,
            available: x.ncols(),
        });
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &w in widths {
        out.push(x.slice(s![.., start..start + w]).to_owned());
        start += w;
    }
    Ok(out)
}

/// Which column of a CSV file holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    /// 0-based column index.
    Index(usize),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

/// Raw (unstandardized) contents of a CSV file: features split into assays.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub assays: Vec<Array2<f64>>,
    pub response: Array1<f64>,
}

/// Read a numeric CSV and partition its feature columns into assays.
///
/// Feature columns are every column except the response, in file order.
/// Nothing is standardized here.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    response_column: &ColumnRef,
    assay_boundaries: &[usize],
) -> Result<(MultiAssaySet, Response)> {
    let table = read_csv_table(path, has_header, response_column, assay_boundaries)?;
    let assays = table
        .assays
        .into_iter()
        .map(AssayMatrix::raw)
        .collect::<Result<Vec<_>>>()?;
    Ok((MultiAssaySet::new(assays)?, Response::raw(table.response)?))
}

/// Like [`load_csv`] but returns plain arrays.
pub fn read_csv_table(
    path: impl AsRef<Path>,
    has_header: bool,
    response_column: &ColumnRef,
    assay_boundaries: &[usize],
) -> Result<RawTable> {
    let path = path.as_ref();
    let (header, rows) = read_rows(path, has_header)?;
    let ncols = rows
        .first()
        .map(Vec::len)
        .or_else(|| header.as_ref().map(Vec::len))
        .unwrap_or(0);

    let response_idx = match response_column {
        ColumnRef::Index(i) if *i < ncols => *i,
        ColumnRef::Index(i) => return Err(Error::MissingResponse(i.to_string())),
        ColumnRef::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::MissingResponse(name.clone()))?,
    };

    let declared: usize = assay_boundaries.iter().sum();
    let available = ncols.saturating_sub(1);
    if declared != available || assay_boundaries.contains(&0) {
        return Err(Error::BoundaryMismatch {
            declared,
            available,
        });
    }

    let n = rows.len();
    let mut features = Array2::zeros((n, available));
    let mut response = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut f = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == response_idx {
                response[i] = v;
            } else {
                features[[i, f]] = v;
                f += 1;
            }
        }
    }
    Ok(RawTable {
        assays: split_columns(features.view(), assay_boundaries)?,
        response,
    })
}

type Rows = (Option<Vec<String>>, Vec<Vec<f64>>);

fn read_rows(path: &Path, has_header: bool) -> Result<Rows> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut header: Option<Vec<String>> = None;
    if has_header {
        let h = reader
            .headers()
            .map_err(|e| csv_to_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        header = Some(h);
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_to_error(path, e))?;
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: r + 1,
                col: c + 1,
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Read a numeric CSV as a feature matrix, dropping the column named `drop`
/// if the header has one.
pub fn read_feature_csv(path: impl AsRef<Path>, has_header: bool, drop: Option<&str>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let (header, rows) = read_rows(path, has_header)?;
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    let skip = header
        .as_ref()
        .and_then(|h| drop.and_then(|name| h.iter().position(|c| c == name)));
    let keep: Vec<usize> = (0..ncols).filter(|j| Some(*j) != skip).collect();
    let mut out = Array2::zeros((rows.len(), keep.len()));
    for (i, row) in rows.iter().enumerate() {
        for (f, &j) in keep.iter().enumerate() {
            out[[i, f]] = row[j];
        }
    }
    Ok(out)
}

fn csv_to_error(path: &Path, e: csv::Error) -> Error {
    let pos = e.position().map(|p| p.record() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            row: pos.unwrap_or(0),
            col: (expected_len.min(len) + 1) as usize,
        },
        other => Error::Serialization(format!("{other:?}")),
    }
}

/// Write assays and response as a CSV with header `a1_f1,...,aK_fP,y`.
pub fn write_csv(path: impl AsRef<Path>, assays: &[ArrayView2<'_, f64>], response: ArrayView1<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut names = Vec::new();
    for (k, a) in assays.iter().enumerate() {
        for j in 0..a.ncols() {
            names.push(format!("a{}_f{}", k + 1, j + 1));
        }
    }
    names.push("y".to_string());
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", names.join(",")).map_err(io)?;
    for i in 0..response.len() {
        let mut line = String::new();
        for a in assays {
            for v in a.row(i) {
                line.push_str(&v.to_string());
                line.push(',');
            }
        }
        line.push_str(&response[i].to_string());
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
