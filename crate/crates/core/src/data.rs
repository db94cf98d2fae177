//! Datasets, responses, CSV ingestion and column standardisation.

use crate::error::{Error, Result};
use crate::linalg::{col, col_mut};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub name: String,
    pub kind: ResponseKind,
    pub values: Vec<f64>,
}

impl Response {
    pub fn new(name: impl Into<String>, kind: ResponseKind, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite response value {v}")));
        }
        match kind {
            ResponseKind::Binary => {
                if let Some(&v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::NonBinaryResponse(v));
                }
                let ones = values.iter().filter(|&&v| v == 1.0).count();
                let zeros = values.len() - ones;
                if ones < 2 || zeros < 2 {
                    return Err(Error::DegenerateResponse(format!(
                        "binary response needs two samples per class, found {zeros} zeros and {ones} ones"
                    )));
                }
            }
            ResponseKind::Continuous => {
                let mut distinct: Vec<f64> = values.clone();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.len() < 3 {
                    return Err(Error::DegenerateResponse(format!(
                        "continuous response needs 3 distinct values, found {}",
                        distinct.len()
                    )));
                }
            }
        }
        Ok(Response { name: name.into(), kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample indices with label 1 (Binary responses).
    pub fn is_case(&self, i: usize) -> bool {
        self.values[i] == 1.0
    }

    /// Restrict to the given sample indices (with repetition).
    pub fn subset(&self, rows: &[usize]) -> Result<Response> {
        Response::new(self.name.clone(), self.kind, rows.iter().map(|&i| self.values[i]).collect())
    }
}

/// `n` samples (rows) by `p` covariates (columns).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub response: Response,
    pub sample_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        matrix: DMatrix<f64>,
        covariate_names: Vec<String>,
        response: Response,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = matrix.shape();
        if n < 4 {
            return Err(Error::InvalidDataset(format!("need at least 4 samples, found {n}")));
        }
        if p < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 covariates, found {p}")));
        }
        if covariate_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: format!("{p} covariate names"),
                found: covariate_names.len().to_string(),
            });
        }
        if response.len() != n || sample_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} samples"),
                found: format!("{} responses, {} sample ids", response.len(), sample_ids.len()),
            });
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate covariate name {name:?}")));
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("matrix contains non-finite values".into()));
        }
        Ok(Dataset { matrix, covariate_names, response, sample_ids })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    /// Rows `rows` (with repetition), ids suffixed to stay unique.
    pub fn resample(&self, rows: &[usize]) -> Result<Dataset> {
        let p = self.p();
        let matrix = DMatrix::from_fn(rows.len(), p, |r, c| self.matrix[(rows[r], c)]);
        let ids = rows.iter().enumerate().map(|(k, &i)| format!("{}#{k}", self.sample_ids[i])).collect();
        Dataset::new(matrix, self.covariate_names.clone(), self.response.subset(rows)?, ids)
    }

    /// Columns `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        let matrix = DMatrix::from_fn(self.n(), cols.len(), |r, c| self.matrix[(r, cols[c])]);
        let names = cols.iter().map(|&j| self.covariate_names[j].clone()).collect();
        Dataset::new(matrix, names, self.response.clone(), self.sample_ids.clone())
    }
}

/// Column-standardised copy of a matrix: mean 0, sd 1 (`n-1` denominator).
#[derive(Debug, Clone)]
pub struct StandardizedMatrix {
    pub values: DMatrix<f64>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

impl StandardizedMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Undo the affine transform.
    pub fn restore(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for j in 0..out.ncols() {
            let (m, s) = (self.column_means[j], self.column_sds[j]);
            col_mut(&mut out, j).iter_mut().for_each(|v| *v = *v * s + m);
        }
        out
    }

    /// Columns `cols` in the given order, still standardised.
    pub fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            col_mut(&mut out, c).copy_from_slice(col(&self.values, j));
        }
        out
    }
}

/// Standardise each column of `m`; `names` label errors.
pub fn standardize_matrix(m: &DMatrix<f64>, names: &[String]) -> Result<StandardizedMatrix> {
    let (n, p) = m.shape();
    if n < 2 {
        return Err(Error::InvalidDataset("cannot standardise fewer than 2 rows".into()));
    }
    let mut values = m.clone();
    let mut column_means = Vec::with_capacity(p);
    let mut column_sds = Vec::with_capacity(p);
    for j in 0..p {
        let c = col_mut(&mut values, j);
        let mean = c.iter().sum::<f64>() / n as f64;
        let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(sd > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{}", j + 1));
            return Err(Error::ConstantColumn(name));
        }
        c.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        column_means.push(mean);
        column_sds.push(sd);
    }
    Ok(StandardizedMatrix { values, column_means, column_sds })
}

pub fn standardize(d: &Dataset) -> Result<StandardizedMatrix> {
    standardize_matrix(&d.matrix, &d.covariate_names)
}

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    /// First column holds sample identifiers.
    pub sample_ids: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { sample_ids: true }
    }
}

fn detect_delimiter(header: &str) -> u8 {
    if header.matches('\t').count() > header.matches(',').count() {
        b'\t'
    } else {
        b','
    }
}

pub fn load_csv(path: &Path, response_column: &str, kind: ResponseKind, opts: CsvOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, response_column, kind, opts)
}

/// Parse delimited text (`,` or tab, detected from the header line).
pub fn parse_csv(text: &str, response_column: &str, kind: ResponseKind, opts: CsvOptions) -> Result<Dataset> {
    let first_line = text.lines().next().ok_or_else(|| Error::Csv("empty file".into()))?;
    let delim = detect_delimiter(first_line);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> =
        reader.headers().map_err(|e| Error::Csv(e.to_string()))?.iter().map(|s| s.trim().to_string()).collect();
    let first_data = usize::from(opts.sample_ids);
    let resp_idx = header
        .iter()
        .enumerate()
        .skip(first_data)
        .find(|(_, h)| h.as_str() == response_column)
        .map(|(i, _)| i)
        .ok_or_else(|| Error::MissingResponseColumn(response_column.to_string()))?;
    let cov_cols: Vec<usize> = (first_data..header.len()).filter(|&i| i != resp_idx).collect();
    let mut ids = Vec::new();
    let mut resp = Vec::new();
    let mut cells: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumericCell {
                row: r + 1,
                col: c + 1,
                value: raw.to_string(),
            })
        };
        ids.push(if opts.sample_ids { rec.get(0).unwrap_or("").trim().to_string() } else { format!("s{}", r + 1) });
        resp.push(parse(resp_idx)?);
        cells.push(cov_cols.iter().map(|&c| parse(c)).collect::<Result<_>>()?);
    }
    let n = cells.len();
    let matrix = DMatrix::from_fn(n, cov_cols.len(), |i, j| cells[i][j]);
    let names = cov_cols.iter().map(|&c| header[c].clone()).collect();
    let response = Response::new(response_column, kind, resp)?;
    Dataset::new(matrix, names, response, ids)
}

/// CSV text: sample id, covariates, then the response column.
pub fn to_csv_string(d: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("sample");
    for name in &d.covariate_names {
        out.push(',');
        out.push_str(name);
    }
    out.push(',');
    out.push_str(&d.response.name);
    out.push('\n');
    for i in 0..d.n() {
        out.push_str(&d.sample_ids[i]);
        for j in 0..d.p() {
            out.push(',');
            out.push_str(&d.matrix[(i, j)].to_string());
        }
        out.push(',');
        out.push_str(&d.response.values[i].to_string());
        out.push('\n');
    }
    out
}

pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(d)).map_err(|e| Error::io(path, e))
}
