//! Datasets, whitening and the bounded-sample filter.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};

/// Default relative eigenvalue floor used when whitening.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// `n` samples of a `d`-dimensional predictor and a scalar response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    /// Row-major `n × d`.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a row-major predictor matrix.
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput(
                "predictor dimension must be at least 1".into(),
            ));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if x.len() != y.len() * d {
            return Err(Error::InvalidInput(format!(
                "{} responses need {} predictor entries, found {}",
                y.len(),
                y.len() * d,
                x.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dataset contains a non-finite value".into(),
            ));
        }
        Ok(Dataset {
            n: y.len(),
            d,
            x,
            y,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged predictor rows".into()));
        }
        Self::new(d, rows.concat(), y)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.d)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset::new(self.d, x, y)
    }

    /// Reads the `x1,...,xd,y` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let table = read_table(reader)?;
        let y = table.y.ok_or_else(|| Error::Parse {
            line: 1,
            message: "last column should be `y`".into(),
        })?;
        Dataset::new(table.d, table.x, y)
    }

    /// Writes the `x1,...,xd,y` CSV layout with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        let mut fields = Vec::with_capacity(self.d + 1);
        for (row, y) in self.rows().zip(&self.y) {
            fields.clear();
            fields.extend(row.iter().map(|v| format!("{v:?}")));
            fields.push(format!("{y:?}"));
            wtr.write_record(&fields)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Predictor rows read from CSV, with the response when present.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub d: usize,
    /// Row-major `n × d`.
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.x.len() / self.d
    }
}

/// Reads `x1,...,xd` with an optional trailing `y` column. Errors carry the
/// 1-based line number of the offending record.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let width = headers.len();
    let has_y = headers.iter().next_back() == Some("y");
    let d = if has_y { width - 1 } else { width };
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs at least one predictor column".into(),
        });
    }
    for (k, name) in headers.iter().take(d).enumerate() {
        let expect = format!("x{}", k + 1);
        if name != expect {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {} should be `{expect}`, found `{name}`", k + 1),
            });
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (k, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("missing value in column {}", k + 1),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{field}`"),
                });
            }
            if k < d {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Table {
        d,
        x,
        y: has_y.then_some(y),
    })
}

/// A dataset in whitened coordinates `z = W (x − mean)`.
///
/// Rows are held in a canonical order (ascending response, ties broken by
/// the predictor row), so every downstream statistic is a deterministic
/// function of the sample set regardless of input row order. `kept[i]` is
/// the row of the original dataset that ended up in position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDataset {
    pub data: Dataset,
    pub mean: Vec<f64>,
    pub whitener: SymMatrix,
    pub kept: Vec<usize>,
}

impl StandardizedDataset {
    /// Wraps a dataset without transforming it (zero mean shift, identity
    /// whitener). Used when standardization is disabled.
    pub fn identity(ds: &Dataset) -> Result<Self> {
        let order = canonical_order(ds);
        Ok(StandardizedDataset {
            data: ds.select(&order)?,
            mean: vec![0.0; ds.dim()],
            whitener: SymMatrix::identity(ds.dim()),
            kept: order,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Maps a point of the original space into whitened coordinates.
    pub fn whiten_point(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.whitener.mul_vec(&centered)
    }

    /// Maps an original-space direction to the corresponding whitened-space
    /// index direction `normalize(W⁻¹ v)`: if `F(x) = f(⟨v, x⟩)` then, in
    /// whitened coordinates, `F` depends on `⟨W⁻¹ v, z⟩` only.
    pub fn whiten_direction(&self, v: &[f64]) -> Result<Vec<f64>> {
        let eig = linalg::sym_eigen(&self.whitener)?;
        let mut inv = SymMatrix::zeros(self.dim());
        for (lambda, u) in eig.values.iter().zip(&eig.vectors) {
            inv.add_outer(u, 1.0 / lambda);
        }
        linalg::normalize(&inv.mul_vec(v))
            .ok_or_else(|| Error::NumericalFailure("direction vanished under whitening".into()))
    }
}

/// Sample filter that keeps only bounded predictors and responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub c_x: f64,
    pub c_y: f64,
    pub enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            c_x: 4.0,
            c_y: 4.0,
            enabled: false,
        }
    }
}

impl FilterConfig {
    pub fn enabled(c_x: f64, c_y: f64) -> Self {
        FilterConfig {
            c_x,
            c_y,
            enabled: true,
        }
    }
}

fn canonical_order(ds: &Dataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.sort_by(|&a, &b| {
        ds.y[a].total_cmp(&ds.y[b]).then_with(|| {
            ds.row(a)
                .iter()
                .zip(ds.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    order
}

/// Sample mean of the rows.
pub fn sample_mean(ds: &Dataset) -> Vec<f64> {
    let mut mean = vec![0.0; ds.dim()];
    for row in ds.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= ds.n() as f64);
    mean
}

/// Biased (`1/n`) sample covariance, two-pass.
pub fn sample_covariance(ds: &Dataset, mean: &[f64]) -> SymMatrix {
    let d = ds.dim();
    let mut acc = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in ds.rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                acc[i * d + j] += ci * centered[j];
            }
        }
    }
    let n = ds.n() as f64;
    SymMatrix::from_upper_fn(d, |i, j| acc[i * d + j] / n)
}

/// Centers and whitens the predictors to zero mean and identity covariance.
///
/// The whitener is the symmetric inverse square root of the biased sample
/// covariance; collinear predictors surface as [`Error::SingularCovariance`].
pub fn standardize(ds: &Dataset, rel_tol: f64) -> Result<StandardizedDataset> {
    if ds.n() <= ds.dim() {
        return Err(Error::InvalidInput(format!(
            "standardization needs more samples ({}) than dimensions ({})",
            ds.n(),
            ds.dim()
        )));
    }
    let order = canonical_order(ds);
    let sorted = ds.select(&order)?;
    let mean = sample_mean(&sorted);
    let cov = sample_covariance(&sorted, &mean);
    let whitener = linalg::inv_sqrt(&cov, rel_tol)?;

    let d = ds.dim();
    let mut z = Vec::with_capacity(sorted.x.len());
    let mut centered = vec![0.0; d];
    for row in sorted.rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        z.extend(whitener.mul_vec(&centered));
    }
    Ok(StandardizedDataset {
        data: Dataset::new(d, z, sorted.y)?,
        mean,
        whitener,
        kept: order,
    })
}

/// How predictors are preprocessed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Standardization {
    /// Zero mean, identity covariance ([`standardize`]).
    #[default]
    Whiten,
    /// Zero mean and unit variance per coordinate; correlations are kept.
    Coordinate,
    /// Used as given.
    None,
}

impl Standardization {
    pub fn apply(self, ds: &Dataset) -> Result<StandardizedDataset> {
        match self {
            Standardization::Whiten => standardize(ds, DEFAULT_REL_TOL),
            Standardization::Coordinate => standardize_coordinates(ds),
            Standardization::None => StandardizedDataset::identity(ds),
        }
    }
}

/// Centers each predictor and scales it to unit sample variance.
pub fn standardize_coordinates(ds: &Dataset) -> Result<StandardizedDataset> {
    let order = canonical_order(ds);
    let sorted = ds.select(&order)?;
    let mean = sample_mean(&sorted);
    let cov = sample_covariance(&sorted, &mean);
    let d = ds.dim();
    let var: Vec<f64> = (0..d).map(|i| cov.get(i, i)).collect();
    let (min, max) = var
        .iter()
        .fold((f64::INFINITY, 0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(min > DEFAULT_REL_TOL * max) {
        return Err(Error::SingularCovariance {
            min,
            max,
            rel_tol: DEFAULT_REL_TOL,
        });
    }
    let inv_sd: Vec<f64> = var.iter().map(|v| 1.0 / v.sqrt()).collect();
    let z = sorted
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&inv_sd)
                .map(|((v, m), s)| (v - m) * s)
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(StandardizedDataset {
        data: Dataset::new(d, z, sorted.y)?,
        mean,
        whitener: SymMatrix::from_upper_fn(d, |i, j| if i == j { inv_sd[i] } else { 0.0 }),
        kept: order,
    })
}

/// Drops samples with `‖z‖ > c_x √d` or `|y − ȳ| > c_y · sd(y)`.
///
/// The predictor threshold is expressed in whitened units, where the
/// per-coordinate scale is one. A disabled config returns the input as is.
pub fn filter_samples(sd: &StandardizedDataset, cfg: &FilterConfig) -> Result<StandardizedDataset> {
    if !cfg.enabled {
        return Ok(sd.clone());
    }
    if !(cfg.c_x > 0.0) || !(cfg.c_y > 0.0) {
        return Err(Error::InvalidInput(
            "filter thresholds must be positive".into(),
        ));
    }
    let ds = &sd.data;
    let (y_mean, y_sd) = mean_sd(ds.y());
    let bound = |c: f64, scale: f64| if c.is_infinite() { c } else { c * scale };
    let x_bound = bound(cfg.c_x, (ds.dim() as f64).sqrt());
    let y_bound = bound(cfg.c_y, y_sd);
    let keep: Vec<usize> = (0..ds.n())
        .filter(|&i| linalg::norm(ds.row(i)) <= x_bound && (ds.y()[i] - y_mean).abs() <= y_bound)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(StandardizedDataset {
        data: ds.select(&keep)?,
        mean: sd.mean.clone(),
        whitener: sd.whitener.clone(),
        kept: keep.iter().map(|&i| sd.kept[i]).collect(),
    })
}

/// Mean and biased standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Expresses a whitened-space index direction in original coordinates,
/// `normalize(W v)`.
pub fn back_map_direction(sd: &StandardizedDataset, v_white: &[f64]) -> Result<Vec<f64>> {
    if v_white.len() != sd.dim() {
        return Err(Error::InvalidInput(format!(
            "direction has length {}, expected {}",
            v_white.len(),
            sd.dim()
        )));
    }
    linalg::normalize(&sd.whitener.mul_vec(v_white))
        .ok_or_else(|| Error::NumericalFailure("direction vanished under back-mapping".into()))
}
