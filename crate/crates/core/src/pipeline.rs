//! The full fit: standardize, optionally filter, estimate the index, fit the
//! link.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, FilterConfig, Standardization, StandardizedDataset};
use crate::error::{Error, Result};
use crate::index::{self, EstimatorOptions, IndexEstimate, Method};
use crate::linalg;
use crate::regression::{self, SvrModel};

/// Default for [`Pipeline::samples_per_dim`].
pub const DEFAULT_SAMPLES_PER_DIM: f64 = 4.0;

/// Fit settings. Unset `level_l` / `scale_j` are chosen from the sample
/// size: see [`auto_level`] and [`regression::recommended_scale_j`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pipeline {
    pub method: Method,
    pub level_l: Option<u32>,
    /// Target slice population, in multiples of `d + 1`, for the automatic
    /// level.
    pub samples_per_dim: f64,
    pub scale_j: Option<u32>,
    /// Assumed smoothness `s` of the link for the automatic scale.
    pub smoothness_s: f64,
    pub scale_b: f64,
    pub degree_m: usize,
    pub standardize: Standardization,
    pub filter: FilterConfig,
    pub estimator: EstimatorOptions,
    /// Restrict the link estimate to `|t| ≤ √(2 d ln n)`.
    pub truncate: bool,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            method: Method::Svr,
            level_l: None,
            samples_per_dim: DEFAULT_SAMPLES_PER_DIM,
            scale_j: None,
            smoothness_s: 1.0,
            scale_b: 1.0,
            degree_m: 1,
            standardize: Standardization::Whiten,
            filter: FilterConfig::default(),
            estimator: EstimatorOptions::default(),
            truncate: false,
        }
    }
}

/// Finest level whose average slice still holds `c·(d + 1)` samples.
pub fn auto_level(n: usize, d: usize, c: f64) -> u32 {
    let per_bin = (c * (d + 1) as f64).max(1.0);
    let ratio = n as f64 / per_bin;
    if ratio < 2.0 {
        0
    } else {
        (ratio.log2().floor() as u32).min(crate::slicing::MAX_LEVEL)
    }
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        if !(self.samples_per_dim > 0.0) {
            return Err(Error::Config("samples_per_dim must be positive".into()));
        }
        if !(0.5..=2.0).contains(&self.smoothness_s) {
            return Err(Error::Config(format!(
                "smoothness_s = {} outside [0.5, 2]",
                self.smoothness_s
            )));
        }
        if !(self.scale_b >= 1.0) {
            return Err(Error::Config("scale_b must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn prepare(&self, ds: &Dataset) -> Result<StandardizedDataset> {
        data::filter_samples(&self.standardize.apply(ds)?, &self.filter)
    }

    pub fn level_for(&self, n: usize, d: usize) -> u32 {
        self.level_l
            .unwrap_or_else(|| auto_level(n, d, self.samples_per_dim))
    }

    pub fn scale_for(&self, n: usize) -> u32 {
        self.scale_j
            .unwrap_or_else(|| regression::recommended_scale_j(n, self.smoothness_s, self.scale_b))
    }

    pub fn estimate_index(&self, sd: &StandardizedDataset) -> Result<IndexEstimate> {
        let level = self.level_for(sd.n(), sd.dim());
        index::estimate(sd, self.method, level, &self.estimator)
    }

    /// Link estimate on a prepared dataset for a given direction.
    pub fn fit_link(&self, sd: &StandardizedDataset, v_hat: &IndexEstimate) -> Result<SvrModel> {
        let interval = self
            .truncate
            .then(|| regression::truncation_interval(sd.n(), sd.dim()));
        let piecewise =
            regression::fit_piecewise(sd, v_hat, self.scale_for(sd.n()), self.degree_m, interval)?;
        Ok(SvrModel::new(sd, piecewise))
    }

    pub fn fit(&self, ds: &Dataset) -> Result<SvrModel> {
        self.validate()?;
        let sd = self.prepare(ds)?;
        let v_hat = self.estimate_index(&sd)?;
        self.fit_link(&sd, &v_hat)
    }
}

impl SvrModel {
    /// The estimated index direction in the original predictor coordinates.
    pub fn original_direction(&self) -> Result<Vec<f64>> {
        let mut v = linalg::normalize(&self.whitener.mul_vec(&self.piecewise.direction.v_hat))
            .ok_or_else(|| {
                Error::NumericalFailure("direction vanished under back-mapping".into())
            })?;
        linalg::canonical_sign(&mut v);
        Ok(v)
    }
}
