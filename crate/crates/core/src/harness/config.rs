use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Standardization;
use crate::error::{Error, Result};
use crate::index::{EstimatorOptions, Method};
use crate::pipeline::Pipeline;
use crate::synthetic::{DistKind, DistributionSpec, FunctionKind, FunctionSpec};

/// Methods a benchmark can compare. In regression benchmarks the index
/// methods name the estimator feeding the link fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Sir,
    Save,
    Svr,
    Knn,
}

impl BenchMethod {
    pub fn index_method(self) -> Option<Method> {
        match self {
            BenchMethod::Sir => Some(Method::Sir),
            BenchMethod::Save => Some(Method::Save),
            BenchMethod::Svr => Some(Method::Svr),
            BenchMethod::Knn => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::Sir => "sir",
            BenchMethod::Save => "save",
            BenchMethod::Svr => "svr",
            BenchMethod::Knn => "knn",
        }
    }
}

/// What a rate sweep measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    IndexError,
    RegressionMse,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Grid and protocol of a Monte Carlo experiment.
///
/// Empty `l_grid` / `j_grid` select the level and scale automatically per
/// cell. Every field has a default, so config files only list overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub settings: Vec<DistKind>,
    /// Dimensions for Gaussian predictors; the planar settings ignore it.
    pub d_grid: Vec<usize>,
    pub functions: Vec<FunctionSpec>,
    /// Noise levels as fractions of `|f(−4) − f(4)|`.
    pub noise: Vec<f64>,
    pub methods: Vec<BenchMethod>,
    pub n_grid: Vec<usize>,
    pub l_grid: Vec<u32>,
    pub j_grid: Vec<u32>,
    pub degree_m: usize,
    pub replicates: usize,
    /// Fraction trimmed from each tail before averaging replicates.
    pub trim: f64,
    pub base_seed: u64,
    /// Size of the fresh test sample for MSE estimates.
    pub test_n: usize,
    /// Measure MSE against the noiseless regression function.
    pub denoised: bool,
    pub target: Target,
    pub standardize: Standardization,
    /// Automatic level: finest with about `samples_per_dim·(d + 1)` samples
    /// per slice on average.
    pub samples_per_dim: f64,
    /// Also cap the automatic level so slices stay wider than twice the
    /// noise level, `|f(−4) − f(4)|·2^{−l} ≥ 2σ`.
    pub noise_level_rule: bool,
    pub smoothness_s: f64,
    pub scale_b: f64,
    pub truncate: bool,
    pub estimator: EstimatorOptions,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            settings: vec![DistKind::Gaussian],
            d_grid: vec![10],
            functions: vec![FunctionSpec::new(FunctionKind::F1)],
            noise: vec![0.01],
            methods: vec![BenchMethod::Svr],
            n_grid: vec![1000],
            l_grid: Vec::new(),
            j_grid: Vec::new(),
            degree_m: 1,
            replicates: 10,
            trim: 0.0,
            base_seed: 0,
            test_n: 10_000,
            denoised: false,
            target: Target::IndexError,
            standardize: Standardization::Whiten,
            samples_per_dim: crate::pipeline::DEFAULT_SAMPLES_PER_DIM,
            noise_level_rule: false,
            smoothness_s: 1.0,
            scale_b: 1.0,
            truncate: false,
            estimator: EstimatorOptions::default(),
            threads: None,
            output: OutputPaths::default(),
        }
    }
}

/// Reads a TOML or JSON file, chosen by extension (`.json` is JSON,
/// anything else TOML).
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
        _ => toml::from_str(&text).map_err(|e| e.to_string()),
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn geometric_grid(start: usize, factor: f64, points: usize) -> Vec<usize> {
    (0..points)
        .map(|k| (start as f64 * factor.powi(k as i32)).round() as usize)
        .collect()
}

impl ExperimentConfig {
    /// SIR, SAVE and SVR on the two planar settings, `n = 1000`, 100
    /// replicates. Predictors are used as drawn (already normalized with
    /// population moments), and slices are as fine as about `d + 1` samples
    /// allow.
    pub fn planar() -> Self {
        ExperimentConfig {
            settings: vec![DistKind::S1, DistKind::S2],
            functions: vec![
                FunctionSpec::new(FunctionKind::F1),
                FunctionSpec::new(FunctionKind::F2),
            ],
            noise: vec![0.0, 0.01, 0.02],
            methods: vec![BenchMethod::Sir, BenchMethod::Save, BenchMethod::Svr],
            n_grid: vec![1000],
            replicates: 100,
            base_seed: 2024,
            standardize: Standardization::None,
            samples_per_dim: 1.0,
            ..Self::default()
        }
    }

    /// SVR index error against `n` for `d = 10`, F2, 1% noise.
    pub fn index_rate() -> Self {
        ExperimentConfig {
            functions: vec![FunctionSpec::new(FunctionKind::F2)],
            n_grid: geometric_grid(2500, 2.0, 5),
            base_seed: 505,
            samples_per_dim: 1.0,
            noise_level_rule: true,
            ..Self::default()
        }
    }

    /// De-noised regression MSE against `n` for F3 at 5% noise, with the
    /// truncated link estimate and the automatic scale.
    pub fn regression_rate() -> Self {
        ExperimentConfig {
            d_grid: vec![5, 10],
            functions: vec![FunctionSpec::f3(1)],
            noise: vec![0.05],
            n_grid: geometric_grid(1000, 2f64.sqrt(), 9),
            base_seed: 606,
            denoised: true,
            target: Target::RegressionMse,
            samples_per_dim: 1.0,
            noise_level_rule: true,
            smoothness_s: 0.5,
            truncate: true,
            ..Self::default()
        }
    }

    /// De-noised MSE over an `(l, j)` grid for `d = 10`, F2, 1% noise, 50
    /// replicates with 10% trimming.
    pub fn heatmap() -> Self {
        ExperimentConfig {
            functions: vec![FunctionSpec::new(FunctionKind::F2)],
            n_grid: vec![1000, 4000, 16_000],
            l_grid: (1..=8).collect(),
            j_grid: (0..=10).collect(),
            replicates: 50,
            trim: 0.1,
            base_seed: 707,
            denoised: true,
            target: Target::RegressionMse,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "planar" => Ok(Self::planar()),
            "index-rate" => Ok(Self::index_rate()),
            "regression-rate" => Ok(Self::regression_rate()),
            "heatmap" => Ok(Self::heatmap()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected planar, index-rate, regression-rate or heatmap)"
            ))),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        read_config(path)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// The planar settings are always two-dimensional.
    pub fn distributions(&self) -> Vec<DistributionSpec> {
        let mut out = Vec::new();
        for &kind in &self.settings {
            match kind {
                DistKind::Gaussian => {
                    out.extend(self.d_grid.iter().map(|&d| DistributionSpec::gaussian(d)))
                }
                DistKind::S1 => out.push(DistributionSpec::s1()),
                DistKind::S2 => out.push(DistributionSpec::s2()),
            }
        }
        out
    }

    /// Pipeline settings for a cell at the given level and scale.
    pub fn pipeline(&self, method: Method, level_l: u32, scale_j: Option<u32>) -> Pipeline {
        Pipeline {
            method,
            level_l: Some(level_l),
            samples_per_dim: self.samples_per_dim,
            scale_j,
            smoothness_s: self.smoothness_s,
            scale_b: self.scale_b,
            degree_m: self.degree_m,
            standardize: self.standardize,
            estimator: self.estimator,
            truncate: self.truncate,
            ..Pipeline::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must not be empty")))
            }
        };
        nonempty(!self.settings.is_empty(), "settings")?;
        nonempty(!self.functions.is_empty(), "functions")?;
        nonempty(!self.noise.is_empty(), "noise")?;
        nonempty(!self.methods.is_empty(), "methods")?;
        nonempty(!self.n_grid.is_empty(), "n_grid")?;
        if self.settings.contains(&DistKind::Gaussian) {
            nonempty(!self.d_grid.is_empty(), "d_grid")?;
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be ≥ 1".into()));
        }
        if !(0.0..=0.45).contains(&self.trim) {
            return Err(Error::Config(format!(
                "trim = {} outside [0, 0.45]",
                self.trim
            )));
        }
        if self.noise.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Config("noise levels must be finite and ≥ 0".into()));
        }
        if self.test_n == 0 {
            return Err(Error::Config("test_n must be ≥ 1".into()));
        }
        for dist in self.distributions() {
            dist.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for f in &self.functions {
            f.build().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(0) = self.threads {
            return Err(Error::Config("threads must be ≥ 1".into()));
        }
        self.pipeline(Method::Svr, 0, None).validate()
    }
}
