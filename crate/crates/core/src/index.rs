//! Conditional estimators of the index vector: SIR, SAVE and SVR.
//!
//! All three slice the response range and turn per-slice predictor moments
//! into a symmetric `d × d` matrix whose top eigenvector estimates the index
//! direction:
//!
//! * SIR weights the outer products of slice means,
//! * SAVE averages `(I − Σ_h)²` over slice covariances `Σ_h`,
//! * SVR takes, on each well-populated slice, the direction of *smallest*
//!   variance and averages the projectors onto those local directions.
//!
//! Estimates live in whatever coordinates the [`SlicedStats`] were built
//! in, normally the whitened ones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::StandardizedDataset;
use crate::error::{Error, Result, Warning};
use crate::linalg::{self, SymMatrix};
use crate::slicing::{self, AdmissibleSet, LocalMatrix, SlicedStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sir,
    Save,
    Svr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sir, Method::Save, Method::Svr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sir => "sir",
            Method::Save => "save",
            Method::Svr => "svr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Method::Sir),
            "save" => Ok(Method::Save),
            "svr" => Ok(Method::Svr),
            other => Err(Error::InvalidInput(format!(
                "unknown index method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Gap between the two largest eigenvalues of the final matrix.
    pub eigengap: f64,
    /// Bins that entered the final matrix.
    pub bins_used: usize,
    pub warnings: Vec<Warning>,
}

impl Diagnostics {
    pub fn is_degenerate(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, Warning::DegenerateSpectrum { .. }))
    }
}

/// A unit index direction in canonical sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub v_hat: Vec<f64>,
    pub method: Method,
    pub level_l: u32,
    pub diagnostics: Diagnostics,
}

impl IndexEstimate {
    /// A known direction, e.g. the ground truth in an oracle fit.
    pub fn fixed(v: &[f64], method: Method, level_l: u32) -> Result<Self> {
        let mut v_hat = linalg::normalize(v)
            .ok_or_else(|| Error::InvalidInput("direction must be nonzero".into()))?;
        linalg::canonical_sign(&mut v_hat);
        Ok(IndexEstimate {
            v_hat,
            method,
            level_l,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Smallest-variance direction of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDirection {
    pub bin_h: usize,
    pub v_local: Vec<f64>,
    pub weight: usize,
}

fn top_direction(
    m: &SymMatrix,
    method: Method,
    level: u32,
    bins_used: usize,
) -> Result<IndexEstimate> {
    let top = linalg::largest_eigenvector(m)?;
    Ok(IndexEstimate {
        v_hat: top.vector,
        method,
        level_l: level,
        diagnostics: Diagnostics {
            eigengap: top.gap,
            bins_used,
            warnings: top.warning.into_iter().collect(),
        },
    })
}

fn nonempty_or_err(stats: &SlicedStats) -> Result<Vec<usize>> {
    let bins: Vec<usize> = stats.nonempty_bins().collect();
    if bins.is_empty() {
        return Err(Error::NoAdmissibleBins {
            level: stats.level(),
        });
    }
    Ok(bins)
}

/// SIR over all nonempty slices.
pub fn sir(stats: &SlicedStats, n: usize) -> Result<IndexEstimate> {
    let bins = nonempty_or_err(stats)?;
    sir_on(stats, n, &bins)
}

/// SIR restricted to `bins`: top eigenvector of `Σ_h μ_h μ_hᵀ #C_h / n`.
pub fn sir_on(stats: &SlicedStats, n: usize, bins: &[usize]) -> Result<IndexEstimate> {
    let mut m = SymMatrix::zeros(stats.dim());
    for &h in bins {
        m.add_outer(&stats.means[h], stats.counts[h] as f64 / n as f64);
    }
    top_direction(&m, Method::Sir, stats.level(), bins.len())
}

/// SAVE over all nonempty slices.
pub fn save(stats: &SlicedStats, n: usize) -> Result<IndexEstimate> {
    let bins = nonempty_or_err(stats)?;
    save_on(stats, n, &bins)
}

/// SAVE restricted to `bins`: top eigenvector of `Σ_h (I − Σ_h)² #C_h / n`.
pub fn save_on(stats: &SlicedStats, n: usize, bins: &[usize]) -> Result<IndexEstimate> {
    let d = stats.dim();
    let mut m = SymMatrix::zeros(d);
    let identity = SymMatrix::identity(d);
    for &h in bins {
        let gap = identity.sub(&stats.covariances[h]);
        m.add_scaled(&gap.square(), stats.counts[h] as f64 / n as f64);
    }
    top_direction(&m, Method::Save, stats.level(), bins.len())
}

/// Local PCA of slice `h`: the eigenvector of its smallest eigenvalue.
pub fn svr_local(stats: &SlicedStats, h: usize, mode: LocalMatrix) -> Result<LocalDirection> {
    let count = *stats
        .counts
        .get(h)
        .ok_or_else(|| Error::InvalidInput(format!("bin {h} out of range")))?;
    let needed = match mode {
        LocalMatrix::Centered => 2,
        LocalMatrix::Uncentered => 1,
    };
    if count < needed {
        return Err(Error::BinTooSmall {
            bin: h,
            count,
            needed,
        });
    }
    let small = linalg::smallest_eigenvector(stats.local_matrix(h, mode))?;
    Ok(LocalDirection {
        bin_h: h,
        v_local: small.vector,
        weight: count,
    })
}

/// Top eigenvector of the count-weighted average of local projectors
/// `v_h v_hᵀ` over the admissible slices.
pub fn svr(stats: &SlicedStats, adm: &AdmissibleSet, mode: LocalMatrix) -> Result<IndexEstimate> {
    if adm.is_empty() {
        return Err(Error::NoAdmissibleBins {
            level: stats.level(),
        });
    }
    let locals = adm
        .indices
        .iter()
        .map(|&h| svr_local(stats, h, mode))
        .collect::<Result<Vec<_>>>()?;
    let v = local_projector_average(&locals, stats.dim());
    top_direction(&v, Method::Svr, stats.level(), locals.len())
}

/// `Σ v vᵀ w / Σ w`, a convex combination of rank-one projectors.
pub fn local_projector_average(locals: &[LocalDirection], d: usize) -> SymMatrix {
    let total: usize = locals.iter().map(|l| l.weight).sum();
    let mut v = SymMatrix::zeros(d);
    for l in locals {
        v.add_outer(&l.v_local, l.weight as f64 / total as f64);
    }
    v
}

/// Sign-aligned distance `min(‖a − b‖, ‖a + b‖)`.
pub fn index_error(v_hat: &[f64], v_true: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in v_hat.iter().zip(v_true) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    minus.min(plus).sqrt()
}

/// Knobs shared by the estimators beyond the slicing level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub local_matrix: LocalMatrix,
    /// Restrict SIR and SAVE to the admissible slices as well.
    pub admissible_only: bool,
    /// Slice this interval of the response instead of its observed range.
    pub s_override: Option<(f64, f64)>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            local_matrix: LocalMatrix::Centered,
            admissible_only: false,
            s_override: None,
        }
    }
}

/// Slices `sd` at `level` and runs `method`.
pub fn estimate(
    sd: &StandardizedDataset,
    method: Method,
    level: u32,
    opts: &EstimatorOptions,
) -> Result<IndexEstimate> {
    let partition = slicing::build_partition(sd.data.y(), level, opts.s_override)?;
    let stats = slicing::slice_stats(sd, &partition);
    let n = sd.n();
    match method {
        Method::Sir | Method::Save if opts.admissible_only => {
            let adm = slicing::admissible_bins(&stats, n)?;
            if method == Method::Sir {
                sir_on(&stats, n, &adm.indices)
            } else {
                save_on(&stats, n, &adm.indices)
            }
        }
        Method::Sir => sir(&stats, n),
        Method::Save => save(&stats, n),
        Method::Svr => {
            let adm = slicing::admissible_bins(&stats, n)?;
            svr(&stats, &adm, opts.local_matrix)
        }
    }
}
