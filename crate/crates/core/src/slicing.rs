//! Dyadic partitions of the response range and per-slice moments.

use serde::{Deserialize, Serialize};

use crate::data::StandardizedDataset;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Finest level accepted for any dyadic partition.
pub const MAX_LEVEL: u32 = 30;

/// `2^level` equal-width bins tiling `[a, b]`. Bins are half-open on the
/// right except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub a: f64,
    pub b: f64,
    pub level: u32,
}

impl DyadicPartition {
    pub fn new(a: f64, b: f64, level: u32) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds the maximum of {MAX_LEVEL}"
            )));
        }
        Ok(DyadicPartition { a, b, level })
    }

    #[inline]
    pub fn bin_count(&self) -> usize {
        1usize << self.level
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// `[lo, hi]` edges of bin `h`.
    pub fn bin_bounds(&self, h: usize) -> (f64, f64) {
        let w = self.width() / self.bin_count() as f64;
        let lo = self.a + h as f64 * w;
        let hi = if h + 1 == self.bin_count() {
            self.b
        } else {
            self.a + (h + 1) as f64 * w
        };
        (lo, hi)
    }

    /// Bin holding `y`, or `None` outside `[a, b]`.
    #[inline]
    pub fn assign(&self, y: f64) -> Option<usize> {
        if !(y >= self.a && y <= self.b) {
            return None;
        }
        let pos = (y - self.a) / (self.b - self.a) * self.bin_count() as f64;
        Some((pos.floor() as usize).min(self.bin_count() - 1))
    }
}

/// Partition of `[min y, max y]`, or of `s_override` when given.
pub fn build_partition(
    y: &[f64],
    level: u32,
    s_override: Option<(f64, f64)>,
) -> Result<DyadicPartition> {
    let (a, b) = match s_override {
        Some(s) => s,
        None => {
            if y.is_empty() {
                return Err(Error::EmptyDataset);
            }
            y.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        }
    };
    DyadicPartition::new(a, b, level)
}

/// Which per-slice matrix the local PCA of SVR works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMatrix {
    /// Slice covariance, centred on the slice mean.
    #[default]
    Centered,
    /// Uncentred second moment `(1/#C) Σ x xᵀ`.
    Uncentered,
}

/// Counts, means and second-order moments of the predictors in each slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedStats {
    pub partition: DyadicPartition,
    pub counts: Vec<usize>,
    /// Zero vectors for empty bins.
    pub means: Vec<Vec<f64>>,
    /// Centred covariances (`1/#C` normalisation); zero for empty bins.
    pub covariances: Vec<SymMatrix>,
    /// Uncentred second moments; zero for empty bins.
    pub second_moments: Vec<SymMatrix>,
    pub total_in_s: usize,
}

impl SlicedStats {
    pub fn dim(&self) -> usize {
        self.covariances.first().map_or(0, SymMatrix::dim)
    }

    pub fn level(&self) -> u32 {
        self.partition.level
    }

    pub fn nonempty_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(h, _)| h)
    }

    pub fn local_matrix(&self, h: usize, mode: LocalMatrix) -> &SymMatrix {
        match mode {
            LocalMatrix::Centered => &self.covariances[h],
            LocalMatrix::Uncentered => &self.second_moments[h],
        }
    }
}

/// Per-slice statistics of the whitened predictors.
///
/// Samples are summed in dataset order, which [`StandardizedDataset`] keeps
/// canonical, so the result does not depend on how the input rows were
/// ordered. Covariances are computed in two passes.
pub fn slice_stats(sd: &StandardizedDataset, p: &DyadicPartition) -> SlicedStats {
    let ds = &sd.data;
    let d = ds.dim();
    let bins = p.bin_count();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &y) in ds.y().iter().enumerate() {
        if let Some(h) = p.assign(y) {
            members[h].push(i);
        }
    }

    let mut counts = Vec::with_capacity(bins);
    let mut means = Vec::with_capacity(bins);
    let mut covariances = Vec::with_capacity(bins);
    let mut second_moments = Vec::with_capacity(bins);
    let mut acc = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for idx in &members {
        counts.push(idx.len());
        if idx.is_empty() {
            means.push(vec![0.0; d]);
            covariances.push(SymMatrix::zeros(d));
            second_moments.push(SymMatrix::zeros(d));
            continue;
        }
        let c = idx.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(ds.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= c);

        acc.iter_mut().for_each(|v| *v = 0.0);
        for &i in idx {
            for ((z, v), m) in centered.iter_mut().zip(ds.row(i)).zip(&mean) {
                *z = v - m;
            }
            for a in 0..d {
                let za = centered[a];
                let row = &mut acc[a * d..(a + 1) * d];
                for b in a..d {
                    row[b] += za * centered[b];
                }
            }
        }
        let cov = SymMatrix::from_upper_fn(d, |a, b| acc[a * d + b] / c);
        let second = SymMatrix::from_upper_fn(d, |a, b| cov.get(a, b) + mean[a] * mean[b]);
        means.push(mean);
        covariances.push(cov);
        second_moments.push(second);
    }
    let total_in_s = counts.iter().sum();
    SlicedStats {
        partition: *p,
        counts,
        means,
        covariances,
        second_moments,
        total_in_s,
    }
}

/// Bins holding at least `2^{-l} n` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleSet {
    pub level: u32,
    pub indices: Vec<usize>,
}

impl AdmissibleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Slices whose count reaches the average share `2^{-l} n`.
pub fn admissible_bins(stats: &SlicedStats, n: usize) -> Result<AdmissibleSet> {
    let level = stats.level();
    let indices: Vec<usize> = stats
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| ((c as u128) << level) >= n as u128 && c > 0)
        .map(|(h, _)| h)
        .collect();
    if indices.is_empty() {
        return Err(Error::NoAdmissibleBins { level });
    }
    Ok(AdmissibleSet { level, indices })
}
