//! Link-function regression on the estimated index, plus a kNN baseline.
//!
//! [`fit_piecewise`] projects the whitened predictors onto `v̂`, splits the
//! projected range `I` into `2^j` dyadic cells and fits an independent
//! least-squares polynomial of degree `m` on each one. The resulting
//! [`PiecewiseModel`] evaluates to zero outside `I`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StandardizedDataset};
use crate::error::{Error, Result};
use crate::index::IndexEstimate;
use crate::linalg::{self, poly_eval};
use crate::slicing::DyadicPartition;

/// Anything that predicts a response from a predictor vector.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Predictor for F {
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Coarser cell whose fit stands in for an empty cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ancestor {
    pub scale: u32,
    pub bin: usize,
}

/// Piecewise polynomial in `t = ⟨v̂, z⟩` on a dyadic partition of `I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseModel {
    pub interval_i: (f64, f64),
    pub scale_j: u32,
    pub degree_m: usize,
    /// Ascending-power coefficients in `t`, one vector per cell. Empty cells
    /// carry the coefficients of their fallback ancestor.
    pub coeffs: Vec<Vec<f64>>,
    pub bin_nonempty: Vec<bool>,
    pub fallback: BTreeMap<usize, Ancestor>,
    pub direction: IndexEstimate,
}

impl PiecewiseModel {
    fn partition(&self) -> DyadicPartition {
        DyadicPartition {
            a: self.interval_i.0,
            b: self.interval_i.1,
            level: self.scale_j,
        }
    }

    /// Link estimate at projected coordinate `t`; zero outside `I`.
    pub fn predict_t(&self, t: f64) -> f64 {
        match self.partition().assign(t) {
            Some(k) => poly_eval(&self.coeffs[k], t),
            None => 0.0,
        }
    }

    pub fn project(&self, z: &[f64]) -> f64 {
        linalg::dot(&self.direction.v_hat, z)
    }
}

impl Predictor for PiecewiseModel {
    /// `x` in the same (whitened) coordinates the model was fitted in.
    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_t(self.project(x))
    }
}

/// Smallest cell population fitted on its own: two samples per
/// coefficient. Sparser cells, typically in the tails of the projected
/// distribution, would otherwise extrapolate wildly within the cell.
pub fn min_cell_count(degree_m: usize) -> usize {
    2 * (degree_m + 1)
}

/// Fits the piecewise polynomial of degree `degree_m` at scale `scale_j`.
///
/// `I` defaults to the range of the projected samples. Cells holding fewer
/// than [`min_cell_count`] samples inherit the fit of the nearest coarser
/// ancestor cell that has enough; cells with too few distinct abscissae
/// fall back to a lower degree.
pub fn fit_piecewise(
    sd: &StandardizedDataset,
    v_hat: &IndexEstimate,
    scale_j: u32,
    degree_m: usize,
    i_override: Option<(f64, f64)>,
) -> Result<PiecewiseModel> {
    if v_hat.v_hat.len() != sd.dim() {
        return Err(Error::InvalidInput(format!(
            "direction has length {}, data dimension is {}",
            v_hat.v_hat.len(),
            sd.dim()
        )));
    }
    let ds = &sd.data;
    let t: Vec<f64> = ds.rows().map(|r| linalg::dot(&v_hat.v_hat, r)).collect();
    let (a, b) = match i_override {
        Some(i) => i,
        None => t
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
    };
    let partition = DyadicPartition::new(a, b, scale_j)?;
    let cells = partition.bin_count();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for (i, &ti) in t.iter().enumerate() {
        if let Some(k) = partition.assign(ti) {
            members[k].push(i);
        }
    }
    if members.iter().all(Vec::is_empty) {
        return Err(Error::EmptyDataset);
    }

    let fit_on = |idx: &mut dyn Iterator<Item = usize>| -> Result<Vec<f64>> {
        let (ts, ys): (Vec<f64>, Vec<f64>) = idx.map(|i| (t[i], ds.y()[i])).unzip();
        linalg::polyfit_ls(&ts, &ys, degree_m)
    };

    let mut coeffs = Vec::with_capacity(cells);
    let mut bin_nonempty = Vec::with_capacity(cells);
    let mut fallback = BTreeMap::new();
    let mut ancestor_fits: HashMap<Ancestor, Vec<f64>> = HashMap::new();
    let enough = |count: usize| count >= min_cell_count(degree_m);
    for k in 0..cells {
        bin_nonempty.push(!members[k].is_empty());
        if enough(members[k].len()) || scale_j == 0 {
            coeffs.push(fit_on(&mut members[k].iter().copied())?);
            continue;
        }
        // Walk up to the first ancestor with enough data; the root takes
        // whatever there is.
        let mut found = None;
        for up in 1..=scale_j {
            let anc = Ancestor {
                scale: scale_j - up,
                bin: k >> up,
            };
            let span = (anc.bin << up)..((anc.bin + 1) << up);
            let count: usize = span.clone().map(|c| members[c].len()).sum();
            if enough(count) || (up == scale_j && count > 0) {
                if !ancestor_fits.contains_key(&anc) {
                    let mut it = span.flat_map(|c| members[c].iter().copied());
                    let fit = fit_on(&mut it)?;
                    ancestor_fits.insert(anc, fit);
                }
                found = Some(anc);
                break;
            }
        }
        let anc = found.expect("root cell holds every sample");
        coeffs.push(ancestor_fits[&anc].clone());
        fallback.insert(k, anc);
    }

    Ok(PiecewiseModel {
        interval_i: (a, b),
        scale_j,
        degree_m,
        coeffs,
        bin_nonempty,
        fallback,
        direction: v_hat.clone(),
    })
}

/// Symmetric truncation interval `[-r, r]` with `r = √(2 d ln n)` in whitened
/// units.
pub fn truncation_interval(n: usize, d: usize) -> (f64, f64) {
    let r = (2.0 * d as f64 * (n.max(2) as f64).ln()).sqrt();
    (-r, r)
}

/// Scale `j` with `2^{-j} ≈ √b (ln n / n)^{1/(2s+1)}`, rounded and clamped to
/// `[0, ⌊log₂ n⌋]`.
pub fn recommended_scale_j(n: usize, s: f64, b: f64) -> u32 {
    let n = n.max(2) as f64;
    let raw = ((n / n.ln()).powf(1.0 / (2.0 * s + 1.0)) / b.sqrt())
        .log2()
        .round();
    let cap = n.log2().floor();
    raw.clamp(0.0, cap) as u32
}

/// Mean squared error of `model` on `test`, against the noisy responses or,
/// when `truth` is given, against the noiseless regression function.
pub fn mse(model: &dyn Predictor, test: &Dataset, truth: Option<&dyn Fn(&[f64]) -> f64>) -> f64 {
    let mut sum = 0.0;
    for (x, &y) in test.rows().zip(test.y()) {
        let target = truth.map_or(y, |f| f(x));
        let e = model.predict(x) - target;
        sum += e * e;
    }
    sum / test.n() as f64
}

/// A fitted index model usable on raw predictors: whitening followed by the
/// piecewise link estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub mean: Vec<f64>,
    pub whitener: linalg::SymMatrix,
    pub piecewise: PiecewiseModel,
}

impl SvrModel {
    pub fn new(sd: &StandardizedDataset, piecewise: PiecewiseModel) -> Self {
        SvrModel {
            mean: sd.mean.clone(),
            whitener: sd.whitener.clone(),
            piecewise,
        }
    }

    /// Projection of a raw predictor onto the index, in whitened units.
    pub fn project(&self, x: &[f64]) -> f64 {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.piecewise.project(&self.whitener.mul_vec(&centered))
    }
}

/// On-disk form of an [`SvrModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    direction: Vec<f64>,
    method: crate::index::Method,
    level_l: u32,
    interval_i: (f64, f64),
    scale_j: u32,
    degree_m: usize,
    coeffs: Vec<Vec<f64>>,
    bin_nonempty: Vec<bool>,
    fallback: BTreeMap<usize, Ancestor>,
    diagnostics: crate::index::Diagnostics,
    standardization: Whitening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Whitening {
    mean: Vec<f64>,
    whitener: linalg::SymMatrix,
}

impl SvrModel {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.piecewise;
        let file = ModelFile {
            direction: p.direction.v_hat.clone(),
            method: p.direction.method,
            level_l: p.direction.level_l,
            interval_i: p.interval_i,
            scale_j: p.scale_j,
            degree_m: p.degree_m,
            coeffs: p.coeffs.clone(),
            bin_nonempty: p.bin_nonempty.clone(),
            fallback: p.fallback.clone(),
            diagnostics: p.direction.diagnostics.clone(),
            standardization: Whitening {
                mean: self.mean.clone(),
                whitener: self.whitener.clone(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        let d = f.direction.len();
        let cells = 1usize.checked_shl(f.scale_j).unwrap_or(0);
        if f.standardization.mean.len() != d || f.standardization.whitener.dim() != d {
            return Err(Error::InvalidInput(
                "standardization does not match direction".into(),
            ));
        }
        if f.coeffs.len() != cells || f.bin_nonempty.len() != cells {
            return Err(Error::InvalidInput(format!(
                "scale {} needs {cells} coefficient vectors",
                f.scale_j
            )));
        }
        if f.coeffs
            .iter()
            .any(|c| c.len() != f.degree_m + 1 || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput("malformed coefficient vector".into()));
        }
        DyadicPartition::new(f.interval_i.0, f.interval_i.1, f.scale_j)?;
        Ok(SvrModel {
            mean: f.standardization.mean,
            whitener: f.standardization.whitener,
            piecewise: PiecewiseModel {
                interval_i: f.interval_i,
                scale_j: f.scale_j,
                degree_m: f.degree_m,
                coeffs: f.coeffs,
                bin_nonempty: f.bin_nonempty,
                fallback: f.fallback,
                direction: IndexEstimate {
                    v_hat: f.direction,
                    method: f.method,
                    level_l: f.level_l,
                    diagnostics: f.diagnostics,
                },
            },
        })
    }
}

impl Predictor for SvrModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.piecewise.predict_t(self.project(x))
    }
}

/// Brute-force k-nearest-neighbour regressor on the full predictor space.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    train: Dataset,
    pub k: usize,
}

const CV_FOLDS: usize = 5;

/// Fits kNN; without `k`, picks it by 5-fold cross-validation over powers
/// of two up to `2^⌊log₂ n⌋`. Fold `f` holds the samples with `i mod 5 = f`.
pub fn knn_fit(ds: &Dataset, k: Option<usize>) -> Result<KnnModel> {
    let n = ds.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = match k {
        Some(k) if k >= 1 && k <= n => k,
        Some(k) => {
            return Err(Error::InvalidInput(format!("k = {k} outside [1, {n}]")));
        }
        None => select_k(ds),
    };
    Ok(KnnModel {
        train: ds.clone(),
        k,
    })
}

fn candidate_ks(n: usize, max_train: usize) -> Vec<usize> {
    let top = 1usize << (usize::BITS - 1 - n.leading_zeros());
    std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k <= top && k <= max_train)
        .collect()
}

fn select_k(ds: &Dataset) -> usize {
    let n = ds.n();
    if n < CV_FOLDS {
        return 1;
    }
    let max_train = n - n.div_ceil(CV_FOLDS);
    let ks = candidate_ks(n, max_train);
    let kmax = *ks.last().expect("k = 1 is always a candidate");
    let mut errors = vec![0.0; ks.len()];
    let mut neigh: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let fold = i % CV_FOLDS;
        neigh.clear();
        let xi = ds.row(i);
        for j in (0..n).filter(|j| j % CV_FOLDS != fold) {
            neigh.push((sq_dist(xi, ds.row(j)), j));
        }
        partial_sort(&mut neigh, kmax);
        let mut sum = 0.0;
        let mut next = 0;
        for (rank, &(_, j)) in neigh[..kmax].iter().enumerate() {
            sum += ds.y()[j];
            if rank + 1 == ks[next] {
                let e = sum / ks[next] as f64 - ds.y()[i];
                errors[next] += e * e;
                next += 1;
            }
        }
    }
    // Ties go to the smaller k.
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
    ks[best]
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Moves the `k` smallest entries (by distance, then index) to the front,
/// sorted.
fn partial_sort(v: &mut [(f64, usize)], k: usize) {
    if k < v.len() {
        v.select_nth_unstable_by(k, by_dist_then_index);
    }
    v[..k].sort_unstable_by(by_dist_then_index);
}

impl KnnModel {
    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// Mean response of the `k` nearest training points, ties broken by
    /// training index.
    pub fn knn_predict(&self, x: &[f64]) -> f64 {
        let mut neigh: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(j, r)| (sq_dist(x, r), j))
            .collect();
        partial_sort(&mut neigh, self.k);
        neigh[..self.k]
            .iter()
            .map(|&(_, j)| self.train.y()[j])
            .sum::<f64>()
            / self.k as f64
    }
}

impl Predictor for KnnModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.knn_predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Method;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_data(n: usize, seed: u64) -> (StandardizedDataset, IndexEstimate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let v = [0.6, 0.8];
        let y = rows
            .iter()
            .map(|r| 2.0 * linalg::dot(r, &v) + 1.0)
            .collect();
        let sd = StandardizedDataset::identity(&Dataset::from_rows(&rows, y).unwrap()).unwrap();
        (sd, IndexEstimate::fixed(&v, Method::Svr, 0).unwrap())
    }

    #[test]
    fn exact_line_every_cell() {
        let (sd, dir) = line_data(500, 1);
        for j in 0..5 {
            let model = fit_piecewise(&sd, &dir, j, 1, None).unwrap();
            for c in &model.coeffs {
                assert!(
                    (c[0] - 1.0).abs() < 1e-9 && (c[1] - 2.0).abs() < 1e-9,
                    "{c:?}"
                );
            }
            assert!(mse(&model, &sd.data, None) <= 1e-20);
            let x = sd.data.row(17);
            assert!((model.predict(x) - (2.0 * linalg::dot(x, &dir.v_hat) + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_at_scale_zero_is_the_mean() {
        let (sd, dir) = line_data(300, 2);
        let model = fit_piecewise(&sd, &dir, 0, 0, None).unwrap();
        let mean = sd.data.y().iter().sum::<f64>() / 300.0;
        assert!((model.predict_t(0.1) - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_outside_interval_and_right_edge_in_last_cell() {
        let (sd, dir) = line_data(200, 3);
        let model = fit_piecewise(&sd, &dir, 3, 1, None).unwrap();
        let (a, b) = model.interval_i;
        assert_eq!(model.predict_t(b + 1e-9), 0.0);
        assert_eq!(model.predict_t(a - 1.0), 0.0);
        assert_eq!(model.predict_t(b), poly_eval(&model.coeffs[7], b));
    }

    #[test]
    fn per_cell_fit_matches_manual_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.random_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0].sin() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let sd = StandardizedDataset::identity(&Dataset::from_rows(&rows, y).unwrap()).unwrap();
        let dir = IndexEstimate::fixed(&[1.0], Method::Svr, 0).unwrap();
        let model = fit_piecewise(&sd, &dir, 4, 1, None).unwrap();
        let p = DyadicPartition::new(model.interval_i.0, model.interval_i.1, 4).unwrap();
        for k in 0..16 {
            let (ts, ys): (Vec<f64>, Vec<f64>) = sd
                .data
                .rows()
                .zip(sd.data.y())
                .filter(|(r, _)| p.assign(r[0]) == Some(k))
                .map(|(r, y)| (r[0], *y))
                .unzip();
            if model.fallback.contains_key(&k) {
                assert!(ts.len() < min_cell_count(1));
                continue;
            }
            assert_eq!(model.coeffs[k], linalg::polyfit_ls(&ts, &ys, 1).unwrap());
        }
    }

    #[test]
    fn empty_cells_take_ancestor_fit() {
        // Samples only in the outer quarters of [0, 1].
        let rows: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 0.8, 0.9, 1.0]
            .iter()
            .map(|&t| vec![t])
            .collect();
        let y = vec![0.0, 1.0, 2.0, 8.0, 9.0, 10.0];
        let sd = StandardizedDataset::identity(&Dataset::from_rows(&rows, y).unwrap()).unwrap();
        let dir = IndexEstimate::fixed(&[1.0], Method::Svr, 0).unwrap();
        let model = fit_piecewise(&sd, &dir, 2, 0, None).unwrap();
        assert_eq!(model.bin_nonempty, vec![true, false, false, true]);
        assert_eq!(model.fallback[&1], Ancestor { scale: 1, bin: 0 });
        assert_eq!(model.fallback[&2], Ancestor { scale: 1, bin: 1 });
        assert!((model.coeffs[1][0] - 1.0).abs() < 1e-12);
        assert!((model.coeffs[2][0] - 9.0).abs() < 1e-12);
        assert!(matches!(
            fit_piecewise(&sd, &dir, 1, 0, Some((5.0, 6.0))),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn scale_heuristic() {
        assert_eq!(recommended_scale_j(1024, 1.0, 1.0), 2);
        assert!(recommended_scale_j(100_000, 2.0, 1.0) <= recommended_scale_j(100_000, 0.5, 1.0));
        assert_eq!(recommended_scale_j(2, 2.0, 1.0), 0);
        assert!(recommended_scale_j(2, 1.0, 1.0) <= 1);
        assert_eq!(recommended_scale_j(1 << 20, 0.5, 1.0), 8);
        assert_eq!(recommended_scale_j(1 << 20, 0.5, 4.0), 7);
    }

    #[test]
    fn mse_cases() {
        let test = Dataset::new(1, vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 3.0]).unwrap();
        let zero = |_: &[f64]| 0.0;
        assert_eq!(mse(&zero, &test, None), 9.0);
        let truth = |x: &[f64]| x[0];
        assert!((mse(&zero, &test, Some(&truth)) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn knn_extremes() {
        let ds = Dataset::new(1, vec![0.0, 1.0, 3.0, 7.0], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let all = knn_fit(&ds, Some(4)).unwrap();
        assert_eq!(all.knn_predict(&[100.0]), 3.0);
        let one = knn_fit(&ds, Some(1)).unwrap();
        for (x, y) in ds.rows().zip(ds.y()) {
            assert_eq!(one.knn_predict(x), *y);
        }
        assert!(matches!(knn_fit(&ds, Some(0)), Err(Error::InvalidInput(_))));
        assert!(matches!(knn_fit(&ds, Some(5)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn knn_cv_candidates() {
        assert_eq!(
            candidate_ks(1000, 800),
            vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512]
        );
        assert_eq!(candidate_ks(10, 8), vec![1, 2, 4, 8]);
        // Smooth noiseless data favours small k.
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let model = knn_fit(&Dataset::new(1, x, y).unwrap(), None).unwrap();
        assert!(model.k <= 4, "{}", model.k);
        // Pure noise favours large k.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let model = knn_fit(&Dataset::new(1, x, y).unwrap(), None).unwrap();
        assert!(model.k >= 16, "{}", model.k);
    }
}
