//! Monte Carlo experiments over grids of sample sizes, dimensions, noise
//! levels, methods and scales.
//!
//! A run is split into units, one per (distribution, function, `n`,
//! replicate). Each unit draws its own training and test samples from a
//! seed derived from the base seed and those coordinates, then evaluates
//! every noise level, method, level and scale on them, so all methods are
//! compared on identical data. Units run in parallel and are merged in
//! grid order, which makes the output independent of the thread count.

mod config;
mod report;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{read_config, BenchMethod, ExperimentConfig, OutputPaths, Target};
pub use report::{write_csv, write_manifest, Manifest};

use crate::data::{self, StandardizedDataset};
use crate::error::{Error, Result};
use crate::index;
use crate::pipeline::auto_level;
use crate::regression;
use crate::synthetic::{derive_seed, DistKind, DistributionSpec, FunctionSpec, Problem, Sample};

/// Mean after dropping `⌈trim · count⌉` values from each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Result<f64> {
    let kept = trimmed(values, trim)?;
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

fn trimmed(values: &[f64], trim: f64) -> Result<Vec<f64>> {
    if !(0.0..=0.45).contains(&trim) {
        return Err(Error::InvalidInput(format!(
            "trim = {trim} outside [0, 0.45]"
        )));
    }
    let n = values.len();
    // Guard against 0.1 * 50 = 5.000000000000001.
    let k = (trim * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n == 0 || 2 * k >= n {
        return Err(Error::InvalidInput(format!(
            "trimming {k} values per tail leaves nothing of {n}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k..n - k].to_vec())
}

/// Least-squares slope of `log₁₀ y` against `log₁₀ n`, skipping points with
/// non-finite or non-positive `y`.
pub fn fit_slope(points: &[(usize, f64)]) -> Result<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, y)| *n > 0 && y.is_finite() && *y > 0.0)
        .map(|&(n, y)| ((n as f64).log10(), y.log10()))
        .collect();
    let distinct_x = xy.iter().any(|p| p.0 != xy[0].0);
    if xy.len() < 2 || !distinct_x {
        return Err(Error::SlopeUndefined { finite: xy.len() });
    }
    let m = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Coordinates of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dist: DistKind,
    pub d: usize,
    pub func: String,
    pub noise: f64,
    pub method: BenchMethod,
    pub n: usize,
    /// Slicing level; absent for kNN.
    pub l: Option<u32>,
    /// Link scale; absent where no link is fitted.
    pub j: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub cell: Cell,
    /// Trimmed mean over the replicates that succeeded; NaN if none did.
    pub statistic: f64,
    /// Standard deviation of the retained replicate values.
    pub spread: f64,
    pub count: usize,
    pub failed: usize,
}

/// Fitted rate for one curve of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub dist: DistKind,
    pub d: usize,
    pub func: String,
    pub noise: f64,
    pub method: BenchMethod,
    pub l: Option<u32>,
    pub j: Option<u32>,
    /// `None` when fewer than two points were usable.
    pub slope: Option<f64>,
    pub points: usize,
}

/// Time spent per stage, summed over all units and workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub simulate: f64,
    pub index: f64,
    pub link: f64,
    pub evaluate: f64,
}

impl StageTimes {
    fn add(&mut self, o: &StageTimes) {
        self.simulate += o.simulate;
        self.index += o.index;
        self.link += o.link;
        self.evaluate += o.evaluate;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_seed: u64,
    /// SHA-256 over `"blob <len>\0"` followed by the config JSON.
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub bench: String,
    pub records: Vec<Record>,
    pub slopes: Vec<SlopeRecord>,
    pub provenance: Provenance,
    pub stage_seconds: StageTimes,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn find(&self, pred: impl Fn(&Cell) -> bool) -> Vec<&Record> {
        self.records.iter().filter(|r| pred(&r.cell)).collect()
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(blob_hash(&serde_json::to_vec(cfg)?))
}

/// Hex SHA-256 of `"blob <len>\0"` followed by `body`, as git hashes blobs.
pub fn blob_hash(body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn dist_id(kind: DistKind) -> u64 {
    match kind {
        DistKind::Gaussian => 0,
        DistKind::S1 => 1,
        DistKind::S2 => 2,
    }
}

/// Automatic level for a cell: the count rule of [`auto_level`], capped by
/// the noise rule `2^{−l} ≥ 2·noise` when enabled.
pub fn cell_level(cfg: &ExperimentConfig, n: usize, d: usize, noise: f64) -> u32 {
    let mut l = auto_level(n, d, cfg.samples_per_dim);
    if cfg.noise_level_rule && noise > 0.0 {
        let cap = (1.0 / (2.0 * noise)).log2().floor().max(0.0) as u32;
        l = l.min(cap);
    }
    l
}

fn levels(cfg: &ExperimentConfig, n: usize, d: usize, noise: f64) -> Vec<u32> {
    if cfg.l_grid.is_empty() {
        vec![cell_level(cfg, n, d, noise)]
    } else {
        cfg.l_grid.clone()
    }
}

fn scales(cfg: &ExperimentConfig, n: usize) -> Vec<u32> {
    if cfg.j_grid.is_empty() {
        vec![regression::recommended_scale_j(
            n,
            cfg.smoothness_s,
            cfg.scale_b,
        )]
    } else {
        cfg.j_grid.clone()
    }
}

struct Unit {
    dist: DistributionSpec,
    func: FunctionSpec,
    n: usize,
    rep: usize,
    seed: u64,
}

/// A cell value from one replicate; `None` when the replicate failed.
type CellValue = (Cell, Option<f64>);

struct UnitOutput {
    values: Vec<CellValue>,
    times: StageTimes,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bench {
    /// `log₁₀ ‖v̂ − v‖²`
    Index,
    /// `‖v̂ − v‖`
    RateIndex,
    /// test MSE
    RateMse,
    /// `log₁₀` test MSE
    Heatmap,
}

impl Bench {
    fn needs_test_set(self) -> bool {
        matches!(self, Bench::RateMse | Bench::Heatmap)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn prepare(cfg: &ExperimentConfig, s: &Sample) -> Result<StandardizedDataset> {
    cfg.standardize.apply(&s.data)
}

fn run_unit(cfg: &ExperimentConfig, bench: Bench, u: &Unit) -> UnitOutput {
    let mut values = Vec::new();
    let mut times = StageTimes::default();
    let d = u.dist.d;
    for &noise in &cfg.noise {
        let cell = |method: BenchMethod, l: Option<u32>, j: Option<u32>| Cell {
            dist: u.dist.kind,
            d,
            func: u.func.label(),
            noise,
            method,
            n: u.n,
            l,
            j,
        };
        let t0 = Instant::now();
        let drawn = Problem::new(u.dist, u.func.clone(), None, noise).and_then(|p| {
            let train = p.sample(u.n, u.seed)?;
            let test = if bench.needs_test_set() {
                Some(p.sample(cfg.test_n, derive_seed(u.seed, &[0x7e57]))?)
            } else {
                None
            };
            Ok((p, train, test))
        });
        times.simulate += secs(t0.elapsed());
        // A failed draw still emits every cell so replicates stay aligned.
        let drawn = drawn.ok();
        let prepared = drawn
            .as_ref()
            .and_then(|(_, train, _)| prepare(cfg, train).ok());
        let truth = |x: &[f64]| drawn.as_ref().map_or(f64::NAN, |(p, _, _)| p.truth(x));
        let target = cfg.denoised.then_some(&truth as &dyn Fn(&[f64]) -> f64);

        for &method in &cfg.methods {
            let Some(index_method) = method.index_method() else {
                // kNN has no level or scale.
                let t0 = Instant::now();
                let fitted = drawn.as_ref().and_then(|(_, train, test)| {
                    Some((regression::knn_fit(&train.data, None).ok()?, test.as_ref()?))
                });
                let t1 = Instant::now();
                times.link += secs(t1 - t0);
                let v = fitted.map(|(k, test)| regression::mse(&k, &test.data, target));
                times.evaluate += secs(t1.elapsed());
                values.push((cell(method, None, None), v));
                continue;
            };
            for l in levels(cfg, u.n, d, noise) {
                let t0 = Instant::now();
                let est = prepared
                    .as_ref()
                    .and_then(|sd| index::estimate(sd, index_method, l, &cfg.estimator).ok());
                times.index += secs(t0.elapsed());
                match bench {
                    Bench::Index | Bench::RateIndex => {
                        let v = est.as_ref().and_then(|e| {
                            let sd = prepared.as_ref()?;
                            let (problem, _, _) = drawn.as_ref()?;
                            let v_hat = data::back_map_direction(sd, &e.v_hat).ok()?;
                            let err = index::index_error(&v_hat, &problem.v);
                            Some(match bench {
                                Bench::Index => (err * err).max(1e-300).log10(),
                                _ => err,
                            })
                        });
                        values.push((cell(method, Some(l), None), v));
                    }
                    Bench::RateMse | Bench::Heatmap => {
                        for j in scales(cfg, u.n) {
                            let t1 = Instant::now();
                            let model = est.as_ref().and_then(|e| {
                                let sd = prepared.as_ref()?;
                                cfg.pipeline(index_method, l, Some(j)).fit_link(sd, e).ok()
                            });
                            let t2 = Instant::now();
                            times.link += secs(t2 - t1);
                            let v = model.and_then(|m| {
                                let test = drawn.as_ref()?.2.as_ref()?;
                                let e = regression::mse(&m, &test.data, target);
                                Some(if bench == Bench::Heatmap {
                                    e.log10()
                                } else {
                                    e
                                })
                            });
                            times.evaluate += secs(t2.elapsed());
                            values.push((cell(method, Some(l), Some(j)), v));
                        }
                    }
                }
            }
        }
    }
    UnitOutput { values, times }
}

fn units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::new();
    for dist in cfg.distributions() {
        for (fi, func) in cfg.functions.iter().enumerate() {
            for &n in &cfg.n_grid {
                for rep in 0..cfg.replicates {
                    let seed = derive_seed(
                        cfg.base_seed,
                        &[
                            dist_id(dist.kind),
                            dist.d as u64,
                            fi as u64,
                            n as u64,
                            rep as u64,
                        ],
                    );
                    out.push(Unit {
                        dist,
                        func: func.clone(),
                        n,
                        rep,
                        seed,
                    });
                }
            }
        }
    }
    out
}

fn run(cfg: &ExperimentConfig, bench: Bench, name: &str) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let work = units(cfg);
    let exec = || -> Vec<UnitOutput> { work.par_iter().map(|u| run_unit(cfg, bench, u)).collect() };
    let outputs = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(exec),
        None => exec(),
    };

    // Units of one group (everything but the replicate) are contiguous and
    // emit their cells in the same order.
    let mut records = Vec::new();
    let mut stage = StageTimes::default();
    for o in &outputs {
        stage.add(&o.times);
    }
    for (group, chunk) in outputs.chunks(cfg.replicates).enumerate() {
        debug_assert!(work[group * cfg.replicates].rep == 0);
        let width = chunk[0].values.len();
        for c in 0..width {
            let cell = chunk[0].values[c].0.clone();
            let ok: Vec<f64> = chunk
                .iter()
                .filter_map(|o| o.values[c].1)
                .filter(|v| v.is_finite())
                .collect();
            let failed = chunk.len() - ok.len();
            let (statistic, spread, count) = match trimmed(&ok, cfg.trim) {
                Ok(kept) => {
                    let m = kept.iter().sum::<f64>() / kept.len() as f64;
                    let sd = if kept.len() > 1 {
                        (kept.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                            / (kept.len() - 1) as f64)
                            .sqrt()
                    } else {
                        0.0
                    };
                    (m, sd, ok.len())
                }
                Err(_) => (f64::NAN, f64::NAN, ok.len()),
            };
            records.push(Record {
                cell,
                statistic,
                spread,
                count,
                failed,
            });
        }
    }

    Ok(ExperimentResult {
        bench: name.into(),
        slopes: Vec::new(),
        records,
        provenance: Provenance {
            base_seed: cfg.base_seed,
            config_hash: config_hash(cfg)?,
            version: env!("CARGO_PKG_VERSION").into(),
        },
        stage_seconds: stage,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Index-estimation benchmark: per cell, the mean over replicates of
/// `log₁₀ ‖v̂ − v‖²`, with `v̂` mapped back to the original coordinates.
pub fn run_index_benchmark(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.methods.contains(&BenchMethod::Knn) {
        return Err(Error::Config("kNN does not estimate an index".into()));
    }
    run(cfg, Bench::Index, "index")
}

/// Sweep over `n`: per cell the mean index error `‖v̂ − v‖` or the mean
/// test MSE, plus the log-log slope of each curve.
pub fn run_rate_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut ns = cfg.n_grid.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 {
        return Err(Error::Config(format!(
            "rate sweeps need at least 4 distinct sample sizes, got {}",
            ns.len()
        )));
    }
    let bench = match cfg.target {
        Target::IndexError => {
            if cfg.methods.contains(&BenchMethod::Knn) {
                return Err(Error::Config("kNN does not estimate an index".into()));
            }
            Bench::RateIndex
        }
        Target::RegressionMse => Bench::RateMse,
    };
    let mut result = run(cfg, bench, "rate")?;
    result.slopes = slopes(cfg, &result.records);
    Ok(result)
}

/// Trimmed mean of `log₁₀ MSE` on every `(l, j, n)` cell.
pub fn run_heatmap(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.l_grid.is_empty() || cfg.j_grid.is_empty() {
        return Err(Error::Config(
            "heatmaps need explicit l_grid and j_grid".into(),
        ));
    }
    if cfg.methods.contains(&BenchMethod::Knn) {
        return Err(Error::Config(
            "heatmaps cover index-based methods only".into(),
        ));
    }
    run(cfg, Bench::Heatmap, "heatmap")
}

fn slopes(cfg: &ExperimentConfig, records: &[Record]) -> Vec<SlopeRecord> {
    let keep_l = !cfg.l_grid.is_empty();
    let keep_j = !cfg.j_grid.is_empty();
    let key = |c: &Cell| SlopeRecord {
        dist: c.dist,
        d: c.d,
        func: c.func.clone(),
        noise: c.noise,
        method: c.method,
        l: c.l.filter(|_| keep_l),
        j: c.j.filter(|_| keep_j),
        slope: None,
        points: 0,
    };
    let mut curves: Vec<(SlopeRecord, Vec<(usize, f64)>)> = Vec::new();
    for r in records {
        let k = key(&r.cell);
        match curves.iter_mut().find(|(c, _)| *c == k) {
            Some((_, pts)) => pts.push((r.cell.n, r.statistic)),
            None => curves.push((k, vec![(r.cell.n, r.statistic)])),
        }
    }
    curves
        .into_iter()
        .map(|(mut k, pts)| {
            k.points = pts.iter().filter(|p| p.1.is_finite() && p.1 > 0.0).count();
            k.slope = fit_slope(&pts).ok();
            k
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(trimmed_mean(&[1.0, 2.0, 3.0, 100.0], 0.25).unwrap(), 2.5);
        assert_eq!(
            trimmed_mean(&[0.0, 5.0, 5.0, 5.0, 1000.0], 0.2).unwrap(),
            5.0
        );
        assert_eq!(trimmed_mean(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert!(trimmed_mean(&[1.0, 2.0], 0.45).is_err());
        assert!(trimmed_mean(&[], 0.0).is_err());
        assert!(trimmed_mean(&[1.0], 0.5).is_err());
        let fifty: Vec<f64> = (0..50).map(f64::from).collect();
        // 10% of 50 is exactly five per tail.
        assert_eq!(trimmed_mean(&fifty, 0.1).unwrap(), 24.5);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(usize, f64)> = [100, 1000, 10_000, 50_000]
            .iter()
            .map(|&n| (n, 3.0 / n as f64))
            .collect();
        assert!((fit_slope(&pts).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            fit_slope(&[(10, 1.0), (20, f64::NAN)]),
            Err(Error::SlopeUndefined { finite: 1 })
        ));
    }

    #[test]
    fn level_rules() {
        let cfg = ExperimentConfig {
            samples_per_dim: 1.0,
            noise_level_rule: true,
            ..ExperimentConfig::default()
        };
        assert_eq!(cell_level(&cfg, 1000, 2, 0.0), 8);
        assert_eq!(cell_level(&cfg, 1000, 2, 0.01), 5);
        assert_eq!(cell_level(&cfg, 1000, 2, 0.02), 4);
        assert_eq!(cell_level(&cfg, 40_000, 10, 0.01), 5);
    }
}
