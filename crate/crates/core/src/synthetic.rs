//! Seeded single-index test problems.
//!
//! A problem is a predictor distribution, a link function `f`, an index
//! direction `v` and a noise level; samples are `Y = f(⟨v, X⟩) + ζ` with
//! Gaussian `ζ`. All randomness comes from ChaCha8 streams keyed by a `u64`
//! seed, and sub-streams are derived with [`derive_seed`], so datasets are
//! reproducible on any platform and independent of thread scheduling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Skewness parameter of the skew-normal coordinate in [`DistKind::S1`].
pub const SKEW_ALPHA: f64 = 5.0;

/// The noise level is quoted relative to `|f(−4) − f(4)|`.
pub const NOISE_REFERENCE: (f64, f64) = (-4.0, 4.0);

/// Mixes a base seed with a list of coordinates (SplitMix64 finalizer after
/// each word). Used to give every grid cell and replicate its own stream.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(base), |h, &c| mix(h ^ mix(c)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    /// Independent standard normal coordinates.
    Gaussian,
    /// Standard normal × skew-normal (shape 5), standardized.
    S1,
    /// Uniform on the triangle (0,0), (1,1), (0,1), standardized.
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub d: usize,
}

impl DistributionSpec {
    pub fn gaussian(d: usize) -> Self {
        DistributionSpec {
            kind: DistKind::Gaussian,
            d,
        }
    }

    pub fn s1() -> Self {
        DistributionSpec {
            kind: DistKind::S1,
            d: 2,
        }
    }

    pub fn s2() -> Self {
        DistributionSpec {
            kind: DistKind::S2,
            d: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DistKind::Gaussian if self.d == 0 => {
                Err(Error::InvalidInput("gaussian predictors need d ≥ 1".into()))
            }
            DistKind::S1 | DistKind::S2 if self.d != 2 => Err(Error::InvalidInput(format!(
                "{:?} is two-dimensional, got d = {}",
                self.kind, self.d
            ))),
            _ => Ok(()),
        }
    }

    /// Default index direction: `(1, 2)/√5` for S1, `(1, 0)` for S2 and
    /// `(1, …, 1)/√d` for Gaussian predictors.
    pub fn default_direction(&self) -> Vec<f64> {
        match self.kind {
            DistKind::S1 => vec![1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()],
            DistKind::S2 => vec![1.0, 0.0],
            DistKind::Gaussian => vec![1.0 / (self.d as f64).sqrt(); self.d],
        }
    }

    /// Population mean and standard deviation of each raw coordinate.
    pub fn raw_moments(&self) -> Vec<(f64, f64)> {
        match self.kind {
            DistKind::Gaussian => vec![(0.0, 1.0); self.d],
            DistKind::S1 => {
                let delta = skew_delta();
                let mean = delta * (2.0 / PI).sqrt();
                vec![(0.0, 1.0), (mean, (1.0 - mean * mean).sqrt())]
            }
            // min and max of two uniforms
            DistKind::S2 => vec![
                (1.0 / 3.0, 18f64.sqrt().recip()),
                (2.0 / 3.0, 18f64.sqrt().recip()),
            ],
        }
    }
}

fn skew_delta() -> f64 {
    SKEW_ALPHA / (1.0 + SKEW_ALPHA * SKEW_ALPHA).sqrt()
}

fn draw_raw<R: Rng>(kind: DistKind, out: &mut [f64], rng: &mut R) {
    match kind {
        DistKind::Gaussian => out.iter_mut().for_each(|x| *x = rng.sample(StandardNormal)),
        DistKind::S1 => {
            let delta = skew_delta();
            out[0] = rng.sample(StandardNormal);
            let u1: f64 = rng.sample(StandardNormal);
            let u2: f64 = rng.sample(StandardNormal);
            out[1] = delta * u1.abs() + (1.0 - delta * delta).sqrt() * u2;
        }
        DistKind::S2 => {
            let u: f64 = rng.random();
            let w: f64 = rng.random();
            out[0] = u.min(w);
            out[1] = u.max(w);
        }
    }
}

/// `n` raw draws, row-major, before standardization.
pub fn sample_x_raw(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; n * spec.d];
    for row in x.chunks_exact_mut(spec.d) {
        draw_raw(spec.kind, row, &mut rng);
    }
    Ok(x)
}

/// `n` draws, row-major, with every coordinate shifted and scaled to
/// population mean 0 and standard deviation 1.
pub fn sample_x(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut x = sample_x_raw(spec, n, seed)?;
    let moments = spec.raw_moments();
    for row in x.chunks_exact_mut(spec.d) {
        for (v, (m, s)) in row.iter_mut().zip(&moments) {
            *v = (*v - m) / s;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    F1,
    F2,
    F3,
    Linear,
    Polynomial,
}

/// Serializable description of a link function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub kind: FunctionKind,
    /// Seed of the random F3 construction.
    #[serde(default)]
    pub f3_seed: u64,
    /// Ascending-power coefficients for `polynomial`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coeffs: Vec<f64>,
}

impl FunctionSpec {
    pub fn new(kind: FunctionKind) -> Self {
        FunctionSpec {
            kind,
            f3_seed: 0,
            coeffs: Vec::new(),
        }
    }

    pub fn f3(seed: u64) -> Self {
        FunctionSpec {
            f3_seed: seed,
            ..Self::new(FunctionKind::F3)
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        FunctionSpec {
            coeffs,
            ..Self::new(FunctionKind::Polynomial)
        }
    }

    /// Short name used in reports, e.g. `f2` or `f3:7`.
    pub fn label(&self) -> String {
        match self.kind {
            FunctionKind::F1 => "f1".into(),
            FunctionKind::F2 => "f2".into(),
            FunctionKind::F3 => format!("f3:{}", self.f3_seed),
            FunctionKind::Linear => "linear".into(),
            FunctionKind::Polynomial => {
                let c: Vec<String> = self.coeffs.iter().map(|c| format!("{c:?}")).collect();
                format!("poly:{}", c.join(","))
            }
        }
    }

    pub fn build(&self) -> Result<Link> {
        Ok(match self.kind {
            FunctionKind::F1 => Link::F1,
            FunctionKind::F2 => Link::F2,
            FunctionKind::F3 => Link::F3(F3Curve::new(self.f3_seed)),
            FunctionKind::Linear => Link::Polynomial(vec![0.0, 1.0]),
            FunctionKind::Polynomial => {
                if self.coeffs.is_empty() || self.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput(
                        "polynomial link needs finite coefficients".into(),
                    ));
                }
                Link::Polynomial(self.coeffs.clone())
            }
        })
    }
}

impl std::str::FromStr for FunctionSpec {
    type Err = Error;

    /// Parses the [`FunctionSpec::label`] forms; a bare `f3` uses seed 0.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidInput(format!("unknown function `{s}`"));
        match (head.trim().to_ascii_lowercase().as_str(), arg) {
            ("f1", None) => Ok(Self::new(FunctionKind::F1)),
            ("f2", None) => Ok(Self::new(FunctionKind::F2)),
            ("f3", None) => Ok(Self::f3(0)),
            ("f3", Some(a)) => a.trim().parse().map(Self::f3).map_err(|_| bad()),
            ("linear", None) => Ok(Self::new(FunctionKind::Linear)),
            ("poly", Some(a)) => a
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Self::polynomial)
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// An evaluable link function `f: ℝ → ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Link {
    /// `exp(t/3)`
    F1,
    /// `exp(t/3) + sin(20 t)/15`
    F2,
    F3(F3Curve),
    Polynomial(Vec<f64>),
}

impl Link {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Link::F1 => (t / 3.0).exp(),
            Link::F2 => (t / 3.0).exp() + (20.0 * t).sin() / 15.0,
            Link::F3(c) => c.eval(t),
            Link::Polynomial(c) => linalg::poly_eval(c, t),
        }
    }

    /// `|f(−4) − f(4)|`, the unit in which noise levels are quoted.
    pub fn reference_range(&self) -> f64 {
        (self.eval(NOISE_REFERENCE.0) - self.eval(NOISE_REFERENCE.1)).abs()
    }
}

/// Noise standard deviation for a fractional noise level.
pub fn resolve_sigma(link: &Link, percent: f64) -> Result<f64> {
    if !(percent >= 0.0 && percent.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise level {percent} must be ≥ 0"
        )));
    }
    Ok(percent * link.reference_range())
}

const F3_BREAKS: usize = 8;
const F3_MAX_CURVATURE: f64 = 0.3;
const F3_SLOPE_RANGE: (f64, f64) = (0.2, 1.2);

/// Random continuous, strictly increasing piecewise quadratic on `[−4, 4]`,
/// extended linearly outside and shifted so that `f(0) = 0`.
///
/// Eight sorted uniform breakpoints split `[−4, 4]` into nine pieces. Each
/// piece gets a curvature `a ∈ [−0.3, 0.3]` and a linear term chosen so the
/// smallest slope on the piece lies in `[0.2, 1.2]`; constants are fixed by
/// continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct F3Curve {
    /// Piece `k` covers `[knots[k], knots[k + 1]]`.
    knots: Vec<f64>,
    /// `(a, b, c)` with value `a t² + b t + c`.
    pieces: Vec<[f64; 3]>,
}

impl F3Curve {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(seed, &[0xf3]));
        let (lo, hi) = NOISE_REFERENCE;
        let mut inner: Vec<f64> = (0..F3_BREAKS).map(|_| rng.random_range(lo..hi)).collect();
        inner.sort_by(f64::total_cmp);
        let mut knots = vec![lo];
        knots.extend(inner);
        knots.push(hi);

        let mut pieces = Vec::with_capacity(knots.len() - 1);
        let mut value_at_left = 0.0;
        for w in knots.windows(2) {
            let (l, r) = (w[0], w[1]);
            let a = rng.random_range(-F3_MAX_CURVATURE..=F3_MAX_CURVATURE);
            let min_slope = rng.random_range(F3_SLOPE_RANGE.0..F3_SLOPE_RANGE.1);
            // q'(t) = 2at + b is smallest at the left end when a > 0.
            let b = min_slope - 2.0 * a * if a > 0.0 { l } else { r };
            let c = value_at_left - a * l * l - b * l;
            pieces.push([a, b, c]);
            value_at_left = a * r * r + b * r + c;
        }
        let mut curve = F3Curve { knots, pieces };
        let shift = curve.eval(0.0);
        for p in &mut curve.pieces {
            p[2] -= shift;
        }
        curve
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn piece_value(&self, k: usize, t: f64) -> f64 {
        let [a, b, c] = self.pieces[k];
        (a * t + b) * t + c
    }

    fn piece_slope(&self, k: usize, t: f64) -> f64 {
        let [a, b, _] = self.pieces[k];
        2.0 * a * t + b
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.pieces.len() - 1;
        let (lo, hi) = (self.knots[0], self.knots[last + 1]);
        if t < lo {
            self.piece_value(0, lo) + self.piece_slope(0, lo) * (t - lo)
        } else if t > hi {
            self.piece_value(last, hi) + self.piece_slope(last, hi) * (t - hi)
        } else {
            let k = self.knots[1..=last].partition_point(|&x| x <= t);
            self.piece_value(k, t)
        }
    }
}

/// A fully specified single-index regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub dist: DistributionSpec,
    pub func: FunctionSpec,
    pub link: Link,
    /// Unit index direction in the (standardized) predictor space.
    pub v: Vec<f64>,
    pub noise_percent: f64,
    pub sigma: f64,
}

impl Problem {
    pub fn new(
        dist: DistributionSpec,
        func: FunctionSpec,
        v: Option<Vec<f64>>,
        noise_percent: f64,
    ) -> Result<Self> {
        dist.validate()?;
        let v = match v {
            Some(v) if v.len() != dist.d => {
                return Err(Error::InvalidInput(format!(
                    "direction has length {}, predictors have d = {}",
                    v.len(),
                    dist.d
                )));
            }
            Some(v) => linalg::normalize(&v)
                .ok_or_else(|| Error::InvalidInput("direction must be nonzero".into()))?,
            None => dist.default_direction(),
        };
        let link = func.build()?;
        let sigma = resolve_sigma(&link, noise_percent)?;
        Ok(Problem {
            dist,
            func,
            link,
            v,
            noise_percent,
            sigma,
        })
    }

    /// Noiseless regression function `F(x) = f(⟨v, x⟩)`.
    pub fn truth(&self, x: &[f64]) -> f64 {
        self.link.eval(linalg::dot(&self.v, x))
    }

    /// Draws `n` samples. Predictors and noise use separate sub-streams of
    /// `seed`, so changing the noise level keeps the predictors fixed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        let x = sample_x(&self.dist, n, derive_seed(seed, &[1]))?;
        let noiseless: Vec<f64> = x.chunks_exact(self.dist.d).map(|r| self.truth(r)).collect();
        let mut rng = rng_from_seed(derive_seed(seed, &[2]));
        let y = noiseless
            .iter()
            .map(|f| {
                let z: f64 = rng.sample(StandardNormal);
                f + self.sigma * z
            })
            .collect();
        Ok(Sample {
            data: Dataset::new(self.dist.d, x, y)?,
            noiseless,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    /// `F(X_i)` without noise.
    pub noiseless: Vec<f64>,
}

/// One-shot convenience around [`Problem::sample`].
pub fn make_dataset(
    dist: DistributionSpec,
    func: FunctionSpec,
    v: Option<Vec<f64>>,
    noise_percent: f64,
    n: usize,
    seed: u64,
) -> Result<(Problem, Sample)> {
    let problem = Problem::new(dist, func, v, noise_percent)?;
    let sample = problem.sample(n, seed)?;
    Ok((problem, sample))
}
