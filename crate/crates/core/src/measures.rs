//! Empirical measures of particle systems and the statistics used to compare
//! them with predicted equilibria: moments, radial Kolmogorov–Smirnov
//! distance and histograms. Also the plain-text snapshot format shared by the
//! sampler and the command line.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};

/// N points in R^d, stored row-major, with the provenance of the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfiguration {
    dimension: usize,
    coords: Vec<f64>,
    pub seed: u64,
    pub step_index: u64,
}

impl ParticleConfiguration {
    pub fn new(dimension: usize, points: &[Vec<f64>], seed: u64, step_index: u64) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dimension);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dimension {
                return Err(LabError::usage(format!(
                    "point {i} has {} coordinates, expected {dimension}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dimension, coords, seed, step_index)
    }

    /// Builds a configuration from `N * d` row-major coordinates.
    pub fn from_flat(dimension: usize, coords: Vec<f64>, seed: u64, step_index: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(LabError::usage("dimension must be positive"));
        }
        if coords.is_empty() || coords.len() % dimension != 0 {
            return Err(LabError::usage(format!(
                "{} coordinates do not form a non-empty set of {dimension}-dimensional points",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(LabError::usage(format!(
                "non-finite coordinate in point {}",
                k / dimension
            )));
        }
        Ok(Self {
            dimension,
            coords,
            seed,
            step_index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn radii(&self) -> Vec<f64> {
        self.points().map(norm).collect()
    }
}

pub(crate) fn norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_diff(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Analytic radial law: `F(r) = P(|X| <= r)`.
#[derive(Clone)]
pub enum RadialCdf {
    /// Uniform law on the ball of radius `radius` in R^d: `F(r) = (r/R)^d`.
    UniformBall { dimension: usize, radius: f64 },
    /// Law of `|X|` for X semicircular on `[-radius, radius]`.
    Semicircle { radius: f64 },
    /// Arbitrary CDF supported on `[0, radius]`.
    Custom {
        radius: f64,
        cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for RadialCdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialCdf::UniformBall { dimension, radius } => f
                .debug_struct("UniformBall")
                .field("dimension", dimension)
                .field("radius", radius)
                .finish(),
            RadialCdf::Semicircle { radius } => {
                f.debug_struct("Semicircle").field("radius", radius).finish()
            }
            RadialCdf::Custom { radius, .. } => {
                f.debug_struct("Custom").field("radius", radius).finish()
            }
        }
    }
}

impl RadialCdf {
    pub fn radius_support(&self) -> f64 {
        match self {
            RadialCdf::UniformBall { radius, .. }
            | RadialCdf::Semicircle { radius }
            | RadialCdf::Custom { radius, .. } => *radius,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let big_r = self.radius_support();
        if r <= 0.0 {
            return 0.0;
        }
        if r >= big_r {
            return 1.0;
        }
        let v = match self {
            RadialCdf::UniformBall { dimension, radius } => (r / radius).powi(*dimension as i32),
            RadialCdf::Semicircle { radius } => {
                let a2 = radius * radius;
                2.0 / (std::f64::consts::PI * a2)
                    * (r * (a2 - r * r).sqrt() + a2 * (r / radius).asin())
            }
            RadialCdf::Custom { cdf, .. } => cdf(r),
        };
        v.clamp(0.0, 1.0)
    }

    /// Inverse CDF, by closed form where available and bisection otherwise.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            RadialCdf::UniformBall { dimension, radius } => radius * p.powf(1.0 / *dimension as f64),
            _ => {
                let (mut lo, mut hi) = (0.0, self.radius_support());
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Moments indexed by order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    pub orders: Vec<u32>,
    pub values: Vec<f64>,
}

impl MomentSequence {
    pub fn get(&self, order: u32) -> Option<f64> {
        self.orders
            .iter()
            .position(|&k| k == order)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// Moments of the first coordinate.
    CoordinateFirstAxis,
    /// Moments of the Euclidean norm.
    Radial,
}

/// `(1/N) Σ s_i^k` with `s_i` the first coordinate or the norm of each point.
///
/// Orders are sorted and deduplicated; order 0 is exactly 1.
pub fn empirical_moments(
    config: &ParticleConfiguration,
    orders: &[u32],
    kind: MomentKind,
) -> Result<MomentSequence> {
    if orders.is_empty() {
        return Err(LabError::usage("empirical_moments needs at least one order"));
    }
    let mut orders = orders.to_vec();
    orders.sort_unstable();
    orders.dedup();
    let samples: Vec<f64> = match kind {
        MomentKind::CoordinateFirstAxis => config.points().map(|p| p[0]).collect(),
        MomentKind::Radial => config.radii(),
    };
    let n = samples.len() as f64;
    let values = orders
        .iter()
        .map(|&k| {
            if k == 0 {
                1.0
            } else {
                samples.iter().map(|s| s.powi(k as i32)).sum::<f64>() / n
            }
        })
        .collect();
    Ok(MomentSequence { orders, values })
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical law of the
/// radii and `target`. The empirical CDF is right-continuous; both the value
/// and the left limit are compared at every sample radius.
pub fn radial_ks_distance(config: &ParticleConfiguration, target: &RadialCdf) -> f64 {
    let mut radii = config.radii();
    radii.sort_by(f64::total_cmp);
    ks_sorted(&radii, |r| target.eval(r))
}

pub(crate) fn ks_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut dist: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let r = sorted[i];
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == r {
            j += 1;
        }
        let f = cdf(r);
        let below = i as f64 / n;
        let at = (j + 1) as f64 / n;
        dist = dist.max((at - f).abs()).max((f - below).abs());
        i = j + 1;
    }
    dist.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramAxis {
    Radial,
    Coordinate(usize),
}

/// Equal-width histogram on `[lo, hi]`. Bins are half-open `[a, b)` except the
/// last, which is closed. Returns `(bin_center, count)` pairs.
pub fn build_histogram(
    config: &ParticleConfiguration,
    axis: HistogramAxis,
    bins: usize,
    range: (f64, f64),
) -> Result<Vec<(f64, u64)>> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(LabError::usage("histogram needs at least one bin"));
    }
    if !(lo < hi) {
        return Err(LabError::usage(format!("histogram range [{lo}, {hi}] is empty")));
    }
    if let HistogramAxis::Coordinate(k) = axis {
        if k >= config.dimension() {
            return Err(LabError::usage(format!(
                "coordinate {k} out of range for dimension {}",
                config.dimension()
            )));
        }
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for p in config.points() {
        let s = match axis {
            HistogramAxis::Radial => norm(p),
            HistogramAxis::Coordinate(k) => p[k],
        };
        if s < lo || s > hi {
            continue;
        }
        let idx = (((s - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + (i as f64 + 0.5) * width, c))
        .collect())
}

/// Draws `n` i.i.d. points uniformly on the ball of radius `radius` in R^d.
pub fn sample_uniform_ball<R: Rng + ?Sized>(
    rng: &mut R,
    dimension: usize,
    radius: f64,
    n: usize,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm(&dir);
            let u: f64 = rng.random();
            let r = radius * u.powf(1.0 / dimension as f64);
            dir.into_iter().map(|x| x * r / len).collect()
        })
        .collect()
}

/// Renders a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a configuration in the snapshot text format.
pub fn write_snapshot(config: &ParticleConfiguration) -> String {
    let mut out = String::with_capacity(config.coords().len() * 26 + 64);
    let _ = writeln!(
        out,
        "# d={} N={} seed={} step={}",
        config.dimension(),
        config.len(),
        config.seed,
        config.step_index
    );
    for p in config.points() {
        let line: Vec<String> = p.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the snapshot text format produced by [`write_snapshot`].
pub fn parse_snapshot(text: &str) -> Result<ParticleConfiguration> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::parse(1, "empty snapshot"))?;
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| LabError::parse(1, "header must start with '#'"))?;
    let (mut d, mut n, mut seed, mut step) = (None, None, None, None);
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| LabError::parse(1, format!("malformed header field {tok}")))?;
        let num: u64 = v
            .parse()
            .map_err(|_| LabError::parse(1, format!("header field {k} is not an integer")))?;
        match k {
            "d" => d = Some(num as usize),
            "N" => n = Some(num as usize),
            "seed" => seed = Some(num),
            "step" => step = Some(num),
            _ => return Err(LabError::parse(1, format!("unknown header field {k}"))),
        }
    }
    let (d, n, seed, step) = match (d, n, seed, step) {
        (Some(d), Some(n), Some(s), Some(t)) => (d, n, s, t),
        _ => return Err(LabError::parse(1, "header needs d, N, seed and step")),
    };
    let mut coords = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = coords.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| LabError::parse(i + 2, format!("bad number {tok}")))?;
            coords.push(x);
        }
        if coords.len() - before != d {
            return Err(LabError::parse(i + 2, format!("expected {d} coordinates")));
        }
        rows += 1;
    }
    if rows != n {
        return Err(LabError::parse(1, format!("header says N={n} but found {rows} points")));
    }
    ParticleConfiguration::from_flat(d, coords, seed, step)
}
