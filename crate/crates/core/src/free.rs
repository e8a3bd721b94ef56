//! Free-probability moment calculus and logarithmic energies.
//!
//! Exact combinatorics (Catalan numbers, closed walks on regular trees) sit
//! next to quadrature of the corresponding spectral laws, so every moment
//! identity can be checked by two independent routes.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::clt::GridDensity;
use crate::error::{LabError, Result};
use crate::quadrature::GaussLegendre;

const MAX_CATALAN_ORDER: u32 = 30;
const MAX_WALK_LENGTH: u32 = 40;
const KESTEN_MCKAY_NODES: usize = 400;

/// Symmetric spectral laws whose even moments count closed walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentFamily {
    /// Semicircle law on `[-2, 2]`.
    Semicircle,
    /// Arcsine law on `[-2, 2]` (Kesten–McKay with d = 2).
    Arcsine,
    /// Kesten–McKay law of the d-regular tree, d >= 3.
    KestenMcKay(u32),
}

impl MomentFamily {
    pub fn kesten_mckay(d: u32) -> Result<Self> {
        match d {
            0 | 1 => Err(LabError::usage(format!("Kesten–McKay needs degree d >= 2, got {d}"))),
            2 => Ok(MomentFamily::Arcsine),
            _ => Ok(MomentFamily::KestenMcKay(d)),
        }
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            MomentFamily::Semicircle | MomentFamily::Arcsine => 2.0,
            MomentFamily::KestenMcKay(d) => 2.0 * ((d - 1) as f64).sqrt(),
        }
    }

    /// Density on the support.
    pub fn density(&self, x: f64) -> f64 {
        let r = self.support_radius();
        if x.abs() >= r {
            return 0.0;
        }
        match *self {
            MomentFamily::Semicircle => (4.0 - x * x).sqrt() / (2.0 * PI),
            MomentFamily::Arcsine => 1.0 / (PI * (4.0 - x * x).sqrt()),
            MomentFamily::KestenMcKay(d) => {
                let d = d as f64;
                d * (4.0 * (d - 1.0) - x * x).sqrt() / (2.0 * PI * (d * d - x * x))
            }
        }
    }
}

/// `C_m = binom(2m, m) / (m + 1)`, exact for `m <= 30`.
pub fn catalan(m: u32) -> Result<u64> {
    if m > MAX_CATALAN_ORDER {
        return Err(LabError::Overflow(format!(
            "catalan({m}) exceeds the exact 64-bit range (m <= {MAX_CATALAN_ORDER})"
        )));
    }
    // C_{k+1} = C_k * 2(2k + 1) / (k + 2), exact in u128
    let mut c: u128 = 1;
    for k in 0..m as u128 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    Ok(c as u64)
}

/// `binom(2m, m)`.
pub fn central_binomial(m: u32) -> Result<u128> {
    let mut c: u128 = 1;
    for k in 0..m as u128 {
        c = c
            .checked_mul(2 * (2 * k + 1))
            .ok_or_else(|| LabError::Overflow(format!("binom(2·{m}, {m}) overflows")))?
            / (k + 1);
    }
    Ok(c)
}

fn kesten_mckay_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(KESTEN_MCKAY_NODES))
}

/// Quadrature of `∫ x^k dμ_d` for the Kesten–McKay law. The substitution
/// `x = 2√(d-1) sin θ` absorbs the square-root edge behaviour, leaving a
/// smooth integrand on `[-π/2, π/2]`.
pub fn kesten_mckay_moment_quadrature(d: u32, k: u32) -> f64 {
    let df = d as f64;
    let r = 2.0 * (df - 1.0).sqrt();
    kesten_mckay_rule().integrate(-PI / 2.0, PI / 2.0, |theta| {
        let (s, c) = theta.sin_cos();
        let x = r * s;
        x.powi(k as i32) * df * r * r * c * c / (2.0 * PI * (df * df - x * x))
    })
}

/// k-th moment of a family: 0 for odd k, `C_m`, `binom(2m, m)` or Kesten–McKay
/// quadrature for `k = 2m`.
pub fn reference_moment(family: MomentFamily, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let m = k / 2;
    match family {
        MomentFamily::Semicircle => match catalan(m) {
            Ok(c) => c as f64,
            Err(_) => semicircle_moment_quadrature(k),
        },
        MomentFamily::Arcsine => central_binomial(m).map(|c| c as f64).unwrap_or(f64::INFINITY),
        MomentFamily::KestenMcKay(d) => kesten_mckay_moment_quadrature(d, k),
    }
}

fn semicircle_moment_quadrature(k: u32) -> f64 {
    kesten_mckay_rule().integrate(-PI / 2.0, PI / 2.0, |theta| {
        let (s, c) = theta.sin_cos();
        (2.0 * s).powi(k as i32) * 4.0 * c * c / (2.0 * PI)
    })
}

/// Number of closed walks of the given length from the root of the infinite
/// d-regular tree, by dynamic programming over the distance to the root.
pub fn tree_walk_count(d: u32, length: u32) -> Result<u128> {
    if d < 2 {
        return Err(LabError::usage(format!("tree degree must be at least 2, got {d}")));
    }
    if length > MAX_WALK_LENGTH {
        return Err(LabError::Overflow(format!(
            "walk length {length} exceeds the supported maximum {MAX_WALK_LENGTH}"
        )));
    }
    let overflow = || LabError::Overflow(format!("closed-walk count for d={d}, length={length} exceeds 128 bits"));
    if length % 2 == 1 {
        return Ok(0);
    }
    let len = length as usize;
    // ways[k] = number of walks currently at distance k from the root; walks
    // too far out to come back in the remaining steps are dropped
    let mut ways = vec![0u128; len + 2];
    ways[0] = 1;
    for step in 0..len {
        let reach = (step + 1).min(len - step - 1);
        let mut next = vec![0u128; len + 2];
        for k in 0..=(reach + 1).min(len) {
            let w = ways[k];
            if w == 0 {
                continue;
            }
            if k == 0 {
                if reach == 0 {
                    continue;
                }
                next[1] = next[1]
                    .checked_add(w.checked_mul(d as u128).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
            } else {
                next[k - 1] = next[k - 1].checked_add(w).ok_or_else(overflow)?;
                if k < reach {
                    next[k + 1] = next[k + 1]
                        .checked_add(w.checked_mul(d as u128 - 1).ok_or_else(overflow)?)
                        .ok_or_else(overflow)?;
                }
            }
        }
        ways = next;
    }
    Ok(ways[0])
}

/// `tree_walk_count(d, 2m) / (d-1)^m`, which tends to `C_m` as d grows.
pub fn free_clt_scaled_moment(d: u32, m: u32) -> Result<f64> {
    if d < 3 {
        return Err(LabError::usage(format!("free CLT scaling needs d >= 3, got {d}")));
    }
    let count = tree_walk_count(d, 2 * m)?;
    Ok(count as f64 / ((d - 1) as f64).powi(m as i32))
}

/// Probability weights on a square lattice of `n × n` cells covering
/// `[lo_x, lo_x + n h] × [lo_y, lo_y + n h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarDensity {
    lo: [f64; 2],
    cell: f64,
    n: usize,
    weights: Vec<f64>,
}

impl PlanarDensity {
    pub fn new(lo: [f64; 2], cell: f64, n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || weights.len() != n * n {
            return Err(LabError::usage("planar density needs n*n weights"));
        }
        if !(cell > 0.0) {
            return Err(LabError::usage("cell size must be positive"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LabError::usage("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LabError::usage("planar density has no mass"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { lo, cell, n, weights })
    }

    /// Cell masses from a (not necessarily normalized) density on the square
    /// `[-half_width, half_width]²`, averaged over `sub × sub` points per cell.
    pub fn from_density(
        half_width: f64,
        n: usize,
        sub: usize,
        density: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let cell = 2.0 * half_width / n as f64;
        let lo = [-half_width, -half_width];
        let sub = sub.max(1);
        let mut weights = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                let mut acc = 0.0;
                for sy in 0..sub {
                    for sx in 0..sub {
                        let x = lo[0] + (ix as f64 + (sx as f64 + 0.5) / sub as f64) * cell;
                        let y = lo[1] + (iy as f64 + (sy as f64 + 0.5) / sub as f64) * cell;
                        acc += density(x, y).max(0.0);
                    }
                }
                weights.push(acc);
            }
        }
        let density = Self::new(lo, cell, n, weights)?;
        let edge_mass = density.edge_mass();
        if edge_mass > 0.0 {
            return Err(LabError::usage(format!(
                "bounding box does not strictly contain the support (edge cells carry mass {edge_mass:e})"
            )));
        }
        Ok(density)
    }

    /// Uniform law on the disc of the given radius centered at the origin.
    pub fn uniform_disc(radius: f64, n: usize) -> Result<Self> {
        let half = radius * (1.0 + 4.0 / n as f64);
        Self::from_density(half, n, 8, |x, y| {
            if x * x + y * y <= radius * radius {
                1.0
            } else {
                0.0
            }
        })
    }

    fn edge_mass(&self) -> f64 {
        let n = self.n;
        (0..n)
            .flat_map(|k| [(0, k), (n - 1, k), (k, 0), (k, n - 1)])
            .map(|(ix, iy)| self.weights[iy * n + ix])
            .sum()
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.lo[0] + (ix as f64 + 0.5) * self.cell,
            self.lo[1] + (iy as f64 + 0.5) * self.cell,
        ]
    }

    /// Occupied cells as `(center, weight)`.
    pub fn cells(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        (0..self.n * self.n)
            .filter(move |&k| self.weights[k] > 0.0)
            .map(move |k| (self.center(k % self.n, k / self.n), self.weights[k]))
    }

    pub fn cell_diameter(&self) -> f64 {
        self.cell * std::f64::consts::SQRT_2
    }

    pub fn second_moment(&self) -> f64 {
        self.cells().map(|(c, w)| w * (c[0] * c[0] + c[1] * c[1])).sum()
    }

    /// `Σ_cells w · f(center)`.
    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.cells().map(|(c, w)| w * f(c)).sum()
    }

    /// Largest distance of an occupied cell center from the origin.
    pub fn support_radius(&self) -> f64 {
        self.cells()
            .map(|(c, _)| (c[0] * c[0] + c[1] * c[1]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Double sum of a translation-invariant radial kernel against a planar
/// density, split into the off-diagonal part (distinct cells, kernel at the
/// distance between centers) and the diagonal part (`Σ w²` times
/// `kernel(self_distance)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSum {
    pub off_diagonal: f64,
    pub diagonal: f64,
}

impl PairSum {
    pub fn total(&self) -> f64 {
        self.off_diagonal + self.diagonal
    }
}

/// `Σ_{a,b} w_a w_b k(|c_a - c_b|)` computed through the autocorrelation of
/// the weights (2-D FFT on a zero-padded lattice), so the cost is
/// `O(n² log n)` rather than quadratic in the number of cells.
pub fn planar_pair_sum(mu: &PlanarDensity, kernel: impl Fn(f64) -> f64, self_distance: f64) -> PairSum {
    let n = mu.n;
    let p = 2 * n;
    let mut grid = vec![Complex::new(0.0, 0.0); p * p];
    for iy in 0..n {
        for ix in 0..n {
            grid[iy * p + ix].re = mu.weights[iy * n + ix];
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    fft2(&mut grid, p, fwd.as_ref());
    for z in grid.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    fft2(&mut grid, p, inv.as_ref());
    let scale = 1.0 / (p * p) as f64;

    let autocorr = |dx: isize, dy: isize| -> f64 {
        let ix = dx.rem_euclid(p as isize) as usize;
        let iy = dy.rem_euclid(p as isize) as usize;
        grid[iy * p + ix].re * scale
    };
    let reach = n as isize - 1;
    let mut off = 0.0;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if dx == 0 && dy == 0 {
                continue;
            }
            let a = autocorr(dx, dy);
            if a.abs() < 1e-300 {
                continue;
            }
            let r = mu.cell * ((dx * dx + dy * dy) as f64).sqrt();
            off += a * kernel(r);
        }
    }
    let self_mass: f64 = mu.weights.iter().map(|w| w * w).sum();
    PairSum {
        off_diagonal: off,
        diagonal: self_mass * kernel(self_distance),
    }
}

fn fft2(grid: &mut [Complex<f64>], p: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in grid.chunks_exact_mut(p) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); p];
    for x in 0..p {
        for y in 0..p {
            column[y] = grid[y * p + x];
        }
        fft.process(&mut column);
        for y in 0..p {
            grid[y * p + x] = column[y];
        }
    }
}

/// `χ(μ) = ∬ log|x - y| dμ dμ` on a lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEnergy {
    /// Sum over distinct cells.
    pub off_diagonal: f64,
    /// Self-interaction correction `Σ w² log(½ · cell diameter)`.
    pub diagonal: f64,
    /// Set when the measure sits in a single cell; the value is then -∞.
    pub degenerate: bool,
}

impl LogEnergy {
    pub fn total(&self) -> f64 {
        self.off_diagonal + self.diagonal
    }

    fn degenerate() -> Self {
        Self {
            off_diagonal: f64::NEG_INFINITY,
            diagonal: f64::NEG_INFINITY,
            degenerate: true,
        }
    }
}

/// Voiculescu's log-energy of a planar lattice measure.
pub fn log_energy(mu: &PlanarDensity) -> LogEnergy {
    if mu.cells().count() < 2 {
        return LogEnergy::degenerate();
    }
    let sums = planar_pair_sum(mu, f64::ln, 0.5 * mu.cell_diameter());
    LogEnergy {
        off_diagonal: sums.off_diagonal,
        diagonal: sums.diagonal,
        degenerate: false,
    }
}

/// Voiculescu's log-energy of a density on the line (mass `f_i Δx` per cell,
/// self-distance half a cell).
pub fn log_energy_line(f: &GridDensity) -> LogEnergy {
    let masses: Vec<f64> = f.values().iter().map(|v| v * f.step()).collect();
    if masses.iter().filter(|&&m| m > 0.0).count() < 2 {
        return LogEnergy::degenerate();
    }
    let sums = line_pair_sum(f, f64::ln, 0.5 * f.step());
    LogEnergy {
        off_diagonal: sums.off_diagonal,
        diagonal: sums.diagonal,
        degenerate: false,
    }
}

/// Direct `O(M²)` double sum on a line grid, deterministic order.
pub fn line_pair_sum(f: &GridDensity, kernel: impl Fn(f64) -> f64, self_distance: f64) -> PairSum {
    let step = f.step();
    let masses: Vec<f64> = f.values().iter().map(|v| v * step).collect();
    let m = masses.len();
    let table: Vec<f64> = (0..m).map(|k| if k == 0 { 0.0 } else { kernel(k as f64 * step) }).collect();
    let mut off = 0.0;
    for i in 0..m {
        if masses[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in (i + 1)..m {
            row += masses[j] * table[j - i];
        }
        off += 2.0 * masses[i] * row;
    }
    let self_mass: f64 = masses.iter().map(|w| w * w).sum();
    PairSum {
        off_diagonal: off,
        diagonal: self_mass * kernel(self_distance),
    }
}

/// Logarithmic potential `U_μ(z) = -∫ log|z - λ| dμ(λ)`. The cell containing
/// `z`, if any, contributes at distance half a cell diameter.
pub fn log_potential(mu: &PlanarDensity, z: [f64; 2]) -> f64 {
    let fx = (z[0] - mu.lo[0]) / mu.cell;
    let fy = (z[1] - mu.lo[1]) / mu.cell;
    let home = if fx >= 0.0 && fy >= 0.0 && (fx as usize) < mu.n && (fy as usize) < mu.n {
        Some((fx as usize, fy as usize))
    } else {
        None
    };
    let self_distance = 0.5 * mu.cell_diameter();
    let mut sum = 0.0;
    for iy in 0..mu.n {
        for ix in 0..mu.n {
            let w = mu.weights[iy * mu.n + ix];
            if w == 0.0 {
                continue;
            }
            let r = if home == Some((ix, iy)) {
                self_distance
            } else {
                let c = mu.center(ix, iy);
                ((z[0] - c[0]).powi(2) + (z[1] - c[1]).powi(2)).sqrt().max(self_distance)
            };
            sum -= w * r.ln();
        }
    }
    sum
}

/// Point mass at `z` represented on a small lattice around it.
pub fn point_mass(z: [f64; 2], cell: f64) -> PlanarDensity {
    let n = 5;
    let lo = [z[0] - 2.5 * cell, z[1] - 2.5 * cell];
    let mut weights = vec![0.0; n * n];
    weights[2 * n + 2] = 1.0;
    PlanarDensity::new(lo, cell, n, weights).expect("valid point mass")
}
