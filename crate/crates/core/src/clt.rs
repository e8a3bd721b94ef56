//! Densities on a uniform 1-D grid: Boltzmann entropy, Fisher information,
//! convolution, the doubling step of the central limit theorem, the heat
//! semigroup, and the de Bruijn identity as a numeric cross-check.
//!
//! A [`GridDensity`] is cell based: cell `i` covers
//! `[origin + iΔx, origin + (i+1)Δx)` and carries the value at its center.

use std::fmt::Write as _;

use crate::error::{LabError, Result};

const MASS_TOL: f64 = 1e-9;
const MIN_CELLS: usize = 8;
const FISHER_FLOOR: f64 = 1e-300;
const TAIL_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    origin: f64,
    step: f64,
    values: Vec<f64>,
}

/// Fisher information with a flag telling whether the 1e-300 floor was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    pub value: f64,
    pub floored: bool,
}

impl GridDensity {
    /// Validated constructor: at least 8 finite non-negative cells of unit mass.
    pub fn new(origin: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !origin.is_finite() {
            return Err(LabError::usage("grid step must be positive and origin finite"));
        }
        if values.len() < MIN_CELLS {
            return Err(LabError::usage(format!("a grid density needs at least {MIN_CELLS} cells")));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LabError::usage("density values must be finite and non-negative"));
        }
        let mass: f64 = values.iter().sum::<f64>() * step;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(LabError::usage(format!("density has mass {mass}, expected 1")));
        }
        Ok(Self { origin, step, values })
    }

    /// Normalizes non-negative cell values to unit mass.
    pub fn normalized(origin: f64, step: f64, mut values: Vec<f64>) -> Result<Self> {
        let mass: f64 = values.iter().sum::<f64>() * step;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(LabError::usage("density has no mass"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(origin, step, values)
    }

    /// Samples `f` at the cell centers of `[lo, hi]` and normalizes.
    pub fn from_fn(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let cells = cell_count(lo, hi, step)?;
        let values = (0..cells).map(|i| f(lo + (i as f64 + 0.5) * step).max(0.0)).collect();
        Self::normalized(lo, step, values)
    }

    /// Gaussian N(mean, sigma²) sampled on `[lo, hi]`.
    pub fn gaussian(lo: f64, hi: f64, step: f64, mean: f64, sigma: f64) -> Result<Self> {
        Self::from_fn(lo, hi, step, |x| {
            let z = (x - mean) / sigma;
            (-0.5 * z * z).exp()
        })
    }

    /// Uniform law on `[a, b]` embedded in the grid `[lo, hi]`, using the exact
    /// cell overlap so partially covered edge cells get fractional mass.
    pub fn uniform(lo: f64, hi: f64, step: f64, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(LabError::usage("uniform support must satisfy a < b"));
        }
        let cells = cell_count(lo, hi, step)?;
        let values = (0..cells)
            .map(|i| {
                let left = lo + i as f64 * step;
                let overlap = (left + step).min(b) - left.max(a);
                overlap.max(0.0) / step
            })
            .collect();
        Self::normalized(lo, step, values)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Center of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.step
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.x(i) * v)
            .sum::<f64>()
            * self.step
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.x(i) - m).powi(2) * v)
            .sum::<f64>()
            * self.step
    }

    /// Linear interpolation between cell centers; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let u = (x - self.origin) / self.step - 0.5;
        let i = u.floor();
        let frac = u - i;
        let at = |k: f64| {
            if k < 0.0 || k >= self.values.len() as f64 {
                0.0
            } else {
                self.values[k as usize]
            }
        };
        (1.0 - frac) * at(i) + frac * at(i + 1.0)
    }

    /// Density of `αX` resampled onto this grid by linear interpolation.
    pub fn dilate(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(LabError::usage("dilation factor must be positive"));
        }
        let values = (0..self.len())
            .map(|i| self.interpolate(self.x(i) / alpha) / alpha)
            .collect();
        Self::normalized(self.origin, self.step, values)
    }

    /// Same values on a grid shifted by `cells` grid steps.
    pub fn shifted(&self, cells: i64) -> Self {
        Self {
            origin: self.origin + cells as f64 * self.step,
            step: self.step,
            values: self.values.clone(),
        }
    }

    fn same_grid(&self, other: &Self) -> bool {
        (self.step - other.step).abs() <= 1e-12 * self.step
    }
}

fn cell_count(lo: f64, hi: f64, step: f64) -> Result<usize> {
    if !(hi > lo) || !(step > 0.0) {
        return Err(LabError::usage("grid needs lo < hi and a positive step"));
    }
    let cells = ((hi - lo) / step).round();
    if cells < MIN_CELLS as f64 {
        return Err(LabError::usage(format!("grid has fewer than {MIN_CELLS} cells")));
    }
    Ok(cells as usize)
}

/// Boltzmann entropy `-Σ f log f Δx` with `0 log 0 = 0`.
pub fn entropy(f: &GridDensity) -> f64 {
    -f.values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
        * f.step
}

/// Fisher information `Σ (f')²/f Δx`, with centered differences in the
/// interior and one-sided differences in the two end cells. Values below
/// 1e-300 are floored and the event is flagged.
pub fn fisher_information(f: &GridDensity) -> FisherInfo {
    let v = &f.values;
    let n = v.len();
    let mut floored = false;
    let mut sum = 0.0;
    for i in 0..n {
        let d = if i == 0 {
            (v[1] - v[0]) / f.step
        } else if i == n - 1 {
            (v[n - 1] - v[n - 2]) / f.step
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * f.step)
        };
        if d == 0.0 {
            continue;
        }
        let mut fi = v[i];
        if fi < FISHER_FLOOR {
            fi = FISHER_FLOOR;
            floored = true;
        }
        sum += d * d / fi;
    }
    FisherInfo {
        value: sum * f.step,
        floored,
    }
}

/// Density of `X + Y` for independent X ~ f, Y ~ g on the product grid.
pub fn convolve(f: &GridDensity, g: &GridDensity) -> Result<GridDensity> {
    if !f.same_grid(g) {
        return Err(LabError::usage(format!(
            "grid steps differ: {} vs {}",
            f.step, g.step
        )));
    }
    let step = f.step;
    let mut out = vec![0.0; f.len() + g.len() - 1];
    for (i, &fi) in f.values.iter().enumerate() {
        if fi == 0.0 {
            continue;
        }
        let w = fi * step;
        for (o, &gj) in out[i..i + g.len()].iter_mut().zip(&g.values) {
            *o += w * gj;
        }
    }
    // centers add: (a + (i+½)Δ) + (b + (j+½)Δ) = (a + b + ½Δ) + (i+j+½)Δ
    GridDensity::normalized(f.origin + g.origin + 0.5 * step, step, out)
}

/// One doubling step of the CLT: the density of `(X + X')/√2` for X, X'
/// i.i.d. with centered density `f`, resampled on the grid of `f`.
pub fn clt_step(f: &GridDensity) -> Result<GridDensity> {
    let mean = f.mean();
    if mean.abs() > 1e-6 {
        return Err(LabError::usage(format!("clt_step needs a centered density, mean is {mean}")));
    }
    let sum = convolve(f, f)?;
    let scale = std::f64::consts::SQRT_2;
    let values = (0..f.len())
        .map(|i| scale * sum.interpolate(scale * f.x(i)))
        .collect();
    GridDensity::normalized(f.origin, f.step, values)
}

/// Centered Gaussian of variance `t` on `2 * half + 1` cells of width `step`.
fn gaussian_kernel(step: f64, t: f64, half: usize) -> GridDensity {
    let cells = 2 * half + 1;
    let origin = -(half as f64 + 0.5) * step;
    let values = (0..cells)
        .map(|i| {
            let x = origin + (i as f64 + 0.5) * step;
            (-0.5 * x * x / t).exp()
        })
        .collect();
    GridDensity::normalized(origin, step, values).expect("gaussian kernel has positive mass")
}

/// Heat semigroup `P_t f = f * N(0, t)`, restricted back onto the grid of
/// `f` and renormalized.
pub fn heat_evolve(f: &GridDensity, t: f64) -> Result<GridDensity> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::usage(format!("heat time must be positive, got {t}")));
    }
    // The kernel spans at least 8 standard deviations and never stops short
    // of the grid width: a cut inside the grid would leave exact zeros next to
    // positive cells, which the Fisher floor turns into spurious blow-ups.
    let half = ((TAIL_SIGMAS * t.sqrt() / f.step).ceil() as usize)
        .max(f.len())
        .max(MIN_CELLS / 2);
    let kernel = gaussian_kernel(f.step, t, half);
    let full = convolve(f, &kernel)?;
    let values = full.values[half..half + f.len()].to_vec();
    GridDensity::normalized(f.origin, f.step, values)
}

/// `|[S(P_{t+h}f) − S(P_{t−h}f)]/(2h) − ½ F(P_t f)|`.
pub fn de_bruijn_residual(f: &GridDensity, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || h >= t / 2.0 {
        return Err(LabError::usage(format!("de Bruijn step needs 0 < h < t/2, got h={h}, t={t}")));
    }
    let plus = entropy(&heat_evolve(f, t + h)?);
    let minus = entropy(&heat_evolve(f, t - h)?);
    let fisher = fisher_information(&heat_evolve(f, t)?).value;
    Ok(((plus - minus) / (2.0 * h) - 0.5 * fisher).abs())
}

/// CSV with header `x,f`, one row per cell center.
pub fn write_density_csv(f: &GridDensity) -> String {
    let mut out = String::from("x,f\n");
    for (i, v) in f.values.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{}",
            crate::measures::fmt_f64(f.x(i)),
            crate::measures::fmt_f64(*v)
        );
    }
    out
}

/// Parses the `x,f` CSV format. Cell centers must be equally spaced.
pub fn parse_density_csv(text: &str) -> Result<GridDensity> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "x,f" => {}
        _ => return Err(LabError::parse(1, "expected header x,f")),
    }
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    for (ln, line) in lines {
        let (x, f) = line
            .split_once(',')
            .ok_or_else(|| LabError::parse(ln + 1, "expected two columns"))?;
        let x: f64 = x.trim().parse().map_err(|_| LabError::parse(ln + 1, "bad x value"))?;
        let f: f64 = f.trim().parse().map_err(|_| LabError::parse(ln + 1, "bad f value"))?;
        xs.push(x);
        fs.push(f);
    }
    if xs.len() < 2 {
        return Err(LabError::parse(1, "density needs at least two rows"));
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    for (k, w) in xs.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0) {
            return Err(LabError::parse(k + 3, "grid is not uniformly spaced"));
        }
    }
    GridDensity::normalized(xs[0] - 0.5 * step, step, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const GAUSS_ENTROPY: f64 = 1.418_938_533_204_672_7;

    fn std_gauss(step: f64) -> GridDensity {
        GridDensity::gaussian(-8.0, 8.0, step, 0.0, 1.0).unwrap()
    }

    #[test]
    fn constructor_validation() {
        assert!(GridDensity::new(0.0, 0.1, vec![1.0; 5]).is_err());
        assert!(GridDensity::new(0.0, 0.125, vec![1.0; 8]).is_ok());
        assert!(GridDensity::new(0.0, 0.125, vec![2.0; 8]).is_err());
        assert!(GridDensity::new(0.0, 0.125, vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn entropy_of_uniforms_and_gaussian() {
        let unit = GridDensity::uniform(0.0, 1.0, 1.0 / 64.0, 0.0, 1.0).unwrap();
        assert_eq!(entropy(&unit), 0.0);
        let two = GridDensity::uniform(0.0, 2.0, 1.0 / 64.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(entropy(&two), 2f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(entropy(&std_gauss(1.0 / 512.0)), GAUSS_ENTROPY, epsilon = 1e-4);
    }

    #[test]
    fn fisher_of_gaussians_and_shift() {
        let g1 = std_gauss(1.0 / 256.0);
        let f1 = fisher_information(&g1);
        assert_abs_diff_eq!(f1.value, 1.0, epsilon = 1e-3);
        assert!(!f1.floored);
        let g2 = GridDensity::gaussian(-16.0, 16.0, 1.0 / 256.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(fisher_information(&g2).value, 0.25, epsilon = 1e-3);
        assert_eq!(fisher_information(&g1.shifted(1)), f1);
    }

    #[test]
    fn fisher_flags_boundary_zeros() {
        let u = GridDensity::uniform(-2.0, 2.0, 1.0 / 64.0, -1.01, 1.01).unwrap();
        let fi = fisher_information(&u);
        assert!(fi.floored && fi.value > 0.0);
    }

    #[test]
    fn convolve_gaussians_and_uniforms() {
        let step = 1.0 / 128.0;
        let g = std_gauss(step);
        let gg = convolve(&g, &g).unwrap();
        assert_abs_diff_eq!(gg.mean(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(gg.variance(), 2.0, epsilon = 1e-6);
        let sup = (0..gg.len())
            .map(|i| {
                let x = gg.x(i);
                let exact = (-x * x / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
                (gg.values()[i] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "{sup}");

        let u = GridDensity::uniform(0.0, 1.0, step, 0.0, 1.0).unwrap();
        let tri = convolve(&u, &u).unwrap();
        for i in 0..tri.len() {
            let x = tri.x(i);
            let exact = if x < 1.0 { x } else { 2.0 - x };
            assert!((tri.values()[i] - exact.max(0.0)).abs() < 2.0 * step);
        }
        assert_abs_diff_eq!(tri.mean(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn convolve_with_narrow_spike_is_near_identity() {
        let step = 1.0 / 128.0;
        let f = GridDensity::gaussian(-6.0, 6.0, step, 0.0, 1.0).unwrap();
        let spike = GridDensity::gaussian(-8.0 * step, 8.0 * step, step, 0.0, step / 4.0).unwrap();
        let out = convolve(&f, &spike).unwrap();
        let dev = (0..f.len())
            .map(|i| (out.interpolate(f.x(i)) - f.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!(dev < step, "{dev}");
    }

    #[test]
    fn convolve_rejects_mismatched_steps() {
        let a = std_gauss(0.01);
        let b = std_gauss(0.02);
        assert!(matches!(convolve(&a, &b), Err(LabError::Usage(_))));
    }

    #[test]
    fn clt_step_keeps_gaussian_and_raises_uniform_entropy() {
        let g = std_gauss(1.0 / 512.0);
        let next = clt_step(&g).unwrap();
        let sup = g
            .values()
            .iter()
            .zip(next.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "{sup}");

        let r3 = 3f64.sqrt();
        let u = GridDensity::uniform(-8.0, 8.0, 1.0 / 512.0, -r3, r3).unwrap();
        let mut s = entropy(&u);
        assert_abs_diff_eq!(s, (2.0 * r3).ln(), epsilon = 1e-3);
        let mut f = u;
        for _ in 0..3 {
            let next = clt_step(&f).unwrap();
            assert_abs_diff_eq!(next.variance(), f.variance(), epsilon = 1e-5);
            let s_next = entropy(&next);
            assert!(s_next > s);
            s = s_next;
            f = next;
        }
        assert!(s < GAUSS_ENTROPY);
    }

    #[test]
    fn clt_step_rejects_uncentered() {
        let g = GridDensity::gaussian(-8.0, 8.0, 1.0 / 64.0, 0.5, 1.0).unwrap();
        assert!(matches!(clt_step(&g), Err(LabError::Usage(_))));
    }

    #[test]
    fn heat_semigroup_properties() {
        let step = 1.0 / 128.0;
        let g = GridDensity::gaussian(-12.0, 12.0, step, 0.0, 1.0).unwrap();
        let out = heat_evolve(&g, 0.7).unwrap();
        assert_abs_diff_eq!(out.variance(), 1.7, epsilon = 1e-5);

        let r3 = 3f64.sqrt();
        let u = GridDensity::uniform(-12.0, 12.0, step, -r3, r3).unwrap();
        let two_steps = heat_evolve(&heat_evolve(&u, 0.3).unwrap(), 0.5).unwrap();
        let one_step = heat_evolve(&u, 0.8).unwrap();
        let sup = two_steps
            .values()
            .iter()
            .zip(one_step.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-8, "{sup}");

        let mut last = entropy(&u);
        for t in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let s = entropy(&heat_evolve(&u, t).unwrap());
            assert!(s > last);
            last = s;
        }
        assert!(heat_evolve(&u, 0.0).is_err());
    }

    #[test]
    fn de_bruijn_gaussian() {
        let g = std_gauss(1.0 / 512.0);
        let r = de_bruijn_residual(&g, 1.0, 1e-3).unwrap();
        assert!(r < 1e-4, "{r}");
        assert!(de_bruijn_residual(&g, 1.0, 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = GridDensity::gaussian(-4.0, 4.0, 0.125, 0.0, 1.0).unwrap();
        let back = parse_density_csv(&write_density_csv(&g)).unwrap();
        assert_abs_diff_eq!(back.origin(), g.origin(), epsilon = 1e-12);
        for (a, b) in back.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(parse_density_csv("a,b\n1,2\n").is_err());
    }
}
