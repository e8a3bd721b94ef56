//! Equilibrium measures, Lagrange conditions and the limiting energy.

use std::f64::consts::PI;

use super::{configuration_energy, GasModel, InteractionKernel, COINCIDENCE};
use crate::clt::GridDensity;
use crate::error::{LabError, Result};
use crate::free::{line_pair_sum, planar_pair_sum, PlanarDensity};
use crate::measures::{norm, norm_diff, ParticleConfiguration, RadialCdf};
use crate::quadrature::GaussLegendre;

const SHELL_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumKind {
    UniformBall { radius: f64 },
    /// Semicircle on `[-radius, radius]`.
    Semicircle { radius: f64 },
    Unknown,
}

#[derive(Debug, Clone)]
pub struct EquilibriumPrediction {
    pub kind: EquilibriumKind,
    pub radial_cdf: Option<RadialCdf>,
    /// Value of `U_μ + V` on the support.
    pub modified_robin_constant: Option<f64>,
}

impl EquilibriumPrediction {
    fn unknown() -> Self {
        Self {
            kind: EquilibriumKind::Unknown,
            radial_cdf: None,
            modified_robin_constant: None,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            EquilibriumKind::UniformBall { radius } | EquilibriumKind::Semicircle { radius } => Some(radius),
            EquilibriumKind::Unknown => None,
        }
    }

    /// `∫ |x|² dμ`.
    pub fn second_radial_moment(&self, dimension: usize) -> Option<f64> {
        match self.kind {
            EquilibriumKind::UniformBall { radius } => {
                let d = dimension as f64;
                Some(d * radius * radius / (d + 2.0))
            }
            EquilibriumKind::Semicircle { radius } => Some(radius * radius / 4.0),
            EquilibriumKind::Unknown => None,
        }
    }

    /// Minimum of the rate function, `I(μ) = (C + ∫V dμ) / 2`, which follows
    /// from `U_μ + V = C` on the support.
    pub fn minimum_energy(&self, model: &GasModel) -> Option<f64> {
        let c = model.potential.quadratic_coefficient()?;
        let robin = self.modified_robin_constant?;
        let m2 = self.second_radial_moment(model.dimension)?;
        Some(0.5 * (robin + c * m2))
    }
}

/// Equilibrium measure for quadratic confinement `c|x|²` with a Coulomb kernel
/// (uniform ball by Gauss averaging) or a logarithmic kernel on the line
/// (semicircle). Anything else is reported as unknown.
pub fn equilibrium_prediction(model: &GasModel) -> EquilibriumPrediction {
    let Some(c) = model.potential.quadratic_coefficient() else {
        return EquilibriumPrediction::unknown();
    };
    let d = model.dimension;
    if d == 1 {
        if let InteractionKernel::Log2d(s) = model.kernel {
            let a = (s / c).sqrt();
            return EquilibriumPrediction {
                kind: EquilibriumKind::Semicircle { radius: a },
                radial_cdf: Some(RadialCdf::Semicircle { radius: a }),
                modified_robin_constant: Some(s * (0.5 - (0.5 * a).ln())),
            };
        }
    }
    if !model.kernel.is_coulomb_in(d) {
        return EquilibriumPrediction::unknown();
    }
    let (radius, robin) = match d {
        1 => {
            let r = 1.0 / (2.0 * c);
            (r, -0.5 * r)
        }
        2 => {
            let s = match model.kernel {
                InteractionKernel::Log2d(s) => s,
                _ => 1.0,
            };
            let r = (s / (2.0 * c)).sqrt();
            (r, s * (0.5 - r.ln()))
        }
        _ => {
            let df = d as f64;
            let r = ((df - 2.0) / (2.0 * c)).powf(1.0 / df);
            (r, df / (2.0 * r.powf(df - 2.0)))
        }
    };
    EquilibriumPrediction {
        kind: EquilibriumKind::UniformBall { radius },
        radial_cdf: Some(RadialCdf::UniformBall { dimension: d, radius }),
        modified_robin_constant: Some(robin),
    }
}

/// `U(r) = ∫ W(x, y) dμ(y)` at `|x| = r` for μ uniform on the ball of radius
/// `radius`. By Newton's theorem a uniform shell of radius ρ acts as
/// `k(max(r, ρ))`, leaving a one-dimensional quadrature in ρ.
pub fn ball_potential(kernel: &InteractionKernel, dimension: usize, radius: f64, r: f64) -> Result<f64> {
    if !kernel.is_coulomb_in(dimension) {
        return Err(LabError::usage(format!(
            "shell averaging needs the Coulomb kernel of dimension {dimension}, got {kernel:?}"
        )));
    }
    if r >= radius {
        return Ok(kernel.radial(r));
    }
    let d = dimension as f64;
    let inner = if r > 0.0 { kernel.radial(r) * (r / radius).powf(d) } else { 0.0 };
    let rule = shell_rule();
    let outer = rule.integrate(r, radius, |rho| kernel.radial(rho) * d * rho.powf(d - 1.0) / radius.powf(d));
    Ok(inner + outer)
}

fn shell_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(SHELL_NODES))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeReport {
    /// `max - min` of `U + V` over probes inside the predicted support.
    pub inside_variation: f64,
    /// `max(0, C̄ - min_outside(U + V))` with `C̄` the inside mean.
    pub outside_violation: f64,
    pub inside_mean: f64,
    pub inside_probes: usize,
    pub outside_probes: usize,
    /// Probes dropped because they coincide with a sample point.
    pub skipped_probes: usize,
}

fn ball_radius(prediction: &EquilibriumPrediction) -> Result<f64> {
    match prediction.kind {
        EquilibriumKind::UniformBall { radius } => Ok(radius),
        _ => Err(LabError::usage("Lagrange check needs a uniform-ball prediction")),
    }
}

fn summarize(radius: f64, values: &[(f64, f64)], skipped: usize) -> Result<LagrangeReport> {
    let inside: Vec<f64> = values.iter().filter(|(r, _)| *r < radius).map(|&(_, v)| v).collect();
    let outside: Vec<f64> = values.iter().filter(|(r, _)| *r > radius).map(|&(_, v)| v).collect();
    if inside.is_empty() {
        return Err(LabError::usage("no usable probes inside the predicted support"));
    }
    let max = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = inside.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    let outside_min = outside.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LagrangeReport {
        inside_variation: max - min,
        outside_violation: if outside.is_empty() { 0.0 } else { (mean - outside_min).max(0.0) },
        inside_mean: mean,
        inside_probes: inside.len(),
        outside_probes: outside.len(),
        skipped_probes: skipped,
    })
}

/// Lagrange check with `U` estimated by the empirical kernel average
/// `(1/N) Σ_i W(z, x_i)`, averaged over all given snapshots.
pub fn lagrange_residual(
    samples: &[ParticleConfiguration],
    model: &GasModel,
    prediction: &EquilibriumPrediction,
    probes: &[Vec<f64>],
) -> Result<LagrangeReport> {
    let radius = ball_radius(prediction)?;
    if samples.is_empty() {
        return Err(LabError::usage("Lagrange check needs at least one snapshot"));
    }
    let d = model.dimension;
    if samples.iter().any(|s| s.dimension() != d) || probes.iter().any(|p| p.len() != d) {
        return Err(LabError::usage("samples and probes must match the model dimension"));
    }
    let mut values = Vec::with_capacity(probes.len());
    let mut skipped = 0;
    'probe: for z in probes {
        let mut u = 0.0;
        for snap in samples {
            let mut acc = 0.0;
            for p in snap.points() {
                let r = norm_diff(z, p);
                if r < COINCIDENCE {
                    skipped += 1;
                    continue 'probe;
                }
                acc += model.kernel.radial(r);
            }
            u += acc / snap.len() as f64;
        }
        u /= samples.len() as f64;
        values.push((norm(z), u + model.potential.eval(z)));
    }
    summarize(radius, &values, skipped)
}

/// Lagrange check against the exact potential of the predicted ball.
pub fn lagrange_residual_exact(
    model: &GasModel,
    prediction: &EquilibriumPrediction,
    probes: &[Vec<f64>],
) -> Result<LagrangeReport> {
    let radius = ball_radius(prediction)?;
    let mut values = Vec::with_capacity(probes.len());
    for z in probes {
        let r = norm(z);
        let u = ball_potential(&model.kernel, model.dimension, radius, r)?;
        values.push((r, u + model.potential.eval(z)));
    }
    summarize(radius, &values, 0)
}

/// Probe points on spheres of the given radii: `per_shell` directions each,
/// evenly spread (angles in d = 2, a Fibonacci lattice in d = 3, the two
/// signs in d = 1, coordinate axes otherwise).
pub fn probe_points(dimension: usize, radii: &[f64], per_shell: usize) -> Vec<Vec<f64>> {
    let mut probes = Vec::new();
    for &r in radii {
        match dimension {
            1 => {
                probes.push(vec![r]);
                probes.push(vec![-r]);
            }
            2 => {
                for k in 0..per_shell {
                    let t = 2.0 * PI * (k as f64 + 0.5) / per_shell as f64;
                    probes.push(vec![r * t.cos(), r * t.sin()]);
                }
            }
            3 => {
                let golden = PI * (3.0 - 5f64.sqrt());
                for k in 0..per_shell {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / per_shell as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    probes.push(vec![r * rho * t.cos(), r * rho * t.sin(), r * z]);
                }
            }
            d => {
                for k in 0..per_shell {
                    let mut p = vec![0.0; d];
                    p[k % d] = if (k / d) % 2 == 0 { r } else { -r };
                    probes.push(p);
                }
            }
        }
    }
    probes
}

/// Limiting energy input: particles use the off-diagonal pair sum, densities
/// use lattice quadrature with the half-cell self-interaction.
#[derive(Debug, Clone, Copy)]
pub enum RateInput<'a> {
    Particles(&'a ParticleConfiguration),
    Line(&'a GridDensity),
    Planar(&'a PlanarDensity),
}

/// `I(μ) = ∫ V dμ + ½ ∬ W dμ dμ`.
pub fn rate_function(input: RateInput<'_>, model: &GasModel) -> Result<f64> {
    match input {
        RateInput::Particles(c) => Ok(configuration_energy(model, c)?.value),
        RateInput::Line(f) => {
            if model.dimension != 1 {
                return Err(LabError::usage("a line density needs a one-dimensional model"));
            }
            let values = f.values();
            let (first, last) = (values[0], values[values.len() - 1]);
            if first * f.step() > 1e-12 || last * f.step() > 1e-12 {
                return Err(LabError::usage(
                    "density reaches the grid edge; the support must be bounded inside the grid",
                ));
            }
            let v: f64 = (0..f.len()).map(|i| values[i] * f.step() * model.potential.radial(f.x(i).abs())).sum();
            let w = if model.kernel == InteractionKernel::None {
                0.0
            } else {
                line_pair_sum(f, |r| model.kernel.radial(r), 0.5 * f.step()).total()
            };
            Ok(v + 0.5 * w)
        }
        RateInput::Planar(mu) => {
            if model.dimension != 2 {
                return Err(LabError::usage("a planar density needs a two-dimensional model"));
            }
            let v = mu.integrate(|p| model.potential.eval(&p));
            let w = if model.kernel == InteractionKernel::None {
                0.0
            } else {
                planar_pair_sum(mu, |r| model.kernel.radial(r), 0.5 * mu.cell_diameter()).total()
            };
            Ok(v + 0.5 * w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::ConfinementPotential;

    fn model(d: usize, kernel: InteractionKernel, c: f64) -> GasModel {
        GasModel::new(d, 100, 1e4, ConfinementPotential::Quadratic(c), kernel).unwrap()
    }

    #[test]
    fn predicted_radii() {
        let r = |m: &GasModel| equilibrium_prediction(m).radius().unwrap();
        assert!((r(&model(2, InteractionKernel::Log2d(2.0), 1.0)) - 1.0).abs() < 1e-15);
        assert!((r(&model(3, InteractionKernel::Coulomb(3), 1.0)) - 0.5f64.cbrt()).abs() < 1e-15);
        assert!((r(&model(4, InteractionKernel::Coulomb(4), 1.0)) - 1.0).abs() < 1e-15);
        assert!((r(&model(1, InteractionKernel::Coulomb(1), 0.5)) - 1.0).abs() < 1e-15);
        assert!((r(&model(1, InteractionKernel::Log2d(2.0), 0.5)) - 2.0).abs() < 1e-15);
        let riesz = model(3, InteractionKernel::riesz(3, 1.0).unwrap(), 1.0);
        assert_eq!(equilibrium_prediction(&riesz).kind, EquilibriumKind::Unknown);
        let quartic = GasModel::new(
            2,
            10,
            100.0,
            ConfinementPotential::radial_power(4.0, 1.0).unwrap(),
            InteractionKernel::Log2d(2.0),
        )
        .unwrap();
        assert_eq!(equilibrium_prediction(&quartic).kind, EquilibriumKind::Unknown);
    }

    #[test]
    fn ball_potential_matches_closed_forms() {
        let k3 = InteractionKernel::Coulomb(3);
        let big_r = 0.5f64.cbrt();
        for r in [0.0, 0.2, 0.5, 0.79, 1.0, 2.0] {
            let exact = if r < big_r {
                (3.0 * big_r * big_r - r * r) / (2.0 * big_r.powi(3))
            } else {
                1.0 / r
            };
            assert!((ball_potential(&k3, 3, big_r, r).unwrap() - exact).abs() < 1e-12, "r={r}");
        }
        let k2 = InteractionKernel::Log2d(2.0);
        for r in [0.0, 0.3, 0.9, 1.5] {
            let exact = if r < 1.0 { 1.0 - r * r } else { -2.0 * f64::ln(r) };
            assert!((ball_potential(&k2, 2, 1.0, r).unwrap() - exact).abs() < 1e-7, "r={r}");
        }
    }

    #[test]
    fn robin_constant_is_the_center_value() {
        for (d, kernel, c) in [
            (1, InteractionKernel::Coulomb(1), 0.7),
            (2, InteractionKernel::Log2d(2.0), 1.0),
            (2, InteractionKernel::Coulomb(2), 0.5),
            (3, InteractionKernel::Coulomb(3), 1.0),
            (5, InteractionKernel::Coulomb(5), 2.0),
        ] {
            let m = model(d, kernel, c);
            let p = equilibrium_prediction(&m);
            let center = ball_potential(&kernel, d, p.radius().unwrap(), 0.0).unwrap();
            assert!((center - p.modified_robin_constant.unwrap()).abs() < 1e-7, "d={d}");
        }
    }

    #[test]
    fn probes_have_requested_radii() {
        for d in 1..=4 {
            for p in probe_points(d, &[0.5, 1.5], 12) {
                let r = norm(&p);
                assert!((r - 0.5).abs() < 1e-12 || (r - 1.5).abs() < 1e-12);
            }
        }
    }
}
