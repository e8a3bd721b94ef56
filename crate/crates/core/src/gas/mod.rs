//! Confined particle gases with pair repulsion.
//!
//! The Boltzmann law `∝ exp(-β_N I_N)` with
//! `I_N = (1/N) Σ V(x_i) + (1/N²) Σ_{i<j} W(x_i, x_j)` is sampled by
//! Metropolis-adjusted Langevin moves; equilibrium predictions and Lagrange
//! checks come from Gauss averaging for uniform balls.

mod energy;
mod equilibrium;
mod sampler;

pub use energy::{configuration_energy, energy_gradient, energy_gradient_with, Energy, Evaluation};
pub use equilibrium::{
    ball_potential, equilibrium_prediction, lagrange_residual, lagrange_residual_exact, probe_points, rate_function,
    EquilibriumKind, EquilibriumPrediction, LagrangeReport, RateInput,
};
pub use sampler::{mala_step, run_sampler, AcceptanceStats, Init, MalaChain, SamplerOptions, SamplerOutput, TracePoint};

use crate::error::{LabError, Result};

/// Distance below which two particles count as coincident.
pub const COINCIDENCE: f64 = 1e-12;

/// Pair interaction `W(x, y) = k(|x - y|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionKernel {
    /// Fundamental solution of the Laplacian: `-r` (d = 1), `log(1/r)` (d = 2),
    /// `r^(2-d)` (d >= 3).
    Coulomb(usize),
    /// `r^(alpha - d)` with `0 < alpha < d`.
    Riesz { dimension: usize, alpha: f64 },
    /// `s · log(1/r)` in any dimension.
    Log2d(f64),
    None,
}

/// Radial profile a kernel reduces to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Profile {
    /// `-r`
    NegLinear,
    /// `s · log(1/r)`
    Log(f64),
    /// `r^(-p)`, p > 0
    Power(f64),
    Zero,
}

impl InteractionKernel {
    pub fn riesz(dimension: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < dimension as f64) {
            return Err(LabError::usage(format!(
                "riesz kernel needs 0 < alpha < d, got alpha={alpha}, d={dimension}"
            )));
        }
        Ok(InteractionKernel::Riesz { dimension, alpha })
    }

    pub(crate) fn profile(&self) -> Profile {
        match *self {
            InteractionKernel::Coulomb(1) => Profile::NegLinear,
            InteractionKernel::Coulomb(2) => Profile::Log(1.0),
            InteractionKernel::Coulomb(d) => Profile::Power(d as f64 - 2.0),
            InteractionKernel::Riesz { dimension, alpha } => Profile::Power(dimension as f64 - alpha),
            InteractionKernel::Log2d(s) => Profile::Log(s),
            InteractionKernel::None => Profile::Zero,
        }
    }

    /// Whether `k(r) → +∞` as `r → 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self.profile(), Profile::Log(_) | Profile::Power(_))
    }

    /// `k(r)`.
    pub fn radial(&self, r: f64) -> f64 {
        match self.profile() {
            Profile::NegLinear => -r,
            Profile::Log(s) => -s * r.ln(),
            Profile::Power(p) => r.powf(-p),
            Profile::Zero => 0.0,
        }
    }

    /// `k'(r)`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        match self.profile() {
            Profile::NegLinear => -1.0,
            Profile::Log(s) => -s / r,
            Profile::Power(p) => -p * r.powf(-p - 1.0),
            Profile::Zero => 0.0,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial(crate::measures::norm_diff(x, y))
    }

    fn dimension_tag(&self) -> Option<usize> {
        match *self {
            InteractionKernel::Coulomb(d) => Some(d),
            InteractionKernel::Riesz { dimension, .. } => Some(dimension),
            _ => None,
        }
    }

    /// Whether the kernel is the Coulomb kernel of its dimension, so that
    /// Newton's shell theorem applies.
    pub(crate) fn is_coulomb_in(&self, d: usize) -> bool {
        match *self {
            InteractionKernel::Coulomb(k) => k == d,
            InteractionKernel::Log2d(_) => d == 2,
            InteractionKernel::Riesz { dimension, alpha } => dimension == d && d >= 3 && alpha == 2.0,
            InteractionKernel::None => false,
        }
    }
}

/// Radially symmetric external potential.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfinementPotential {
    /// `c |x|²`
    Quadratic(f64),
    /// `c |x|^p`, p >= 1
    RadialPower { p: f64, c: f64 },
    /// Piecewise-linear `V(r)` through `(radii[k], values[k])`, extended
    /// linearly past the last node.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

impl ConfinementPotential {
    pub fn quadratic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LabError::usage(format!("quadratic coefficient must be positive, got {c}")));
        }
        Ok(ConfinementPotential::Quadratic(c))
    }

    pub fn radial_power(p: f64, c: f64) -> Result<Self> {
        if !(p >= 1.0 && c > 0.0) {
            return Err(LabError::usage(format!("radial power needs p >= 1 and c > 0, got p={p}, c={c}")));
        }
        Ok(ConfinementPotential::RadialPower { p, c })
    }

    pub fn table(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii.len() != values.len() {
            return Err(LabError::usage("potential table needs at least two (r, V) nodes"));
        }
        if radii[0] != 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::usage("potential table radii must start at 0 and increase"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::usage("potential table values must be finite"));
        }
        Ok(ConfinementPotential::Table { radii, values })
    }

    /// `V` as a function of the radius.
    pub fn radial(&self, r: f64) -> f64 {
        match self {
            ConfinementPotential::Quadratic(c) => c * r * r,
            ConfinementPotential::RadialPower { p, c } => c * r.powf(*p),
            ConfinementPotential::Table { radii, values } => {
                let k = table_segment(radii, r);
                let slope = (values[k + 1] - values[k]) / (radii[k + 1] - radii[k]);
                values[k] + slope * (r - radii[k])
            }
        }
    }

    /// `V'(r) / r`, so that `∇V(x) = (V'(r)/r) x`.
    pub(crate) fn gradient_factor(&self, r: f64) -> f64 {
        match self {
            ConfinementPotential::Quadratic(c) => 2.0 * c,
            ConfinementPotential::RadialPower { p, c } => {
                if r > 0.0 {
                    c * p * r.powf(p - 2.0)
                } else if *p == 2.0 {
                    2.0 * c
                } else {
                    0.0
                }
            }
            ConfinementPotential::Table { radii, values } => {
                if r == 0.0 {
                    return 0.0;
                }
                let k = table_segment(radii, r);
                (values[k + 1] - values[k]) / (radii[k + 1] - radii[k]) / r
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ConfinementPotential::Quadratic(c) => c * x.iter().map(|v| v * v).sum::<f64>(),
            _ => self.radial(crate::measures::norm(x)),
        }
    }

    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self {
            ConfinementPotential::Quadratic(c) => Some(*c),
            ConfinementPotential::RadialPower { p, c } if *p == 2.0 => Some(*c),
            _ => None,
        }
    }
}

fn table_segment(radii: &[f64], r: f64) -> usize {
    match radii.partition_point(|&x| x <= r) {
        0 => 0,
        k => (k - 1).min(radii.len() - 2),
    }
}

/// Particle count, temperature and the two potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct GasModel {
    pub dimension: usize,
    pub n_particles: usize,
    pub beta: f64,
    pub potential: ConfinementPotential,
    pub kernel: InteractionKernel,
    warnings: Vec<String>,
}

impl GasModel {
    pub fn new(
        dimension: usize,
        n_particles: usize,
        beta: f64,
        potential: ConfinementPotential,
        kernel: InteractionKernel,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(LabError::usage("dimension must be at least 1"));
        }
        if n_particles < 2 {
            return Err(LabError::usage(format!("need at least 2 particles, got {n_particles}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LabError::usage(format!("beta must be positive and finite, got {beta}")));
        }
        if let Some(d) = kernel.dimension_tag() {
            if d != dimension {
                return Err(LabError::usage(format!(
                    "kernel is tagged for dimension {d} but the model has dimension {dimension}"
                )));
            }
        }
        if let InteractionKernel::Riesz { dimension: d, alpha } = kernel {
            InteractionKernel::riesz(d, alpha)?;
        }
        if let InteractionKernel::Log2d(s) = kernel {
            if !(s > 0.0) {
                return Err(LabError::usage(format!("log kernel scale must be positive, got {s}")));
            }
        }
        let mut model = Self {
            dimension,
            n_particles,
            beta,
            potential,
            kernel,
            warnings: Vec::new(),
        };
        if !model.cooling_scheme_holds() {
            let n = n_particles as f64;
            model.warnings.push(format!(
                "beta = {beta} is below N log N = {:.6}; the energy need not dominate the entropy",
                n * n.ln()
            ));
        }
        if !model.confinement_beats_repulsion() {
            model
                .warnings
                .push("confinement does not dominate the pair interaction at infinity".to_string());
        }
        Ok(model)
    }

    /// `β_N >= N log N`.
    pub fn cooling_scheme_holds(&self) -> bool {
        let n = self.n_particles as f64;
        self.beta >= n * n.ln()
    }

    /// Coarse check that `W(x, y) + ½(V(x) + V(y))` grows at infinity.
    /// For radial V and W the worst case is two points on opposite rays, so
    /// a scan of `(r₁ e, -r₂ e)` over a square of radii suffices.
    pub fn confinement_beats_repulsion(&self) -> bool {
        let steps = 60;
        let g = |r1: f64, r2: f64| {
            self.kernel.radial((r1 + r2).max(1e-9)) + 0.5 * (self.potential.radial(r1) + self.potential.radial(r2))
        };
        let inner_min = (0..=steps / 2)
            .flat_map(|a| (0..=steps / 2).map(move |b| (a, b)))
            .map(|(a, b)| g(a as f64 * 0.5, b as f64 * 0.5))
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        let far = steps as f64 * 0.5;
        (0..=steps).all(|k| {
            let r = k as f64 * 0.5;
            g(far, r) > inner_min && g(r, far) > inner_min
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}
