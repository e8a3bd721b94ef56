//! Metropolis-adjusted Langevin sampling of `∝ exp(-β_N I_N)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::energy::evaluate;
use super::{equilibrium_prediction, EquilibriumKind, GasModel};
use crate::error::{LabError, Result};
use crate::measures::ParticleConfiguration;

const TARGET_ACCEPTANCE: f64 = 0.574;
const ADAPT_GAIN: f64 = 0.02;
const MAX_REJITTER: usize = 100;

/// Starting configuration of a chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// i.i.d. centered Gaussian coordinates with this standard deviation.
    GaussianCloud(f64),
    Snapshot(ParticleConfiguration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOptions {
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub init: Init,
    /// Fixed step; `None` tunes it during burn-in and then freezes it.
    pub dt: Option<f64>,
    /// Worker count for the pair sums; 1 is bit-reproducible.
    pub threads: usize,
}

impl SamplerOptions {
    pub fn new(steps: u64, burn_in: u64, thin: u64, seed: u64) -> Self {
        Self {
            steps,
            burn_in,
            thin,
            seed,
            init: Init::GaussianCloud(1.0),
            dt: None,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: u64,
    pub energy: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AcceptanceStats {
    pub burn_in_proposed: u64,
    pub burn_in_accepted: u64,
    pub proposed: u64,
    pub accepted: u64,
    /// Step used after burn-in.
    pub dt: f64,
}

impl AcceptanceStats {
    /// Acceptance rate after burn-in.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn burn_in_rate(&self) -> f64 {
        if self.burn_in_proposed == 0 {
            0.0
        } else {
            self.burn_in_accepted as f64 / self.burn_in_proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    pub snapshots: Vec<ParticleConfiguration>,
    /// One entry per step, starting at step 1.
    pub trace: Vec<TracePoint>,
    pub acceptance: AcceptanceStats,
    pub initial_energy: f64,
}

/// Chain state with the energy and gradient of the current point cached.
#[derive(Debug, Clone)]
pub struct MalaChain<'m> {
    model: &'m GasModel,
    x: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
    y: Vec<f64>,
    grad_y: Vec<f64>,
    parallel: bool,
}

impl<'m> MalaChain<'m> {
    pub fn new(model: &'m GasModel, config: &ParticleConfiguration) -> Result<Self> {
        Self::from_coords(model, config.coords().to_vec(), false)
    }

    fn from_coords(model: &'m GasModel, x: Vec<f64>, parallel: bool) -> Result<Self> {
        let d = model.dimension;
        if x.len() % d != 0 || x.len() / d < 2 {
            return Err(LabError::usage("chain needs at least two particles of the model dimension"));
        }
        let mut grad = vec![0.0; x.len()];
        let energy = evaluate(model, d, &x, Some(&mut grad), parallel)
            .map_err(|(i, j)| LabError::domain(format!("particles {i} and {j} coincide")))?;
        if !energy.is_finite() {
            return Err(LabError::domain("initial energy is not finite"));
        }
        Ok(Self {
            model,
            y: vec![0.0; x.len()],
            grad_y: vec![0.0; x.len()],
            x,
            energy,
            grad,
            parallel,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    pub fn configuration(&self, seed: u64, step: u64) -> ParticleConfiguration {
        ParticleConfiguration::from_flat(self.model.dimension, self.x.clone(), seed, step)
            .expect("chain state has a valid shape")
    }

    /// Evaluates the proposal held in `self.y`; `None` if it is singular.
    fn evaluate_proposal(&mut self) -> Option<f64> {
        match evaluate(self.model, self.model.dimension, &self.y, Some(&mut self.grad_y), self.parallel) {
            Ok(e) if e.is_finite() && self.grad_y.iter().all(|g| g.is_finite()) => Some(e),
            _ => None,
        }
    }

    fn accept(&mut self, energy: f64) {
        std::mem::swap(&mut self.x, &mut self.y);
        std::mem::swap(&mut self.grad, &mut self.grad_y);
        self.energy = energy;
    }

    /// One MALA move `y = x - dt ∇I_N(x) + sqrt(2 dt / β) ξ`, accepted with the
    /// Metropolis–Hastings ratio for `exp(-β I_N)`.
    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> bool {
        let beta = self.model.beta;
        let noise = (2.0 * dt / beta).sqrt();
        let mut forward = 0.0;
        for k in 0..self.x.len() {
            let xi: f64 = rng.sample(StandardNormal);
            let step = noise * xi;
            self.y[k] = self.x[k] - dt * self.grad[k] + step;
            forward += step * step;
        }
        let u: f64 = rng.random();
        let Some(energy_y) = self.evaluate_proposal() else {
            return false;
        };
        let mut backward = 0.0;
        for k in 0..self.x.len() {
            let b = self.x[k] - self.y[k] + dt * self.grad_y[k];
            backward += b * b;
        }
        let log_ratio = -beta * (energy_y - self.energy) - beta * (backward - forward) / (4.0 * dt);
        if u.ln() < log_ratio {
            self.accept(energy_y);
            true
        } else {
            false
        }
    }

    /// Deterministic gradient step without noise, kept only if the energy
    /// does not increase.
    pub fn descend(&mut self, dt: f64) -> bool {
        for k in 0..self.x.len() {
            self.y[k] = self.x[k] - dt * self.grad[k];
        }
        match self.evaluate_proposal() {
            Some(e) if e <= self.energy => {
                self.accept(e);
                true
            }
            _ => false,
        }
    }
}

/// A single MALA move from `config`; returns the new state and whether the
/// proposal was accepted (the input is returned unchanged on rejection).
pub fn mala_step<R: Rng + ?Sized>(
    model: &GasModel,
    config: &ParticleConfiguration,
    dt: f64,
    rng: &mut R,
) -> Result<(ParticleConfiguration, bool)> {
    if !(dt > 0.0) {
        return Err(LabError::usage(format!("dt must be positive, got {dt}")));
    }
    let mut chain = MalaChain::new(model, config)?;
    let accepted = chain.step(dt, rng);
    Ok((chain.configuration(config.seed, config.step_index + 1), accepted))
}

/// Initial step: proposal noise of a few percent of the expected spacing.
fn initial_dt(model: &GasModel) -> f64 {
    let radius = match equilibrium_prediction(model).kind {
        EquilibriumKind::UniformBall { radius } => radius,
        EquilibriumKind::Semicircle { radius } => radius,
        EquilibriumKind::Unknown => 1.0,
    };
    let spacing = radius * (model.n_particles as f64).powf(-1.0 / model.dimension as f64);
    let noise = 0.05 * spacing;
    0.5 * model.beta * noise * noise
}

fn initial_coords(model: &GasModel, init: &Init, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let d = model.dimension;
    let n = model.n_particles;
    let mut x = match init {
        Init::GaussianCloud(sigma) => {
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return Err(LabError::usage(format!("cloud width must be non-negative, got {sigma}")));
            }
            (0..n * d)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<f64>>()
        }
        Init::Snapshot(c) => {
            if c.dimension() != d || c.len() != n {
                return Err(LabError::usage(format!(
                    "snapshot has {} points in dimension {}, model needs {n} in dimension {d}",
                    c.len(),
                    c.dimension()
                )));
            }
            c.coords().to_vec()
        }
    };
    // re-jitter coincident points
    let scale = 1e-6 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..MAX_REJITTER {
        match evaluate(model, d, &x, None, false) {
            Ok(e) if e.is_finite() => return Ok(x),
            Ok(_) => {
                for v in x.iter_mut() {
                    *v += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Err((_, j)) => {
                for k in 0..d {
                    x[j * d + k] += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    Err(LabError::domain(format!(
        "initial configuration still singular after {MAX_REJITTER} re-jitter attempts"
    )))
}

/// Runs one chain: `burn_in` tuning steps followed by `steps - burn_in`
/// sampling steps, keeping a snapshot every `thin` steps after burn-in.
pub fn run_sampler(model: &GasModel, options: &SamplerOptions) -> Result<SamplerOutput> {
    if options.steps <= options.burn_in {
        return Err(LabError::usage(format!(
            "steps ({}) must exceed burn_in ({})",
            options.steps, options.burn_in
        )));
    }
    if options.thin == 0 {
        return Err(LabError::usage("thin must be at least 1"));
    }
    if let Some(dt) = options.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::usage(format!("dt must be positive, got {dt}")));
        }
    }
    if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| LabError::Io(e.to_string()))?;
        pool.install(|| sample(model, options, true))
    } else {
        sample(model, options, false)
    }
}

fn sample(model: &GasModel, options: &SamplerOptions, parallel: bool) -> Result<SamplerOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let x = initial_coords(model, &options.init, &mut rng)?;
    let mut chain = MalaChain::from_coords(model, x, parallel)?;
    let initial_energy = chain.energy();
    let mut log_dt = options.dt.unwrap_or_else(|| initial_dt(model)).ln();
    let tune = options.dt.is_none();
    let mut stats = AcceptanceStats::default();
    let mut trace = Vec::with_capacity(options.steps as usize);
    let mut snapshots = Vec::new();
    for step in 1..=options.steps {
        let burning = step <= options.burn_in;
        let accepted = chain.step(log_dt.exp(), &mut rng);
        if burning {
            stats.burn_in_proposed += 1;
            stats.burn_in_accepted += accepted as u64;
            if tune {
                log_dt += ADAPT_GAIN * (accepted as u8 as f64 - TARGET_ACCEPTANCE);
            }
        } else {
            stats.proposed += 1;
            stats.accepted += accepted as u64;
            if (step - options.burn_in) % options.thin == 0 {
                snapshots.push(chain.configuration(options.seed, step));
            }
        }
        trace.push(TracePoint {
            step,
            energy: chain.energy(),
            accepted,
        });
    }
    stats.dt = log_dt.exp();
    Ok(SamplerOutput {
        snapshots,
        trace,
        acceptance: stats,
        initial_energy,
    })
}
