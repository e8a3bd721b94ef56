use std::fmt::Write as _;

use entropy_lab_core::gas::{
    equilibrium_prediction, lagrange_residual, probe_points, run_sampler, ConfinementPotential, EquilibriumKind,
    GasModel, Init, InteractionKernel, SamplerOptions, TracePoint,
};
use entropy_lab_core::measures::{
    build_histogram, empirical_moments, fmt_f64, radial_ks_distance, write_snapshot, HistogramAxis, MomentKind,
    ParticleConfiguration,
};
use entropy_lab_core::{LabError, Result};

use super::{number, split_spec, Recorder};
use crate::config::ExperimentConfig;
use crate::report::Check;

const ACCEPTANCE_BAND: (f64, f64) = (0.1, 0.95);
const LAGRANGE_SNAPSHOTS: usize = 400;
const HISTOGRAM_BINS: usize = 60;

fn parse_potential(spec: &str) -> Result<ConfinementPotential> {
    match split_spec(spec) {
        ("quadratic", args) if args.len() == 1 => ConfinementPotential::quadratic(number(args[0], "potential")?),
        ("radial_power", args) if args.len() == 2 => {
            ConfinementPotential::radial_power(number(args[0], "potential")?, number(args[1], "potential")?)
        }
        _ => Err(LabError::Usage(format!(
            "key potential expects quadratic:<c> or radial_power:<p>:<c>, got '{spec}'"
        ))),
    }
}

fn parse_kernel(spec: &str, dim: usize) -> Result<InteractionKernel> {
    match split_spec(spec) {
        ("coulomb", args) if args.is_empty() => Ok(InteractionKernel::Coulomb(dim)),
        ("riesz", args) if args.len() == 1 => InteractionKernel::riesz(dim, number(args[0], "kernel")?),
        ("log2d", args) if args.len() == 1 => Ok(InteractionKernel::Log2d(number(args[0], "kernel")?)),
        ("none", args) if args.is_empty() => Ok(InteractionKernel::None),
        _ => Err(LabError::Usage(format!(
            "key kernel expects coulomb, riesz:<alpha>, log2d:<s> or none, got '{spec}'"
        ))),
    }
}

pub fn gas_model(config: &ExperimentConfig) -> Result<GasModel> {
    let dim = config.uint("dim") as usize;
    GasModel::new(
        dim,
        config.uint("n_particles") as usize,
        config.real("beta"),
        parse_potential(config.text("potential"))?,
        parse_kernel(config.text("kernel"), dim)?,
    )
}

pub fn validate(config: &ExperimentConfig) -> Result<()> {
    gas_model(config)?;
    let (steps, burn_in, thin) = (config.uint("steps"), config.uint("burn_in"), config.uint("thin"));
    if steps <= burn_in {
        return Err(LabError::Usage(format!("steps ({steps}) must exceed burn_in ({burn_in})")));
    }
    if thin == 0 {
        return Err(LabError::Usage("thin must be at least 1".into()));
    }
    Ok(())
}

fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::with_capacity(trace.len() * 36);
    out.push_str("step,energy,accepted\n");
    for t in trace {
        let _ = writeln!(out, "{},{},{}", t.step, fmt_f64(t.energy), t.accepted as u8);
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pool(snapshots: &[ParticleConfiguration], dim: usize, seed: u64) -> Result<ParticleConfiguration> {
    let coords: Vec<f64> = snapshots.iter().flat_map(|s| s.coords().iter().copied()).collect();
    ParticleConfiguration::from_flat(dim, coords, seed, 0)
}

pub fn run(config: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let model = gas_model(config)?;
    for w in model.warnings() {
        rec.warn(w.clone());
    }
    let d = model.dimension;
    let seed = config.seed();
    let burn_in = config.uint("burn_in");
    let mut options = SamplerOptions::new(config.uint("steps"), burn_in, config.uint("thin"), seed);
    options.dt = config.real_or_auto("dt");
    options.init = Init::GaussianCloud(config.real("init_sigma"));
    options.threads = config.threads;
    let out = run_sampler(&model, &options)?;

    rec.file("energy_trace.csv", trace_csv(&out.trace));
    if let Some(last) = out.snapshots.last() {
        rec.file("snapshot_final.txt", write_snapshot(last));
    }
    let (lo, hi) = ACCEPTANCE_BAND;
    rec.metric("acceptance_rate", out.acceptance.rate(), Check::Between { lo, hi });

    if burn_in >= 100 {
        // early relaxation window against the end of burn-in
        let (early, late) = ((burn_in / 100) as usize, (burn_in / 10) as usize);
        let energies = |range: std::ops::Range<usize>| out.trace[range].iter().map(|t| t.energy).collect::<Vec<_>>();
        let first = median(energies(0..early));
        let last = median(energies(burn_in as usize - late..burn_in as usize));
        rec.metric("rate_function_trace", last - first, Check::AtMost(0.0));
    }

    if out.snapshots.is_empty() {
        rec.warn("no snapshots were taken after burn-in; thin exceeds the sampling phase");
        return Ok(());
    }
    let energy_at = |s: &ParticleConfiguration| out.trace[s.step_index as usize - 1].energy;
    let mean_energy = out.snapshots.iter().map(energy_at).sum::<f64>() / out.snapshots.len() as f64;

    let prediction = equilibrium_prediction(&model);
    let (Some(radius), Some(cdf)) = (prediction.radius(), prediction.radial_cdf.clone()) else {
        rec.warn("no closed-form equilibrium for this model; only sampler diagnostics are checked");
        return Ok(());
    };
    let pooled = pool(&out.snapshots, d, seed)?;

    let hist = build_histogram(&pooled, HistogramAxis::Radial, HISTOGRAM_BINS, (0.0, 1.5 * radius))?;
    let mut csv = String::from("r,count,predicted\n");
    let width = 1.5 * radius / HISTOGRAM_BINS as f64;
    for (center, count) in hist {
        let predicted = pooled.len() as f64 * (cdf.eval(center + 0.5 * width) - cdf.eval(center - 0.5 * width));
        let _ = writeln!(csv, "{},{count},{}", fmt_f64(center), fmt_f64(predicted));
    }
    rec.file("radial_histogram.csv", csv);

    rec.metric("radial_ks", radial_ks_distance(&pooled, &cdf), Check::AtMost(config.real("ks_tol")));
    let m2_target = prediction.second_radial_moment(d).expect("known equilibrium has moments");
    let m2 = empirical_moments(&pooled, &[2], MomentKind::Radial)?.values[0];
    rec.metric(
        "m2_radial",
        m2,
        Check::Relative {
            target: m2_target,
            tol: config.real("m2_tol"),
        },
    );
    if let EquilibriumKind::Semicircle { radius: a } = prediction.kind {
        let m4 = empirical_moments(&pooled, &[4], MomentKind::CoordinateFirstAxis)?.values[0];
        let target = 2.0 * (a * a / 4.0).powi(2);
        rec.metric(
            "m4",
            m4,
            Check::Relative {
                target,
                tol: config.real("m4_tol"),
            },
        );
    }
    let inside = pooled.radii().iter().filter(|&&r| r <= 1.1 * radius).count() as f64 / pooled.len() as f64;
    rec.metric("inside_fraction", inside, Check::AtLeast(config.real("inside_min")));

    if let Some(target) = prediction.minimum_energy(&model) {
        rec.metric(
            "rate_function",
            mean_energy,
            Check::Near {
                target,
                tol: config.real("rate_tol"),
            },
        );
    }

    if matches!(prediction.kind, EquilibriumKind::UniformBall { .. }) {
        let stride = out.snapshots.len().div_ceil(LAGRANGE_SNAPSHOTS);
        let subset: Vec<ParticleConfiguration> = out.snapshots.iter().step_by(stride).cloned().collect();
        let radii: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8, 1.2, 1.5, 2.0].iter().map(|f| f * radius).collect();
        let probes = probe_points(d, &radii, 12);
        let report = lagrange_residual(&subset, &model, &prediction, &probes)?;
        rec.metric(
            "lagrange_inside_variation",
            report.inside_variation,
            Check::AtMost(config.real("lagrange_inside_tol")),
        );
        rec.metric(
            "lagrange_outside_violation",
            report.outside_violation,
            Check::AtMost(config.real("lagrange_outside_tol")),
        );
    }
    Ok(())
}
