use std::fmt::Write as _;

use entropy_lab_core::markov::{
    ct_evolve, decay_rate_regression, finite_difference_derivatives, free_energy_derivatives, invariant_measure,
    kernel_step, mm_infinity_generator, parse_chain, relative_entropy, total_variation, ChainKind, FiniteChain,
    ProbVector,
};
use entropy_lab_core::{LabError, Result};

use super::{csv_row, number, split_spec, Recorder};
use crate::config::ExperimentConfig;
use crate::report::Check;

/// Slack for `2 KL - TV² >= 0` and for the sign of the first derivative.
const ROUNDING: f64 = 1e-12;

fn load_chain(spec: &str) -> Result<FiniteChain> {
    match split_spec(spec) {
        ("mm_infinity", args) if args.len() == 3 => {
            let truncation: usize = args[2]
                .parse()
                .map_err(|_| LabError::Usage(format!("chain: bad truncation level '{}'", args[2])))?;
            mm_infinity_generator(number(args[0], "chain")?, number(args[1], "chain")?, truncation)
        }
        ("file", _) => {
            let path = &spec["file:".len()..];
            let text = std::fs::read_to_string(path)
                .map_err(|e| LabError::Usage(format!("chain: cannot read {path}: {e}")))?;
            parse_chain(&text)
        }
        _ => Err(LabError::Usage(format!(
            "key chain expects mm_infinity:<lambda>:<mu>:<K> or file:<path>, got '{spec}'"
        ))),
    }
}

fn start_law(spec: &str, size: usize) -> Result<ProbVector> {
    match split_spec(spec) {
        ("uniform", args) if args.is_empty() => ProbVector::new(vec![1.0 / size as f64; size]),
        ("point", args) if args.len() == 1 => {
            let k: usize = args[0]
                .parse()
                .map_err(|_| LabError::Usage(format!("start: bad state index '{}'", args[0])))?;
            ProbVector::point_mass(size, k)
        }
        _ => Err(LabError::Usage(format!("key start expects uniform or point:<k>, got '{spec}'"))),
    }
}

pub fn validate(config: &ExperimentConfig) -> Result<()> {
    let chain = load_chain(config.text("chain"))?;
    start_law(config.text("start"), chain.size())?;
    let mix = config.real("start_mix");
    if !(0.0..=1.0).contains(&mix) {
        return Err(LabError::Usage(format!("start_mix must lie in [0, 1], got {mix}")));
    }
    if config.uint("steps") < 2 {
        return Err(LabError::Usage("steps must be at least 2".into()));
    }
    if chain.kind() == ChainKind::Generator {
        let (dt, h) = (config.real("dt"), config.real("fd_h"));
        if !(dt > 0.0) || !(h > 0.0) || h >= dt {
            return Err(LabError::Usage(format!("need 0 < fd_h < dt, got fd_h={h}, dt={dt}")));
        }
    }
    Ok(())
}

pub fn run(config: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let chain = load_chain(config.text("chain"))?;
    let invariant = invariant_measure(&chain)?;
    let mut mu0 = start_law(config.text("start"), chain.size())?;
    let mix = config.real("start_mix");
    if mix > 0.0 {
        mu0 = mu0.mix(&invariant, mix);
    }
    let steps = config.uint("steps") as usize;

    let mut laws = vec![mu0.clone()];
    let mut times = vec![0.0];
    match chain.kind() {
        ChainKind::Kernel => {
            for k in 1..=steps {
                laws.push(kernel_step(&chain, &laws[k - 1])?);
                times.push(k as f64);
            }
        }
        ChainKind::Generator => {
            let dt = config.real("dt");
            for k in 1..=steps {
                let t = k as f64 * dt;
                laws.push(ct_evolve(&chain, &mu0, t)?);
                times.push(t);
            }
        }
    }
    let free_energy: Vec<f64> = laws.iter().map(|mu| relative_entropy(mu, &invariant)).collect();
    let max_increment = free_energy
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let pinsker_gap = laws
        .iter()
        .zip(&free_energy)
        .map(|(mu, kl)| 2.0 * kl - total_variation(mu, &invariant).powi(2))
        .fold(f64::INFINITY, f64::min);

    let mut csv = String::new();
    match chain.kind() {
        ChainKind::Kernel => {
            csv.push_str("step,free_energy\n");
            for (k, a) in free_energy.iter().enumerate() {
                let _ = writeln!(csv, "{k},{}", csv_row(&[*a]));
            }
        }
        ChainKind::Generator => {
            let h = config.real("fd_h");
            csv.push_str("t,free_energy,first,second,fd_first,fd_second\n");
            let _ = writeln!(csv, "{},,,,", csv_row(&[times[0], free_energy[0]]));
            let (mut worst_first, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
            for k in 1..laws.len() {
                let (first, second) = free_energy_derivatives(&chain, &laws[k])?;
                let (fd1, fd2) = finite_difference_derivatives(&chain, &mu0, times[k], h)?;
                worst_first = worst_first.max(first);
                worst_gap = worst_gap.max((first - fd1).abs()).max((second - fd2).abs());
                let _ = writeln!(csv, "{}", csv_row(&[times[k], free_energy[k], first, second, fd1, fd2]));
            }
            rec.metric("max_first_derivative", worst_first, Check::AtMost(ROUNDING));
            rec.metric("derivative_fd_error", worst_gap, Check::AtMost(config.real("derivative_tol")));
            if let Ok(rho) = decay_rate_regression(&free_energy[1..], config.real("dt")) {
                rec.metric("decay_rate", rho, Check::Above(0.0));
            }
        }
    }
    rec.file("free_energy.csv", csv);
    rec.metric("max_increment", max_increment, Check::AtMost(config.real("increment_tol")));
    rec.metric("min_pinsker_gap", pinsker_gap, Check::AtLeast(-ROUNDING));
    Ok(())
}
