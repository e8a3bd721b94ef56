use std::fmt::Write as _;

use entropy_lab_core::clt::{
    clt_step, de_bruijn_residual, entropy, fisher_information, parse_density_csv, write_density_csv, GridDensity,
};
use entropy_lab_core::{LabError, Result};

use super::{csv_row, Recorder};
use crate::config::ExperimentConfig;
use crate::report::Check;

const GAUSSIAN_ENTROPY: f64 = 1.418_938_533_204_672_7;

/// Unit-variance start laws on the configured grid.
fn start_density(config: &ExperimentConfig) -> Result<GridDensity> {
    let (lo, hi, dx) = (config.real("lo"), config.real("hi"), config.real("dx"));
    let spec = config.text("start");
    match spec {
        "uniform" => GridDensity::uniform(lo, hi, dx, -(3f64.sqrt()), 3f64.sqrt()),
        "gaussian" => GridDensity::gaussian(lo, hi, dx, 0.0, 1.0),
        "laplace" => GridDensity::from_fn(lo, hi, dx, |x| (-(2f64.sqrt()) * x.abs()).exp()),
        _ => match spec.strip_prefix("file:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| LabError::Usage(format!("start: cannot read {path}: {e}")))?;
                parse_density_csv(&text)
            }
            None => Err(LabError::Usage(format!(
                "key start expects uniform, gaussian, laplace or file:<path>, got '{spec}'"
            ))),
        },
    }
}

/// Differential entropy of the start law where it has a closed form.
fn exact_entropy(spec: &str) -> Option<f64> {
    match spec {
        "uniform" => Some((2.0 * 3f64.sqrt()).ln()),
        "gaussian" => Some(GAUSSIAN_ENTROPY),
        "laplace" => Some(1.0 + 2f64.sqrt().ln()),
        _ => None,
    }
}

pub fn validate(config: &ExperimentConfig) -> Result<()> {
    start_density(config)?;
    let (t, h) = (config.real("heat_t"), config.real("h"));
    if !(h > 0.0) || h >= t / 2.0 {
        return Err(LabError::Usage(format!("need 0 < h < heat_t/2, got h={h}, heat_t={t}")));
    }
    Ok(())
}

pub fn run(config: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let start = start_density(config)?;
    let mut f = start.clone();
    let mut entropies = vec![entropy(&f)];
    let mut csv = String::from("k,entropy,fisher\n");
    let _ = writeln!(csv, "0,{}", csv_row(&[entropies[0], fisher_information(&f).value]));
    for k in 1..=config.uint("doublings") {
        f = clt_step(&f)?;
        entropies.push(entropy(&f));
        let _ = writeln!(csv, "{k},{}", csv_row(&[entropies[k as usize], fisher_information(&f).value]));
    }
    rec.file("entropy.csv", csv);
    rec.file("density_final.csv", write_density_csv(&f));

    if let Some(exact) = exact_entropy(config.text("start")) {
        rec.metric(
            "entropy_initial",
            entropies[0],
            Check::Near {
                target: exact,
                tol: config.real("entropy_tol"),
            },
        );
    }
    if entropies.len() > 1 {
        let min_increment = entropies.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        // a Gaussian start is already at the maximum and can only drift by rounding
        if config.text("start") != "gaussian" {
            rec.metric("min_entropy_increment", min_increment, Check::Above(0.0));
        }
    }
    rec.metric(
        "gap_to_gaussian",
        GAUSSIAN_ENTROPY - entropies[entropies.len() - 1],
        Check::AtLeast(-config.real("entropy_tol")),
    );
    let residual = de_bruijn_residual(&start, config.real("heat_t"), config.real("h"))?;
    rec.metric("de_bruijn_residual", residual, Check::AtMost(config.real("debruijn_tol")));
    Ok(())
}
