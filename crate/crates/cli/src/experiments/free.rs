use std::fmt::Write as _;

use entropy_lab_core::free::{catalan, free_clt_scaled_moment, kesten_mckay_moment_quadrature, tree_walk_count};
use entropy_lab_core::{LabError, Result};

use super::{csv_row, Recorder};
use crate::config::ExperimentConfig;
use crate::report::Check;

fn sorted_degrees(config: &ExperimentConfig, key: &str, min: u64) -> Result<Vec<u32>> {
    let mut d: Vec<u64> = config.list(key).to_vec();
    d.sort_unstable();
    d.dedup();
    if d.is_empty() || d[0] < min || *d.last().unwrap() > u32::MAX as u64 {
        return Err(LabError::Usage(format!("{key} needs degrees of at least {min}")));
    }
    Ok(d.into_iter().map(|x| x as u32).collect())
}

pub fn validate(config: &ExperimentConfig) -> Result<()> {
    sorted_degrees(config, "degrees", 3)?;
    sorted_degrees(config, "km_degrees", 3)?;
    if config.uint("max_order") < 1 {
        return Err(LabError::Usage("max_order must be at least 1".into()));
    }
    Ok(())
}

pub fn run(config: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let degrees = sorted_degrees(config, "degrees", 3)?;
    let max_order = config.uint("max_order") as u32;
    let mut csv = String::from("d,m,scaled_moment,catalan,gap\n");
    let mut gaps = vec![Vec::with_capacity(degrees.len()); max_order as usize];
    for &d in &degrees {
        for m in 1..=max_order {
            let scaled = free_clt_scaled_moment(d, m)?;
            let c = catalan(m)? as f64;
            let gap = (scaled - c).abs();
            gaps[m as usize - 1].push(gap / c);
            let _ = writeln!(csv, "{d},{m},{}", csv_row(&[scaled, c, gap]));
        }
    }
    rec.file("free_clt.csv", csv);
    let violations = gaps
        .iter()
        .map(|g| g.windows(2).filter(|w| w[1] >= w[0]).count())
        .sum::<usize>();
    rec.metric("gap_monotone_violations", violations as f64, Check::AtMost(0.0));
    let worst = gaps.iter().map(|g| g[g.len() - 1]).fold(0.0, f64::max);
    rec.metric("relative_gap_at_max_degree", worst, Check::AtMost(config.real("gap_tol")));

    let mut csv = String::from("d,k,walks,quadrature,relative_error\n");
    let mut worst = 0.0f64;
    for d in sorted_degrees(config, "km_degrees", 3)? {
        for k in 0..=config.uint("km_max_order") as u32 {
            let walks = tree_walk_count(d, k)? as f64;
            let quad = kesten_mckay_moment_quadrature(d, k);
            let err = if walks > 0.0 { (quad - walks).abs() / walks } else { quad.abs() };
            worst = worst.max(err);
            let _ = writeln!(csv, "{d},{k},{}", csv_row(&[walks, quad, err]));
        }
    }
    rec.file("kesten_mckay.csv", csv);
    rec.metric("kesten_mckay_max_relative_error", worst, Check::AtMost(config.real("km_tol")));
    Ok(())
}
