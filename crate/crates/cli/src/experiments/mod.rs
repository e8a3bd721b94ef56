//! Dispatch from a validated config into the numeric modules.

mod clt;
mod free;
mod gas;
mod markov;

use std::collections::BTreeMap;

use entropy_lab_core::LabError;

use crate::config::{ExperimentConfig, Subcommand};
use crate::report::{Check, Metric, Provenance, ReportBundle, RunError, Status, Summary, ARTIFACT_VERSION};

pub use gas::gas_model;

/// Collects metrics and artifacts while an experiment runs, so a failure
/// part-way still leaves what was produced.
#[derive(Debug, Default)]
pub struct Recorder {
    metrics: BTreeMap<String, Metric>,
    files: Vec<(String, String)>,
    warnings: Vec<String>,
}

impl Recorder {
    pub fn metric(&mut self, name: &str, value: f64, check: Check) {
        let pass = check.passes(value);
        self.metrics.insert(name.to_string(), Metric { value, check, pass });
    }

    pub fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }
}

/// Semantic checks that need more than the key schema (kernel syntax, chain
/// files, grid shapes). Runs before any computation.
pub fn validate(config: &ExperimentConfig) -> Result<(), LabError> {
    match config.subcommand {
        Subcommand::Gas => gas::validate(config),
        Subcommand::Markov => markov::validate(config),
        Subcommand::Clt => clt::validate(config),
        Subcommand::Free => free::validate(config),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> ReportBundle {
    let mut rec = Recorder::default();
    let outcome = match config.subcommand {
        Subcommand::Gas => gas::run(config, &mut rec),
        Subcommand::Markov => markov::run(config, &mut rec),
        Subcommand::Clt => clt::run(config, &mut rec),
        Subcommand::Free => free::run(config, &mut rec),
    };
    let (status, error) = match outcome {
        Err(e) => (Status::Failed, Some(RunError::from_lab(&e))),
        Ok(()) if rec.metrics.values().all(|m| m.pass) => (Status::Pass, None),
        Ok(()) => (Status::Fail, None),
    };
    let summary = Summary {
        subcommand: config.subcommand.name().to_string(),
        status,
        error,
        artifacts: rec.files.iter().map(|(n, _)| n.clone()).collect(),
        metrics: rec.metrics,
        warnings: rec.warnings,
        provenance: Provenance {
            seed: config.seed(),
            preset: config.preset.clone(),
            config: config.echo(),
            artifact_version: ARTIFACT_VERSION.to_string(),
        },
    };
    ReportBundle {
        summary,
        files: rec.files,
    }
}

/// `key:a:b` → `("key", ["a", "b"])`.
pub(crate) fn split_spec(spec: &str) -> (&str, Vec<&str>) {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or("");
    (head, parts.collect())
}

pub(crate) fn number(s: &str, what: &str) -> Result<f64, LabError> {
    crate::config::parse_real(s).ok_or_else(|| LabError::Usage(format!("{what}: cannot read '{s}' as a number")))
}

pub(crate) fn csv_row(fields: &[f64]) -> String {
    let parts: Vec<String> = fields.iter().map(|&v| entropy_lab_core::measures::fmt_f64(v)).collect();
    parts.join(",")
}
