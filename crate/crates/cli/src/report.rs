//! Summary JSON and artifact files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Number, Value};

use entropy_lab_core::LabError;

pub const ARTIFACT_VERSION: &str = "1";
pub const SUMMARY_FILE: &str = "summary.json";

/// How a metric is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    AtMost(f64),
    AtLeast(f64),
    /// Strictly greater.
    Above(f64),
    /// `|value - target| <= tol`.
    Near { target: f64, tol: f64 },
    /// `|value - target| <= tol * |target|`.
    Relative { target: f64, tol: f64 },
    Between { lo: f64, hi: f64 },
}

impl Check {
    pub fn passes(&self, v: f64) -> bool {
        if v.is_nan() {
            return false;
        }
        match *self {
            Check::AtMost(t) => v <= t,
            Check::AtLeast(t) => v >= t,
            Check::Above(t) => v > t,
            Check::Near { target, tol } => (v - target).abs() <= tol,
            Check::Relative { target, tol } => (v - target).abs() <= tol * target.abs(),
            Check::Between { lo, hi } => lo <= v && v <= hi,
        }
    }

    fn to_json(self) -> Value {
        match self {
            Check::AtMost(t) => json!({"kind": "at_most", "limit": num(t)}),
            Check::AtLeast(t) => json!({"kind": "at_least", "limit": num(t)}),
            Check::Above(t) => json!({"kind": "above", "limit": num(t)}),
            Check::Near { target, tol } => json!({"kind": "near", "target": num(target), "tolerance": num(tol)}),
            Check::Relative { target, tol } => {
                json!({"kind": "relative", "target": num(target), "tolerance": num(tol)})
            }
            Check::Between { lo, hi } => json!({"kind": "between", "lo": num(lo), "hi": num(hi)}),
        }
    }

    fn from_json(v: &Value) -> Option<Self> {
        let f = |k: &str| v.get(k).and_then(read_num);
        Some(match v.get("kind")?.as_str()? {
            "at_most" => Check::AtMost(f("limit")?),
            "at_least" => Check::AtLeast(f("limit")?),
            "above" => Check::Above(f("limit")?),
            "near" => Check::Near {
                target: f("target")?,
                tol: f("tolerance")?,
            },
            "relative" => Check::Relative {
                target: f("target")?,
                tol: f("tolerance")?,
            },
            "between" => Check::Between {
                lo: f("lo")?,
                hi: f("hi")?,
            },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub value: f64,
    pub check: Check,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A module error stopped the run.
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub class: String,
    pub message: String,
}

impl RunError {
    pub fn from_lab(e: &LabError) -> Self {
        let class = match e {
            LabError::Usage(_) | LabError::Parse { .. } => "usage",
            LabError::Structural(_) => "structural",
            LabError::Domain(_) => "domain",
            LabError::Numeric { .. } => "numeric",
            LabError::Overflow(_) => "overflow",
            LabError::Io(_) => "io",
        };
        Self {
            class: class.into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub preset: Option<String>,
    pub config: BTreeMap<String, String>,
    pub artifact_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub subcommand: String,
    pub status: Status,
    pub error: Option<RunError>,
    pub metrics: BTreeMap<String, Metric>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub provenance: Provenance,
}

/// Summary plus buffered artifact contents, keyed by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub summary: Summary,
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    /// 0 pass, 1 a check failed, 2 usage error, 3 numeric or structural error.
    pub fn exit_code(&self) -> i32 {
        match self.summary.status {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Failed => match &self.summary.error {
                Some(e) if e.class == "usage" => 2,
                _ => 3,
            },
        }
    }
}

/// Renders with 17 significant digits. Non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        let n: Number = serde_json::from_str(&format!("{x:.16e}")).expect("formatted float is valid JSON");
        Value::Number(n)
    } else {
        Value::String(format!("{x}"))
    }
}

fn read_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

impl Summary {
    pub fn to_json(&self) -> Value {
        let metrics: Map<String, Value> = self
            .metrics
            .iter()
            .map(|(k, m)| {
                (
                    k.clone(),
                    json!({"value": num(m.value), "tolerance": m.check.to_json(), "pass": m.pass}),
                )
            })
            .collect();
        let error = match &self.error {
            Some(e) => json!({"class": e.class, "message": e.message}),
            None => Value::Null,
        };
        json!({
            "subcommand": self.subcommand,
            "status": self.status.as_str(),
            "error": error,
            "metrics": metrics,
            "warnings": self.warnings,
            "artifacts": self.artifacts,
            "provenance": {
                "seed": self.provenance.seed,
                "preset": self.provenance.preset,
                "config": self.provenance.config,
                "artifact_version": self.provenance.artifact_version,
            },
        })
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_json(&v).ok_or_else(|| "summary has an unexpected shape".to_string())
    }

    fn from_json(v: &Value) -> Option<Self> {
        let status = match v.get("status")?.as_str()? {
            "PASS" => Status::Pass,
            "FAIL" => Status::Fail,
            "FAILED" => Status::Failed,
            _ => return None,
        };
        let error = match v.get("error")? {
            Value::Null => None,
            e => Some(RunError {
                class: e.get("class")?.as_str()?.to_string(),
                message: e.get("message")?.as_str()?.to_string(),
            }),
        };
        let mut metrics = BTreeMap::new();
        for (k, m) in v.get("metrics")?.as_object()? {
            metrics.insert(
                k.clone(),
                Metric {
                    value: read_num(m.get("value")?)?,
                    check: Check::from_json(m.get("tolerance")?)?,
                    pass: m.get("pass")?.as_bool()?,
                },
            );
        }
        let strings = |key: &str| -> Option<Vec<String>> {
            v.get(key)?
                .as_array()?
                .iter()
                .map(|s| s.as_str().map(str::to_string))
                .collect()
        };
        let p = v.get("provenance")?;
        let config = p
            .get("config")?
            .as_object()?
            .iter()
            .map(|(k, s)| Some((k.clone(), s.as_str()?.to_string())))
            .collect::<Option<BTreeMap<_, _>>>()?;
        Some(Self {
            subcommand: v.get("subcommand")?.as_str()?.to_string(),
            status,
            error,
            metrics,
            warnings: strings("warnings")?,
            artifacts: strings("artifacts")?,
            provenance: Provenance {
                seed: p.get("seed")?.as_u64()?,
                preset: p.get("preset")?.as_str().map(str::to_string),
                config,
                artifact_version: p.get("artifact_version")?.as_str()?.to_string(),
            },
        })
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Writes every artifact and then the summary, each through a temporary file
/// and a rename. Returns the written paths, summary last.
pub fn write_report(bundle: &ReportBundle, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(bundle.files.len() + 1);
    for (name, contents) in &bundle.files {
        paths.push(write_atomic(out_dir, name, contents)?);
    }
    paths.push(write_atomic(out_dir, SUMMARY_FILE, &bundle.summary.render())?);
    Ok(paths)
}

/// Fails early if `out_dir` cannot be created or written.
pub fn ensure_writable(out_dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let probe = out_dir.join(".write-probe.tmp");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)
}
