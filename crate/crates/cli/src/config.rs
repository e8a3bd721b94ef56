//! Flat `key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subcommand {
    Markov,
    Clt,
    Free,
    Gas,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Markov => "markov",
            Subcommand::Clt => "clt",
            Subcommand::Free => "free",
            Subcommand::Gas => "gas",
        }
    }

    fn schema(self) -> &'static [KeySpec] {
        match self {
            Subcommand::Markov => MARKOV_KEYS,
            Subcommand::Clt => CLT_KEYS,
            Subcommand::Free => FREE_KEYS,
            Subcommand::Gas => GAS_KEYS,
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rejected configuration. Always maps to exit code 2.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    UInt,
    Real,
    /// A real number or the word `auto`.
    RealOrAuto,
    /// A real number, `N^2`, `N^2/<k>` or `<k>*N^2`.
    Beta,
    UIntList,
    Text,
}

impl Kind {
    fn expected(self) -> &'static str {
        match self {
            Kind::UInt => "a non-negative integer",
            Kind::Real => "a real number (a/b fractions allowed)",
            Kind::RealOrAuto => "a positive real number or auto",
            Kind::Beta => "a positive real number, N^2, N^2/<k> or <k>*N^2",
            Kind::UIntList => "a comma-separated list of integers",
            Kind::Text => "text",
        }
    }
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    /// `None` marks a required key.
    default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
    KeySpec { name, kind, default }
}

const COMMON: &[KeySpec] = &[key("seed", Kind::UInt, Some("0")), key("out_dir", Kind::Text, Some("results"))];

const GAS_KEYS: &[KeySpec] = &[
    key("dim", Kind::UInt, None),
    key("n_particles", Kind::UInt, None),
    key("beta", Kind::Beta, None),
    key("potential", Kind::Text, None),
    key("kernel", Kind::Text, None),
    key("steps", Kind::UInt, Some("100000")),
    key("burn_in", Kind::UInt, Some("20000")),
    key("thin", Kind::UInt, Some("100")),
    key("dt", Kind::RealOrAuto, Some("auto")),
    key("init_sigma", Kind::Real, Some("1")),
    key("ks_tol", Kind::Real, Some("0.05")),
    key("m2_tol", Kind::Real, Some("0.05")),
    key("m4_tol", Kind::Real, Some("0.075")),
    key("inside_min", Kind::Real, Some("0.99")),
    key("rate_tol", Kind::Real, Some("0.05")),
    key("lagrange_inside_tol", Kind::Real, Some("0.1")),
    key("lagrange_outside_tol", Kind::Real, Some("0.05")),
];

const MARKOV_KEYS: &[KeySpec] = &[
    key("chain", Kind::Text, None),
    key("start", Kind::Text, Some("point:0")),
    key("start_mix", Kind::Real, Some("0")),
    key("steps", Kind::UInt, Some("50")),
    key("dt", Kind::Real, Some("0.1")),
    key("fd_h", Kind::Real, Some("1e-4")),
    key("increment_tol", Kind::Real, Some("1e-12")),
    key("derivative_tol", Kind::Real, Some("1e-5")),
];

const CLT_KEYS: &[KeySpec] = &[
    key("start", Kind::Text, Some("uniform")),
    key("lo", Kind::Real, Some("-12")),
    key("hi", Kind::Real, Some("12")),
    key("dx", Kind::Real, Some("1/512")),
    key("doublings", Kind::UInt, Some("4")),
    key("heat_t", Kind::Real, Some("0.5")),
    key("h", Kind::Real, Some("1e-3")),
    key("entropy_tol", Kind::Real, Some("1e-3")),
    key("debruijn_tol", Kind::Real, Some("1e-3")),
];

const FREE_KEYS: &[KeySpec] = &[
    key("degrees", Kind::UIntList, Some("4,8,16,32,64")),
    key("max_order", Kind::UInt, Some("5")),
    key("km_degrees", Kind::UIntList, Some("3,4,5,6")),
    key("km_max_order", Kind::UInt, Some("12")),
    key("gap_tol", Kind::Real, Some("0.1")),
    key("km_tol", Kind::Real, Some("1e-8")),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Int(u64),
    Real(f64),
    Text(String),
    List(Vec<u64>),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Real(v) => write!(f, "{v:?}"),
            Scalar::Text(s) => f.write_str(s),
            Scalar::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub params: BTreeMap<String, Scalar>,
    pub out_dir: PathBuf,
    pub preset: Option<String>,
    /// Worker count for the sampler; not part of the echo.
    pub threads: usize,
}

impl ExperimentConfig {
    fn get(&self, key: &str) -> &Scalar {
        self.params
            .get(key)
            .unwrap_or_else(|| panic!("config key {key} is not in the {} schema", self.subcommand))
    }

    pub fn uint(&self, key: &str) -> u64 {
        match self.get(key) {
            Scalar::Int(v) => *v,
            other => panic!("config key {key} holds {other:?}, not an integer"),
        }
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.get(key) {
            Scalar::Real(v) => *v,
            Scalar::Int(v) => *v as f64,
            other => panic!("config key {key} holds {other:?}, not a number"),
        }
    }

    /// `None` for `auto`.
    pub fn real_or_auto(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            Scalar::Text(_) => None,
            _ => Some(self.real(key)),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.get(key) {
            Scalar::Text(s) => s,
            other => panic!("config key {key} holds {other:?}, not text"),
        }
    }

    pub fn list(&self, key: &str) -> &[u64] {
        match self.get(key) {
            Scalar::List(v) => v,
            other => panic!("config key {key} holds {other:?}, not a list"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.uint("seed")
    }

    /// Resolved parameters as strings, without `out_dir`.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .filter(|(k, _)| k.as_str() != "out_dir")
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect()
    }
}

/// Where a config comes from, plus command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub text: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl ConfigSource {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn preset(name: impl Into<String>) -> Self {
        Self {
            preset: Some(name.into()),
            ..Self::default()
        }
    }
}

/// Reads `key = value` lines. `#` starts a comment.
fn read_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", i + 1)));
        }
        if let Some((first, _, _)) = pairs.iter().find(|(_, key, _)| *key == k) {
            return Err(ConfigError(format!("line {}: key {k} already set on line {first}", i + 1)));
        }
        pairs.push((i + 1, k, v));
    }
    Ok(pairs)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + (ca != cb) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn suggestion<'a>(unknown: &str, known: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    known
        .map(|k| (edit_distance(unknown, k), k))
        .filter(|(d, k)| *d <= 2.max(k.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k)
}

pub(crate) fn parse_real(v: &str) -> Option<f64> {
    let x = match v.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => v.parse::<f64>().ok()?,
    };
    x.is_finite().then_some(x)
}

fn parse_beta(v: &str, n: Option<u64>) -> Result<f64, String> {
    let compact: String = v.chars().filter(|c| !c.is_whitespace()).collect();
    let n2 = |n: Option<u64>| n.map(|n| (n * n) as f64).ok_or_else(|| "N^2 needs n_particles".to_string());
    let beta = if compact == "N^2" {
        n2(n)?
    } else if let Some(k) = compact.strip_prefix("N^2/") {
        n2(n)? / parse_real(k).ok_or_else(|| format!("bad divisor in {v}"))?
    } else if let Some(k) = compact.strip_suffix("*N^2") {
        parse_real(k).ok_or_else(|| format!("bad factor in {v}"))? * n2(n)?
    } else {
        parse_real(&compact).ok_or_else(|| format!("cannot read '{v}'"))?
    };
    if beta > 0.0 && beta.is_finite() {
        Ok(beta)
    } else {
        Err(format!("beta must be positive, got {beta}"))
    }
}

fn parse_value(spec: &KeySpec, v: &str, n: Option<u64>) -> Result<Scalar, String> {
    let bad = || format!("key {} expects {}, got '{v}'", spec.name, spec.kind.expected());
    match spec.kind {
        Kind::UInt => v.parse().map(Scalar::Int).map_err(|_| bad()),
        Kind::Real => parse_real(v).map(Scalar::Real).ok_or_else(bad),
        Kind::RealOrAuto => {
            if v == "auto" {
                Ok(Scalar::Text("auto".into()))
            } else {
                match parse_real(v) {
                    Some(x) if x > 0.0 => Ok(Scalar::Real(x)),
                    _ => Err(bad()),
                }
            }
        }
        Kind::Beta => parse_beta(v, n)
            .map(Scalar::Real)
            .map_err(|e| format!("key beta expects {}: {e}", spec.kind.expected())),
        Kind::UIntList => v
            .split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map(Scalar::List)
            .map_err(|_| bad()),
        Kind::Text => {
            if v.is_empty() {
                Err(bad())
            } else {
                Ok(Scalar::Text(v.to_string()))
            }
        }
    }
}

/// Validates a config against the subcommand schema, fills defaults and
/// resolves `beta=N^2`. All missing keys are reported together.
pub fn parse_config(subcommand: Subcommand, source: &ConfigSource) -> Result<ExperimentConfig, ConfigError> {
    let text = match (&source.text, &source.preset) {
        (Some(_), Some(_)) => return Err(ConfigError("give either a config file or a preset, not both".into())),
        (None, None) => return Err(ConfigError("a config file or a preset is required".into())),
        (Some(t), None) => t.clone(),
        (None, Some(name)) => {
            let preset = presets::find(name).ok_or_else(|| {
                ConfigError(format!("unknown preset {name}; available: {}", presets::names().join(", ")))
            })?;
            if preset.subcommand != subcommand {
                return Err(ConfigError(format!(
                    "preset {name} belongs to the {} subcommand",
                    preset.subcommand
                )));
            }
            preset.text.to_string()
        }
    };
    let pairs = read_pairs(&text)?;
    let schema: Vec<&KeySpec> = subcommand.schema().iter().chain(COMMON).collect();

    let mut problems = Vec::new();
    for (line, k, _) in &pairs {
        if !schema.iter().any(|s| s.name == k) {
            let msg = match suggestion(k, schema.iter().map(|s| s.name)) {
                Some(s) => format!("unknown key {k}; did you mean {s}"),
                None => format!("unknown key {k} (line {line})"),
            };
            problems.push(msg);
        }
    }
    let missing: Vec<&str> = schema
        .iter()
        .filter(|s| s.default.is_none() && !pairs.iter().any(|(_, k, _)| k == s.name))
        .map(|s| s.name)
        .collect();
    if !missing.is_empty() {
        problems.push(format!("missing required keys: {}", missing.join(", ")));
    }
    if !problems.is_empty() {
        return Err(ConfigError(problems.join("; ")));
    }

    let raw = |name: &str| -> Option<&str> {
        pairs.iter().find(|(_, k, _)| k == name).map(|(_, _, v)| v.as_str())
    };
    let n = raw("n_particles").and_then(|v| v.parse::<u64>().ok());
    let mut params = BTreeMap::new();
    for spec in &schema {
        let value = raw(spec.name).or(spec.default).expect("required keys were checked");
        let parsed = parse_value(spec, value, n).map_err(ConfigError)?;
        params.insert(spec.name.to_string(), parsed);
    }
    if let Some(seed) = source.seed {
        params.insert("seed".into(), Scalar::Int(seed));
    }
    if let Some(dir) = &source.out_dir {
        params.insert("out_dir".into(), Scalar::Text(dir.display().to_string()));
    }
    let out_dir = PathBuf::from(params["out_dir"].to_string());
    let config = ExperimentConfig {
        subcommand,
        params,
        out_dir,
        preset: source.preset.clone(),
        threads: 1,
    };
    crate::experiments::validate(&config).map_err(|e| ConfigError(e.to_string()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance() {
        assert_eq!(edit_distance("klernel", "kernel"), 1);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("same", "same"), 0);
    }

    #[test]
    fn reals_and_beta() {
        assert_eq!(parse_real("1/512"), Some(1.0 / 512.0));
        assert_eq!(parse_real("1e-3"), Some(1e-3));
        assert_eq!(parse_real("x"), None);
        assert_eq!(parse_beta("N^2", Some(100)), Ok(10000.0));
        assert_eq!(parse_beta("N^2/2", Some(500)), Ok(125000.0));
        assert_eq!(parse_beta("0.5*N^2", Some(10)), Ok(50.0));
        assert_eq!(parse_beta("42", None), Ok(42.0));
        assert!(parse_beta("N^2", None).is_err());
        assert!(parse_beta("-1", None).is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = read_pairs("a=1\na=2\n").unwrap_err();
        assert!(err.0.contains("already set"));
    }
}
