//! Flat `key = value` config files with `[section]` headers (a TOML subset:
//! no nested tables). Every semantic error is reported with the line of the
//! offending key.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::data::ColumnMapping;
use crate::kernel::Bandwidth;
use crate::simulation::{BandwidthPolicy, DistortionSpec, SimulationConfig};
use crate::{Error, Result};

pub struct ConfigDoc {
    text: String,
    table: Table,
    origin: PathBuf,
}

impl ConfigDoc {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            Error::config(line, e.message().to_string())
        })?;
        for (key, value) in &table {
            if let Value::Table(inner) = value {
                if let Some((k, _)) = inner.iter().find(|(_, v)| v.is_table()) {
                    return Err(Error::config(None, format!("nested table [{key}.{k}] is not supported")));
                }
            }
        }
        Ok(Self { text: text.to_string(), table, origin: origin.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { context: format!("reading config {}", path.display()), source })?;
        Self::parse(&text, path)
    }

    pub fn origin(&self) -> &Path {
        &self.origin
    }

    /// Resolves a path relative to the config file's directory.
    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.origin.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    /// Line number (1-based) of `key` inside `[section]` (or the top level).
    pub fn line_of(&self, section: Option<&str>, key: &str) -> Option<usize> {
        let mut current: Option<String> = None;
        for (k, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.trim().to_string());
                continue;
            }
            if current.as_deref() == section {
                if let Some((lhs, _)) = line.split_once('=') {
                    if lhs.trim().trim_matches('"') == key {
                        return Some(k + 1);
                    }
                }
            }
        }
        None
    }

    fn section(&self, name: &str) -> Option<&Table> {
        self.table.get(name).and_then(Value::as_table)
    }

    fn raw(&self, section: Option<&str>, key: &str) -> Option<&Value> {
        match section {
            None => self.table.get(key).filter(|v| !v.is_table()),
            Some(s) => self.section(s).and_then(|t| t.get(key)),
        }
    }

    fn err(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> Error {
        let place = match section {
            Some(s) => format!("[{s}] {key}"),
            None => key.to_string(),
        };
        Error::config(self.line_of(section, key), format!("{place}: {}", message.into()))
    }

    pub fn string(&self, section: Option<&str>, key: &str) -> Result<Option<String>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(section, key, "expected a string")),
        }
    }

    /// A number, also accepting an integer or a `"a/b"` fraction string.
    pub fn float(&self, section: Option<&str>, key: &str) -> Result<Option<f64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(Value::String(s)) => parse_fraction(s)
                .map(Some)
                .ok_or_else(|| self.err(section, key, format!("cannot read '{s}' as a number"))),
            Some(_) => Err(self.err(section, key, "expected a number")),
        }
    }

    pub fn uint(&self, section: Option<&str>, key: &str) -> Result<Option<u64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => Err(self.err(section, key, "expected a non-negative integer")),
        }
    }

    pub fn floats(&self, section: Option<&str>, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.err(section, key, "expected an array of numbers")),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(self.err(section, key, "expected an array of numbers")),
        }
    }

    pub fn strings(&self, section: Option<&str>, key: &str) -> Result<Option<Vec<String>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| self.err(section, key, "expected an array of strings")))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::String(s)) => Ok(Some(s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect())),
            Some(_) => Err(self.err(section, key, "expected an array of strings")),
        }
    }

    /// Fails on sections or keys outside `allowed`, which catches typos.
    pub fn check_keys(&self, allowed: &[(Option<&str>, &[&str])]) -> Result<()> {
        for (key, value) in &self.table {
            let (section, keys): (Option<&str>, Vec<&String>) = match value {
                Value::Table(t) => (Some(key.as_str()), t.keys().collect()),
                _ => (None, vec![key]),
            };
            let Some((_, known)) = allowed.iter().find(|(s, _)| *s == section) else {
                let line = self.text.lines().position(|l| l.trim() == format!("[{key}]")).map(|k| k + 1);
                return Err(Error::config(line, format!("unknown section [{key}]")));
            };
            if let Some(bad) = keys.into_iter().find(|k| !known.contains(&k.as_str())) {
                return Err(self.err(section, bad, "unknown key"));
            }
        }
        Ok(())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => s.trim().parse().ok(),
    }
}

/// A parsed `simulate` config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub id: String,
    pub config: SimulationConfig,
    /// fixed study duration; calibrated from `target_cr` when absent
    pub tau: Option<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Proposed,
    Naive,
    Oracle,
}

impl FitMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Self::Proposed),
            "naive" => Some(Self::Naive),
            "oracle" | "oracle-if-available" => Some(Self::Oracle),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Naive => "naive",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthChoice {
    Auto,
    Value(Bandwidth),
}

/// Everything `fit` needs, resolved from the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub columns: ColumnMapping,
    pub method: FitMethod,
    pub bandwidth: BandwidthChoice,
    pub output: PathBuf,
    pub ci_level: f64,
}

pub const FIT_KEYS: &[(Option<&str>, &[&str])] = &[
    (None, &["id"]),
    (Some("input"), &["path"]),
    (Some("columns"), &["time", "event", "covariate", "confounder", "adjust", "truth", "stratum"]),
    (Some("analysis"), &["method", "bandwidth", "ci_level", "grid"]),
    (Some("output"), &["dir"]),
];

pub fn parse_bandwidth_choice(s: &str) -> Option<BandwidthChoice> {
    if s == "auto" || s == "cv" {
        return Some(BandwidthChoice::Auto);
    }
    s.parse::<f64>().ok().and_then(|h| Bandwidth::new(h).ok()).map(BandwidthChoice::Value)
}

impl ConfigDoc {
    pub fn bandwidth_choice(&self, section: &str) -> Result<Option<BandwidthChoice>> {
        let sec = Some(section);
        match self.raw(sec, "bandwidth") {
            None => Ok(None),
            Some(Value::String(s)) => parse_bandwidth_choice(s)
                .map(Some)
                .ok_or_else(|| self.err(sec, "bandwidth", "expected \"auto\" or a positive number")),
            Some(_) => match self.float(sec, "bandwidth")?.map(Bandwidth::new) {
                Some(Ok(h)) => Ok(Some(BandwidthChoice::Value(h))),
                _ => Err(self.err(sec, "bandwidth", "expected \"auto\" or a positive number")),
            },
        }
    }

    /// Parses the `[design]`, `[distortion]` and `[study]` sections.
    pub fn simulation_config(&self) -> Result<SimulateSpec> {
        self.check_keys(SIMULATE_KEYS)?;
        let d = Some("design");
        let s = Some("study");
        let id = self
            .string(None, "id")?
            .or_else(|| self.origin.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "study".into());
        if id.contains([',', '\n', '"']) {
            return Err(self.err(None, "id", "must not contain commas, quotes or newlines"));
        }

        let distortion = self.distortion()?;
        let n = self.uint(d, "n")?.ok_or_else(|| self.missing(d, "n"))? as usize;
        let target_cr = self.float(s, "target_cr")?.ok_or_else(|| self.missing(s, "target_cr"))?;
        let mut cfg = SimulationConfig::paper(n, target_cr, distortion);
        if let Some(v) = self.floats(d, "beta0")? {
            cfg.beta0 = v;
        }
        macro_rules! opt_float {
            ($sec:expr, $key:literal, $field:ident) => {
                if let Some(v) = self.float($sec, $key)? {
                    cfg.$field = v;
                }
            };
        }
        opt_float!(d, "gamma0", gamma0);
        opt_float!(d, "z_corr", z_corr);
        opt_float!(d, "x_mean", x_mean);
        opt_float!(d, "x_sd", x_sd);
        opt_float!(d, "u_lo", u_lo);
        opt_float!(d, "u_hi", u_hi);
        opt_float!(s, "ci_level", ci_level);
        if let Some(r) = self.uint(s, "replications")? {
            cfg.replications = r as usize;
        }
        if let Some(seed) = self.uint(s, "seed")? {
            cfg.seed = seed;
        }
        if let Some(choice) = self.bandwidth_choice("study")? {
            cfg.bandwidth_policy = match choice {
                BandwidthChoice::Auto => BandwidthPolicy::CvPerReplication,
                BandwidthChoice::Value(h) => BandwidthPolicy::Fixed(h),
            };
        }
        cfg.validate().map_err(|e| {
            let key = match &e {
                crate::simulation::SimulationError::DistortionNotMeanOne { .. } => (Some("distortion"), "kind"),
                crate::simulation::SimulationError::InvalidConfig(m) if m.starts_with("n ") => (d, "n"),
                crate::simulation::SimulationError::InvalidConfig(m) if m.starts_with("target") => (s, "target_cr"),
                crate::simulation::SimulationError::InvalidConfig(m) if m.starts_with("replications") => (s, "replications"),
                _ => (None, ""),
            };
            Error::config(self.line_of(key.0, key.1), e.to_string())
        })?;
        let tau = self.float(s, "tau")?;
        if let Some(t) = tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(self.err(s, "tau", "must be positive"));
            }
        }
        let output = self.string(Some("output"), "dir")?.map(|p| self.resolve_path(&p));
        Ok(SimulateSpec { id, config: cfg, tau, output })
    }

    fn missing(&self, section: Option<&str>, key: &str) -> Error {
        let line = section.and_then(|s| self.text.lines().position(|l| l.trim() == format!("[{s}]")).map(|k| k + 1));
        Error::config(line, format!("[{}] {key}: required key is missing", section.unwrap_or("")))
    }

    fn distortion(&self) -> Result<DistortionSpec> {
        let sec = Some("distortion");
        let kind = self.string(sec, "kind")?.unwrap_or_else(|| "identity".into());
        let num = |key: &str| -> Result<f64> { self.float(sec, key)?.ok_or_else(|| self.missing(sec, key)) };
        Ok(match kind.as_str() {
            "identity" => DistortionSpec::Identity,
            "linear_shift" => DistortionSpec::LinearShift { shift: num("shift")?, scale: num("scale")? },
            "quadratic" => DistortionSpec::Quadratic { coef: num("coef")?, shift: num("shift")? },
            "table" => {
                let u = self.floats(sec, "knots_u")?.ok_or_else(|| self.missing(sec, "knots_u"))?;
                let phi = self.floats(sec, "knots_phi")?.ok_or_else(|| self.missing(sec, "knots_phi"))?;
                if u.len() != phi.len() {
                    return Err(self.err(sec, "knots_phi", "must have as many entries as knots_u"));
                }
                DistortionSpec::Table { knots: u.into_iter().zip(phi).collect() }
            }
            other => return Err(self.err(sec, "kind", format!("unknown distortion '{other}'"))),
        })
    }
}

pub const SIMULATE_KEYS: &[(Option<&str>, &[&str])] = &[
    (None, &["id"]),
    (Some("design"), &["n", "beta0", "gamma0", "z_corr", "x_mean", "x_sd", "u_lo", "u_hi"]),
    (Some("distortion"), &["kind", "shift", "scale", "coef", "knots_u", "knots_phi"]),
    (Some("study"), &["target_cr", "replications", "seed", "ci_level", "bandwidth", "tau"]),
    (Some("output"), &["dir"]),
];
