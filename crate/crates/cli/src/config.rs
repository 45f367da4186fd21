//! Sweep configuration files.
//!
//! The format is flat `key = value` lines grouped under `[sweep]` and one
//! or more `[sampler]` headers. `#` starts a comment; blank lines are
//! ignored. List values are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use jumpflow::distributions::{blockwise_ar1_factored, FactoredJoint};
use jumpflow::grid::GridKind;
use jumpflow::{
    JointTable, MixturePath, SamplerKind, SourceSpec, SweepConfig, SweepSampler, TimeSchedule,
};

/// A configuration problem tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Section = BTreeMap<String, (usize, String)>;

/// Where the data distribution comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Ar1 { dims: usize, vocab: usize },
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dist: DistSpec,
    pub source: SourceSpec,
    pub schedule: TimeSchedule,
    pub grid: GridKind,
    pub delta: f64,
    pub samplers: Vec<SweepSampler>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_samples: usize,
    pub tv_coords: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

const SWEEP_KEYS: &[&str] = &[
    "dist",
    "source",
    "schedule",
    "grid",
    "delta",
    "K_list",
    "seeds",
    "n_samples",
    "tv_coords",
    "out",
    "timing",
];
const SAMPLER_KEYS: &[&str] = &[
    "kind",
    "label",
    "m",
    "j",
    "t_theta",
    "noise_scale",
    "noise_seed",
    "cache",
];

fn parse_sections(text: &str) -> Result<(Section, Vec<Section>), ConfigError> {
    let mut sweep: Option<Section> = None;
    let mut samplers = Vec::new();
    let mut current: Option<&str> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            match name.trim() {
                "sweep" => {
                    if sweep.is_some() {
                        return Err(ConfigError::new(
                            "[sweep]",
                            format!("line {}: section repeated", lineno + 1),
                        ));
                    }
                    sweep = Some(Section::new());
                    current = Some("sweep");
                }
                "sampler" => {
                    samplers.push(Section::new());
                    current = Some("sampler");
                }
                other => {
                    return Err(ConfigError::new(
                        format!("[{other}]"),
                        format!("line {}: unknown section", lineno + 1),
                    ))
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(
                line,
                format!("line {}: expected `key = value`", lineno + 1),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        let (section, allowed) = match current {
            Some("sweep") => (sweep.as_mut().expect("sweep section open"), SWEEP_KEYS),
            Some(_) => (
                samplers.last_mut().expect("sampler section open"),
                SAMPLER_KEYS,
            ),
            None => {
                return Err(ConfigError::new(
                    key,
                    format!("line {}: key outside any section", lineno + 1),
                ))
            }
        };
        if !allowed.contains(&key) {
            return Err(ConfigError::new(
                key,
                format!("line {}: unknown key", lineno + 1),
            ));
        }
        if section
            .insert(key.to_string(), (lineno + 1, value.to_string()))
            .is_some()
        {
            return Err(ConfigError::new(
                key,
                format!("line {}: key repeated", lineno + 1),
            ));
        }
    }
    let sweep = sweep.ok_or_else(|| ConfigError::new("[sweep]", "missing section"))?;
    Ok((sweep, samplers))
}

fn required<'a>(section: &'a Section, key: &str) -> Result<&'a str, ConfigError> {
    section
        .get(key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| ConfigError::new(key, "missing"))
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{value}`: {e}")))
}

fn optional<T: std::str::FromStr>(
    section: &Section,
    key: &str,
    default: T,
) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    match section.get(key) {
        Some((_, v)) => parse_value(key, v),
        None => Ok(default),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(ConfigError::new(key, "list is empty"));
    }
    items.into_iter().map(|s| parse_value(key, s)).collect()
}

fn parse_dist(value: &str, base: &Path) -> Result<DistSpec, ConfigError> {
    if let Some(args) = value.strip_prefix("ar1(").and_then(|v| v.strip_suffix(')')) {
        let parts: Vec<usize> = parse_list("dist", args)?;
        let [dims, vocab] = parts[..] else {
            return Err(ConfigError::new("dist", "expected ar1(D, vocab)"));
        };
        return Ok(DistSpec::Ar1 { dims, vocab });
    }
    if value.is_empty() {
        return Err(ConfigError::new("dist", "empty"));
    }
    Ok(DistSpec::File(base.join(value)))
}

fn parse_source(value: &str) -> Result<SourceSpec, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "uniform" => Ok(SourceSpec::Uniform),
        "masked" => Ok(SourceSpec::Masked),
        other => Err(ConfigError::new(
            "source",
            format!("expected uniform or masked, got `{other}`"),
        )),
    }
}

fn parse_sampler(section: &Section) -> Result<SweepSampler, ConfigError> {
    let kind: SamplerKind = parse_value("kind", required(section, "kind")?)?;
    let mut s = SweepSampler::new(kind);
    if let Some((_, label)) = section.get("label") {
        if label.is_empty() || label.contains([',', '\n', '"']) {
            return Err(ConfigError::new(
                "label",
                format!("`{label}` is not a valid CSV field"),
            ));
        }
        s.label = label.clone();
    }
    s.m = optional(section, "m", s.m)?;
    if s.m == 0 {
        return Err(ConfigError::new("m", "must be >= 1"));
    }
    if let Some((_, v)) = section.get("j") {
        let j: usize = parse_value("j", v)?;
        if j == 0 {
            return Err(ConfigError::new("j", "must be >= 1"));
        }
        s.j = Some(j);
    }
    s.t_theta = optional(section, "t_theta", s.t_theta)?;
    s.noise_scale = optional(section, "noise_scale", s.noise_scale)?;
    if !(s.noise_scale >= 0.0 && s.noise_scale.is_finite()) {
        return Err(ConfigError::new("noise_scale", "must be finite and >= 0"));
    }
    s.noise_seed = optional(section, "noise_seed", s.noise_seed)?;
    s.cache = optional(section, "cache", s.cache)?;
    Ok(s)
}

impl RunConfig {
    /// Parses config text; relative file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let (sweep, sampler_sections) = parse_sections(text)?;
        let dist = parse_dist(required(&sweep, "dist")?, base)?;
        let source = parse_source(required(&sweep, "source")?)?;
        let schedule = optional(&sweep, "schedule", TimeSchedule::Linear)?;
        let grid = optional(&sweep, "grid", GridKind::Uniform)?;
        let delta: f64 = parse_value("delta", required(&sweep, "delta")?)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ConfigError::new("delta", format!("{delta} outside (0, 1)")));
        }
        let ks: Vec<usize> = parse_list("K_list", required(&sweep, "K_list")?)?;
        if ks.contains(&0) {
            return Err(ConfigError::new("K_list", "step counts must be >= 1"));
        }
        let seeds = parse_list("seeds", required(&sweep, "seeds")?)?;
        let n_samples: usize = parse_value("n_samples", required(&sweep, "n_samples")?)?;
        if n_samples == 0 {
            return Err(ConfigError::new("n_samples", "must be >= 1"));
        }
        let tv_coords = sweep
            .get("tv_coords")
            .map(|(_, v)| parse_list("tv_coords", v))
            .transpose()?;
        let out = sweep.get("out").map(|(_, v)| base.join(v));
        let timing = optional(&sweep, "timing", true)?;
        if sampler_sections.is_empty() {
            return Err(ConfigError::new(
                "[sampler]",
                "at least one sampler section is required",
            ));
        }
        let samplers = sampler_sections
            .iter()
            .map(parse_sampler)
            .collect::<Result<Vec<_>, _>>()?;
        for s in &samplers {
            if !(0.0..1.0 - delta + f64::EPSILON).contains(&s.t_theta) {
                return Err(ConfigError::new(
                    "t_theta",
                    format!("{} outside [0, 1 - delta]", s.t_theta),
                ));
            }
        }
        Ok(Self {
            dist,
            source,
            schedule,
            grid,
            delta,
            samplers,
            ks,
            seeds,
            n_samples,
            tv_coords,
            out,
            timing,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("<file>", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Builds the path and sweep description.
    pub fn build(&self) -> Result<SweepConfig, ConfigError> {
        let data: FactoredJoint = match &self.dist {
            DistSpec::Ar1 { dims, vocab } => blockwise_ar1_factored(*dims, *vocab)
                .map_err(|e| ConfigError::new("dist", e.to_string()))?,
            DistSpec::File(path) => JointTable::read(path)
                .map_err(|e| ConfigError::new("dist", e.to_string()))?
                .into(),
        };
        let dims = data.dims();
        let path = MixturePath::new(self.schedule, self.source.clone(), data)
            .map_err(|e| ConfigError::new("source", e.to_string()))?;
        let tv_coords = match &self.tv_coords {
            Some(c) => c.clone(),
            None => (0..dims.min(3)).collect(),
        };
        let config = SweepConfig {
            path: Arc::new(path),
            samplers: self.samplers.clone(),
            ks: self.ks.clone(),
            seeds: self.seeds.clone(),
            n_samples: self.n_samples,
            tv_coords,
            grid: self.grid,
            delta: self.delta,
            timing: self.timing,
        };
        config
            .validate()
            .map_err(|e| ConfigError::new("tv_coords", e.to_string()))?;
        Ok(config)
    }
}
