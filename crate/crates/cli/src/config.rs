//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be known;
//! `--set key=value` overrides are applied on top of the file in order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kpflow_core::bpso::{BpsoConfig, PenaltyFactor};
use kpflow_core::schedulers::{DetectionConfig, KpPsoParams, PathPolicy, SchedulerKind};
use kpflow_core::sim::SimConfig;
use kpflow_core::topology::LayerCapacities;
use kpflow_core::tos::TosTable;
use kpflow_core::traffic::{Arrival, TrafficPattern, WorkloadSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

pub const KNOWN_KEYS: &[&str] = &[
    "topo.k",
    "topo.edge_gbps",
    "topo.agg_gbps",
    "topo.core_gbps",
    "topo.loss_rate",
    "traffic.flows",
    "traffic.mf_fraction",
    "traffic.pattern",
    "traffic.seed",
    "traffic.arrival",
    "scheduler.kind",
    "scheduler.threshold",
    "scheduler.hash_seed",
    "scheduler.path_policy",
    "bpso.particles",
    "bpso.iterations",
    "bpso.c1",
    "bpso.c2",
    "bpso.w_start",
    "bpso.w_end",
    "bpso.v_max",
    "bpso.q",
    "bpso.seed",
    "tos.mf_threshold_kb",
    "tos.max_size_kb",
    "sim.packet_size_bytes",
    "sim.loss_rate",
    "sim.time_resolution_s",
    "sim.seed",
    "sim.timeline_s",
    "patterns",
    "seeds",
    "output_dir",
];

pub const DEFAULT_PATTERNS: &str = "stag:0.3:0.3,stag:0.5:0.3,random,stride:1,stride:4";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub capacities: LayerCapacities,
    pub topo_loss_rate: f64,
    /// Template for every cell; pattern and seed are replaced per cell.
    pub workload: WorkloadSpec,
    pub schedulers: Vec<SchedulerKind>,
    pub kp_pso: KpPsoParams,
    pub sim: SimConfig,
    pub patterns: Vec<TrafficPattern>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_pairs(&[]).expect("defaults are valid")
    }
}

/// Raw key/value pairs in the order they were given; later entries win.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(split_pair(line).ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_owned() })?);
    }
    Ok(out)
}

pub fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then(|| (k.to_owned(), v.trim().to_owned()))
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
            map.insert(k.as_str(), v.as_str());
        }
        let get = |key: &str| map.get(key).copied();

        let k = parse_or(get, "topo.k", 4usize)?;
        let capacities = LayerCapacities::from_gbps(
            parse_or(get, "topo.edge_gbps", 1.0)?,
            parse_or(get, "topo.agg_gbps", 2.0)?,
            parse_or(get, "topo.core_gbps", 4.0)?,
        );
        let topo_loss_rate: f64 = parse_or(get, "topo.loss_rate", 0.01)?;

        let defaults = WorkloadSpec::default();
        let pattern: TrafficPattern = parse_or(get, "traffic.pattern", defaults.pattern)?;
        let arrival = match get("traffic.arrival") {
            None => Arrival::Simultaneous,
            Some(v) => parse_arrival(v).ok_or_else(|| invalid("traffic.arrival", v, "expected simultaneous or uniform:<window_s>"))?,
        };
        let workload = WorkloadSpec {
            num_flows: parse_or(get, "traffic.flows", defaults.num_flows)?,
            mf_fraction: parse_or(get, "traffic.mf_fraction", defaults.mf_fraction)?,
            pattern,
            arrival,
            rng_seed: parse_or(get, "traffic.seed", 0u64)?,
            ..defaults
        };
        workload.validate().map_err(|e| invalid("traffic.*", "", &e.to_string()))?;

        let schedulers = match get("scheduler.kind") {
            None => vec![SchedulerKind::SizeKpPso, SchedulerKind::Ecmp],
            Some(v) => list(v)
                .map(|s| s.parse::<SchedulerKind>().map_err(|e| invalid("scheduler.kind", v, &e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
        };
        if schedulers.is_empty() {
            return Err(invalid("scheduler.kind", "", "at least one scheduler is required"));
        }

        let bd = BpsoConfig::default();
        let v_max: f64 = parse_or(get, "bpso.v_max", bd.v_max)?;
        let penalty_q = match get("bpso.q") {
            None | Some("auto") => PenaltyFactor::Auto,
            Some(v) => PenaltyFactor::Fixed(parse("bpso.q", v)?),
        };
        let bpso = BpsoConfig {
            num_particles: parse_or(get, "bpso.particles", bd.num_particles)?,
            max_iterations: parse_or(get, "bpso.iterations", bd.max_iterations)?,
            c1: parse_or(get, "bpso.c1", bd.c1)?,
            c2: parse_or(get, "bpso.c2", bd.c2)?,
            inertia_start: parse_or(get, "bpso.w_start", bd.inertia_start)?,
            inertia_end: parse_or(get, "bpso.w_end", bd.inertia_end)?,
            v_min: -v_max,
            v_max,
            penalty_q,
            rng_seed: parse_or(get, "bpso.seed", 0u64)?,
        };
        bpso.validate().map_err(|e| invalid("bpso.*", "", &e.to_string()))?;

        let tos = TosTable::new(parse_or(get, "tos.mf_threshold_kb", 100u64)?, parse_or(get, "tos.max_size_kb", 200_000u64)?)
            .map_err(|e| invalid("tos.max_size_kb", get("tos.max_size_kb").unwrap_or(""), &e.to_string()))?;
        let detection = DetectionConfig { utilization_threshold: parse_or(get, "scheduler.threshold", 0.7)? };
        detection.validate().map_err(|e| invalid("scheduler.threshold", get("scheduler.threshold").unwrap_or(""), &e.to_string()))?;
        let path_policy = match get("scheduler.path_policy") {
            None | Some("lowest-id") => PathPolicy::LowestId,
            Some("ecmp") => PathPolicy::Ecmp,
            Some(v) => return Err(invalid("scheduler.path_policy", v, "expected lowest-id or ecmp")),
        };
        let kp_pso = KpPsoParams { tos, bpso, detection, path_policy, hash_seed: parse_or(get, "scheduler.hash_seed", 0u64)? };

        let sd = SimConfig::default();
        let timeline_samples_s = match get("sim.timeline_s") {
            None => sd.timeline_samples_s.clone(),
            Some(v) => list(v).map(|s| parse("sim.timeline_s", s)).collect::<Result<Vec<f64>, _>>()?,
        };
        if timeline_samples_s.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("sim.timeline_s", get("sim.timeline_s").unwrap_or(""), "sample times must be non-decreasing"));
        }
        let sim = SimConfig {
            rng_seed: parse_or(get, "sim.seed", 0u64)?,
            packet_size_bytes: parse_or(get, "sim.packet_size_bytes", sd.packet_size_bytes)?,
            loss_rate: parse_or(get, "sim.loss_rate", topo_loss_rate)?,
            time_resolution_s: parse_or(get, "sim.time_resolution_s", sd.time_resolution_s)?,
            timeline_samples_s,
        };
        sim.validate().map_err(|e| invalid("sim.*", "", &e.to_string()))?;

        let patterns = match get("patterns") {
            Some(v) => list(v).map(|s| parse("patterns", s)).collect::<Result<Vec<TrafficPattern>, _>>()?,
            None if get("traffic.pattern").is_some() => vec![pattern],
            None => list(DEFAULT_PATTERNS).map(|s| s.parse().expect("default patterns parse")).collect(),
        };
        if patterns.is_empty() {
            return Err(invalid("patterns", get("patterns").unwrap_or(""), "at least one pattern is required"));
        }
        let seeds = match get("seeds") {
            None => (0..10).collect(),
            Some(v) => parse_seeds(v).ok_or_else(|| invalid("seeds", v, "expected a list like 0,1,2 or a range like 0..10"))?,
        };
        if seeds.is_empty() {
            return Err(invalid("seeds", get("seeds").unwrap_or(""), "at least one seed is required"));
        }

        Ok(ExperimentConfig {
            k,
            capacities,
            topo_loss_rate,
            workload,
            schedulers,
            kp_pso,
            sim,
            patterns,
            seeds,
            output_dir: PathBuf::from(get("output_dir").unwrap_or("results")),
        })
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_owned(), value: value.to_owned(), reason: reason.to_owned() }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| invalid(key, value, &e.to_string()))
}

fn parse_or<'a, T: std::str::FromStr>(get: impl Fn(&str) -> Option<&'a str>, key: &str, default: T) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    get(key).map_or(Ok(default), |v| parse(key, v))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_arrival(v: &str) -> Option<Arrival> {
    match v.trim() {
        "simultaneous" => Some(Arrival::Simultaneous),
        other => {
            let window_s: f64 = other.strip_prefix("uniform:")?.parse().ok()?;
            (window_s.is_finite() && window_s >= 0.0).then_some(Arrival::Uniform { window_s })
        }
    }
}

fn parse_seeds(v: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return Some((a..b).collect());
    }
    list(v).map(|s| s.parse().ok()).collect()
}
