//! Seeded flow workloads: a fixed mice/elephant count split, discrete-uniform sizes
//! within each class, and endpoints drawn from stag, random or stride patterns.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::Topology;

/// Largest mice flow, in KB.
pub const MF_MAX_KB: u64 = 100;
/// Largest elephant flow, in KB (200 MB).
pub const EF_MAX_KB: u64 = 200_000;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("pattern {pattern} cannot be realized: {reason}")]
    PatternInfeasible { pattern: TrafficPattern, reason: String },
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error("cannot parse traffic pattern {0:?}")]
    BadPattern(String),
    #[error("workload csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowClass {
    #[serde(rename = "MF")]
    Mice,
    #[serde(rename = "EF")]
    Elephant,
}

impl FlowClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowClass::Mice => "MF",
            FlowClass::Elephant => "EF",
        }
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_size(size_kb: u64) -> FlowClass {
    if size_kb <= MF_MAX_KB {
        FlowClass::Mice
    } else {
        FlowClass::Elephant
    }
}

pub fn classify(flow: &Flow) -> FlowClass {
    classify_size(flow.size_kb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Selected,
    NonSelected,
    #[default]
    Unscheduled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: usize,
    pub src_host: usize,
    pub dst_host: usize,
    pub size_kb: u64,
    pub tos_value: Option<u8>,
    pub start_time_s: f64,
    pub completion_time_s: Option<f64>,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
    pub phase: Phase,
}

impl Flow {
    pub fn new(id: usize, src_host: usize, dst_host: usize, size_kb: u64) -> Self {
        Self {
            id,
            src_host,
            dst_host,
            size_kb,
            tos_value: None,
            start_time_s: 0.0,
            completion_time_s: None,
            bytes_sent: 0,
            bytes_delivered: 0,
            phase: Phase::Unscheduled,
        }
    }

    pub fn class(&self) -> FlowClass {
        classify(self)
    }

    pub fn size_bytes(&self) -> u64 {
        self.size_kb * 1024
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrafficPattern {
    /// Destination on the sender's edge switch with probability `edge_p`, elsewhere in
    /// its pod with `pod_p`, and in another pod otherwise.
    Stag {
        edge_p: f64,
        pod_p: f64,
    },
    Random,
    /// Host `x` sends to host `(x + i) mod num_hosts`.
    Stride(usize),
}

impl fmt::Display for TrafficPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficPattern::Stag { edge_p, pod_p } => write!(f, "stag:{edge_p}:{pod_p}"),
            TrafficPattern::Random => f.write_str("random"),
            TrafficPattern::Stride(i) => write!(f, "stride:{i}"),
        }
    }
}

impl FromStr for TrafficPattern {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TrafficError::BadPattern(s.to_owned());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let pattern = match parts.as_slice() {
            ["random"] => TrafficPattern::Random,
            ["stride", i] => TrafficPattern::Stride(i.parse().map_err(|_| bad())?),
            ["stag", p, q] => TrafficPattern::Stag { edge_p: p.parse().map_err(|_| bad())?, pod_p: q.parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        pattern.validate().map_err(|_| bad())?;
        Ok(pattern)
    }
}

impl TrafficPattern {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if let TrafficPattern::Stag { edge_p, pod_p } = *self {
            let ok = edge_p >= 0.0 && pod_p >= 0.0 && edge_p + pod_p <= 1.0 + 1e-12;
            if !ok {
                return Err(TrafficError::InvalidSpec(format!(
                    "stag probabilities must be non-negative and sum to at most 1, got {edge_p}, {pod_p}"
                )));
            }
        }
        Ok(())
    }

    /// Short label used in file names and tables, e.g. `stag-0.3-0.3`.
    pub fn label(&self) -> String {
        self.to_string().replace(':', "-")
    }
}

/// When flows enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Arrival {
    /// Every flow starts at t = 0.
    #[default]
    Simultaneous,
    /// Start times uniform in `[0, window_s)`.
    Uniform { window_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub num_flows: usize,
    pub mf_fraction: f64,
    pub mf_size_range_kb: (u64, u64),
    pub ef_size_range_kb: (u64, u64),
    pub pattern: TrafficPattern,
    pub arrival: Arrival,
    pub rng_seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            num_flows: 300,
            mf_fraction: 0.9,
            mf_size_range_kb: (1, MF_MAX_KB),
            ef_size_range_kb: (MF_MAX_KB + 1, EF_MAX_KB),
            pattern: TrafficPattern::Random,
            arrival: Arrival::Simultaneous,
            rng_seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn mf_count(&self) -> usize {
        (self.num_flows as f64 * self.mf_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let invalid = |m: String| Err(TrafficError::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.mf_fraction) {
            return invalid(format!("mf_fraction {} outside [0, 1]", self.mf_fraction));
        }
        for (name, (lo, hi)) in [("mf", self.mf_size_range_kb), ("ef", self.ef_size_range_kb)] {
            if lo < 1 || lo > hi {
                return invalid(format!("{name} size range [{lo}, {hi}] is empty or starts below 1 KB"));
            }
        }
        if self.mf_size_range_kb.1 > MF_MAX_KB || self.ef_size_range_kb.0 <= MF_MAX_KB {
            return invalid("size ranges must stay inside their flow class".into());
        }
        if let Arrival::Uniform { window_s } = self.arrival {
            if !(window_s > 0.0 && window_s.is_finite()) {
                return invalid(format!("arrival window {window_s} must be positive"));
            }
        }
        self.pattern.validate()
    }
}

/// Candidate destinations for a sender, split by locality.
struct Peers {
    same_edge: Vec<usize>,
    same_pod: Vec<usize>,
    other_pods: Vec<usize>,
}

fn peers(topo: &Topology, src: usize) -> Peers {
    let mut out = Peers { same_edge: Vec::new(), same_pod: Vec::new(), other_pods: Vec::new() };
    for &h in topo.hosts() {
        if h == src {
            continue;
        }
        if topo.same_edge(src, h).unwrap() {
            out.same_edge.push(h);
        } else if topo.same_pod(src, h).unwrap() {
            out.same_pod.push(h);
        } else {
            out.other_pods.push(h);
        }
    }
    out
}

fn check_feasible(pattern: TrafficPattern, topo: &Topology) -> Result<(), TrafficError> {
    let infeasible = |reason: &str| Err(TrafficError::PatternInfeasible { pattern, reason: reason.to_owned() });
    if topo.num_hosts() < 2 {
        return infeasible("topology needs at least two hosts");
    }
    match pattern {
        TrafficPattern::Random => Ok(()),
        TrafficPattern::Stride(i) => {
            if i % topo.num_hosts() == 0 {
                infeasible("stride maps every host onto itself")
            } else {
                Ok(())
            }
        }
        TrafficPattern::Stag { edge_p, pod_p } => {
            let p = peers(topo, 0);
            let rest = 1.0 - edge_p - pod_p;
            if edge_p > 0.0 && p.same_edge.is_empty() {
                infeasible("no other host shares an edge switch")
            } else if pod_p > 0.0 && p.same_pod.is_empty() {
                infeasible("no other edge switch in the pod")
            } else if rest > 1e-12 && p.other_pods.is_empty() {
                infeasible("no other pod")
            } else {
                Ok(())
            }
        }
    }
}

pub fn generate(spec: &WorkloadSpec, topo: &Topology) -> Result<Vec<Flow>, TrafficError> {
    spec.validate()?;
    check_feasible(spec.pattern, topo)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let hosts = topo.hosts();
    let n_hosts = hosts.len();

    let n_mf = spec.mf_count();
    let mut classes: Vec<FlowClass> = (0..spec.num_flows).map(|i| if i < n_mf { FlowClass::Mice } else { FlowClass::Elephant }).collect();
    classes.shuffle(&mut rng);

    let peer_table: Vec<Peers> = hosts.iter().map(|&h| peers(topo, h)).collect();
    let mut flows = Vec::with_capacity(spec.num_flows);
    for (id, class) in classes.into_iter().enumerate() {
        let (lo, hi) = match class {
            FlowClass::Mice => spec.mf_size_range_kb,
            FlowClass::Elephant => spec.ef_size_range_kb,
        };
        let size_kb = rng.random_range(lo..=hi);
        let (src, dst) = match spec.pattern {
            TrafficPattern::Stride(i) => {
                let x = id % n_hosts;
                (hosts[x], hosts[(x + i) % n_hosts])
            }
            TrafficPattern::Random => {
                let x = rng.random_range(0..n_hosts);
                let mut y = rng.random_range(0..n_hosts - 1);
                if y >= x {
                    y += 1;
                }
                (hosts[x], hosts[y])
            }
            TrafficPattern::Stag { edge_p, pod_p } => {
                let x = rng.random_range(0..n_hosts);
                let u: f64 = rng.random();
                let p = &peer_table[x];
                let pool = if u < edge_p {
                    &p.same_edge
                } else if u < edge_p + pod_p {
                    &p.same_pod
                } else {
                    &p.other_pods
                };
                (hosts[x], pool[rng.random_range(0..pool.len())])
            }
        };
        let mut flow = Flow::new(id, src, dst, size_kb);
        if let Arrival::Uniform { window_s } = spec.arrival {
            flow.start_time_s = rng.random_range(0.0..window_s);
        }
        flows.push(flow);
    }
    Ok(flows)
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    id: usize,
    src: usize,
    dst: usize,
    size_kb: u64,
}

/// Writes `id,src,dst,size_kb` rows for replay.
pub fn write_workload_csv<W: Write>(flows: &[Flow], out: W) -> Result<(), TrafficError> {
    let mut w = csv::Writer::from_writer(out);
    for f in flows {
        w.serialize(WorkloadRow { id: f.id, src: f.src_host, dst: f.dst_host, size_kb: f.size_kb })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_workload_csv<R: Read>(input: R) -> Result<Vec<Flow>, TrafficError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<WorkloadRow>()
        .map(|row| {
            let row = row?;
            Ok(Flow::new(row.id, row.src, row.dst, row.size_kb))
        })
        .collect()
}
