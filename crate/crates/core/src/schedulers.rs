//! Scheduling policies that turn flows into per-flow path/phase/priority decisions.
//!
//! [`schedule_size_kp_pso`] handles one detected group of parallel flows: it tags every
//! flow by size, packs the group into the next-hop knapsack with the swarm solver and
//! forwards the packed flows in phase 0 ahead of the rest. [`schedule_ecmp`] is the
//! hash-based multipath baseline. [`schedule_workload`] plays the controller loop over
//! a whole workload.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpso::{self, BpsoConfig, BpsoError};
use crate::knapsack::{KnapsackError, KnapsackInstance, KnapsackItem};
use crate::sim::{max_min_rates, Demand};
use crate::topology::{Topology, TopologyError};
use crate::tos::{self, TosError, TosTable};
use crate::traffic::Flow;

pub const PRIORITY_SELECTED: u8 = 2;
pub const PRIORITY_NON_SELECTED: u8 = 1;
pub const PRIORITY_DEFAULT: u8 = 1;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("initial link capacity is zero")]
    ZeroCapacity,
    #[error("cannot schedule an empty group")]
    EmptyGroup,
    #[error("group mixes endpoint pairs: flow {flow_id} is not {src}->{dst}")]
    MixedGroup { flow_id: usize, src: usize, dst: usize },
    #[error("detection threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("unknown scheduler {0:?}")]
    UnknownScheduler(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Tos(#[from] TosError),
    #[error(transparent)]
    Knapsack(#[from] KnapsackError),
    #[error(transparent)]
    Bpso(#[from] BpsoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub flow_id: usize,
    pub path: Vec<usize>,
    /// 0 = forwarded first, 1 = forwarded after phase 0 of its pair completes.
    pub phase: u8,
    /// Higher forwards first.
    pub priority: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub utilization_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { utilization_threshold: 0.7 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let t = self.utilization_threshold;
        if t > 0.0 && t <= 1.0 {
            Ok(())
        } else {
            Err(SchedulerError::InvalidThreshold(t))
        }
    }
}

/// Fraction of a link's initial bandwidth currently occupied.
pub fn link_utilization(occupied_kb: u64, initial_kb: u64) -> Result<f64, SchedulerError> {
    if initial_kb == 0 {
        return Err(SchedulerError::ZeroCapacity);
    }
    Ok(occupied_kb as f64 / initial_kb as f64)
}

/// Largest set of flows sharing `(src, dst)` once the link is loaded past the threshold.
///
/// The flow id plays the role of the transport port, so the match key is the host pair.
/// Equal-size groups resolve to the smallest pair. Groups of one are not parallel flows.
pub fn detect_parallel_group<'a>(flows: &'a [Flow], utilization: f64, cfg: &DetectionConfig) -> Option<Vec<&'a Flow>> {
    if utilization < cfg.utilization_threshold {
        return None;
    }
    let mut groups: BTreeMap<(usize, usize), Vec<&Flow>> = BTreeMap::new();
    for f in flows {
        groups.entry((f.src_host, f.dst_host)).or_default().push(f);
    }
    let mut best: Option<Vec<&Flow>> = None;
    for group in groups.into_values() {
        if group.len() >= 2 && best.as_ref().is_none_or(|b| group.len() > b.len()) {
            best = Some(group);
        }
    }
    best
}

/// Path selection for both phases of a knapsack-scheduled group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PathPolicy {
    /// First equal-cost path by switch id for every flow.
    #[default]
    LowestId,
    /// Hash each flow over the equal-cost paths as ECMP would.
    Ecmp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpPsoParams {
    pub tos: TosTable,
    pub bpso: BpsoConfig,
    pub detection: DetectionConfig,
    pub path_policy: PathPolicy,
    pub hash_seed: u64,
}

impl Default for KpPsoParams {
    fn default() -> Self {
        Self {
            tos: TosTable::default(),
            bpso: BpsoConfig::default(),
            detection: DetectionConfig::default(),
            path_policy: PathPolicy::LowestId,
            hash_seed: 0,
        }
    }
}

/// Knapsack-schedules one group of flows that share a source and destination.
pub fn schedule_size_kp_pso(group: &[&Flow], topo: &Topology, params: &KpPsoParams) -> Result<Vec<ScheduleDecision>, SchedulerError> {
    let first = group.first().ok_or(SchedulerError::EmptyGroup)?;
    let (src, dst) = (first.src_host, first.dst_host);
    if let Some(f) = group.iter().find(|f| (f.src_host, f.dst_host) != (src, dst)) {
        return Err(SchedulerError::MixedGroup { flow_id: f.id, src, dst });
    }

    let sizes: Vec<u64> = group.iter().map(|f| f.size_kb).collect();
    let tagged = tos::tag_flows(&sizes, &params.tos)?;
    let items = tagged
        .iter()
        .enumerate()
        .map(|(i, &(value, weight))| KnapsackItem::new(i, weight, u32::from(value)))
        .collect::<Result<Vec<_>, _>>()?;
    let instance = KnapsackInstance::new(items, topo.next_hop_capacity(src, dst)?)?;

    // Distinct groups get distinct swarm streams under one configured seed.
    let bpso_cfg = params.bpso.clone().with_seed(mix(&[params.bpso.rng_seed, src as u64, dst as u64]));
    let result = bpso::solve(&instance, &bpso_cfg)?;

    let paths = topo.equal_cost_paths(src, dst)?;
    Ok(group
        .iter()
        .zip(&result.best_position)
        .map(|(f, &selected)| {
            let path = match params.path_policy {
                PathPolicy::LowestId => paths[0].clone(),
                PathPolicy::Ecmp => paths[ecmp_index(f, params.hash_seed, paths.len())].clone(),
            };
            let (phase, priority) = if selected { (0, PRIORITY_SELECTED) } else { (1, PRIORITY_NON_SELECTED) };
            ScheduleDecision { flow_id: f.id, path, phase, priority }
        })
        .collect())
}

/// splitmix64 finalizer folded over the inputs; stable across platforms and releases.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        let mut z = h ^ w.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn ecmp_index(flow: &Flow, seed: u64, paths: usize) -> usize {
    (mix(&[flow.src_host as u64, flow.dst_host as u64, flow.id as u64, seed]) % paths as u64) as usize
}

pub fn schedule_ecmp(flows: &[Flow], topo: &Topology, hash_seed: u64) -> Result<Vec<ScheduleDecision>, SchedulerError> {
    flows
        .iter()
        .map(|f| {
            let mut paths = topo.equal_cost_paths(f.src_host, f.dst_host)?;
            let idx = ecmp_index(f, hash_seed, paths.len());
            Ok(ScheduleDecision { flow_id: f.id, path: paths.swap_remove(idx), phase: 0, priority: PRIORITY_DEFAULT })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    SizeKpPso,
    Ecmp,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::SizeKpPso => "size-kp-pso",
            SchedulerKind::Ecmp => "ecmp",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = SchedulerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "size-kp-pso" => Ok(SchedulerKind::SizeKpPso),
            "ecmp" => Ok(SchedulerKind::Ecmp),
            other => Err(SchedulerError::UnknownScheduler(other.to_owned())),
        }
    }
}

/// Fraction of each host uplink's capacity in use when every flow that has arrived by
/// `time_s` is sharing the network max-min fairly on its lowest-id path.
pub fn sender_uplink_utilization(flows: &[Flow], topo: &Topology, time_s: f64) -> Result<Vec<f64>, SchedulerError> {
    let mut demands = Vec::new();
    for f in flows.iter().filter(|f| f.start_time_s <= time_s) {
        let path = topo.equal_cost_paths(f.src_host, f.dst_host)?.swap_remove(0);
        demands.push(Demand { hops: topo.hops(&path).expect("equal-cost paths are adjacent") });
    }
    let rates = max_min_rates(topo, &demands);
    let mut occupied = vec![0.0f64; topo.num_hosts()];
    for (d, rate) in demands.iter().zip(&rates) {
        let uplink = d.hops[0];
        let src = topo.links()[uplink.link].endpoints.0;
        occupied[src] += rate;
    }
    topo.hosts()
        .iter()
        .map(|&h| {
            let link = topo.link_between(h, topo.edge_switch_of(h)?).expect("host uplink");
            let initial_kb = topo.links()[link].capacity_kbps / 8;
            link_utilization(occupied[h].round() as u64, initial_kb)
        })
        .collect()
}

/// Runs the controller loop over a workload whose flows all arrive together.
///
/// For each sender whose uplink is at or above the detection threshold, the largest
/// parallel group is knapsack-scheduled and removed until no group of two or more
/// remains. Everything else takes default single-path forwarding in phase 0.
pub fn schedule_workload(
    kind: SchedulerKind,
    flows: &[Flow],
    topo: &Topology,
    params: &KpPsoParams,
) -> Result<Vec<ScheduleDecision>, SchedulerError> {
    match kind {
        SchedulerKind::Ecmp => schedule_ecmp(flows, topo, params.hash_seed),
        SchedulerKind::SizeKpPso => {
            params.detection.validate()?;
            let decision_time = flows.iter().map(|f| f.start_time_s).fold(0.0, f64::max);
            let utilization = sender_uplink_utilization(flows, topo, decision_time)?;
            let mut by_sender: BTreeMap<usize, Vec<Flow>> = BTreeMap::new();
            for f in flows {
                by_sender.entry(f.src_host).or_default().push(f.clone());
            }
            let mut decisions = Vec::with_capacity(flows.len());
            for (src, mut pending) in by_sender {
                while let Some(group) = detect_parallel_group(&pending, utilization[src], &params.detection) {
                    let scheduled = schedule_size_kp_pso(&group, topo, params)?;
                    let ids: Vec<usize> = scheduled.iter().map(|d| d.flow_id).collect();
                    decisions.extend(scheduled);
                    pending.retain(|f| !ids.contains(&f.id));
                }
                for f in &pending {
                    let path = topo.equal_cost_paths(f.src_host, f.dst_host)?.swap_remove(0);
                    decisions.push(ScheduleDecision { flow_id: f.id, path, phase: 0, priority: PRIORITY_DEFAULT });
                }
            }
            decisions.sort_by_key(|d| d.flow_id);
            Ok(decisions)
        }
    }
}
