//! k-ary fat-tree construction and path queries.
//!
//! Node ids are dense: hosts first (so a host's node id is also its host index),
//! then edge, aggregation and core switches. Each cable is one [`Link`]; the
//! simulator treats the two directions of a cable as independent channels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("fat-tree arity must be even and >= 2, got {0}")]
    InvalidK(usize),
    #[error("unknown host {0}")]
    UnknownHost(usize),
    #[error("source and destination are the same host {0}")]
    SameEndpoints(usize),
    #[error("loss rate {0} outside [0, 1]")]
    InvalidLossRate(f64),
    #[error("link capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Host,
    EdgeSwitch,
    AggregationSwitch,
    CoreSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// `None` for core switches.
    pub pod: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkLayer {
    HostEdge,
    EdgeAggregation,
    AggregationCore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    /// Lower-layer endpoint first.
    pub endpoints: (usize, usize),
    pub layer: LinkLayer,
    pub capacity_kbps: u64,
    pub loss_rate: f64,
}

/// Per-layer cable capacities in kbit/s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCapacities {
    pub edge_kbps: u64,
    pub aggregation_kbps: u64,
    pub core_kbps: u64,
}

impl Default for LayerCapacities {
    fn default() -> Self {
        Self::from_gbps(1.0, 2.0, 4.0)
    }
}

impl LayerCapacities {
    pub fn from_gbps(edge: f64, aggregation: f64, core: f64) -> Self {
        let kbps = |g: f64| (g * 1e6).round() as u64;
        Self { edge_kbps: kbps(edge), aggregation_kbps: kbps(aggregation), core_kbps: kbps(core) }
    }
}

/// A directed traversal of one cable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub link: usize,
    /// True when travelling from `endpoints.0` to `endpoints.1`.
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    k: usize,
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: Vec<Vec<usize>>,
    link_index: HashMap<(usize, usize), usize>,
    hosts: Vec<usize>,
}

pub fn build_fat_tree(k: usize, capacities: LayerCapacities, loss_rate: f64) -> Result<Topology, TopologyError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(TopologyError::InvalidK(k));
    }
    if !(0.0..=1.0).contains(&loss_rate) {
        return Err(TopologyError::InvalidLossRate(loss_rate));
    }
    if capacities.edge_kbps == 0 || capacities.aggregation_kbps == 0 || capacities.core_kbps == 0 {
        return Err(TopologyError::ZeroCapacity);
    }
    let half = k / 2;
    let num_hosts = k * half * half;
    let num_edge = k * half;
    let num_agg = k * half;
    let num_core = half * half;

    let mut nodes = Vec::with_capacity(num_hosts + num_edge + num_agg + num_core);
    for h in 0..num_hosts {
        nodes.push(Node { id: h, kind: NodeKind::Host, pod: Some(h / (half * half)) });
    }
    let edge_base = num_hosts;
    for e in 0..num_edge {
        nodes.push(Node { id: edge_base + e, kind: NodeKind::EdgeSwitch, pod: Some(e / half) });
    }
    let agg_base = edge_base + num_edge;
    for a in 0..num_agg {
        nodes.push(Node { id: agg_base + a, kind: NodeKind::AggregationSwitch, pod: Some(a / half) });
    }
    let core_base = agg_base + num_agg;
    for c in 0..num_core {
        nodes.push(Node { id: core_base + c, kind: NodeKind::CoreSwitch, pod: None });
    }

    let mut topo = Topology {
        k,
        adjacency: vec![Vec::new(); nodes.len()],
        nodes,
        links: Vec::new(),
        link_index: HashMap::new(),
        hosts: (0..num_hosts).collect(),
    };
    for h in 0..num_hosts {
        topo.connect(h, edge_base + h / half, LinkLayer::HostEdge, capacities.edge_kbps, loss_rate);
    }
    for pod in 0..k {
        for e in 0..half {
            for a in 0..half {
                let edge = edge_base + pod * half + e;
                let agg = agg_base + pod * half + a;
                topo.connect(edge, agg, LinkLayer::EdgeAggregation, capacities.aggregation_kbps, loss_rate);
            }
        }
    }
    // Core group j serves aggregation index j of every pod.
    for c in 0..num_core {
        let j = c / half;
        for pod in 0..k {
            let agg = agg_base + pod * half + j;
            topo.connect(agg, core_base + c, LinkLayer::AggregationCore, capacities.core_kbps, loss_rate);
        }
    }
    for adj in &mut topo.adjacency {
        adj.sort_unstable();
    }
    Ok(topo)
}

impl Topology {
    fn connect(&mut self, a: usize, b: usize, layer: LinkLayer, capacity_kbps: u64, loss_rate: f64) {
        let id = self.links.len();
        self.links.push(Link { id, endpoints: (a, b), layer, capacity_kbps, loss_rate });
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
        self.link_index.insert((a, b), id);
        self.link_index.insert((b, a), id);
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn hosts(&self) -> &[usize] {
        &self.hosts
    }

    pub fn num_hosts(&self) -> usize {
        self.hosts.len()
    }

    pub fn num_switches(&self) -> usize {
        self.nodes.len() - self.hosts.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    fn half(&self) -> usize {
        self.k / 2
    }

    fn check_host(&self, host: usize) -> Result<(), TopologyError> {
        if host < self.hosts.len() {
            Ok(())
        } else {
            Err(TopologyError::UnknownHost(host))
        }
    }

    pub fn edge_switch_of(&self, host: usize) -> Result<usize, TopologyError> {
        self.check_host(host)?;
        Ok(self.hosts.len() + host / self.half())
    }

    pub fn pod_of(&self, host: usize) -> Result<usize, TopologyError> {
        self.check_host(host)?;
        Ok(host / (self.half() * self.half()))
    }

    pub fn same_edge(&self, a: usize, b: usize) -> Result<bool, TopologyError> {
        Ok(self.edge_switch_of(a)? == self.edge_switch_of(b)?)
    }

    pub fn same_pod(&self, a: usize, b: usize) -> Result<bool, TopologyError> {
        Ok(self.pod_of(a)? == self.pod_of(b)?)
    }

    fn agg_node(&self, pod: usize, index: usize) -> usize {
        self.hosts.len() + self.k * self.half() + pod * self.half() + index
    }

    fn core_node(&self, index: usize) -> usize {
        self.hosts.len() + 2 * self.k * self.half() + index
    }

    /// Link id joining two adjacent nodes.
    pub fn link_between(&self, a: usize, b: usize) -> Option<usize> {
        self.link_index.get(&(a, b)).copied()
    }

    /// Directed hops along a node path, or `None` if two consecutive nodes are not adjacent.
    pub fn hops(&self, path: &[usize]) -> Option<Vec<Hop>> {
        path.windows(2)
            .map(|w| {
                let link = self.link_between(w[0], w[1])?;
                Some(Hop { link, forward: self.links[link].endpoints.0 == w[0] })
            })
            .collect()
    }

    /// Every shortest host-to-host path, ordered by the switch ids they visit.
    pub fn equal_cost_paths(&self, src: usize, dst: usize) -> Result<Vec<Vec<usize>>, TopologyError> {
        self.check_host(src)?;
        self.check_host(dst)?;
        if src == dst {
            return Err(TopologyError::SameEndpoints(src));
        }
        let (es, ed) = (self.edge_switch_of(src)?, self.edge_switch_of(dst)?);
        if es == ed {
            return Ok(vec![vec![src, es, dst]]);
        }
        let (ps, pd) = (self.pod_of(src)?, self.pod_of(dst)?);
        let half = self.half();
        if ps == pd {
            return Ok((0..half).map(|j| vec![src, es, self.agg_node(ps, j), ed, dst]).collect());
        }
        let mut paths = Vec::with_capacity(half * half);
        for j in 0..half {
            for c in j * half..(j + 1) * half {
                paths.push(vec![src, es, self.agg_node(ps, j), self.core_node(c), self.agg_node(pd, j), ed, dst]);
            }
        }
        Ok(paths)
    }

    /// Knapsack capacity in KB for a sender's next hop.
    ///
    /// A destination on the sender's own edge switch is bounded by the edge-layer
    /// link, anything further by the aggregation layer. Link kbit/s are read as KB of
    /// volume one-for-one, so 1 Gbit/s gives 1,000,000 KB.
    pub fn next_hop_capacity(&self, src: usize, dst: usize) -> Result<u64, TopologyError> {
        self.check_host(src)?;
        self.check_host(dst)?;
        if src == dst {
            return Err(TopologyError::SameEndpoints(src));
        }
        let layer = if self.same_edge(src, dst)? { LinkLayer::HostEdge } else { LinkLayer::EdgeAggregation };
        Ok(self.links.iter().find(|l| l.layer == layer).map(|l| l.capacity_kbps).expect("fat-tree has links on every layer"))
    }

    /// Serializable adjacency report.
    pub fn report(&self) -> TopologyReport {
        TopologyReport {
            k: self.k,
            hosts: self.num_hosts(),
            switches: self.num_switches(),
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            adjacency: self.adjacency.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub k: usize,
    pub hosts: usize,
    pub switches: usize,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub adjacency: Vec<Vec<usize>>,
}
