//! Three-tier substrate network: nodes, links, antennas, capacity accounting
//! and path metrics.
//!
//! The topology structure is immutable once loaded. Only the usage counters
//! and antenna occupancy change, and those are mutated by the engine under its
//! infrastructure lock.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::DeploymentId;

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("duplicate antenna serial {0:?}")]
    DuplicateAntenna(String),
    #[error("link references unknown node {0:?}")]
    UnknownLinkEndpoint(String),
    #[error("link {0:?} connects a node to itself")]
    SelfLink(String),
    #[error("invalid link {a:?}-{b:?}: {reason}")]
    InvalidLink {
        a: String,
        b: String,
        reason: String,
    },
    #[error("antenna on non-FarEdge node {0:?}")]
    AntennaOnNonFarEdge(String),
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CapacityError {
    #[error("insufficient capacity on {node:?}: requested {requested}, free {free}")]
    Insufficient {
        node: String,
        requested: Resources,
        free: Resources,
    },
    #[error("release on {node:?} exceeds used: release {requested}, used {used}")]
    ReleaseExceedsUsed {
        node: String,
        requested: Resources,
        used: Resources,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPosition {
    #[serde(rename = "lat")]
    pub latitude_deg: f64,
    #[serde(rename = "lon")]
    pub longitude_deg: f64,
}

impl GeoPosition {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self, TopologyError> {
        let p = Self {
            latitude_deg,
            longitude_deg,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(TopologyError::InvalidPosition(format!(
                "latitude {} outside [-90, 90]",
                self.latitude_deg
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude_deg) {
            return Err(TopologyError::InvalidPosition(format!(
                "longitude {} outside [-180, 180]",
                self.longitude_deg
            )));
        }
        Ok(())
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn geo_distance_km(p1: &GeoPosition, p2: &GeoPosition) -> f64 {
    if p1 == p2 {
        return 0.0;
    }
    let lat1 = p1.latitude_deg.to_radians();
    let lat2 = p2.latitude_deg.to_radians();
    let d_lat = lat2 - lat1;
    let d_lon = (p2.longitude_deg - p1.longitude_deg).to_radians();
    let a = (d_lat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (d_lon / 2.0).sin().powi(2);
    let c = 2.0 * a.sqrt().atan2((1.0 - a).max(0.0).sqrt());
    EARTH_RADIUS_KM * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CloudTier {
    Regional,
    Edge,
    FarEdge,
}

impl fmt::Display for CloudTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CloudTier::Regional => "Regional",
            CloudTier::Edge => "Edge",
            CloudTier::FarEdge => "FarEdge",
        };
        f.write_str(s)
    }
}

/// CPU in millicores, RAM and disk in MB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Resources {
    pub cpu_millicores: u64,
    pub ram_mb: u64,
    pub disk_mb: u64,
}

impl Resources {
    pub const ZERO: Resources = Resources {
        cpu_millicores: 0,
        ram_mb: 0,
        disk_mb: 0,
    };

    pub const fn new(cpu_millicores: u64, ram_mb: u64, disk_mb: u64) -> Self {
        Self {
            cpu_millicores,
            ram_mb,
            disk_mb,
        }
    }

    /// True when every dimension of `self` is at most the matching one in `other`.
    pub fn fits_within(&self, other: &Resources) -> bool {
        self.cpu_millicores <= other.cpu_millicores
            && self.ram_mb <= other.ram_mb
            && self.disk_mb <= other.disk_mb
    }

    pub fn checked_add(&self, other: &Resources) -> Option<Resources> {
        Some(Resources {
            cpu_millicores: self.cpu_millicores.checked_add(other.cpu_millicores)?,
            ram_mb: self.ram_mb.checked_add(other.ram_mb)?,
            disk_mb: self.disk_mb.checked_add(other.disk_mb)?,
        })
    }

    pub fn checked_sub(&self, other: &Resources) -> Option<Resources> {
        Some(Resources {
            cpu_millicores: self.cpu_millicores.checked_sub(other.cpu_millicores)?,
            ram_mb: self.ram_mb.checked_sub(other.ram_mb)?,
            disk_mb: self.disk_mb.checked_sub(other.disk_mb)?,
        })
    }

    pub fn saturating_sub(&self, other: &Resources) -> Resources {
        Resources {
            cpu_millicores: self.cpu_millicores.saturating_sub(other.cpu_millicores),
            ram_mb: self.ram_mb.saturating_sub(other.ram_mb),
            disk_mb: self.disk_mb.saturating_sub(other.disk_mb),
        }
    }
}

impl fmt::Display for Resources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{cpu {} mc, ram {} MB, disk {} MB}}",
            self.cpu_millicores, self.ram_mb, self.disk_mb
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Antenna {
    pub serial: String,
    pub position: GeoPosition,
    pub occupied_by: Option<DeploymentId>,
}

impl Antenna {
    pub fn is_free(&self) -> bool {
        self.occupied_by.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Node {
    pub id: String,
    pub tier: CloudTier,
    pub position: GeoPosition,
    pub capacity: Resources,
    pub used: Resources,
    pub antennas: Vec<Antenna>,
}

impl Node {
    pub fn free(&self) -> Resources {
        self.capacity.saturating_sub(&self.used)
    }

    pub fn antenna(&self, serial: &str) -> Option<&Antenna> {
        self.antennas.iter().find(|a| a.serial == serial)
    }

    pub fn antenna_mut(&mut self, serial: &str) -> Option<&mut Antenna> {
        self.antennas.iter_mut().find(|a| a.serial == serial)
    }

    /// Check-and-reserve in one step. On error the node is left untouched.
    pub fn reserve(&mut self, demand: &Resources) -> Result<(), CapacityError> {
        let free = self.free();
        if !demand.fits_within(&free) {
            return Err(CapacityError::Insufficient {
                node: self.id.clone(),
                requested: *demand,
                free,
            });
        }
        // fits_within(free) guarantees no overflow past capacity
        self.used = self.used.checked_add(demand).expect("bounded by capacity");
        Ok(())
    }

    pub fn release(&mut self, demand: &Resources) -> Result<(), CapacityError> {
        match self.used.checked_sub(demand) {
            Some(used) => {
                self.used = used;
                Ok(())
            }
            None => Err(CapacityError::ReleaseExceedsUsed {
                node: self.id.clone(),
                requested: *demand,
                used: self.used,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Link {
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
}

/// Result of a simulated probe between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PathMetrics {
    /// `f64::INFINITY` when the pair is disconnected.
    pub latency_ms: f64,
    /// `f64::INFINITY` for a node probed against itself, `0.0` when disconnected.
    pub bandwidth_mbps: f64,
}

impl PathMetrics {
    pub const LOCAL: PathMetrics = PathMetrics {
        latency_ms: 0.0,
        bandwidth_mbps: f64::INFINITY,
    };
    pub const INFEASIBLE: PathMetrics = PathMetrics {
        latency_ms: f64::INFINITY,
        bandwidth_mbps: 0.0,
    };

    pub fn is_infeasible(&self) -> bool {
        self.latency_ms.is_infinite()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: BTreeMap<String, Node>,
    pub links: Vec<Link>,
}

// Wire schema of the topology document.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    links: Vec<LinkDoc>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NodeDoc {
    id: String,
    tier: CloudTier,
    position: GeoPosition,
    cpu_millicores: u64,
    ram_mb: u64,
    disk_mb: u64,
    #[serde(default)]
    antennas: Vec<AntennaDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AntennaDoc {
    serial: String,
    position: GeoPosition,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LinkDoc {
    a: String,
    b: String,
    latency_ms: f64,
    bandwidth_mbps: f64,
}

/// Parses and validates a JSON topology document.
pub fn load_topology(document: &str) -> Result<Topology, TopologyError> {
    let doc: TopologyDoc =
        serde_json::from_str(document).map_err(|e| TopologyError::Parse(e.to_string()))?;

    let mut nodes = BTreeMap::new();
    let mut serials = BTreeSet::new();
    for n in doc.nodes {
        n.position.validate()?;
        if !n.antennas.is_empty() && n.tier != CloudTier::FarEdge {
            return Err(TopologyError::AntennaOnNonFarEdge(n.id));
        }
        let mut antennas = Vec::with_capacity(n.antennas.len());
        for a in n.antennas {
            a.position.validate()?;
            if !serials.insert(a.serial.clone()) {
                return Err(TopologyError::DuplicateAntenna(a.serial));
            }
            antennas.push(Antenna {
                serial: a.serial,
                position: a.position,
                occupied_by: None,
            });
        }
        let node = Node {
            id: n.id.clone(),
            tier: n.tier,
            position: n.position,
            capacity: Resources::new(n.cpu_millicores, n.ram_mb, n.disk_mb),
            used: Resources::ZERO,
            antennas,
        };
        if nodes.insert(n.id.clone(), node).is_some() {
            return Err(TopologyError::DuplicateNode(n.id));
        }
    }

    let mut links = Vec::with_capacity(doc.links.len());
    for l in doc.links {
        for end in [&l.a, &l.b] {
            if !nodes.contains_key(end) {
                return Err(TopologyError::UnknownLinkEndpoint(end.clone()));
            }
        }
        if l.a == l.b {
            return Err(TopologyError::SelfLink(l.a));
        }
        // zero latency is accepted: co-located nodes are a valid degenerate case
        if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0) {
            return Err(TopologyError::InvalidLink {
                a: l.a,
                b: l.b,
                reason: format!("latencyMs must be finite and >= 0, got {}", l.latency_ms),
            });
        }
        if !(l.bandwidth_mbps.is_finite() && l.bandwidth_mbps > 0.0) {
            return Err(TopologyError::InvalidLink {
                a: l.a,
                b: l.b,
                reason: format!(
                    "bandwidthMbps must be finite and > 0, got {}",
                    l.bandwidth_mbps
                ),
            });
        }
        links.push(Link {
            endpoint_a: l.a,
            endpoint_b: l.b,
            latency_ms: l.latency_ms,
            bandwidth_mbps: l.bandwidth_mbps,
        });
    }

    Ok(Topology { nodes, links })
}

/// Link latencies are summed as whole nanoseconds so equal-latency paths
/// compare equal regardless of the order the additions happen in.
const NANOS_PER_MS: f64 = 1e6;

fn latency_nanos(latency_ms: f64) -> u64 {
    (latency_ms * NANOS_PER_MS).round() as u64
}

#[derive(Clone, Copy, PartialEq)]
struct Label {
    latency: u64,
    bandwidth: f64,
}

impl Label {
    /// Lower latency first, then wider bottleneck.
    fn better_than(&self, other: &Label) -> bool {
        self.latency < other.latency
            || (self.latency == other.latency && self.bandwidth > other.bandwidth)
    }
}

struct QueueItem {
    label: Label,
    node: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueItem {
    // max-heap: the best label compares greatest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .label
            .latency
            .cmp(&self.label.latency)
            .then(self.label.bandwidth.total_cmp(&other.label.bandwidth))
            .then(other.node.cmp(&self.node))
    }
}

impl Topology {
    pub fn node(&self, id: &str) -> Result<&Node, TopologyError> {
        self.nodes
            .get(id)
            .ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    pub fn node_mut(&mut self, id: &str) -> Result<&mut Node, TopologyError> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    /// Finds the node carrying antenna `serial`.
    pub fn antenna_owner(&self, serial: &str) -> Option<&Node> {
        self.nodes.values().find(|n| n.antenna(serial).is_some())
    }

    /// Simulated probe between `a` and `b`.
    ///
    /// Latency is the sum over the minimum-latency path and bandwidth the
    /// bottleneck on that path. Among equal-latency paths the widest
    /// bottleneck wins. The search always starts from the lexicographically
    /// smaller endpoint so the result is bit-identical in both directions.
    /// Latencies are resolved to the nanosecond.
    pub fn path_metrics(&self, a: &str, b: &str) -> Result<PathMetrics, TopologyError> {
        self.node(a)?;
        self.node(b)?;
        if a == b {
            return Ok(PathMetrics::LOCAL);
        }
        let (src, dst) = if a < b { (a, b) } else { (b, a) };

        let index: BTreeMap<&str, usize> = self
            .nodes
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let mut adjacency: Vec<Vec<(usize, u64, f64)>> = vec![Vec::new(); index.len()];
        for l in &self.links {
            let (ia, ib) = (index[l.endpoint_a.as_str()], index[l.endpoint_b.as_str()]);
            let ns = latency_nanos(l.latency_ms);
            adjacency[ia].push((ib, ns, l.bandwidth_mbps));
            adjacency[ib].push((ia, ns, l.bandwidth_mbps));
        }

        let (s, t) = (index[src], index[dst]);
        let mut best: Vec<Option<Label>> = vec![None; index.len()];
        let mut done = vec![false; index.len()];
        let mut heap = BinaryHeap::new();
        let start = Label {
            latency: 0,
            bandwidth: f64::INFINITY,
        };
        best[s] = Some(start);
        heap.push(QueueItem {
            label: start,
            node: s,
        });

        while let Some(QueueItem { label, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if node == t {
                return Ok(PathMetrics {
                    latency_ms: label.latency as f64 / NANOS_PER_MS,
                    bandwidth_mbps: label.bandwidth,
                });
            }
            for &(next, latency, bandwidth) in &adjacency[node] {
                if done[next] {
                    continue;
                }
                let candidate = Label {
                    latency: label.latency.saturating_add(latency),
                    bandwidth: label.bandwidth.min(bandwidth),
                };
                if best[next].is_none_or(|cur| candidate.better_than(&cur)) {
                    best[next] = Some(candidate);
                    heap.push(QueueItem {
                        label: candidate,
                        node: next,
                    });
                }
            }
        }
        Ok(PathMetrics::INFEASIBLE)
    }
}

/// Reserves `demand` on `node`, rejecting atomically when any dimension lacks room.
pub fn reserve_resources(node: &mut Node, demand: &Resources) -> Result<(), CapacityError> {
    node.reserve(demand)
}

/// Returns `demand` to `node`. Releasing more than is used is an accounting bug.
pub fn release_resources(node: &mut Node, demand: &Resources) -> Result<(), CapacityError> {
    node.release(demand)
}
