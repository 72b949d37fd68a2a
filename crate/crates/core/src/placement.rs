//! Resource discovery, chain enumeration, probe validation, scoring and
//! selection, plus an exhaustive oracle used to cross-check the pipeline.
//!
//! Everything here is a pure function over a topology snapshot and a resource
//! catalog snapshot, so it is safe to call from many threads at once.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogs::ResourceCatalog;
use crate::substrate::{
    geo_distance_km, CloudTier, GeoPosition, Resources, Topology, TopologyError,
};
use crate::UnitKind;

pub const DEFAULT_FRONTHAUL_LATENCY_MS: f64 = 1.0;
pub const DEFAULT_MIDHAUL_LATENCY_MS: f64 = 10.0;
pub const DEFAULT_END_TO_END_LATENCY_MS: f64 = 1.0;
/// Fronthaul requirement for a 32-user cell on a 7.3 split; scaled linearly
/// with `maxUsers` when the order does not set one.
pub const BASE_FRONTHAUL_BANDWIDTH_MBPS: f64 = 1000.0;
pub const BASE_FRONTHAUL_USERS: f64 = 32.0;

pub const LATENCY_WEIGHT: f64 = 0.4;
pub const BANDWIDTH_WEIGHT: f64 = 0.2;
pub const COMPUTE_WEIGHT: f64 = 0.2;
pub const PROXIMITY_WEIGHT: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("antenna {serial:?} is not attached to node {node:?}")]
    UnknownAntenna { node: String, serial: String },
    #[error("cannot score a chain whose probe failed")]
    ScoreFailedProbe,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid order: {0}")]
pub struct OrderError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UnitDemands {
    pub cu: Resources,
    pub du: Resources,
    pub ru: Resources,
}

impl Default for UnitDemands {
    fn default() -> Self {
        Self {
            cu: Resources::new(1000, 1024, 2048),
            du: Resources::new(2000, 2048, 2048),
            ru: Resources::new(1000, 1024, 1024),
        }
    }
}

impl UnitDemands {
    pub fn for_kind(&self, kind: UnitKind) -> Resources {
        match kind {
            UnitKind::CU => self.cu,
            UnitKind::DU => self.du,
            UnitKind::RU => self.ru,
        }
    }
}

fn default_fronthaul() -> f64 {
    DEFAULT_FRONTHAUL_LATENCY_MS
}
fn default_midhaul() -> f64 {
    DEFAULT_MIDHAUL_LATENCY_MS
}
fn default_end_to_end() -> f64 {
    DEFAULT_END_TO_END_LATENCY_MS
}

/// Per-order performance constraints. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Constraints {
    /// RU to DU.
    #[serde(default = "default_fronthaul")]
    pub fronthaul_latency_ms_max: f64,
    /// DU to CU.
    #[serde(default = "default_midhaul")]
    pub midhaul_latency_ms_max: f64,
    /// RU to CU.
    #[serde(default = "default_end_to_end")]
    pub end_to_end_latency_ms_max: f64,
    /// `None` resolves to the users-scaled default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fronthaul_bandwidth_mbps_min: Option<f64>,
    #[serde(default)]
    pub per_unit_demand: UnitDemands,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            fronthaul_latency_ms_max: DEFAULT_FRONTHAUL_LATENCY_MS,
            midhaul_latency_ms_max: DEFAULT_MIDHAUL_LATENCY_MS,
            end_to_end_latency_ms_max: DEFAULT_END_TO_END_LATENCY_MS,
            fronthaul_bandwidth_mbps_min: None,
            per_unit_demand: UnitDemands::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceOrder {
    pub tag: String,
    pub coverage_center: GeoPosition,
    pub coverage_radius_km: f64,
    pub max_users: u32,
    pub spectrum_band: String,
    #[serde(default)]
    pub constraints: Constraints,
}

impl ServiceOrder {
    pub fn fronthaul_bandwidth_min(&self) -> f64 {
        self.constraints
            .fronthaul_bandwidth_mbps_min
            .unwrap_or(BASE_FRONTHAUL_BANDWIDTH_MBPS * self.max_users as f64 / BASE_FRONTHAUL_USERS)
    }

    pub fn demand(&self, kind: UnitKind) -> Resources {
        self.constraints.per_unit_demand.for_kind(kind)
    }

    /// Schema-level checks applied to incoming orders.
    pub fn validate(&self) -> Result<(), OrderError> {
        if self.tag.trim().is_empty() {
            return Err(OrderError("tag must not be empty".into()));
        }
        self.coverage_center
            .validate()
            .map_err(|e| OrderError(e.to_string()))?;
        if !(self.coverage_radius_km.is_finite() && self.coverage_radius_km > 0.0) {
            return Err(OrderError(format!(
                "coverageRadiusKm must be > 0, got {}",
                self.coverage_radius_km
            )));
        }
        if self.max_users == 0 {
            return Err(OrderError("maxUsers must be > 0".into()));
        }
        let c = &self.constraints;
        for (name, v) in [
            ("fronthaulLatencyMsMax", c.fronthaul_latency_ms_max),
            ("midhaulLatencyMsMax", c.midhaul_latency_ms_max),
            ("endToEndLatencyMsMax", c.end_to_end_latency_ms_max),
            ("fronthaulBandwidthMbpsMin", self.fronthaul_bandwidth_min()),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(OrderError(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which tiers may host which unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TierPolicy {
    /// CU on Regional, DU on Edge, RU on FarEdge.
    #[default]
    ScenarioF,
    /// Any tier for CU and DU; the RU still needs an antenna.
    Relaxed,
}

impl TierPolicy {
    pub fn allows(&self, kind: UnitKind, tier: CloudTier) -> bool {
        match self {
            TierPolicy::Relaxed => kind != UnitKind::RU || tier == CloudTier::FarEdge,
            TierPolicy::ScenarioF => {
                tier == match kind {
                    UnitKind::CU => CloudTier::Regional,
                    UnitKind::DU => CloudTier::Edge,
                    UnitKind::RU => CloudTier::FarEdge,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleCandidates {
    pub cu_nodes: Vec<String>,
    pub du_nodes: Vec<String>,
    pub ru_nodes: Vec<String>,
    pub antennas_by_ru_node: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainCandidate {
    pub cu_node_id: String,
    pub du_node_id: String,
    pub ru_node_id: String,
    pub antenna_serial: String,
    #[serde(default)]
    pub score: Option<f64>,
}

impl ChainCandidate {
    pub fn new(cu: &str, du: &str, ru: &str, antenna: &str) -> Self {
        Self {
            cu_node_id: cu.to_string(),
            du_node_id: du.to_string(),
            ru_node_id: ru.to_string(),
            antenna_serial: antenna.to_string(),
            score: None,
        }
    }

    /// Ordering key shared by enumeration and tie-breaking.
    pub fn key(&self) -> (&str, &str, &str, &str) {
        (
            &self.ru_node_id,
            &self.du_node_id,
            &self.cu_node_id,
            &self.antenna_serial,
        )
    }

    pub fn node_for(&self, kind: UnitKind) -> &str {
        match kind {
            UnitKind::CU => &self.cu_node_id,
            UnitKind::DU => &self.du_node_id,
            UnitKind::RU => &self.ru_node_id,
        }
    }

    /// Same placement, ignoring the score.
    pub fn same_tuple(&self, other: &ChainCandidate) -> bool {
        self.key() == other.key()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CapacityCheck {
    pub cu: bool,
    pub du: bool,
    pub ru: bool,
}

impl CapacityCheck {
    pub fn all(&self) -> bool {
        self.cu && self.du && self.ru
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProbeReport {
    pub fronthaul_latency_ms: f64,
    pub midhaul_latency_ms: f64,
    pub end_to_end_latency_ms: f64,
    pub fronthaul_bandwidth_mbps: f64,
    pub capacity_ok: CapacityCheck,
    pub tier_ok: bool,
    pub antenna_available: bool,
    pub coverage_distance_km: f64,
    /// Free CPU fraction left on the CU, DU and RU node after reserving the
    /// chain's demand there.
    pub cpu_free_after: [f64; 3],
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "chain")]
pub enum Selection {
    Selected(ChainCandidate),
    Infeasible,
}

impl Selection {
    pub fn chain(&self) -> Option<&ChainCandidate> {
        match self {
            Selection::Selected(c) => Some(c),
            Selection::Infeasible => None,
        }
    }

    /// Same outcome: both infeasible, or the same tuple with the same score.
    pub fn same_choice(&self, other: &Selection) -> bool {
        match (self, other) {
            (Selection::Infeasible, Selection::Infeasible) => true,
            (Selection::Selected(a), Selection::Selected(b)) => {
                a.same_tuple(b) && a.score == b.score
            }
            _ => false,
        }
    }
}

fn in_coverage(order: &ServiceOrder, position: &GeoPosition) -> bool {
    geo_distance_km(position, &order.coverage_center) <= order.coverage_radius_km
}

/// Filters hosting candidates per role against a fresh resource catalog.
pub fn discover(
    order: &ServiceOrder,
    catalog: &ResourceCatalog,
    topology: &Topology,
    policy: TierPolicy,
) -> RoleCandidates {
    let mut out = RoleCandidates::default();
    for entry in catalog.entries() {
        let free = entry.free();
        for kind in UnitKind::ALL {
            if !policy.allows(kind, entry.tier) || !order.demand(kind).fits_within(&free) {
                continue;
            }
            match kind {
                UnitKind::CU => out.cu_nodes.push(entry.node_id.clone()),
                UnitKind::DU => out.du_nodes.push(entry.node_id.clone()),
                UnitKind::RU => {
                    let Ok(node) = topology.node(&entry.node_id) else {
                        continue;
                    };
                    let antennas: Vec<String> = entry
                        .antenna_serials_available
                        .iter()
                        .filter(|s| {
                            node.antenna(s)
                                .is_some_and(|a| in_coverage(order, &a.position))
                        })
                        .cloned()
                        .collect();
                    if !antennas.is_empty() {
                        out.ru_nodes.push(entry.node_id.clone());
                        out.antennas_by_ru_node
                            .insert(entry.node_id.clone(), antennas);
                    }
                }
            }
        }
    }
    out
}

/// Cartesian product of the role candidates, sorted by
/// `(ruNodeId, duNodeId, cuNodeId, antennaSerial)`.
pub fn enumerate_chains(candidates: &RoleCandidates) -> Vec<ChainCandidate> {
    let mut chains = Vec::new();
    for ru in &candidates.ru_nodes {
        let Some(antennas) = candidates.antennas_by_ru_node.get(ru) else {
            continue;
        };
        for du in &candidates.du_nodes {
            for cu in &candidates.cu_nodes {
                for serial in antennas {
                    chains.push(ChainCandidate::new(cu, du, ru, serial));
                }
            }
        }
    }
    chains.sort_by(|a, b| a.key().cmp(&b.key()));
    chains
}

/// Simulated performance test of one chain.
pub fn validate_chain(
    chain: &ChainCandidate,
    order: &ServiceOrder,
    topology: &Topology,
    policy: TierPolicy,
) -> Result<ProbeReport, PlacementError> {
    let cu = topology.node(&chain.cu_node_id)?;
    let du = topology.node(&chain.du_node_id)?;
    let ru = topology.node(&chain.ru_node_id)?;
    let antenna =
        ru.antenna(&chain.antenna_serial)
            .ok_or_else(|| PlacementError::UnknownAntenna {
                node: ru.id.clone(),
                serial: chain.antenna_serial.clone(),
            })?;

    let fronthaul = topology.path_metrics(&ru.id, &du.id)?;
    let midhaul = topology.path_metrics(&du.id, &cu.id)?;
    let end_to_end = topology.path_metrics(&ru.id, &cu.id)?;

    // units sharing a node (relaxed tiers) must fit together
    let mut per_node: BTreeMap<&str, Resources> = BTreeMap::new();
    for kind in UnitKind::ALL {
        let slot = per_node.entry(chain.node_for(kind)).or_default();
        *slot = slot.checked_add(&order.demand(kind)).unwrap_or(Resources {
            cpu_millicores: u64::MAX,
            ram_mb: u64::MAX,
            disk_mb: u64::MAX,
        });
    }
    let node_of = |kind: UnitKind| match kind {
        UnitKind::CU => cu,
        UnitKind::DU => du,
        UnitKind::RU => ru,
    };
    let fits = |kind: UnitKind| {
        let node = node_of(kind);
        per_node[node.id.as_str()].fits_within(&node.free())
    };
    let capacity_ok = CapacityCheck {
        cu: fits(UnitKind::CU),
        du: fits(UnitKind::DU),
        ru: fits(UnitKind::RU),
    };
    let cpu_free_after = UnitKind::ALL.map(|kind| {
        let node = node_of(kind);
        let left = node
            .free()
            .cpu_millicores
            .saturating_sub(per_node[node.id.as_str()].cpu_millicores);
        if node.capacity.cpu_millicores == 0 {
            0.0
        } else {
            left as f64 / node.capacity.cpu_millicores as f64
        }
    });

    let tier_ok = UnitKind::ALL
        .iter()
        .all(|&k| policy.allows(k, node_of(k).tier));
    let coverage_distance_km = geo_distance_km(&antenna.position, &order.coverage_center);
    let c = &order.constraints;

    let pass = tier_ok
        && antenna.is_free()
        && capacity_ok.all()
        && fronthaul.latency_ms <= c.fronthaul_latency_ms_max
        && midhaul.latency_ms <= c.midhaul_latency_ms_max
        && end_to_end.latency_ms <= c.end_to_end_latency_ms_max
        && fronthaul.bandwidth_mbps >= order.fronthaul_bandwidth_min()
        && coverage_distance_km <= order.coverage_radius_km;

    Ok(ProbeReport {
        fronthaul_latency_ms: fronthaul.latency_ms,
        midhaul_latency_ms: midhaul.latency_ms,
        end_to_end_latency_ms: end_to_end.latency_ms,
        fronthaul_bandwidth_mbps: fronthaul.bandwidth_mbps,
        capacity_ok,
        tier_ok,
        antenna_available: antenna.is_free(),
        coverage_distance_km,
        cpu_free_after,
        pass,
    })
}

fn unit_clamp(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Slacks {
    pub latency: f64,
    pub bandwidth: f64,
    pub compute: f64,
    pub proximity: f64,
}

impl Slacks {
    pub fn of(probe: &ProbeReport, order: &ServiceOrder) -> Self {
        let c = &order.constraints;
        let latency = [
            (probe.fronthaul_latency_ms, c.fronthaul_latency_ms_max),
            (probe.midhaul_latency_ms, c.midhaul_latency_ms_max),
            (probe.end_to_end_latency_ms, c.end_to_end_latency_ms_max),
        ]
        .iter()
        .map(|&(measured, budget)| unit_clamp((budget - measured) / budget))
        .sum::<f64>()
            / 3.0;
        let bw_min = order.fronthaul_bandwidth_min();
        let bandwidth = unit_clamp((probe.fronthaul_bandwidth_mbps - bw_min) / bw_min);
        let compute = probe
            .cpu_free_after
            .iter()
            .map(|f| unit_clamp(*f))
            .sum::<f64>()
            / 3.0;
        let proximity = if order.coverage_radius_km > 0.0 {
            unit_clamp(1.0 - probe.coverage_distance_km / order.coverage_radius_km)
        } else if probe.coverage_distance_km == 0.0 {
            1.0
        } else {
            0.0
        };
        Self {
            latency,
            bandwidth,
            compute,
            proximity,
        }
    }

    pub fn weighted(&self) -> f64 {
        LATENCY_WEIGHT * self.latency
            + BANDWIDTH_WEIGHT * self.bandwidth
            + COMPUTE_WEIGHT * self.compute
            + PROXIMITY_WEIGHT * self.proximity
    }
}

/// Weighted slack score in `[0, 1]` for a chain that passed validation.
pub fn score_chain(probe: &ProbeReport, order: &ServiceOrder) -> Result<f64, PlacementError> {
    if !probe.pass {
        return Err(PlacementError::ScoreFailedProbe);
    }
    Ok(unit_clamp(Slacks::of(probe, order).weighted()))
}

fn better(a: &ChainCandidate, b: &ChainCandidate) -> bool {
    let (sa, sb) = (
        a.score.unwrap_or(f64::NEG_INFINITY),
        b.score.unwrap_or(f64::NEG_INFINITY),
    );
    match sa.total_cmp(&sb) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.key() < b.key(),
    }
}

/// Highest score wins; ties go to the lexicographically smaller tuple.
pub fn select_best(scored: &[ChainCandidate]) -> Selection {
    scored
        .iter()
        .filter(|c| c.score.is_some())
        .fold(None::<&ChainCandidate>, |best, c| match best {
            Some(b) if !better(c, b) => Some(b),
            _ => Some(c),
        })
        .map_or(Selection::Infeasible, |c| Selection::Selected(c.clone()))
}

/// A chain together with its probe, scored when the probe passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub chain: ChainCandidate,
    pub probe: ProbeReport,
}

fn map_items<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Probes every chain. Output order matches input order.
pub fn validate_chains(
    chains: &[ChainCandidate],
    order: &ServiceOrder,
    topology: &Topology,
    policy: TierPolicy,
    execution: Execution,
) -> Result<Vec<ProbeReport>, PlacementError> {
    map_items(chains, execution, |c| {
        validate_chain(c, order, topology, policy)
    })
    .into_iter()
    .collect()
}

/// Scores the chains whose probe passed and drops the rest.
pub fn score_chains(
    chains: &[ChainCandidate],
    probes: &[ProbeReport],
    order: &ServiceOrder,
    execution: Execution,
) -> Vec<ChainCandidate> {
    let pairs: Vec<(&ChainCandidate, &ProbeReport)> =
        chains.iter().zip(probes).filter(|(_, p)| p.pass).collect();
    map_items(&pairs, execution, |(c, p)| {
        let mut c = (*c).clone();
        c.score = score_chain(p, order).ok();
        c
    })
}

/// Validates and scores every chain. Output order matches input order.
pub fn evaluate_chains(
    chains: &[ChainCandidate],
    order: &ServiceOrder,
    topology: &Topology,
    policy: TierPolicy,
    execution: Execution,
) -> Result<Vec<Evaluated>, PlacementError> {
    let probes = validate_chains(chains, order, topology, policy, execution)?;
    let mut scored = score_chains(chains, &probes, order, execution).into_iter();
    Ok(chains
        .iter()
        .zip(probes)
        .map(|(c, probe)| {
            let chain = if probe.pass {
                scored.next().expect("one scored chain per passing probe")
            } else {
                c.clone()
            };
            Evaluated { chain, probe }
        })
        .collect())
}

/// Intermediate results of one placement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub candidates: RoleCandidates,
    pub evaluated: Vec<Evaluated>,
    pub selection: Selection,
}

/// discover, enumerate, validate, score and select in one call.
pub fn plan(
    order: &ServiceOrder,
    catalog: &ResourceCatalog,
    topology: &Topology,
    policy: TierPolicy,
    execution: Execution,
) -> Result<Plan, PlacementError> {
    let candidates = discover(order, catalog, topology, policy);
    let chains = enumerate_chains(&candidates);
    let evaluated = evaluate_chains(&chains, order, topology, policy, execution)?;
    let passing: Vec<ChainCandidate> = evaluated
        .iter()
        .filter(|e| e.probe.pass)
        .map(|e| e.chain.clone())
        .collect();
    let selection = select_best(&passing);
    Ok(Plan {
        candidates,
        evaluated,
        selection,
    })
}

/// Exhaustive reference selection: every (cu, du, ru, antenna) tuple in the
/// topology, filtered by probe, scored, arg-max with the pipeline tie-break.
/// Meant for desk-scale topologies only.
pub fn oracle_select(order: &ServiceOrder, topology: &Topology, policy: TierPolicy) -> Selection {
    let mut best: Option<(f64, ChainCandidate)> = None;
    for ru in topology.nodes.values() {
        for antenna in &ru.antennas {
            for du in topology.nodes.values() {
                for cu in topology.nodes.values() {
                    let chain = ChainCandidate::new(&cu.id, &du.id, &ru.id, &antenna.serial);
                    let Ok(probe) = validate_chain(&chain, order, topology, policy) else {
                        continue;
                    };
                    let Ok(score) = score_chain(&probe, order) else {
                        continue;
                    };
                    let replace = match &best {
                        None => true,
                        Some((s, b)) => score > *s || (score == *s && chain.key() < b.key()),
                    };
                    if replace {
                        best = Some((score, chain));
                    }
                }
            }
        }
    }
    match best {
        Some((score, mut chain)) => {
            chain.score = Some(score);
            Selection::Selected(chain)
        }
        None => Selection::Infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogs::ResourceCatalog;
    use crate::substrate::load_topology;

    const TOPOLOGY: &str = include_str!("../fixtures/topology.json");
    const ORDER: &str = include_str!("../fixtures/order.json");

    fn fixture() -> (Topology, ServiceOrder) {
        (
            load_topology(TOPOLOGY).unwrap(),
            serde_json::from_str(ORDER).unwrap(),
        )
    }

    fn catalog(t: &Topology) -> ResourceCatalog {
        ResourceCatalog::refresh(t, 0)
    }

    fn passing_probe() -> ProbeReport {
        ProbeReport {
            fronthaul_latency_ms: 0.0,
            midhaul_latency_ms: 0.0,
            end_to_end_latency_ms: 0.0,
            fronthaul_bandwidth_mbps: f64::INFINITY,
            capacity_ok: CapacityCheck {
                cu: true,
                du: true,
                ru: true,
            },
            tier_ok: true,
            antenna_available: true,
            coverage_distance_km: 0.0,
            cpu_free_after: [1.0; 3],
            pass: true,
        }
    }

    #[test]
    fn order_defaults_and_validation() {
        let (_, order) = fixture();
        assert_eq!(order.constraints.fronthaul_latency_ms_max, 1.0);
        assert_eq!(order.constraints.midhaul_latency_ms_max, 10.0);
        assert_eq!(order.constraints.end_to_end_latency_ms_max, 10.0);
        assert_eq!(order.fronthaul_bandwidth_min(), 1000.0);
        order.validate().unwrap();

        let mut o = order.clone();
        o.max_users = 16;
        assert_eq!(o.fronthaul_bandwidth_min(), 500.0);
        o.coverage_radius_km = 0.0;
        assert!(o.validate().is_err());
        let mut o = order.clone();
        o.constraints.midhaul_latency_ms_max = -1.0;
        assert!(o.validate().is_err());

        let missing = r#"{"tag":"x","coverageRadiusKm":5,"maxUsers":1,"spectrumBand":"n78"}"#;
        assert!(serde_json::from_str::<ServiceOrder>(missing).is_err());
    }

    #[test]
    fn discover_fixture_center() {
        let (t, order) = fixture();
        let c = discover(&order, &catalog(&t), &t, TierPolicy::ScenarioF);
        assert_eq!(c.ru_nodes, vec!["faredge-1"]);
        assert_eq!(
            c.antennas_by_ru_node["faredge-1"],
            vec!["A-SER-001", "A-SER-002"]
        );
        assert_eq!(c.du_nodes, vec!["edge-1"]);
        assert_eq!(c.cu_nodes, vec!["regional-1"]);
    }

    #[test]
    fn discover_out_of_coverage() {
        let (t, mut order) = fixture();
        // roughly 500 km east
        order.coverage_center = GeoPosition::new(48.7325, 3.35).unwrap();
        let c = discover(&order, &catalog(&t), &t, TierPolicy::ScenarioF);
        assert!(c.ru_nodes.is_empty());
        assert!(c.antennas_by_ru_node.is_empty());
    }

    #[test]
    fn discover_capacity_filter() {
        let (t, mut order) = fixture();
        order.constraints.per_unit_demand.ru.cpu_millicores = 8001;
        let c = discover(&order, &catalog(&t), &t, TierPolicy::ScenarioF);
        assert!(c.ru_nodes.is_empty());
    }

    #[test]
    fn discover_zero_radius_needs_exact_antenna() {
        let (t, mut order) = fixture();
        order.coverage_radius_km = 0.0;
        assert!(discover(&order, &catalog(&t), &t, TierPolicy::ScenarioF)
            .ru_nodes
            .is_empty());
        order.coverage_center = GeoPosition::new(48.7415, -3.459).unwrap();
        let c = discover(&order, &catalog(&t), &t, TierPolicy::ScenarioF);
        assert_eq!(c.antennas_by_ru_node["faredge-1"], vec!["A-SER-001"]);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let mut c = RoleCandidates {
            cu_nodes: vec!["r1".into()],
            du_nodes: vec!["e1".into()],
            ru_nodes: vec!["f1".into()],
            antennas_by_ru_node: BTreeMap::from([("f1".into(), vec!["A".into(), "B".into()])]),
        };
        assert_eq!(enumerate_chains(&c).len(), 2);

        c.cu_nodes = vec!["r2".into(), "r1".into()];
        c.du_nodes = vec!["e2".into(), "e1".into()];
        c.ru_nodes = vec!["f2".into(), "f1".into()];
        c.antennas_by_ru_node = BTreeMap::from([
            ("f1".into(), vec!["A".into()]),
            ("f2".into(), vec!["B".into()]),
        ]);
        let chains = enumerate_chains(&c);
        assert_eq!(chains.len(), 8);
        let keys: Vec<_> = chains.iter().map(|c| c.key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys[0], ("f1", "e1", "r1", "A"));
        assert_eq!(keys[7], ("f2", "e2", "r2", "B"));

        c.du_nodes.clear();
        assert!(enumerate_chains(&c).is_empty());
    }

    #[test]
    fn validate_fixture_chain() {
        let (t, order) = fixture();
        let chain = ChainCandidate::new("regional-1", "edge-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&chain, &order, &t, TierPolicy::ScenarioF).unwrap();
        assert!((p.fronthaul_latency_ms - 0.3).abs() < 1e-12);
        assert_eq!(p.midhaul_latency_ms, 2.0);
        assert!((p.end_to_end_latency_ms - 2.3).abs() < 1e-12);
        assert_eq!(p.fronthaul_bandwidth_mbps, 25000.0);
        assert!(p.pass);
        assert!(p.end_to_end_latency_ms >= p.fronthaul_latency_ms.max(p.midhaul_latency_ms));
    }

    #[test]
    fn validate_fronthaul_budget() {
        let (mut t, order) = fixture();
        t.links[1].latency_ms = 1.2;
        let chain = ChainCandidate::new("regional-1", "edge-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&chain, &order, &t, TierPolicy::ScenarioF).unwrap();
        assert!(!p.pass);
        assert!(matches!(
            score_chain(&p, &order),
            Err(PlacementError::ScoreFailedProbe)
        ));
    }

    #[test]
    fn validate_zero_latency_best_case() {
        let (mut t, mut order) = fixture();
        for l in &mut t.links {
            l.latency_ms = 0.0;
        }
        order.constraints.end_to_end_latency_ms_max = 1.0;
        let chain = ChainCandidate::new("regional-1", "edge-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&chain, &order, &t, TierPolicy::ScenarioF).unwrap();
        assert!(p.pass);
        assert_eq!(Slacks::of(&p, &order).latency, 1.0);
    }

    #[test]
    fn validate_unknown_node_or_antenna() {
        let (t, order) = fixture();
        let bad = ChainCandidate::new("nope", "edge-1", "faredge-1", "A-SER-001");
        assert!(matches!(
            validate_chain(&bad, &order, &t, TierPolicy::ScenarioF),
            Err(PlacementError::Topology(TopologyError::UnknownNode(_)))
        ));
        let bad = ChainCandidate::new("regional-1", "edge-1", "faredge-1", "NOPE");
        assert!(matches!(
            validate_chain(&bad, &order, &t, TierPolicy::ScenarioF),
            Err(PlacementError::UnknownAntenna { .. })
        ));
    }

    #[test]
    fn tier_policy_gate() {
        let (t, order) = fixture();
        let swapped = ChainCandidate::new("edge-1", "regional-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&swapped, &order, &t, TierPolicy::ScenarioF).unwrap();
        assert!(!p.tier_ok && !p.pass);
        assert!(TierPolicy::Relaxed.allows(UnitKind::CU, CloudTier::Edge));
        assert!(!TierPolicy::Relaxed.allows(UnitKind::RU, CloudTier::Edge));
    }

    #[test]
    fn shared_node_capacity_is_aggregated() {
        let (mut t, order) = fixture();
        // edge-1 fits a DU or a CU alone, not both
        t.node_mut("edge-1").unwrap().capacity.cpu_millicores = 2500;
        let both = ChainCandidate::new("edge-1", "edge-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&both, &order, &t, TierPolicy::Relaxed).unwrap();
        assert!(!p.capacity_ok.cu && !p.capacity_ok.du && !p.pass);
    }

    #[test]
    fn score_bounds() {
        let (_, order) = fixture();
        let best = passing_probe();
        assert_eq!(score_chain(&best, &order).unwrap(), 1.0);

        let c = &order.constraints;
        let worst = ProbeReport {
            fronthaul_latency_ms: c.fronthaul_latency_ms_max,
            midhaul_latency_ms: c.midhaul_latency_ms_max,
            end_to_end_latency_ms: c.end_to_end_latency_ms_max,
            fronthaul_bandwidth_mbps: order.fronthaul_bandwidth_min(),
            cpu_free_after: [0.0; 3],
            coverage_distance_km: order.coverage_radius_km,
            ..best
        };
        assert_eq!(score_chain(&worst, &order).unwrap(), 0.0);
    }

    // Reference values computed by hand from the weighted-slack formula:
    //   latency   = mean(0.7/1.0, 7.7/10, 7.7/10)      = 0.746666...
    //   bandwidth = min(1, (25000-1000)/1000)           = 1
    //   compute   = 0.5, proximity = 1 - 1/5            = 0.8
    //   score     = 0.4*0.746666 + 0.2 + 0.1 + 0.16     = 0.758666...
    #[test]
    fn score_hand_calculation() {
        let (_, order) = fixture();
        let probe = ProbeReport {
            fronthaul_latency_ms: 0.3,
            midhaul_latency_ms: 2.3,
            end_to_end_latency_ms: 2.3,
            fronthaul_bandwidth_mbps: 25000.0,
            cpu_free_after: [0.5; 3],
            coverage_distance_km: 1.0,
            ..passing_probe()
        };
        let s = score_chain(&probe, &order).unwrap();
        approx::assert_abs_diff_eq!(s, 0.758_666_666_666_666_7, epsilon = 1e-12);
    }

    // Fixture chain with A-SER-001 (1.0008 km from the center):
    //   latency   = mean(0.7, 0.8, 0.77)                      = 0.756666...
    //   bandwidth = 1
    //   compute   = mean(31000/32000, 14000/16000, 7000/8000) = 0.90625
    //   proximity = 1 - 1.0007543398/5                        = 0.79984913
    //   score     = 0.302666.. + 0.2 + 0.18125 + 0.159969826  = 0.84388649
    #[test]
    fn score_fixture_chain() {
        let (t, order) = fixture();
        let chain = ChainCandidate::new("regional-1", "edge-1", "faredge-1", "A-SER-001");
        let p = validate_chain(&chain, &order, &t, TierPolicy::ScenarioF).unwrap();
        let s = score_chain(&p, &order).unwrap();
        approx::assert_abs_diff_eq!(s, 0.843_886_493, epsilon = 1e-6);
    }

    #[test]
    fn select_best_rules() {
        let mk = |ru: &str, s: f64| {
            let mut c = ChainCandidate::new("r", "e", ru, "A");
            c.score = Some(s);
            c
        };
        let chains = vec![mk("f1", 0.7), mk("f2", 0.9), mk("f3", 0.4)];
        assert_eq!(select_best(&chains).chain().unwrap().ru_node_id, "f2");
        let tie = vec![mk("f9", 0.8), mk("f1", 0.8)];
        assert_eq!(select_best(&tie).chain().unwrap().ru_node_id, "f1");
        assert_eq!(select_best(&[]), Selection::Infeasible);
    }

    #[test]
    fn plan_matches_oracle_on_fixture() {
        let (t, order) = fixture();
        let plan = plan(
            &order,
            &catalog(&t),
            &t,
            TierPolicy::ScenarioF,
            Execution::default(),
        )
        .unwrap();
        let oracle = oracle_select(&order, &t, TierPolicy::ScenarioF);
        assert!(plan.selection.same_choice(&oracle));
        // A-SER-001 and A-SER-002 sit symmetrically 1 km from the center
        assert_eq!(oracle.chain().unwrap().ru_node_id, "faredge-1");
    }

    #[test]
    fn oracle_no_antennas() {
        let (mut t, order) = fixture();
        t.node_mut("faredge-1").unwrap().antennas.clear();
        assert_eq!(
            oracle_select(&order, &t, TierPolicy::ScenarioF),
            Selection::Infeasible
        );
    }

    #[test]
    fn oracle_single_feasible_tuple() {
        let (mut t, order) = fixture();
        t.node_mut("faredge-1").unwrap().antennas[0].occupied_by = Some("d-001".into());
        let sel = oracle_select(&order, &t, TierPolicy::ScenarioF);
        let c = sel.chain().unwrap();
        assert_eq!(c.key(), ("faredge-1", "edge-1", "regional-1", "A-SER-002"));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let (t, order) = fixture();
        let cat = catalog(&t);
        let a = plan(&order, &cat, &t, TierPolicy::Relaxed, Execution::Sequential).unwrap();
        let b = plan(&order, &cat, &t, TierPolicy::Relaxed, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
