//! Zero-touch commissioning control plane for split Cloud-RAN chains.
//!
//! The crate models a three-tier substrate (Regional, Edge and Far-Edge
//! clouds), discovers nodes and antennas able to host a CU/DU/RU chain for a
//! service order, validates and scores candidate chains, then deploys,
//! configures, affiliates and starts the three RAN units through simulated
//! per-unit agents. Teardown returns every resource it took.
//!
//! Entry point for most callers is [`engine::Engine`].

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod agents;
pub mod catalogs;
pub mod clock;
pub mod engine;
pub mod events;
pub mod ippool;
pub mod metrics;
pub mod placement;
pub mod substrate;

pub use agents::{AgentBus, AgentMessage, Delivery, MessageKind, StatusReport};
pub use catalogs::{
    DeploymentCatalog, DeploymentRecord, ResourceCatalog, ResourceCatalogEntry, UnitRecord,
    UnitState,
};
pub use engine::{Engine, EngineConfig, LifecycleState, Manifest};
pub use placement::{
    ChainCandidate, Constraints, Execution, ProbeReport, RoleCandidates, Selection, ServiceOrder,
    TierPolicy,
};
pub use substrate::{load_topology, CloudTier, GeoPosition, Node, Resources, Topology};

/// Deployment identifier, `d-` followed by a zero-padded counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeploymentId(pub String);

impl DeploymentId {
    pub fn from_counter(n: u64) -> Self {
        DeploymentId(format!("d-{n:03}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeploymentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeploymentId {
    fn from(s: &str) -> Self {
        DeploymentId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    CU,
    DU,
    RU,
}

impl UnitKind {
    pub const ALL: [UnitKind; 3] = [UnitKind::CU, UnitKind::DU, UnitKind::RU];

    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::CU => "cu",
            UnitKind::DU => "du",
            UnitKind::RU => "ru",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one RAN unit, rendered as `<deploymentId>/<kind>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UnitId {
    pub deployment: DeploymentId,
    pub kind: UnitKind,
}

impl UnitId {
    pub fn new(deployment: DeploymentId, kind: UnitKind) -> Self {
        Self { deployment, kind }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.deployment, self.kind)
    }
}

impl std::str::FromStr for UnitId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (dep, kind) = s
            .rsplit_once('/')
            .ok_or_else(|| format!("malformed unit id {s:?}"))?;
        let kind = match kind {
            "cu" => UnitKind::CU,
            "du" => UnitKind::DU,
            "ru" => UnitKind::RU,
            other => return Err(format!("unknown unit kind {other:?}")),
        };
        Ok(UnitId::new(DeploymentId(dep.to_string()), kind))
    }
}

impl TryFrom<String> for UnitId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<UnitId> for String {
    fn from(u: UnitId) -> Self {
        u.to_string()
    }
}
