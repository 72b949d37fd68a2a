//! Resource Catalog (infrastructure view) and Deployment Catalog (runtime
//! state of RAN units), each persisted as a single JSON snapshot file.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::engine::{KpiTimeline, LifecycleState};
use crate::events::EventEntry;
use crate::placement::{ChainCandidate, ServiceOrder};
use crate::substrate::{CloudTier, GeoPosition, Resources, Topology};
use crate::{DeploymentId, UnitId, UnitKind};

pub const RESOURCE_CATALOG_FILE: &str = "resource_catalog.json";
pub const DEPLOYMENT_CATALOG_FILE: &str = "deployment_catalog.json";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown deployment {0}")]
    UnknownDeployment(DeploymentId),
    #[error("deployment {id} cannot move from {from:?} to {to:?}")]
    NonAdvancing {
        id: DeploymentId,
        from: LifecycleState,
        to: LifecycleState,
    },
    #[error("deployment id {0} was already used")]
    IdReused(DeploymentId),
    #[error("deployment {id} is mid-pipeline ({state:?}) and cannot be deleted")]
    MidPipeline {
        id: DeploymentId,
        state: LifecycleState,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceCatalogEntry {
    pub node_id: String,
    pub tier: CloudTier,
    pub position: GeoPosition,
    pub free_cpu_millicores: u64,
    pub free_ram_mb: u64,
    pub free_disk_mb: u64,
    pub antenna_serials_available: Vec<String>,
    pub antenna_total: usize,
    pub last_refreshed: Timestamp,
}

impl ResourceCatalogEntry {
    pub fn free(&self) -> Resources {
        Resources::new(
            self.free_cpu_millicores,
            self.free_ram_mb,
            self.free_disk_mb,
        )
    }
}

/// Entry content without the refresh stamp.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EntryState<'a> {
    node_id: &'a str,
    tier: CloudTier,
    position: &'a GeoPosition,
    free_cpu_millicores: u64,
    free_ram_mb: u64,
    free_disk_mb: u64,
    antenna_serials_available: &'a [String],
    antenna_total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceCatalog {
    entries: Vec<ResourceCatalogEntry>,
}

impl ResourceCatalog {
    /// Rebuilds the catalog from the current infrastructure state. One entry
    /// per node, in node-id order.
    pub fn refresh(topology: &Topology, now: Timestamp) -> Self {
        let entries = topology
            .nodes
            .values()
            .map(|n| {
                let free = n.free();
                ResourceCatalogEntry {
                    node_id: n.id.clone(),
                    tier: n.tier,
                    position: n.position,
                    free_cpu_millicores: free.cpu_millicores,
                    free_ram_mb: free.ram_mb,
                    free_disk_mb: free.disk_mb,
                    antenna_serials_available: n
                        .antennas
                        .iter()
                        .filter(|a| a.is_free())
                        .map(|a| a.serial.clone())
                        .collect(),
                    antenna_total: n.antennas.len(),
                    last_refreshed: now,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[ResourceCatalogEntry] {
        &self.entries
    }

    pub fn entry(&self, node_id: &str) -> Option<&ResourceCatalogEntry> {
        self.entries.iter().find(|e| e.node_id == node_id)
    }

    /// Canonical bytes of the catalog content, refresh stamps excluded. Two
    /// catalogs describing the same infrastructure state compare equal here
    /// regardless of when they were refreshed.
    pub fn state_bytes(&self) -> Vec<u8> {
        let view: Vec<EntryState<'_>> = self
            .entries
            .iter()
            .map(|e| EntryState {
                node_id: &e.node_id,
                tier: e.tier,
                position: &e.position,
                free_cpu_millicores: e.free_cpu_millicores,
                free_ram_mb: e.free_ram_mb,
                free_disk_mb: e.free_disk_mb,
                antenna_serials_available: &e.antenna_serials_available,
                antenna_total: e.antenna_total,
            })
            .collect();
        serde_json::to_vec(&view).expect("catalog serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitState {
    Created,
    Configured,
    Affiliated,
    Running,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UnitRecord {
    pub unit_id: UnitId,
    pub unit_kind: UnitKind,
    pub node_id: String,
    pub ip_address: Option<Ipv4Addr>,
    /// Present iff this is the RU.
    pub antenna_serial: Option<String>,
    pub config_document: BTreeMap<String, String>,
    pub state: UnitState,
}

impl UnitRecord {
    pub fn validate(&self) -> Result<(), String> {
        if (self.unit_kind == UnitKind::RU) != self.antenna_serial.is_some() {
            return Err(format!(
                "{}: antennaSerial must be present iff RU",
                self.unit_id
            ));
        }
        if self.unit_kind != self.unit_id.kind {
            return Err(format!("{}: unit kind mismatch", self.unit_id));
        }
        if self.ip_address.is_none() {
            return Err(format!("{}: created unit without an address", self.unit_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub cu: UnitRecord,
    pub du: UnitRecord,
    pub ru: UnitRecord,
}

impl Units {
    pub fn get(&self, kind: UnitKind) -> &UnitRecord {
        match kind {
            UnitKind::CU => &self.cu,
            UnitKind::DU => &self.du,
            UnitKind::RU => &self.ru,
        }
    }

    pub fn get_mut(&mut self, kind: UnitKind) -> &mut UnitRecord {
        match kind {
            UnitKind::CU => &mut self.cu,
            UnitKind::DU => &mut self.du,
            UnitKind::RU => &mut self.ru,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &UnitRecord> {
        [&self.cu, &self.du, &self.ru].into_iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentRecord {
    pub deployment_id: DeploymentId,
    pub tag: String,
    pub order: ServiceOrder,
    pub lifecycle: LifecycleState,
    pub chain: Option<ChainCandidate>,
    pub units: Option<Units>,
    pub event_log: Vec<EventEntry>,
    pub timeline: KpiTimeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_cause: Option<String>,
}

impl DeploymentRecord {
    pub fn new(deployment_id: DeploymentId, order: ServiceOrder, timeline: KpiTimeline) -> Self {
        Self {
            deployment_id,
            tag: order.tag.clone(),
            order,
            lifecycle: LifecycleState::Pending,
            chain: None,
            units: None,
            event_log: Vec::new(),
            timeline,
            abort_cause: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(units) = &self.units {
            for u in units.iter() {
                u.validate()?;
                if u.unit_id.deployment != self.deployment_id {
                    return Err(format!(
                        "{} does not belong to {}",
                        u.unit_id, self.deployment_id
                    ));
                }
            }
        }
        if self
            .event_log
            .windows(2)
            .any(|w| w[0].timestamp_us >= w[1].timestamp_us)
        {
            return Err("event log is not strictly increasing in time".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentFilter {
    pub tag: Option<String>,
    pub state: Option<LifecycleState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentCatalog {
    next_counter: u64,
    retired: BTreeSet<DeploymentId>,
    records: IndexMap<DeploymentId, DeploymentRecord>,
}

impl DeploymentCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hands out the next unused id. Ids are never reissued.
    pub fn allocate_id(&mut self) -> DeploymentId {
        loop {
            self.next_counter += 1;
            let id = DeploymentId::from_counter(self.next_counter);
            if !self.records.contains_key(&id) && !self.retired.contains(&id) {
                return id;
            }
        }
    }

    /// Inserts a new record, or overwrites an existing one when the lifecycle
    /// strictly advances along the state machine.
    pub fn put_deployment(&mut self, record: DeploymentRecord) -> Result<(), CatalogError> {
        record.validate().map_err(CatalogError::InvalidRecord)?;
        let id = record.deployment_id.clone();
        if self.retired.contains(&id) {
            return Err(CatalogError::IdReused(id));
        }
        if let Some(existing) = self.records.get_mut(&id) {
            if !existing.lifecycle.can_advance_to(record.lifecycle) {
                return Err(CatalogError::NonAdvancing {
                    id,
                    from: existing.lifecycle,
                    to: record.lifecycle,
                });
            }
            *existing = record;
        } else {
            if let Some(n) = id
                .as_str()
                .strip_prefix("d-")
                .and_then(|n| n.parse::<u64>().ok())
            {
                self.next_counter = self.next_counter.max(n);
            }
            self.records.insert(id, record);
        }
        Ok(())
    }

    pub fn get(&self, id: &DeploymentId) -> Option<&DeploymentRecord> {
        self.records.get(id)
    }

    /// Engine-side update that leaves the lifecycle where it is.
    pub(crate) fn amend<R>(
        &mut self,
        id: &DeploymentId,
        f: impl FnOnce(&mut DeploymentRecord) -> R,
    ) -> Result<R, CatalogError> {
        let rec = self
            .records
            .get_mut(id)
            .ok_or_else(|| CatalogError::UnknownDeployment(id.clone()))?;
        let before = rec.lifecycle;
        let out = f(rec);
        debug_assert_eq!(before, rec.lifecycle, "amend must not change the lifecycle");
        Ok(out)
    }

    /// Moves a record along one edge of the lifecycle state machine.
    pub(crate) fn transition(
        &mut self,
        id: &DeploymentId,
        next: LifecycleState,
    ) -> Result<LifecycleState, CatalogError> {
        let rec = self
            .records
            .get_mut(id)
            .ok_or_else(|| CatalogError::UnknownDeployment(id.clone()))?;
        let from = rec.lifecycle;
        if !from.can_transition_to(next) {
            return Err(CatalogError::NonAdvancing {
                id: id.clone(),
                from,
                to: next,
            });
        }
        rec.lifecycle = next;
        Ok(from)
    }

    /// Records in creation order, filtered by exact tag and/or state.
    pub fn list_deployments(&self, filter: &DeploymentFilter) -> Vec<DeploymentRecord> {
        self.records
            .values()
            .filter(|r| filter.tag.as_ref().is_none_or(|t| &r.tag == t))
            .filter(|r| filter.state.is_none_or(|s| r.lifecycle == s))
            .cloned()
            .collect()
    }

    pub fn delete_deployment(
        &mut self,
        id: &DeploymentId,
    ) -> Result<DeploymentRecord, CatalogError> {
        let rec = self
            .records
            .get(id)
            .ok_or_else(|| CatalogError::UnknownDeployment(id.clone()))?;
        if !rec.lifecycle.is_deletable() {
            return Err(CatalogError::MidPipeline {
                id: id.clone(),
                state: rec.lifecycle,
            });
        }
        let rec = self.records.shift_remove(id).expect("checked above");
        self.retired.insert(id.clone());
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &DeploymentRecord> {
        self.records.values()
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Write to a temp file in the target directory, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CatalogError::Io(e.error))?;
    Ok(())
}
