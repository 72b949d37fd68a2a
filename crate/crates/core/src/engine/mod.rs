//! The commissioning controller: runs the deployment pipeline as a lifecycle
//! state machine, creates units atomically, drives the agents and tears
//! deployments down.
//!
//! Shared infrastructure (usage counters, antenna occupancy, address leases)
//! sits behind a single write lock; every claim is check-and-set under that
//! lock. Steps of one deployment run strictly in sequence, while different
//! deployments may run concurrently.
//!
//! Lock order is infrastructure, then resource catalog, then deployment
//! catalog, then event stream.

mod lifecycle;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lifecycle::{KpiTimeline, LifecycleState};
pub use manifest::{image_name, render_manifests, Manifest, ANTENNA_SERIAL_PARAM};

use crate::agents::{self, AgentBus, AgentError, Delivery, StatusReport};
use crate::catalogs::{
    write_atomic, CatalogError, DeploymentCatalog, DeploymentFilter, DeploymentRecord,
    ResourceCatalog, UnitRecord, UnitState, Units, DEPLOYMENT_CATALOG_FILE, RESOURCE_CATALOG_FILE,
};
use crate::clock::{Clock, Timestamp};
use crate::events::{EventEntry, EventStream, PipelineEvent, Step};
use crate::ippool::{IpLease, IpPool, PoolError};
use crate::metrics::{KpiReport, UsageLog, UsageSample};
use crate::placement::{
    self, enumerate_chains, select_best, Execution, OrderError, PlacementError, Selection,
    ServiceOrder, TierPolicy,
};
use crate::substrate::{CapacityError, Resources, Topology, TopologyError};
use crate::{DeploymentId, UnitId, UnitKind};

pub const INFEASIBLE_REASON: &str = "infeasible: no candidate chain";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    InvalidOrder(#[from] OrderError),
    #[error("unknown deployment {0}")]
    UnknownDeployment(DeploymentId),
    #[error("deployment {id} is {state:?}, expected {expected}")]
    WrongState {
        id: DeploymentId,
        state: LifecycleState,
        expected: &'static str,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("antenna {0:?} is already occupied")]
    AntennaTaken(String),
    #[error("antenna {0:?} not found on the RU node")]
    AntennaMissing(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub tier_policy: TierPolicy,
    pub execution: Execution,
    /// Simulated container start time, applied per unit.
    pub unit_start_delay: Duration,
    pub delivery: Delivery,
    /// Where snapshots, manifests and traces go. `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub ip_pool_first: Ipv4Addr,
    pub ip_pool_last: Ipv4Addr,
    /// Maximum retained usage samples.
    pub usage_history: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tier_policy: TierPolicy::ScenarioF,
            execution: Execution::default(),
            unit_start_delay: Duration::ZERO,
            delivery: Delivery::Reliable,
            data_dir: None,
            ip_pool_first: Ipv4Addr::new(10, 42, 0, 2),
            ip_pool_last: Ipv4Addr::new(10, 42, 0, 254),
            usage_history: 100_000,
        }
    }
}

impl EngineConfig {
    /// Slow profile that makes pipeline progress visible in a UI.
    pub fn demo() -> Self {
        Self {
            unit_start_delay: Duration::from_secs(2),
            ..Self::default()
        }
    }
}

/// A resource claim held by one deployment on one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reservation {
    pub node_id: String,
    pub unit_kind: UnitKind,
    pub resources: Resources,
}

#[derive(Debug)]
struct Infrastructure {
    topology: Topology,
    pool: IpPool,
    reservations: BTreeMap<DeploymentId, Vec<Reservation>>,
}

/// Everything shared deployments can change, for before/after comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct InfrastructureState {
    pub resource_catalog: Vec<u8>,
    pub leases: Vec<IpLease>,
    pub reservations: BTreeMap<DeploymentId, Vec<Reservation>>,
    pub occupied_antennas: BTreeMap<String, DeploymentId>,
    pub live_deployments: Vec<DeploymentId>,
    pub agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TeardownSummary {
    pub deployment_id: DeploymentId,
    pub released_ips: Vec<Ipv4Addr>,
    pub released_antenna: Option<String>,
    pub released: Vec<Reservation>,
}

pub struct Engine {
    config: EngineConfig,
    clock: Arc<Clock>,
    infra: RwLock<Infrastructure>,
    resources: RwLock<ResourceCatalog>,
    deployments: RwLock<DeploymentCatalog>,
    events: RwLock<EventStream>,
    agents: AgentBus,
    usage: Mutex<UsageLog>,
    ztc_deploy_start: Timestamp,
    ztc_running: Timestamp,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(topology: Topology, config: EngineConfig) -> Result<Self, EngineError> {
        let clock = Arc::new(Clock::new());
        let ztc_deploy_start = clock.now();
        let pool = IpPool::new(config.ip_pool_first, config.ip_pool_last)?;
        let catalog = ResourceCatalog::refresh(&topology, clock.now());
        let mut usage = UsageLog::new(config.usage_history);
        usage.record(&topology, clock.now());
        let engine = Self {
            agents: AgentBus::new(clock.clone(), config.delivery),
            infra: RwLock::new(Infrastructure {
                topology,
                pool,
                reservations: BTreeMap::new(),
            }),
            resources: RwLock::new(catalog),
            deployments: RwLock::new(DeploymentCatalog::new()),
            events: RwLock::new(EventStream::default()),
            usage: Mutex::new(usage),
            ztc_deploy_start,
            ztc_running: 0,
            config,
            clock,
        };
        engine.persist_resource_catalog()?;
        engine.persist_deployment_catalog()?;
        Ok(Self {
            ztc_running: engine.clock.now(),
            ..engine
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    // ---- reads -----------------------------------------------------------

    pub fn resource_catalog(&self) -> ResourceCatalog {
        self.resources.read().clone()
    }

    pub fn topology(&self) -> Topology {
        self.infra.read().topology.clone()
    }

    pub fn deployment(&self, id: &DeploymentId) -> Option<DeploymentRecord> {
        self.deployments.read().get(id).cloned()
    }

    pub fn list_deployments(&self, filter: &DeploymentFilter) -> Vec<DeploymentRecord> {
        self.deployments.read().list_deployments(filter)
    }

    pub fn events_since(&self, since: u64) -> Vec<PipelineEvent> {
        self.events.read().since(since)
    }

    pub fn leases(&self) -> Vec<IpLease> {
        self.infra.read().pool.leases()
    }

    pub fn reservations(&self) -> BTreeMap<DeploymentId, Vec<Reservation>> {
        self.infra.read().reservations.clone()
    }

    pub fn report_status(&self, unit: &UnitId) -> Result<StatusReport, EngineError> {
        Ok(self.agents.report_status(unit)?)
    }

    pub fn agent_bus(&self) -> &AgentBus {
        &self.agents
    }

    pub fn kpi_reports(&self) -> Vec<KpiReport> {
        self.deployments
            .read()
            .records()
            .filter_map(KpiReport::from_record)
            .collect()
    }

    pub fn usage_samples(&self) -> Vec<UsageSample> {
        self.usage.lock().samples()
    }

    pub fn usage_log(&self) -> UsageLog {
        self.usage.lock().clone()
    }

    /// Samples every node's usage counters.
    pub fn sample_usage(&self) {
        let infra = self.infra.read();
        self.usage.lock().record(&infra.topology, self.clock.now());
    }

    /// Consistent snapshot of all shared state a deployment can touch.
    pub fn infrastructure_state(&self) -> InfrastructureState {
        let infra = self.infra.read();
        let catalog = ResourceCatalog::refresh(&infra.topology, 0);
        let occupied_antennas = infra
            .topology
            .nodes
            .values()
            .flat_map(|n| &n.antennas)
            .filter_map(|a| a.occupied_by.clone().map(|d| (a.serial.clone(), d)))
            .collect();
        let live_deployments = self
            .deployments
            .read()
            .records()
            .filter(|r| !r.lifecycle.is_terminal())
            .map(|r| r.deployment_id.clone())
            .collect();
        InfrastructureState {
            resource_catalog: catalog.state_bytes(),
            leases: infra.pool.leases(),
            reservations: infra.reservations.clone(),
            occupied_antennas,
            live_deployments,
            agents: self.agents.len(),
        }
    }

    // ---- resource catalog ------------------------------------------------

    /// Rebuilds the Resource Catalog from the current infrastructure.
    pub fn refresh(&self) -> Result<ResourceCatalog, EngineError> {
        let catalog = {
            let infra = self.infra.read();
            let catalog = ResourceCatalog::refresh(&infra.topology, self.clock.now());
            *self.resources.write() = catalog.clone();
            catalog
        };
        self.persist_resource_catalog()?;
        Ok(catalog)
    }

    // ---- pipeline ----------------------------------------------------------

    /// Accepts an order: assigns an id and records it as Pending.
    pub fn accept(&self, order: ServiceOrder) -> Result<DeploymentId, EngineError> {
        order.validate()?;
        let id = {
            let mut deps = self.deployments.write();
            let id = deps.allocate_id();
            let timeline = KpiTimeline {
                ztc_deploy_start: Some(self.ztc_deploy_start),
                ztc_running: Some(self.ztc_running),
                ran_deploy_start: Some(self.clock.now()),
                ran_running: None,
            };
            deps.put_deployment(DeploymentRecord::new(id.clone(), order, timeline))?;
            id
        };
        self.persist_deployment_catalog()?;
        Ok(id)
    }

    /// Accepts and runs an order to completion.
    pub fn run_pipeline(&self, order: ServiceOrder) -> Result<DeploymentRecord, EngineError> {
        let id = self.accept(order)?;
        self.execute(&id)
    }

    /// Runs the pipeline of an accepted deployment. The returned record is
    /// either Running or Aborted; on abort no infrastructure change persists.
    pub fn execute(&self, id: &DeploymentId) -> Result<DeploymentRecord, EngineError> {
        let order = {
            let deps = self.deployments.read();
            let rec = deps
                .get(id)
                .ok_or_else(|| EngineError::UnknownDeployment(id.clone()))?;
            if rec.lifecycle != LifecycleState::Pending {
                return Err(EngineError::WrongState {
                    id: id.clone(),
                    state: rec.lifecycle,
                    expected: "Pending",
                });
            }
            rec.order.clone()
        };

        if let Err(cause) = self.drive(id, &order) {
            self.abort(id, &cause)?;
        }
        self.dump_trace(id)?;
        self.persist_deployment_catalog()?;
        self.deployment(id)
            .ok_or_else(|| EngineError::UnknownDeployment(id.clone()))
    }

    /// Pipeline body. An `Err` carries the abort cause.
    fn drive(&self, id: &DeploymentId, order: &ServiceOrder) -> Result<(), String> {
        let policy = self.config.tier_policy;
        let exec = self.config.execution;
        let fail = |e: EngineError| e.to_string();

        self.transition(id, LifecycleState::Discovering)
            .map_err(fail)?;
        // forced refresh so discovery sees current state
        let (catalog, topology) = {
            let infra = self.infra.read();
            let catalog = ResourceCatalog::refresh(&infra.topology, self.clock.now());
            *self.resources.write() = catalog.clone();
            (catalog, infra.topology.clone())
        };
        self.persist_resource_catalog().map_err(fail)?;
        self.log(id, Step::Refresh, None).map_err(fail)?;

        let candidates = placement::discover(order, &catalog, &topology, policy);
        self.log(
            id,
            Step::Discover,
            Some(format!(
                "cu={} du={} ru={}",
                candidates.cu_nodes.len(),
                candidates.du_nodes.len(),
                candidates.ru_nodes.len()
            )),
        )
        .map_err(fail)?;

        let chains = enumerate_chains(&candidates);
        self.log(
            id,
            Step::Enumerate,
            Some(format!("{} chains", chains.len())),
        )
        .map_err(fail)?;

        self.transition(id, LifecycleState::Validating)
            .map_err(fail)?;
        let probes = placement::validate_chains(&chains, order, &topology, policy, exec)
            .map_err(|e| fail(e.into()))?;
        let passing = probes.iter().filter(|p| p.pass).count();
        self.log(id, Step::Validate, Some(format!("{passing} passing")))
            .map_err(fail)?;

        let scored = placement::score_chains(&chains, &probes, order, exec);
        self.log(id, Step::Score, None).map_err(fail)?;

        let chain = match select_best(&scored) {
            Selection::Selected(chain) => chain,
            Selection::Infeasible => {
                self.log(id, Step::Select, Some("none".into()))
                    .map_err(fail)?;
                return Err(INFEASIBLE_REASON.to_string());
            }
        };
        self.log(
            id,
            Step::Select,
            Some(format!(
                "{}/{}/{}/{}",
                chain.cu_node_id, chain.du_node_id, chain.ru_node_id, chain.antenna_serial
            )),
        )
        .map_err(fail)?;
        self.deployments
            .write()
            .amend(id, |r| r.chain = Some(chain.clone()))
            .map_err(|e| fail(e.into()))?;

        self.transition(id, LifecycleState::Rendering)
            .map_err(fail)?;
        let manifests = render_manifests(&chain, order);
        self.write_manifests(id, &manifests).map_err(fail)?;
        self.log(id, Step::Render, None).map_err(fail)?;

        self.transition(id, LifecycleState::Deploying)
            .map_err(fail)?;
        let units = self
            .create_units(id, &manifests)
            .map_err(|e| format!("creation failed: {e}"))?;
        if !self.config.unit_start_delay.is_zero() {
            std::thread::sleep(self.config.unit_start_delay * 3);
        }
        self.log(id, Step::Create, None).map_err(fail)?;

        let result = self.configure_and_start(id, &units, &manifests);
        if let Err(e) = result {
            self.release_units(id);
            return Err(e);
        }
        Ok(())
    }

    fn configure_and_start(
        &self,
        id: &DeploymentId,
        units: &Units,
        manifests: &[Manifest; 3],
    ) -> Result<(), String> {
        let fail = |e: EngineError| e.to_string();
        self.deployments
            .write()
            .amend(id, |r| r.units = Some(units.clone()))
            .map_err(|e| fail(e.into()))?;
        self.persist_deployment_catalog().map_err(fail)?;
        self.log(id, Step::Record, None).map_err(fail)?;

        self.transition(id, LifecycleState::Configuring)
            .map_err(fail)?;
        for (unit, manifest) in units.iter().zip(manifests) {
            let config = initial_config(unit, manifest);
            self.agents
                .push_config(&unit.unit_id, config)
                .map_err(|e| fail(e.into()))?;
        }
        self.sync_units(id).map_err(fail)?;
        self.log(id, Step::Configure, None).map_err(fail)?;

        self.transition(id, LifecycleState::Affiliating)
            .map_err(fail)?;
        let current = self.current_units(id).map_err(fail)?;
        self.agents
            .affiliate(&current)
            .map_err(|e| fail(e.into()))?;
        self.sync_units(id).map_err(fail)?;
        self.log(id, Step::Affiliate, None).map_err(fail)?;

        self.agents
            .start_units(&current)
            .map_err(|e| fail(e.into()))?;
        self.sync_units(id).map_err(fail)?;
        self.finish_start(id).map_err(fail)
    }

    /// Logs the start step, stamps the running marker and enters Running in
    /// one critical section so all three agree on the same instant.
    fn finish_start(&self, id: &DeploymentId) -> Result<(), EngineError> {
        let mut deps = self.deployments.write();
        let ts = self.clock.now();
        let entry = EventEntry {
            timestamp_us: ts,
            step: Step::Start,
            detail: None,
        };
        deps.amend(id, |r| {
            r.event_log.push(entry.clone());
            r.timeline.ran_running = Some(ts);
        })?;
        self.events.write().push(id.clone(), entry);
        deps.transition(id, LifecycleState::Running)?;
        Ok(())
    }

    fn abort(&self, id: &DeploymentId, cause: &str) -> Result<(), EngineError> {
        tracing::info!(deployment = %id, cause, "pipeline aborted");
        {
            let mut deps = self.deployments.write();
            let ts = self.clock.now();
            let entry = EventEntry {
                timestamp_us: ts,
                step: Step::Abort,
                detail: Some(cause.to_string()),
            };
            deps.amend(id, |r| {
                r.event_log.push(entry.clone());
                r.abort_cause = Some(cause.to_string());
            })?;
            self.events.write().push(id.clone(), entry);
            deps.transition(id, LifecycleState::Aborted)?;
        }
        self.refresh()?;
        Ok(())
    }

    fn transition(&self, id: &DeploymentId, next: LifecycleState) -> Result<(), EngineError> {
        self.deployments.write().transition(id, next)?;
        Ok(())
    }

    /// Appends a step to the record's log and to the global stream together.
    fn log(
        &self,
        id: &DeploymentId,
        step: Step,
        detail: Option<String>,
    ) -> Result<(), EngineError> {
        let mut deps = self.deployments.write();
        let entry = EventEntry {
            timestamp_us: self.clock.now(),
            step,
            detail,
        };
        deps.amend(id, |r| r.event_log.push(entry.clone()))?;
        self.events.write().push(id.clone(), entry);
        Ok(())
    }

    fn current_units(&self, id: &DeploymentId) -> Result<Units, EngineError> {
        self.deployments
            .read()
            .get(id)
            .and_then(|r| r.units.clone())
            .ok_or_else(|| EngineError::UnknownDeployment(id.clone()))
    }

    /// Copies each agent's state and configuration into the unit records.
    fn sync_units(&self, id: &DeploymentId) -> Result<(), EngineError> {
        let mut units = self.current_units(id)?;
        for kind in UnitKind::ALL {
            let u = units.get_mut(kind);
            let (state, config) = self.agents.unit_view(&u.unit_id)?;
            u.state = state;
            u.config_document = config;
        }
        self.deployments
            .write()
            .amend(id, |r| r.units = Some(units))?;
        Ok(())
    }

    /// Reserves capacity, claims the antenna, leases addresses and spawns
    /// agents for all three units as one atomic step. Any failure undoes the
    /// claims made so far in reverse order.
    pub fn create_units(
        &self,
        id: &DeploymentId,
        manifests: &[Manifest; 3],
    ) -> Result<Units, EngineError> {
        enum Claim {
            Reserve(String, Resources),
            Antenna(String, String),
            Lease(Ipv4Addr),
        }

        let mut infra = self.infra.write();
        let mut claims: Vec<Claim> = Vec::new();
        let mut records: Vec<UnitRecord> = Vec::new();

        let attempt = (|| -> Result<(), EngineError> {
            for m in manifests {
                let unit_id = UnitId::new(id.clone(), m.unit_kind);
                let node = infra.topology.node_mut(&m.target_node_id)?;
                node.reserve(&m.resource_request)?;
                claims.push(Claim::Reserve(m.target_node_id.clone(), m.resource_request));

                let antenna_serial = if m.unit_kind == UnitKind::RU {
                    let serial = m
                        .parameters
                        .get(ANTENNA_SERIAL_PARAM)
                        .cloned()
                        .unwrap_or_default();
                    let antenna = node
                        .antenna_mut(&serial)
                        .ok_or_else(|| EngineError::AntennaMissing(serial.clone()))?;
                    if antenna.occupied_by.is_some() {
                        return Err(EngineError::AntennaTaken(serial));
                    }
                    antenna.occupied_by = Some(id.clone());
                    claims.push(Claim::Antenna(m.target_node_id.clone(), serial.clone()));
                    Some(serial)
                } else {
                    None
                };

                let lease = infra.pool.allocate(unit_id.clone())?;
                claims.push(Claim::Lease(lease.ip_address));

                records.push(UnitRecord {
                    unit_id,
                    unit_kind: m.unit_kind,
                    node_id: m.target_node_id.clone(),
                    ip_address: Some(lease.ip_address),
                    antenna_serial,
                    config_document: BTreeMap::new(),
                    state: UnitState::Created,
                });
            }
            Ok(())
        })();

        if let Err(e) = attempt {
            for claim in claims.into_iter().rev() {
                match claim {
                    Claim::Lease(ip) => {
                        infra.pool.release(ip).expect("lease made in this call");
                    }
                    Claim::Antenna(node, serial) => {
                        if let Some(a) = infra
                            .topology
                            .node_mut(&node)
                            .ok()
                            .and_then(|n| n.antenna_mut(&serial))
                        {
                            a.occupied_by = None;
                        }
                    }
                    Claim::Reserve(node, r) => {
                        infra
                            .topology
                            .node_mut(&node)
                            .and_then(|n| {
                                n.release(&r)
                                    .map_err(|_| TopologyError::UnknownNode(node.clone()))
                            })
                            .expect("reservation made in this call");
                    }
                }
            }
            return Err(e);
        }

        infra.reservations.insert(
            id.clone(),
            manifests
                .iter()
                .map(|m| Reservation {
                    node_id: m.target_node_id.clone(),
                    unit_kind: m.unit_kind,
                    resources: m.resource_request,
                })
                .collect(),
        );
        for r in &records {
            // unit ids embed the fresh deployment id, so this cannot collide
            self.agents.spawn(r.unit_id.clone())?;
        }
        self.usage.lock().record(&infra.topology, self.clock.now());
        *self.resources.write() = ResourceCatalog::refresh(&infra.topology, self.clock.now());
        drop(infra);
        self.persist_resource_catalog()?;

        let mut it = records.into_iter();
        Ok(Units {
            cu: it.next().expect("cu"),
            du: it.next().expect("du"),
            ru: it.next().expect("ru"),
        })
    }

    /// Returns every claim held by `id` and removes its agents.
    fn release_units(&self, id: &DeploymentId) -> TeardownSummary {
        let mut infra = self.infra.write();
        let released = infra.reservations.remove(id).unwrap_or_default();
        for r in &released {
            if let Ok(node) = infra.topology.node_mut(&r.node_id) {
                if let Err(e) = node.release(&r.resources) {
                    tracing::error!(deployment = %id, error = %e, "release failed");
                }
            }
        }
        let mut released_antenna = None;
        for node in infra.topology.nodes.values_mut() {
            for a in &mut node.antennas {
                if a.occupied_by.as_ref() == Some(id) {
                    a.occupied_by = None;
                    released_antenna = Some(a.serial.clone());
                }
            }
        }
        let ips: Vec<Ipv4Addr> = infra
            .pool
            .leases()
            .into_iter()
            .filter(|l| &l.leased_to.deployment == id)
            .map(|l| l.ip_address)
            .collect();
        for ip in &ips {
            let _ = infra.pool.release(*ip);
        }
        for kind in UnitKind::ALL {
            self.agents.remove(&UnitId::new(id.clone(), kind));
        }
        self.usage.lock().record(&infra.topology, self.clock.now());
        *self.resources.write() = ResourceCatalog::refresh(&infra.topology, self.clock.now());
        TeardownSummary {
            deployment_id: id.clone(),
            released_ips: ips,
            released_antenna,
            released,
        }
    }

    /// Stops a Running deployment and returns everything it held.
    pub fn teardown(&self, id: &DeploymentId) -> Result<TeardownSummary, EngineError> {
        {
            let mut deps = self.deployments.write();
            let state = deps
                .get(id)
                .map(|r| r.lifecycle)
                .ok_or_else(|| EngineError::UnknownDeployment(id.clone()))?;
            if state != LifecycleState::Running {
                return Err(EngineError::WrongState {
                    id: id.clone(),
                    state,
                    expected: "Running",
                });
            }
            deps.transition(id, LifecycleState::Deleting)?;
        }

        let units = self.current_units(id)?;
        for u in units.iter() {
            if let Err(e) = self.agents.stop_unit(&u.unit_id) {
                tracing::warn!(unit = %u.unit_id, error = %e, "stop failed");
            }
        }
        self.sync_units(id)?;
        self.log(id, Step::Stop, None)?;

        let summary = self.release_units(id);
        self.log(id, Step::Release, None)?;
        self.transition(id, LifecycleState::Deleted)?;
        self.persist_resource_catalog()?;
        self.persist_deployment_catalog()?;
        self.dump_trace(id)?;
        Ok(summary)
    }

    /// Removes a terminal or Running record from the Deployment Catalog.
    /// Resources of a Running deployment must be released with
    /// [`Engine::teardown`] first.
    pub fn delete_record(&self, id: &DeploymentId) -> Result<DeploymentRecord, EngineError> {
        let rec = self.deployments.write().delete_deployment(id)?;
        self.persist_deployment_catalog()?;
        Ok(rec)
    }

    // ---- persistence -----------------------------------------------------

    fn persist_resource_catalog(&self) -> Result<(), EngineError> {
        if let Some(dir) = &self.config.data_dir {
            let catalog = self.resources.read().clone();
            catalog.save(&dir.join(RESOURCE_CATALOG_FILE))?;
        }
        Ok(())
    }

    fn persist_deployment_catalog(&self) -> Result<(), EngineError> {
        if let Some(dir) = &self.config.data_dir {
            let catalog = self.deployments.read().clone();
            catalog.save(&dir.join(DEPLOYMENT_CATALOG_FILE))?;
        }
        Ok(())
    }

    fn write_manifests(
        &self,
        id: &DeploymentId,
        manifests: &[Manifest; 3],
    ) -> Result<(), EngineError> {
        if let Some(dir) = &self.config.data_dir {
            let base = manifest_dir(dir, id);
            for m in manifests {
                let bytes = serde_json::to_vec_pretty(m).map_err(CatalogError::from)?;
                write_atomic(&base.join(format!("{}.json", m.unit_kind)), &bytes)?;
            }
        }
        Ok(())
    }

    fn dump_trace(&self, id: &DeploymentId) -> Result<(), EngineError> {
        let lines = self.agents.take_trace(id);
        if let (Some(dir), false) = (&self.config.data_dir, lines.is_empty()) {
            let path = dir.join("traces").join(format!("{id}.jsonl"));
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            for line in lines {
                let json = serde_json::to_string(&line).map_err(CatalogError::from)?;
                writeln!(f, "{json}")?;
            }
        }
        Ok(())
    }
}

pub fn manifest_dir(data_dir: &Path, id: &DeploymentId) -> PathBuf {
    data_dir.join("manifests").join(id.as_str())
}

/// Configuration pushed to a unit's agent right after creation.
fn initial_config(unit: &UnitRecord, manifest: &Manifest) -> BTreeMap<String, String> {
    let mut config = manifest.parameters.clone();
    config.remove(ANTENNA_SERIAL_PARAM);
    config.insert("unitKind".into(), unit.unit_kind.to_string());
    config.insert("nodeId".into(), unit.node_id.clone());
    if let Some(ip) = unit.ip_address {
        config.insert("localIp".into(), ip.to_string());
    }
    if let Some(serial) = &unit.antenna_serial {
        config.insert(agents::SDR_ADDRS.into(), agents::sdr_addrs_value(serial));
    }
    config
}

/// Antenna serials currently occupied, for exclusivity checks.
pub fn occupied_serials(topology: &Topology) -> BTreeSet<String> {
    topology
        .nodes
        .values()
        .flat_map(|n| &n.antennas)
        .filter(|a| !a.is_free())
        .map(|a| a.serial.clone())
        .collect()
}
