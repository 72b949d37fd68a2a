//! Per-unit control agents and the controller side of the affiliation
//! protocol.
//!
//! Every RAN unit gets an agent when it is created. The controller talks to
//! agents over an in-process bus with at-least-once delivery: a message is
//! resent until acknowledged, and agents deduplicate by message id, so a
//! replayed message never changes the outcome.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalogs::{UnitState, Units};
use crate::clock::{Clock, Timestamp};
use crate::{DeploymentId, UnitId, UnitKind};

/// Bound on resends before a message counts as undeliverable.
pub const MAX_DELIVERY_ATTEMPTS: u32 = 64;

pub const SDR_ADDRS: &str = "sdr_addrs";
pub const DU_IP: &str = "duIp";
pub const RU_IP: &str = "ruIp";
pub const CU_IP: &str = "cuIp";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unit {unit} is {state:?}; {action} needs {needed:?}")]
    WrongState {
        unit: UnitId,
        state: UnitState,
        needed: UnitState,
        action: &'static str,
    },
    #[error("unit {0} has no leased address")]
    MissingIp(UnitId),
    #[error("message {0} was not acknowledged after {MAX_DELIVERY_ATTEMPTS} attempts")]
    Undelivered(String),
    #[error("agent for {0} already exists")]
    AlreadySpawned(UnitId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    ConfigPush,
    AffiliationInfo,
    StartCommand,
    StopCommand,
    Ack,
    StatusReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentMessage {
    pub message_id: String,
    pub kind: MessageKind,
    pub target_unit: UnitId,
    pub payload: BTreeMap<String, String>,
    /// Set on acks: the message being acknowledged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusReport {
    pub unit_id: UnitId,
    pub state: UnitState,
    pub config_digest: String,
    pub uptime_us: u64,
}

/// Hex SHA-256 over the canonical (key-sorted) JSON of a config document.
pub fn config_digest(config: &BTreeMap<String, String>) -> String {
    let bytes = serde_json::to_vec(config).expect("string map serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// `serial=<serial>`, the radio address the RU config must carry.
pub fn sdr_addrs_value(serial: &str) -> String {
    format!("serial={serial}")
}

/// Fault model for the simulated transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Delivery {
    #[default]
    Reliable,
    /// Each delivery or ack may be lost and each delivery may be duplicated,
    /// drawn from a seeded generator.
    Lossy {
        seed: u64,
        drop_probability: f64,
        duplicate_probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceLine {
    pub timestamp_us: Timestamp,
    pub direction: TraceDirection,
    pub message: AgentMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceDirection {
    Sent,
    Dropped,
    Acked,
    AckLost,
    Rejected,
}

#[derive(Debug)]
struct Agent {
    unit: UnitId,
    state: UnitState,
    config: BTreeMap<String, String>,
    started_at: Option<Timestamp>,
    /// Outcome of every message seen, rejections included, so a redelivered
    /// copy gets the original answer instead of being re-evaluated.
    handled: HashMap<String, Result<AgentMessage, AgentError>>,
}

impl Agent {
    fn new(unit: UnitId) -> Self {
        Self {
            unit,
            state: UnitState::Created,
            config: BTreeMap::new(),
            started_at: None,
            handled: HashMap::new(),
        }
    }

    fn require(&self, needed: UnitState, action: &'static str) -> Result<(), AgentError> {
        if self.state < needed || self.state == UnitState::Stopped {
            return Err(AgentError::WrongState {
                unit: self.unit.clone(),
                state: self.state,
                needed,
                action,
            });
        }
        Ok(())
    }

    fn handle(&mut self, msg: &AgentMessage, now: Timestamp) -> Result<AgentMessage, AgentError> {
        if let Some(outcome) = self.handled.get(&msg.message_id) {
            return outcome.clone();
        }
        let outcome = self.apply(msg, now);
        self.handled.insert(msg.message_id.clone(), outcome.clone());
        outcome
    }

    fn apply(&mut self, msg: &AgentMessage, now: Timestamp) -> Result<AgentMessage, AgentError> {
        match msg.kind {
            MessageKind::ConfigPush => {
                self.require(UnitState::Created, "config push")?;
                self.config.extend(msg.payload.clone());
                self.state = self.state.max(UnitState::Configured);
            }
            MessageKind::AffiliationInfo => {
                self.require(UnitState::Configured, "affiliation")?;
                self.config.extend(msg.payload.clone());
                self.state = self.state.max(UnitState::Affiliated);
            }
            MessageKind::StartCommand => {
                self.require(UnitState::Affiliated, "start")?;
                if self.state != UnitState::Running {
                    self.state = UnitState::Running;
                    self.started_at = Some(now);
                }
            }
            MessageKind::StopCommand => {
                self.state = UnitState::Stopped;
                self.started_at = None;
            }
            MessageKind::Ack | MessageKind::StatusReport => {}
        }
        let ack = AgentMessage {
            message_id: format!("{}-ack", msg.message_id),
            kind: MessageKind::Ack,
            target_unit: self.unit.clone(),
            payload: BTreeMap::from([
                ("state".to_string(), format!("{:?}", self.state)),
                ("configDigest".to_string(), config_digest(&self.config)),
            ]),
            in_reply_to: Some(msg.message_id.clone()),
        };
        Ok(ack)
    }

    fn status(&self, now: Timestamp) -> StatusReport {
        StatusReport {
            unit_id: self.unit.clone(),
            state: self.state,
            config_digest: config_digest(&self.config),
            uptime_us: match (self.state, self.started_at) {
                (UnitState::Running, Some(t)) => now.saturating_sub(t),
                _ => 0,
            },
        }
    }
}

/// Controller-side view of the agents plus the simulated transport.
#[derive(Debug)]
pub struct AgentBus {
    clock: Arc<Clock>,
    delivery: Delivery,
    agents: RwLock<HashMap<UnitId, Arc<Mutex<Agent>>>>,
    rng: Mutex<ChaCha8Rng>,
    message_counters: Mutex<HashMap<DeploymentId, u64>>,
    traces: Mutex<HashMap<DeploymentId, Vec<TraceLine>>>,
}

impl AgentBus {
    pub fn new(clock: Arc<Clock>, delivery: Delivery) -> Self {
        let seed = match delivery {
            Delivery::Lossy { seed, .. } => seed,
            Delivery::Reliable => 0,
        };
        Self {
            clock,
            delivery,
            agents: RwLock::new(HashMap::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            message_counters: Mutex::new(HashMap::new()),
            traces: Mutex::new(HashMap::new()),
        }
    }

    /// Creates the agent that lives alongside a freshly created unit.
    pub fn spawn(&self, unit: UnitId) -> Result<(), AgentError> {
        let mut agents = self.agents.write();
        if agents.contains_key(&unit) {
            return Err(AgentError::AlreadySpawned(unit));
        }
        agents.insert(unit.clone(), Arc::new(Mutex::new(Agent::new(unit))));
        Ok(())
    }

    pub fn remove(&self, unit: &UnitId) {
        self.agents.write().remove(unit);
    }

    pub fn contains(&self, unit: &UnitId) -> bool {
        self.agents.read().contains_key(unit)
    }

    /// Number of live agents.
    pub fn len(&self) -> usize {
        self.agents.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn agent(&self, unit: &UnitId) -> Result<Arc<Mutex<Agent>>, AgentError> {
        self.agents
            .read()
            .get(unit)
            .cloned()
            .ok_or_else(|| AgentError::UnknownUnit(unit.clone()))
    }

    /// Builds a message with the next per-deployment id.
    pub fn message(
        &self,
        kind: MessageKind,
        target: &UnitId,
        payload: BTreeMap<String, String>,
    ) -> AgentMessage {
        let mut counters = self.message_counters.lock();
        let n = counters.entry(target.deployment.clone()).or_insert(0);
        *n += 1;
        AgentMessage {
            message_id: format!("{}-m{:04}", target.deployment, n),
            kind,
            target_unit: target.clone(),
            payload,
            in_reply_to: None,
        }
    }

    fn trace(&self, direction: TraceDirection, message: &AgentMessage) {
        self.traces
            .lock()
            .entry(message.target_unit.deployment.clone())
            .or_default()
            .push(TraceLine {
                timestamp_us: self.clock.now(),
                direction,
                message: message.clone(),
            });
    }

    fn roll(&self, p: f64) -> bool {
        p > 0.0 && self.rng.lock().gen_bool(p.min(1.0))
    }

    /// Delivers `msg`, resending until the agent's ack comes back.
    pub fn send(&self, msg: &AgentMessage) -> Result<AgentMessage, AgentError> {
        let agent = self.agent(&msg.target_unit)?;
        let (drop_p, dup_p) = match self.delivery {
            Delivery::Reliable => (0.0, 0.0),
            Delivery::Lossy {
                drop_probability,
                duplicate_probability,
                ..
            } => (drop_probability, duplicate_probability),
        };
        for _ in 0..MAX_DELIVERY_ATTEMPTS {
            if self.roll(drop_p) {
                self.trace(TraceDirection::Dropped, msg);
                continue;
            }
            self.trace(TraceDirection::Sent, msg);
            let copies = if self.roll(dup_p) { 2 } else { 1 };
            let mut ack = None;
            for _ in 0..copies {
                let result = agent.lock().handle(msg, self.clock.now());
                match result {
                    Ok(a) => ack = Some(a),
                    Err(e) => {
                        self.trace(TraceDirection::Rejected, msg);
                        return Err(e);
                    }
                }
            }
            let ack = ack.expect("at least one copy handled");
            if self.roll(drop_p) {
                self.trace(TraceDirection::AckLost, &ack);
                continue;
            }
            self.trace(TraceDirection::Acked, &ack);
            return Ok(ack);
        }
        Err(AgentError::Undelivered(msg.message_id.clone()))
    }

    /// Merges `config` into the unit's configuration document.
    pub fn push_config(
        &self,
        unit: &UnitId,
        config: BTreeMap<String, String>,
    ) -> Result<AgentMessage, AgentError> {
        let msg = self.message(MessageKind::ConfigPush, unit, config);
        self.send(&msg)
    }

    /// Cross-wires the peer addresses of a chain's three units. Nothing is
    /// sent unless every unit has an address and is at least Configured.
    pub fn affiliate(&self, units: &Units) -> Result<Vec<AgentMessage>, AgentError> {
        let ip = |kind: UnitKind| {
            let u = units.get(kind);
            u.ip_address
                .map(|ip| ip.to_string())
                .ok_or_else(|| AgentError::MissingIp(u.unit_id.clone()))
        };
        let (cu_ip, du_ip, ru_ip) = (ip(UnitKind::CU)?, ip(UnitKind::DU)?, ip(UnitKind::RU)?);
        for u in units.iter() {
            self.agent(&u.unit_id)?
                .lock()
                .require(UnitState::Configured, "affiliation")?;
        }
        let plan = [
            (
                &units.ru.unit_id,
                BTreeMap::from([(DU_IP.to_string(), du_ip.clone())]),
            ),
            (
                &units.du.unit_id,
                BTreeMap::from([(RU_IP.to_string(), ru_ip), (CU_IP.to_string(), cu_ip)]),
            ),
            (
                &units.cu.unit_id,
                BTreeMap::from([(DU_IP.to_string(), du_ip)]),
            ),
        ];
        let messages: Vec<AgentMessage> = plan
            .into_iter()
            .map(|(unit, payload)| self.message(MessageKind::AffiliationInfo, unit, payload))
            .collect();
        messages.iter().map(|m| self.send(m)).collect()
    }

    /// Starts all three units. Rejected as a whole unless each is Affiliated
    /// or already Running.
    pub fn start_units(&self, units: &Units) -> Result<Vec<AgentMessage>, AgentError> {
        for u in units.iter() {
            self.agent(&u.unit_id)?
                .lock()
                .require(UnitState::Affiliated, "start")?;
        }
        units
            .iter()
            .map(|u| {
                let msg = self.message(MessageKind::StartCommand, &u.unit_id, BTreeMap::new());
                self.send(&msg)
            })
            .collect()
    }

    pub fn stop_unit(&self, unit: &UnitId) -> Result<AgentMessage, AgentError> {
        let msg = self.message(MessageKind::StopCommand, unit, BTreeMap::new());
        self.send(&msg)
    }

    pub fn report_status(&self, unit: &UnitId) -> Result<StatusReport, AgentError> {
        let agent = self.agent(unit)?;
        let report = agent.lock().status(self.clock.now());
        Ok(report)
    }

    /// Current state and configuration as held by the agent.
    pub fn unit_view(
        &self,
        unit: &UnitId,
    ) -> Result<(UnitState, BTreeMap<String, String>), AgentError> {
        let agent = self.agent(unit)?;
        let a = agent.lock();
        Ok((a.state, a.config.clone()))
    }

    pub fn take_trace(&self, deployment: &DeploymentId) -> Vec<TraceLine> {
        self.traces.lock().remove(deployment).unwrap_or_default()
    }

    pub fn trace_snapshot(&self, deployment: &DeploymentId) -> Vec<TraceLine> {
        self.traces
            .lock()
            .get(deployment)
            .cloned()
            .unwrap_or_default()
    }
}
