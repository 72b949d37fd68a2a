//! Deployment-time KPIs and per-node usage samples.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::catalogs::DeploymentRecord;
use crate::clock::{micros_to_ms, Timestamp};
use crate::engine::KpiTimeline;
use crate::events::Step;
use crate::substrate::Topology;
use crate::DeploymentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KpiReport {
    pub deployment_id: DeploymentId,
    /// Order accepted to all units running.
    pub deployment_duration_ms: f64,
    pub timeline: KpiTimeline,
    pub per_step_durations_ms: BTreeMap<String, f64>,
}

impl KpiReport {
    /// Builds the report for a deployment that reached Running. Each step's
    /// duration runs from the previous event (or order acceptance) to its own
    /// event, so the durations add up to the total.
    pub fn from_record(record: &DeploymentRecord) -> Option<Self> {
        let t = record.timeline;
        let (start, end) = (t.ran_deploy_start?, t.ran_running?);
        let mut prev = start;
        let mut per_step = BTreeMap::new();
        for e in &record.event_log {
            if e.timestamp_us > end || !Step::PIPELINE.contains(&e.step) {
                continue;
            }
            per_step.insert(
                e.step.as_str().to_string(),
                micros_to_ms(e.timestamp_us.saturating_sub(prev)),
            );
            prev = e.timestamp_us;
        }
        Some(Self {
            deployment_id: record.deployment_id.clone(),
            deployment_duration_ms: micros_to_ms(end - start),
            timeline: t,
            per_step_durations_ms: per_step,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UsageSample {
    pub node_id: String,
    pub timestamp_us: Timestamp,
    pub cpu_used_millicores: u64,
    pub ram_used_mb: u64,
}

/// Bounded history of usage samples, oldest dropped first.
#[derive(Debug, Clone)]
pub struct UsageLog {
    capacity: usize,
    samples: VecDeque<UsageSample>,
}

impl UsageLog {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            samples: VecDeque::new(),
        }
    }

    /// One sample per node, read straight from the substrate counters.
    pub fn record(&mut self, topology: &Topology, now: Timestamp) {
        for n in topology.nodes.values() {
            if self.samples.len() == self.capacity {
                self.samples.pop_front();
            }
            self.samples.push_back(UsageSample {
                node_id: n.id.clone(),
                timestamp_us: now,
                cpu_used_millicores: n.used.cpu_millicores,
                ram_used_mb: n.used.ram_mb,
            });
        }
    }

    pub fn samples(&self) -> Vec<UsageSample> {
        self.samples.iter().cloned().collect()
    }

    /// Earliest retained sample per node.
    pub fn first_per_node(&self) -> BTreeMap<String, UsageSample> {
        let mut out = BTreeMap::new();
        for s in &self.samples {
            out.entry(s.node_id.clone()).or_insert_with(|| s.clone());
        }
        out
    }

    /// Latest sample per node.
    pub fn last_per_node(&self) -> BTreeMap<String, UsageSample> {
        let mut out = BTreeMap::new();
        for s in &self.samples {
            out.insert(s.node_id.clone(), s.clone());
        }
        out
    }
}
