//! Pipeline step labels and the global, sequence-numbered event stream.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::DeploymentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Refresh,
    Discover,
    Enumerate,
    Validate,
    Score,
    Select,
    Render,
    Create,
    Record,
    Configure,
    Affiliate,
    Start,
    Abort,
    Stop,
    Release,
}

impl Step {
    /// Steps of a successful deployment, in call-flow order.
    pub const PIPELINE: [Step; 12] = [
        Step::Refresh,
        Step::Discover,
        Step::Enumerate,
        Step::Validate,
        Step::Score,
        Step::Select,
        Step::Render,
        Step::Create,
        Step::Record,
        Step::Configure,
        Step::Affiliate,
        Step::Start,
    ];

    pub const TEARDOWN: [Step; 2] = [Step::Stop, Step::Release];

    pub fn as_str(&self) -> &'static str {
        match self {
            Step::Refresh => "refresh",
            Step::Discover => "discover",
            Step::Enumerate => "enumerate",
            Step::Validate => "validate",
            Step::Score => "score",
            Step::Select => "select",
            Step::Render => "render",
            Step::Create => "create",
            Step::Record => "record",
            Step::Configure => "configure",
            Step::Affiliate => "affiliate",
            Step::Start => "start",
            Step::Abort => "abort",
            Step::Stop => "stop",
            Step::Release => "release",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of a deployment's event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventEntry {
    pub timestamp_us: Timestamp,
    pub step: Step,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// An [`EventEntry`] as seen on the global stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineEvent {
    pub sequence: u64,
    pub deployment_id: DeploymentId,
    #[serde(flatten)]
    pub entry: EventEntry,
}

#[derive(Debug, Default)]
pub struct EventStream {
    events: Vec<PipelineEvent>,
}

impl EventStream {
    pub fn push(&mut self, deployment_id: DeploymentId, entry: EventEntry) -> u64 {
        let sequence = self.events.len() as u64 + 1;
        self.events.push(PipelineEvent {
            sequence,
            deployment_id,
            entry,
        });
        sequence
    }

    /// Events with a sequence number strictly greater than `since`.
    pub fn since(&self, since: u64) -> Vec<PipelineEvent> {
        let start = (since as usize).min(self.events.len());
        self.events[start..].to_vec()
    }

    pub fn last_sequence(&self) -> u64 {
        self.events.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cursor_semantics() {
        let mut s = EventStream::default();
        assert!(s.since(0).is_empty());
        for (i, step) in Step::PIPELINE.iter().enumerate() {
            let seq = s.push(
                DeploymentId::from_counter(1),
                EventEntry {
                    timestamp_us: i as u64,
                    step: *step,
                    detail: None,
                },
            );
            assert_eq!(seq, i as u64 + 1);
        }
        let all = s.since(0);
        assert_eq!(all.len(), 12);
        assert_eq!(all[0].entry.step, Step::Refresh);
        assert_eq!(s.since(10).len(), 2);
        assert!(s.since(s.last_sequence()).is_empty());
        assert!(s.since(1000).is_empty());
    }

    #[test]
    fn step_labels_round_trip() {
        for step in Step::PIPELINE.iter().chain(&Step::TEARDOWN) {
            let json = serde_json::to_string(step).unwrap();
            assert_eq!(json, format!("\"{}\"", step.as_str()));
        }
    }
}
