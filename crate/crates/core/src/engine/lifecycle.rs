use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

/// Deployment lifecycle. Forward edges follow the call flow; any state
/// before Running may also drop to Aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleState {
    Pending,
    Discovering,
    Validating,
    Rendering,
    Deploying,
    Configuring,
    Affiliating,
    Running,
    Deleting,
    Deleted,
    Aborted,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 11] = [
        LifecycleState::Pending,
        LifecycleState::Discovering,
        LifecycleState::Validating,
        LifecycleState::Rendering,
        LifecycleState::Deploying,
        LifecycleState::Configuring,
        LifecycleState::Affiliating,
        LifecycleState::Running,
        LifecycleState::Deleting,
        LifecycleState::Deleted,
        LifecycleState::Aborted,
    ];

    pub fn successor(self) -> Option<LifecycleState> {
        use LifecycleState::*;
        match self {
            Pending => Some(Discovering),
            Discovering => Some(Validating),
            Validating => Some(Rendering),
            Rendering => Some(Deploying),
            Deploying => Some(Configuring),
            Configuring => Some(Affiliating),
            Affiliating => Some(Running),
            Running => Some(Deleting),
            Deleting => Some(Deleted),
            Deleted | Aborted => None,
        }
    }

    pub fn is_pre_running(self) -> bool {
        use LifecycleState::*;
        matches!(
            self,
            Pending | Discovering | Validating | Rendering | Deploying | Configuring | Affiliating
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, LifecycleState::Deleted | LifecycleState::Aborted)
    }

    /// States a record may be removed from the catalog in.
    pub fn is_deletable(self) -> bool {
        self.is_terminal() || self == LifecycleState::Running
    }

    /// Single allowed edge.
    pub fn can_transition_to(self, next: LifecycleState) -> bool {
        self.successor() == Some(next) || (next == LifecycleState::Aborted && self.is_pre_running())
    }

    /// Reachable through one or more allowed edges.
    pub fn can_advance_to(self, next: LifecycleState) -> bool {
        if next == LifecycleState::Aborted {
            return self.is_pre_running();
        }
        let mut cur = self;
        while let Some(s) = cur.successor() {
            if s == next {
                return true;
            }
            cur = s;
        }
        false
    }
}

/// The four deployment time markers: ZTC deploy triggered, ZTC running, RAN
/// deployment launched, RAN units running.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiTimeline {
    #[serde(rename = "tZtcDeployStart")]
    pub ztc_deploy_start: Option<Timestamp>,
    #[serde(rename = "tZtcRunning")]
    pub ztc_running: Option<Timestamp>,
    #[serde(rename = "tRanDeployStart")]
    pub ran_deploy_start: Option<Timestamp>,
    #[serde(rename = "tRanRunning")]
    pub ran_running: Option<Timestamp>,
}

impl KpiTimeline {
    pub fn is_complete(&self) -> bool {
        self.ztc_deploy_start.is_some()
            && self.ztc_running.is_some()
            && self.ran_deploy_start.is_some()
            && self.ran_running.is_some()
    }

    /// True when the markers that are present are strictly increasing.
    pub fn is_ordered(&self) -> bool {
        let present: Vec<Timestamp> = [
            self.ztc_deploy_start,
            self.ztc_running,
            self.ran_deploy_start,
            self.ran_running,
        ]
        .into_iter()
        .flatten()
        .collect();
        present.windows(2).all(|w| w[0] < w[1])
    }
}
