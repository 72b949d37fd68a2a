//! Replays a scripted sequence of orders and teardowns against an in-process
//! engine, checking optional expectations along the way.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ztc_core::metrics::KpiReport;
use ztc_core::{
    load_topology, DeploymentId, Engine, EngineConfig, LifecycleState, ServiceOrder, TierPolicy,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Script {
    /// Topology document, relative to the script file.
    pub topology: PathBuf,
    #[serde(default)]
    pub tier_policy: TierPolicy,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptStep {
    #[serde(flatten)]
    pub action: Action,
    /// Lifecycle the deployment must be in after the step.
    #[serde(default)]
    pub expect: Option<LifecycleState>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Action {
    Order(ServiceOrder),
    /// Order document path, relative to the script file.
    OrderFile(PathBuf),
    Teardown(DeploymentId),
    /// Tears down if Running, then removes the record.
    Delete(DeploymentId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepResult {
    pub step: usize,
    pub action: String,
    pub deployment_id: DeploymentId,
    /// `None` once the record has been deleted.
    pub lifecycle: Option<LifecycleState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub steps: Vec<StepResult>,
    pub kpis: Vec<KpiReport>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.ok)
    }
}

pub fn load_script(path: &Path) -> anyhow::Result<Script> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Runs `script`, resolving relative paths against `base_dir`.
pub fn run_script(
    script: &Script,
    base_dir: &Path,
    mut config: EngineConfig,
) -> anyhow::Result<ScenarioReport> {
    let topology_path = base_dir.join(&script.topology);
    let text = std::fs::read_to_string(&topology_path)
        .with_context(|| format!("reading {}", topology_path.display()))?;
    config.tier_policy = script.tier_policy;
    let engine = Engine::new(load_topology(&text)?, config)?;

    let mut steps = Vec::new();
    for (i, step) in script.steps.iter().enumerate() {
        let (action, id, detail) = match &step.action {
            Action::Order(order) => {
                let rec = engine.run_pipeline(order.clone())?;
                ("order", rec.deployment_id, rec.abort_cause)
            }
            Action::OrderFile(path) => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let order: ServiceOrder = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                let rec = engine.run_pipeline(order)?;
                ("order", rec.deployment_id, rec.abort_cause)
            }
            Action::Teardown(id) => match engine.teardown(id) {
                Ok(_) => ("teardown", id.clone(), None),
                Err(e) => ("teardown", id.clone(), Some(e.to_string())),
            },
            Action::Delete(id) => {
                let result = (|| {
                    if engine.deployment(id).map(|r| r.lifecycle) == Some(LifecycleState::Running) {
                        engine.teardown(id)?;
                    }
                    engine.delete_record(id)
                })();
                ("delete", id.clone(), result.err().map(|e| e.to_string()))
            }
        };
        let lifecycle = engine.deployment(&id).map(|r| r.lifecycle);
        let ok = match step.expect {
            Some(want) => lifecycle == Some(want),
            None => {
                !matches!(step.action, Action::Teardown(_) | Action::Delete(_)) || detail.is_none()
            }
        };
        steps.push(StepResult {
            step: i + 1,
            action: action.to_string(),
            deployment_id: id,
            lifecycle,
            detail,
            ok,
        });
    }
    Ok(ScenarioReport {
        steps,
        kpis: engine.kpi_reports(),
    })
}

/// Loads and runs a script file.
pub fn run_file(path: &Path, config: EngineConfig) -> anyhow::Result<ScenarioReport> {
    let script = load_script(path)?;
    let Some(base) = path.parent() else {
        bail!("script path {} has no parent directory", path.display());
    };
    run_script(&script, base, config)
}
