//! Deployment manifests, one per RAN unit (the Helm-chart analog).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::placement::{ChainCandidate, ServiceOrder};
use crate::substrate::Resources;
use crate::UnitKind;

pub const ANTENNA_SERIAL_PARAM: &str = "antennaSerial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub unit_kind: UnitKind,
    pub target_node_id: String,
    pub image_name: String,
    pub resource_request: Resources,
    pub parameters: BTreeMap<String, String>,
}

pub fn image_name(kind: UnitKind) -> &'static str {
    match kind {
        UnitKind::CU => "oai-cu",
        UnitKind::DU => "oai-du",
        UnitKind::RU => "oai-ru",
    }
}

/// Renders the CU, DU and RU manifests for a selected chain.
pub fn render_manifests(chain: &ChainCandidate, order: &ServiceOrder) -> [Manifest; 3] {
    UnitKind::ALL.map(|kind| {
        let mut parameters = BTreeMap::from([
            ("tag".to_string(), order.tag.clone()),
            ("maxUsers".to_string(), order.max_users.to_string()),
            ("spectrumBand".to_string(), order.spectrum_band.clone()),
        ]);
        if kind == UnitKind::RU {
            parameters.insert(
                ANTENNA_SERIAL_PARAM.to_string(),
                chain.antenna_serial.clone(),
            );
        }
        Manifest {
            unit_kind: kind,
            target_node_id: chain.node_for(kind).to_string(),
            image_name: image_name(kind).to_string(),
            resource_request: order.demand(kind),
            parameters,
        }
    })
}
