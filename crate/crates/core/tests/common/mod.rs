//! Shared generators and independent reference checks for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ztc_core::placement::{ChainCandidate, TierPolicy};
use ztc_core::{
    load_topology, CloudTier, DeploymentId, GeoPosition, Resources, ServiceOrder, Topology,
    UnitKind,
};

pub const TOPOLOGY: &str = include_str!("../../fixtures/topology.json");
pub const ORDER: &str = include_str!("../../fixtures/order.json");

pub fn fixture_topology() -> Topology {
    load_topology(TOPOLOGY).unwrap()
}

pub fn fixture_order() -> ServiceOrder {
    serde_json::from_str(ORDER).unwrap()
}

/// A randomized desk-scale placement problem.
#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub topology: Topology,
    pub order: ServiceOrder,
    pub policy: TierPolicy,
}

const CENTER: (f64, f64) = (48.0, -3.0);

fn grid_offset(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // 0.01 degree steps keep distances on a coarse lattice so ties happen
    let step = 0.01;
    (
        CENTER.0 + step * rng.gen_range(-6i32..=6) as f64,
        CENTER.1 + step * rng.gen_range(-6i32..=6) as f64,
    )
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    *xs.choose(rng).unwrap()
}

/// Up to 8 nodes and 4 antennas, random links, capacities and pre-existing
/// load, plus a random order and tier policy. Same seed, same case.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=8);
    let tiers = ["Regional", "Edge", "FarEdge"];
    let mut nodes = Vec::new();
    let mut tier_of = Vec::new();
    for i in 0..n {
        // first three nodes cover every tier so feasible cases are common
        let tier = if i < 3 {
            tiers[i]
        } else {
            pick(&mut rng, &tiers)
        };
        let (lat, lon) = grid_offset(&mut rng);
        tier_of.push(tier);
        nodes.push(json!({
            "id": format!("n{i}"),
            "tier": tier,
            "position": {"lat": lat, "lon": lon},
            "cpuMillicores": pick(&mut rng, &[1000u64, 2000, 4000, 8000, 16000]),
            "ramMb": pick(&mut rng, &[2048u64, 4096, 8192]),
            "diskMb": pick(&mut rng, &[2048u64, 4096, 8192]),
            "antennas": [],
        }));
    }
    let far_edge: Vec<usize> = (0..n).filter(|&i| tier_of[i] == "FarEdge").collect();
    let antenna_count = if rng.gen_bool(0.1) {
        0
    } else {
        rng.gen_range(1..=4)
    };
    let mut last = None;
    for k in 0..antenna_count {
        let host = *far_edge.choose(&mut rng).unwrap();
        // co-located antennas produce exact score ties
        let (lat, lon) = match last {
            Some(p) if rng.gen_bool(0.4) => p,
            _ => grid_offset(&mut rng),
        };
        last = Some((lat, lon));
        nodes[host]["antennas"]
            .as_array_mut()
            .unwrap()
            .push(json!({"serial": format!("S{k}"), "position": {"lat": lat, "lon": lon}}));
    }
    let mut links = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.6) {
                links.push(json!({
                    "a": format!("n{a}"),
                    "b": format!("n{b}"),
                    "latencyMs": pick(&mut rng, &[0.0, 0.1, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0]),
                    "bandwidthMbps": pick(&mut rng, &[500.0, 1000.0, 10000.0, 10000.0]),
                }));
            }
        }
    }
    let doc = json!({"nodes": nodes, "links": links});
    let mut topology = load_topology(&doc.to_string()).unwrap();

    // pre-existing tenants: some occupied antennas and some used capacity
    for node in topology.nodes.values_mut() {
        for a in &mut node.antennas {
            if rng.gen_bool(0.2) {
                a.occupied_by = Some(DeploymentId::from("d-900"));
            }
        }
        if rng.gen_bool(0.3) {
            let load = Resources::new(
                node.capacity.cpu_millicores / 2,
                node.capacity.ram_mb / 4,
                node.capacity.disk_mb / 4,
            );
            node.reserve(&load).unwrap();
        }
    }

    let (lat, lon) = grid_offset(&mut rng);
    let mut order = json!({
        "tag": format!("case-{seed}"),
        "coverageCenter": {"lat": lat, "lon": lon},
        "coverageRadiusKm": pick(&mut rng, &[1.0, 3.0, 5.0, 10.0, 10.0]),
        "maxUsers": pick(&mut rng, &[8u32, 16, 32, 64]),
        "spectrumBand": "n78",
        "constraints": {
            "fronthaulLatencyMsMax": pick(&mut rng, &[0.5, 1.0, 2.0, 2.0]),
            "midhaulLatencyMsMax": pick(&mut rng, &[1.0, 5.0, 10.0, 10.0]),
            "endToEndLatencyMsMax": pick(&mut rng, &[1.0, 2.0, 10.0, 10.0]),
        }
    });
    if rng.gen_bool(0.3) {
        order["constraints"]["fronthaulBandwidthMbpsMin"] = json!(pick(&mut rng, &[100.0, 600.0]));
    }
    let order: ServiceOrder = serde_json::from_value(order).unwrap();
    let policy = if rng.gen_bool(0.7) {
        TierPolicy::ScenarioF
    } else {
        TierPolicy::Relaxed
    };
    Case {
        seed,
        topology,
        order,
        policy,
    }
}

/// A three-node chain with a single antenna at the coverage center and
/// enough capacity for any number of orders.
pub fn single_antenna_topology() -> Topology {
    let doc = json!({
        "nodes": [
            {"id": "cu", "tier": "Regional", "position": {"lat": 48.0, "lon": -3.0},
             "cpuMillicores": 1_000_000, "ramMb": 1_000_000, "diskMb": 1_000_000},
            {"id": "du", "tier": "Edge", "position": {"lat": 48.0, "lon": -3.0},
             "cpuMillicores": 1_000_000, "ramMb": 1_000_000, "diskMb": 1_000_000},
            {"id": "ru", "tier": "FarEdge", "position": {"lat": 48.0, "lon": -3.0},
             "cpuMillicores": 1_000_000, "ramMb": 1_000_000, "diskMb": 1_000_000,
             "antennas": [{"serial": "ONLY", "position": {"lat": 48.0, "lon": -3.0}}]}
        ],
        "links": [
            {"a": "cu", "b": "du", "latencyMs": 0.4, "bandwidthMbps": 10000},
            {"a": "du", "b": "ru", "latencyMs": 0.2, "bandwidthMbps": 10000}
        ]
    });
    load_topology(&doc.to_string()).unwrap()
}

pub fn centered_order(tag: &str) -> ServiceOrder {
    serde_json::from_value(json!({
        "tag": tag,
        "coverageCenter": {"lat": 48.0, "lon": -3.0},
        "coverageRadiusKm": 1.0,
        "maxUsers": 32,
        "spectrumBand": "n78",
    }))
    .unwrap()
}

// ---- independent reference computations ----------------------------------

/// Great-circle distance, written out separately from the library version.
pub fn reference_distance_km(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let r = 6371.0_f64;
    let (p1, p2) = (a.latitude_deg.to_radians(), b.latitude_deg.to_radians());
    let dp = p2 - p1;
    let dl = (b.longitude_deg - a.longitude_deg).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

fn nanos(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

/// All-pairs minimum latency by Floyd-Warshall, in milliseconds.
pub fn floyd_warshall(t: &Topology) -> BTreeMap<(String, String), f64> {
    let ids: Vec<&String> = t.nodes.keys().collect();
    let n = ids.len();
    let mut d = vec![vec![u64::MAX; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    let idx = |s: &str| ids.iter().position(|x| x.as_str() == s).unwrap();
    for l in &t.links {
        let (a, b) = (idx(&l.endpoint_a), idx(&l.endpoint_b));
        d[a][b] = d[a][b].min(nanos(l.latency_ms));
        d[b][a] = d[b][a].min(nanos(l.latency_ms));
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k].saturating_add(d[k][j]);
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let ms = if d[i][j] == u64::MAX {
                f64::INFINITY
            } else {
                d[i][j] as f64 / 1e6
            };
            out.insert((ids[i].clone(), ids[j].clone()), ms);
        }
    }
    out
}

/// Minimum latency and, among minimum-latency simple paths, the widest
/// bottleneck, by enumerating every simple path from the smaller endpoint.
pub fn brute_force_path(t: &Topology, a: &str, b: &str) -> (f64, f64) {
    if a == b {
        return (0.0, f64::INFINITY);
    }
    let (src, dst) = if a < b { (a, b) } else { (b, a) };
    let mut best = (u64::MAX, 0.0);
    let mut visited = vec![src.to_string()];
    fn walk(
        t: &Topology,
        at: &str,
        dst: &str,
        lat: u64,
        bw: f64,
        visited: &mut Vec<String>,
        best: &mut (u64, f64),
    ) {
        if at == dst {
            if lat < best.0 || (lat == best.0 && bw > best.1) {
                *best = (lat, bw);
            }
            return;
        }
        for l in &t.links {
            let next = if l.endpoint_a == at {
                &l.endpoint_b
            } else if l.endpoint_b == at {
                &l.endpoint_a
            } else {
                continue;
            };
            if visited.contains(next) {
                continue;
            }
            visited.push(next.clone());
            let lat = lat + nanos(l.latency_ms);
            walk(t, next, dst, lat, bw.min(l.bandwidth_mbps), visited, best);
            visited.pop();
        }
    }
    walk(t, src, dst, 0, f64::INFINITY, &mut visited, &mut best);
    if best.0 == u64::MAX {
        (f64::INFINITY, 0.0)
    } else {
        (best.0 as f64 / 1e6, best.1)
    }
}

/// Re-checks every order constraint for `chain` against the pre-deployment
/// topology without going through the placement module.
pub fn violations(
    chain: &ChainCandidate,
    order: &ServiceOrder,
    before: &Topology,
    policy: TierPolicy,
) -> Vec<String> {
    let mut v = Vec::new();
    let c = &order.constraints;
    let node = |id: &str| before.nodes.get(id).unwrap();
    let (cu, du, ru) = (
        node(&chain.cu_node_id),
        node(&chain.du_node_id),
        node(&chain.ru_node_id),
    );

    let (fh, fh_bw) = brute_force_path(before, &ru.id, &du.id);
    let (mh, _) = brute_force_path(before, &du.id, &cu.id);
    let (e2e, _) = brute_force_path(before, &ru.id, &cu.id);
    if fh > c.fronthaul_latency_ms_max {
        v.push(format!("fronthaul {fh} > {}", c.fronthaul_latency_ms_max));
    }
    if mh > c.midhaul_latency_ms_max {
        v.push(format!("midhaul {mh} > {}", c.midhaul_latency_ms_max));
    }
    if e2e > c.end_to_end_latency_ms_max {
        v.push(format!(
            "end-to-end {e2e} > {}",
            c.end_to_end_latency_ms_max
        ));
    }
    let bw_min = c
        .fronthaul_bandwidth_mbps_min
        .unwrap_or(1000.0 * order.max_users as f64 / 32.0);
    if fh_bw < bw_min {
        v.push(format!("fronthaul bandwidth {fh_bw} < {bw_min}"));
    }

    let tier_ok = |kind: UnitKind, tier: CloudTier| match policy {
        TierPolicy::ScenarioF => {
            tier == match kind {
                UnitKind::CU => CloudTier::Regional,
                UnitKind::DU => CloudTier::Edge,
                UnitKind::RU => CloudTier::FarEdge,
            }
        }
        TierPolicy::Relaxed => kind != UnitKind::RU || tier == CloudTier::FarEdge,
    };
    for (kind, n) in [(UnitKind::CU, cu), (UnitKind::DU, du), (UnitKind::RU, ru)] {
        if !tier_ok(kind, n.tier) {
            v.push(format!("{kind} on {:?}", n.tier));
        }
    }

    let mut demand: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for (kind, n) in [(UnitKind::CU, cu), (UnitKind::DU, du), (UnitKind::RU, ru)] {
        let d = order.constraints.per_unit_demand.for_kind(kind);
        let e = demand.entry(n.id.as_str()).or_default();
        e.0 += d.cpu_millicores;
        e.1 += d.ram_mb;
        e.2 += d.disk_mb;
    }
    for (id, (cpu, ram, disk)) in demand {
        let n = node(id);
        if n.used.cpu_millicores + cpu > n.capacity.cpu_millicores
            || n.used.ram_mb + ram > n.capacity.ram_mb
            || n.used.disk_mb + disk > n.capacity.disk_mb
        {
            v.push(format!("capacity exceeded on {id}"));
        }
    }

    match ru
        .antennas
        .iter()
        .find(|a| a.serial == chain.antenna_serial)
    {
        None => v.push(format!("antenna {} not on {}", chain.antenna_serial, ru.id)),
        Some(a) => {
            if a.occupied_by.is_some() {
                v.push(format!("antenna {} already occupied", a.serial));
            }
            let d = reference_distance_km(&a.position, &order.coverage_center);
            if d > order.coverage_radius_km {
                v.push(format!(
                    "antenna {d} km outside radius {}",
                    order.coverage_radius_km
                ));
            }
        }
    }
    v
}
