mod common;

use proptest::prelude::*;

use common::{centered_order, random_case, single_antenna_topology};
use ztc_core::catalogs::{
    DeploymentCatalog, DeploymentFilter, DEPLOYMENT_CATALOG_FILE, RESOURCE_CATALOG_FILE,
};
use ztc_core::engine::{Engine, EngineConfig, LifecycleState};
use ztc_core::ResourceCatalog;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resource_catalog_round_trip(seed in any::<u64>(), now in any::<u64>()) {
        let t = random_case(seed).topology;
        let catalog = ResourceCatalog::refresh(&t, now);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESOURCE_CATALOG_FILE);
        catalog.save(&path).unwrap();
        prop_assert_eq!(ResourceCatalog::load(&path).unwrap(), catalog);
    }

    #[test]
    fn available_serials_are_unique_and_free(seed in any::<u64>()) {
        let t = random_case(seed).topology;
        let catalog = ResourceCatalog::refresh(&t, 0);
        let mut seen = std::collections::BTreeSet::new();
        for e in catalog.entries() {
            let node = t.node(&e.node_id).unwrap();
            for s in &e.antenna_serials_available {
                prop_assert!(seen.insert(s.clone()));
                prop_assert!(node.antenna(s).unwrap().is_free());
            }
            prop_assert_eq!(e.free(), node.free());
        }
    }

    #[test]
    fn deployment_catalog_round_trip_and_unique_ids(orders in 1usize..8, deletes in 0usize..8) {
        let dir = tempfile::tempdir().unwrap();
        let config = EngineConfig { data_dir: Some(dir.path().to_path_buf()), ..EngineConfig::default() };
        let engine = Engine::new(single_antenna_topology(), config).unwrap();
        let mut ids = Vec::new();
        for i in 0..orders {
            let rec = engine.run_pipeline(centered_order(&format!("o{i}"))).unwrap();
            ids.push(rec.deployment_id.clone());
            if i < deletes {
                if rec.lifecycle == LifecycleState::Running {
                    engine.teardown(&rec.deployment_id).unwrap();
                }
                engine.delete_record(&rec.deployment_id).unwrap();
            }
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), ids.len());

        let saved = DeploymentCatalog::load(&dir.path().join(DEPLOYMENT_CATALOG_FILE)).unwrap();
        let live = engine.list_deployments(&DeploymentFilter::default());
        prop_assert_eq!(saved.list_deployments(&DeploymentFilter::default()), live);

        // a reloaded catalog keeps counting past every id it ever issued
        let mut reloaded = saved;
        let next = reloaded.allocate_id();
        prop_assert!(!ids.contains(&next));
    }
}
