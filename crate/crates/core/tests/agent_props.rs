use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use ztc_core::clock::Clock;
use ztc_core::{AgentBus, AgentMessage, Delivery, MessageKind, UnitId, UnitKind};

fn unit() -> UnitId {
    UnitId::new("d-001".into(), UnitKind::DU)
}

#[derive(Debug, Clone)]
enum Step {
    Config(BTreeMap<String, String>),
    Affiliate(String),
    Start,
    Stop,
}

fn step() -> impl Strategy<Value = Step> {
    let kv = proptest::collection::btree_map("[a-c]", "[0-9]{1,2}", 0..3);
    prop_oneof![
        3 => kv.prop_map(Step::Config),
        2 => "10\\.42\\.0\\.[0-9]".prop_map(Step::Affiliate),
        1 => Just(Step::Start),
        1 => Just(Step::Stop),
    ]
}

fn build(bus: &AgentBus, steps: &[Step]) -> Vec<AgentMessage> {
    let u = unit();
    steps
        .iter()
        .map(|s| match s {
            Step::Config(c) => bus.message(MessageKind::ConfigPush, &u, c.clone()),
            Step::Affiliate(ip) => bus.message(
                MessageKind::AffiliationInfo,
                &u,
                BTreeMap::from([("ruIp".to_string(), ip.clone())]),
            ),
            Step::Start => bus.message(MessageKind::StartCommand, &u, BTreeMap::new()),
            Step::Stop => bus.message(MessageKind::StopCommand, &u, BTreeMap::new()),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Replaying messages (each possibly several times, duplicates adjacent or
    /// later) ends in the same state as delivering each once.
    #[test]
    fn duplicates_do_not_change_outcome(
        steps in proptest::collection::vec(step(), 1..10),
        replays in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..10),
    ) {
        let once = AgentBus::new(Arc::new(Clock::new()), Delivery::Reliable);
        once.spawn(unit()).unwrap();
        let msgs = build(&once, &steps);
        for m in &msgs {
            let _ = once.send(m);
        }

        let dup = AgentBus::new(Arc::new(Clock::new()), Delivery::Reliable);
        dup.spawn(unit()).unwrap();
        let mut sequence: Vec<&AgentMessage> = msgs.iter().collect();
        for (which, at) in &replays {
            // a duplicate may arrive any time after its original
            let original = &msgs[which.index(msgs.len())];
            let first = sequence
                .iter()
                .position(|m| m.message_id == original.message_id)
                .unwrap();
            let pos = first + 1 + at.index(sequence.len() - first);
            sequence.insert(pos, original);
        }
        let mut answers: BTreeMap<String, Result<AgentMessage, ztc_core::agents::AgentError>> =
            BTreeMap::new();
        for m in sequence {
            let before = dup.unit_view(&unit()).unwrap();
            let r = dup.send(m);
            if let Some(first) = answers.get(&m.message_id) {
                // a replayed message changes nothing and gets the same answer
                prop_assert_eq!(&r, first);
                prop_assert_eq!(dup.unit_view(&unit()).unwrap(), before);
            } else {
                answers.insert(m.message_id.clone(), r);
            }
        }
        prop_assert_eq!(dup.unit_view(&unit()).unwrap(), once.unit_view(&unit()).unwrap());
    }
}
