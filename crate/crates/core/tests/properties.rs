use std::collections::{BTreeMap, BTreeSet};

use netsim_core::economics::{
    apply_savings_plan, mcda_rank, builtin_matrix, Category, CostLedger, Criterion, SavingsPlan, Weights,
};
use netsim_core::kernel::derive_stream;
use netsim_core::telemetry::percentile;
use netsim_core::topology::{
    parse_topology, Ingress, LinkSpec, Medium, NodeKind, ServiceNode, TopologyDoc, TopologyGraph, TrustZone, VNet,
    VNetRole,
};
use proptest::prelude::*;
use rand::RngCore;

const KINDS: [NodeKind; 13] = [
    NodeKind::FrontDoor,
    NodeKind::Firewall,
    NodeKind::ApiGateway,
    NodeKind::LoadBalancer,
    NodeKind::Dns,
    NodeKind::PrivateEndpoint,
    NodeKind::ContainerCluster,
    NodeKind::DataLake,
    NodeKind::Warehouse,
    NodeKind::Monitor,
    NodeKind::Automation,
    NodeKind::ExpressRoute,
    NodeKind::IotEdge,
];

const ZONES: [TrustZone; 3] = [TrustZone::Trusted, TrustZone::Untrusted, TrustZone::Internal];

type NodeParts = (usize, Option<usize>, u64, f64);
type LinkParts = (usize, usize, bool, Option<u64>);

fn topology_doc() -> impl Strategy<Value = TopologyDoc> {
    (
        prop::collection::vec(0usize..3, 0..5),
        prop::collection::vec((0usize..13, prop::option::of(0usize..6), 1u64..5_000, 1.0f64..500.0), 1..12),
        prop::collection::vec((0usize..12, 0usize..12, any::<bool>(), prop::option::of(1u64..50_000)), 0..30),
        prop::collection::vec(0usize..12, 0..3),
    )
        .prop_map(|(spokes, nodes, links, ingress)| build_doc(&spokes, &nodes, &links, &ingress))
}

fn build_doc(spokes: &[usize], nodes: &[NodeParts], links: &[LinkParts], ingress: &[usize]) -> TopologyDoc {
    let mut vnets = vec![VNet {
        id: "hub".into(),
        role: VNetRole::Hub,
        trust: TrustZone::Internal,
        hub: None,
        vwan: false,
    }];
    for (i, z) in spokes.iter().enumerate() {
        vnets.push(VNet {
            id: format!("spoke-{i}"),
            role: VNetRole::Spoke,
            trust: ZONES[*z],
            hub: Some("hub".into()),
            vwan: false,
        });
    }
    let nodes: Vec<ServiceNode> = nodes
        .iter()
        .enumerate()
        .map(|(i, &(k, v, st, cap))| ServiceNode {
            id: format!("n{i}"),
            kind: KINDS[k],
            vnet: v.map(|v| vnets[v % vnets.len()].id.clone()),
            service_time: st,
            capacity: (KINDS[k] == NodeKind::ContainerCluster).then_some(cap),
        })
        .collect();
    let n = nodes.len();
    let mut seen = BTreeSet::new();
    let links = links
        .iter()
        .filter_map(|&(a, b, internet, latency)| {
            let (a, b) = (a % n, b % n);
            (a != b && seen.insert((a, b))).then(|| LinkSpec {
                from: format!("n{a}"),
                to: format!("n{b}"),
                medium: if internet { Medium::Internet } else { Medium::Private },
                latency,
            })
        })
        .collect();
    let mut origins = BTreeSet::new();
    let ingress = ingress
        .iter()
        .enumerate()
        .filter(|(_, &node)| origins.insert(node % n))
        .map(|(i, &node)| Ingress {
            origin: format!("origin-{i}"),
            node: format!("n{}", node % n),
        })
        .collect();
    TopologyDoc {
        vnets,
        nodes,
        links,
        ingress,
    }
}

fn ledger_entries() -> impl Strategy<Value = Vec<(bool, f64, f64)>> {
    prop::collection::vec((any::<bool>(), 0.0f64..50.0, 0.01f64..5.0), 1..20)
}

fn ledger_from(items: &[(bool, f64, f64)]) -> CostLedger {
    let mut l = CostLedger::new();
    l.set_period(0, 1.0);
    for (i, &(compute, qty, rate)) in items.iter().enumerate() {
        let cat = if compute { Category::GeneralCompute } else { Category::Storage };
        l.accrue_at_rate(&format!("r{i}"), "azure", cat, qty, rate);
    }
    l
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn topology_round_trips(doc in topology_doc()) {
        let g = TopologyGraph::from_doc(doc).unwrap();
        let json = g.to_json();
        let again = parse_topology(&json).unwrap();
        prop_assert_eq!(again.to_doc(), g.to_doc());
        prop_assert_eq!(again.to_json(), json);
        prop_assert_eq!(again.validate_structure(), g.validate_structure());
    }

    #[test]
    fn ledger_totals_ignore_entry_order(
        (items, shuffled) in ledger_entries().prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        commitment in 0.0f64..100.0,
        discount in 0.0f64..=0.65,
    ) {
        let (a, b) = (ledger_from(&items), ledger_from(&shuffled));
        prop_assert!(close(a.total(), b.total()));
        let plan = SavingsPlan { commitment_usd_per_hour: commitment, discount };
        let (da, db) = (apply_savings_plan(&a, &plan).unwrap(), apply_savings_plan(&b, &plan).unwrap());
        prop_assert!(close(da.total(), db.total()), "{} vs {}", da.total(), db.total());
        prop_assert!(da.total() <= a.total() + 1e-9);
        prop_assert!(da.total() >= a.total() * (1.0 - discount) - 1e-9);
    }

    #[test]
    fn mcda_ranking_is_scale_invariant(
        raw in prop::collection::vec(0.01f64..10.0, 8),
        scale in 0.01f64..1000.0,
    ) {
        let base: BTreeMap<Criterion, f64> = Criterion::ALL.into_iter().zip(raw.iter().copied()).collect();
        let scaled: BTreeMap<Criterion, f64> = base.iter().map(|(c, w)| (*c, w * scale)).collect();
        let m = builtin_matrix();
        let a = mcda_rank(&m, &Weights::normalized(&base).unwrap());
        let b = mcda_rank(&m, &Weights::normalized(&scaled).unwrap());
        let names = |r: &netsim_core::economics::Ranking| r.ordered.iter().map(|p| p.provider.clone()).collect::<Vec<_>>();
        prop_assert_eq!(names(&a), names(&b));
        prop_assert_eq!(a.winner, b.winner);
    }

    #[test]
    fn percentile_is_monotone(
        series in prop::collection::vec(0u64..1_000_000, 1..300),
        p in 0.0f64..=100.0,
        q in 0.0f64..=100.0,
    ) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(percentile(&series, lo).unwrap() <= percentile(&series, hi).unwrap());
        prop_assert_eq!(percentile(&series, 0.0).unwrap(), *series.iter().min().unwrap());
        prop_assert_eq!(percentile(&series, 100.0).unwrap(), *series.iter().max().unwrap());
    }

    #[test]
    fn streams_replay_by_seed_and_label(seed in any::<u64>(), id in any::<u64>()) {
        let draw = |label: &str| {
            let mut s = derive_stream(seed, label).unwrap().substream(id);
            (0..8).map(|_| s.next_u64()).collect::<Vec<_>>()
        };
        prop_assert_eq!(draw("arrivals"), draw("arrivals"));
        prop_assert_ne!(draw("arrivals"), draw("routes"));
    }
}
