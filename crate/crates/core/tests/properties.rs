use proptest::prelude::*;

use wsmobility::assignment::{assign_by_mobility, load_of, AvailabilityScore, MobilityProfile, NodeId};
use wsmobility::baseband::Subcarrier;
use wsmobility::discovery::{classify_trace, scan_elapsed, scan_energy, ClassifierConfig, ScanStrategy, SignalTrace};
use wsmobility::energy::EnergyModel;
use wsmobility::geo::Point;
use wsmobility::scenario::{parse_scenario, write_scenario, BsConfig, Fidelity, MobilityConfig, NodeConfig, Scenario};

fn inputs() -> impl Strategy<Value = (Vec<MobilityProfile>, Vec<AvailabilityScore>)> {
    (
        proptest::collection::vec(0u8..5, 0..24),
        proptest::collection::vec(0usize..6, 1..10),
    )
        .prop_map(|(rates, counts)| {
            let profiles = rates
                .iter()
                .enumerate()
                .map(|(i, &r)| MobilityProfile::new(NodeId(i as u32 * 7 + 1), f64::from(r) * 4.0).unwrap())
                .collect();
            let scores = counts
                .iter()
                .enumerate()
                .map(|(k, &c)| AvailabilityScore {
                    subcarrier: Subcarrier::new(480e6 + k as f64 * 200e3, 200e3).unwrap(),
                    cell_count: c,
                })
                .collect();
            (profiles, scores)
        })
}

proptest! {
    #[test]
    fn assignment_is_total_balanced_and_monotone((profiles, scores) in inputs()) {
        let a = assign_by_mobility(&profiles, &scores).unwrap();
        let (n, m) = (profiles.len(), scores.len());
        prop_assert_eq!(a.len(), n);
        for p in &profiles {
            prop_assert!(a.contains_key(&p.node_id));
        }
        let mut loads: Vec<usize> = scores
            .iter()
            .map(|s| a.values().filter(|x| **x == s.subcarrier).count())
            .collect();
        prop_assert!(loads.iter().all(|&l| l == n / m || l == n.div_ceil(m)));
        loads.sort_unstable_by(|x, y| y.cmp(x));
        let expected: Vec<usize> = (0..m).map(|i| load_of(i, n, m)).collect();
        prop_assert_eq!(loads, expected);

        let count = |id: NodeId| scores.iter().find(|s| s.subcarrier == a[&id]).unwrap().cell_count;
        for u in &profiles {
            for v in &profiles {
                if u.mobility_rate < v.mobility_rate {
                    prop_assert!(count(u.node_id) <= count(v.node_id));
                }
            }
        }
    }

    #[test]
    fn assignment_ignores_input_order(
        (profiles, scores) in inputs(),
        rot_p in 0usize..24,
        rot_s in 0usize..10,
    ) {
        let a = assign_by_mobility(&profiles, &scores).unwrap();
        let (mut p, mut s) = (profiles.clone(), scores.clone());
        if !p.is_empty() {
            let k = rot_p % p.len();
            p.rotate_left(k);
        }
        p.reverse();
        let k = rot_s % s.len();
        s.rotate_left(k);
        prop_assert_eq!(assign_by_mobility(&p, &s).unwrap(), a);
    }

    #[test]
    fn classifier_confidence_is_a_probability(
        series in proptest::collection::vec(-130.0f64..-20.0, 100..200),
        adjacent in -130.0f64..-20.0,
    ) {
        let t = SignalTrace { rss_series: series, window_s: 0.2, channel: 30, adjacent_rss: adjacent };
        let c = classify_trace(&t, &ClassifierConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.confidence));
    }

    #[test]
    fn scan_energy_grows_with_visits(visits in 1usize..200, dwell in 0.01f64..1.0, wide in any::<bool>()) {
        let strategy = if wide { ScanStrategy::Wide } else { ScanStrategy::Narrow };
        let e = EnergyModel::default();
        let a = scan_energy(scan_elapsed(visits, dwell, 1e-3), strategy, &e);
        let b = scan_energy(scan_elapsed(visits + 1, dwell, 1e-3), strategy, &e);
        prop_assert!(b > a);
    }

    #[test]
    fn scenario_text_round_trips(sc in scenarios()) {
        let text = write_scenario(&sc);
        let back = parse_scenario(&text, true).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, sc);
    }
}

fn point() -> impl Strategy<Value = Point> {
    (-900.0f64..900.0, -900.0f64..900.0).prop_map(|(x, y)| Point::new(x, y))
}

fn node() -> impl Strategy<Value = NodeConfig> {
    (
        point(),
        proptest::option::of((proptest::collection::vec(point(), 1..4), 0.5f64..20.0)),
        -20.0f64..20.0,
        1u32..500,
        0u32..5000,
        0.001f64..1.0,
        0.0f64..5.0,
        -10.0f64..20.0,
    )
        .prop_map(|(location, walk, ppm, packet_bytes, packet_count, packet_interval_s, start_s, tx)| NodeConfig {
            location,
            mobility: walk.map_or(MobilityConfig::Stationary, |(points, speed_mps)| MobilityConfig::Waypoints {
                points,
                speed_mps,
            }),
            ppm,
            packet_bytes,
            packet_count,
            packet_interval_s,
            start_s,
            tx_power_dbm: tx,
            ..NodeConfig::default()
        })
}

fn scenarios() -> impl Strategy<Value = Scenario> {
    (
        proptest::collection::vec((point(), 14u32..52, 0usize..4), 1..4),
        proptest::collection::vec(node(), 0..6),
        1.0f64..500.0,
        any::<u64>(),
        prop_oneof![Just(Fidelity::Analytic), Just(Fidelity::Sample), Just(Fidelity::Mixed)],
        any::<bool>(),
    )
        .prop_map(|(bss, nodes, horizon_s, seed, fidelity, cfo_compensation)| {
            let mut sc = Scenario {
                horizon_s,
                seed,
                fidelity,
                ..Scenario::default()
            };
            sc.policy.cfo_compensation = cfo_compensation;
            sc.base_stations = bss
                .into_iter()
                .enumerate()
                .map(|(i, (location, channel, w))| BsConfig {
                    id: i as u32 + 1,
                    location,
                    channel,
                    subcarrier_width_hz: [100e3, 200e3, 400e3, 600e3][w],
                    ..BsConfig::default()
                })
                .collect();
            sc.nodes = nodes
                .into_iter()
                .enumerate()
                .map(|(i, n)| NodeConfig { id: i as u32 + 1, ..n })
                .collect();
            sc
        })
}
