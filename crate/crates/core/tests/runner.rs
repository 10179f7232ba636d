use std::fs;
use std::path::{Path, PathBuf};

use wsmobility::runner::{emit_plot_data, run_command, run_seeds, summarize, ExitStatus, Figure, PLOT_HEADER};
use wsmobility::scenario::{load_scenario, parse_scenario, write_scenario, Fidelity};
use wsmobility::sim::report::{EnergyBreakdown, HandoffRecord, MetricsReport, NodeMetrics, WindowRow};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn every_fixture_loads_strictly_and_round_trips() {
    let mut count = 0;
    for entry in fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "scn") {
            let text = fs::read_to_string(&path).unwrap();
            load_scenario(&path, true).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let parsed = parse_scenario(&text, true).unwrap();
            let again = parse_scenario(&write_scenario(&parsed), true).unwrap();
            assert_eq!(again, parsed, "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 10);
}

#[test]
fn metro_fixture_matches_the_described_topology() {
    let sc = load_scenario(&fixtures().join("detroit.scn"), true).unwrap();
    assert_eq!(sc.base_stations.len(), 2);
    let d = sc.base_stations[0].location.distance(&sc.base_stations[1].location);
    assert!((850.0..=950.0).contains(&d), "{d}");
    assert_eq!(sc.nodes.iter().filter(|n| n.is_mobile()).count(), 7);
    assert!(sc.nodes.iter().all(|n| n.speed() <= 17.88));
    assert!(!sc.all_stations().is_empty());
}

#[test]
fn one_seed_writes_one_csv_and_one_json() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_command(&fixtures().join("energy.scn"), &[4], dir.path(), true, None).unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(
        listing(dir.path()),
        ["energy_seed4.csv", "energy_seed4.json", "energy_summary.json"]
    );
    let json = fs::read_to_string(dir.path().join("energy_seed4.json")).unwrap();
    let r: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(r.seed, 4);
}

#[test]
fn ten_seeds_produce_means_and_deviations() {
    let dir = tempfile::tempdir().unwrap();
    let seeds: Vec<u64> = (1..=10).collect();
    run_command(&fixtures().join("hallway.scn"), &seeds, dir.path(), false, Some(Fidelity::Analytic)).unwrap();
    assert_eq!(listing(dir.path()).len(), 21);
    let text = fs::read_to_string(dir.path().join("hallway_summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seeds"].as_array().unwrap().len(), 10);
    for key in ["per", "cdr", "throughput_bps", "total_energy_j"] {
        assert_eq!(v[key]["n"], 10, "{key}");
        assert!(v[key]["mean"].is_number() && v[key]["stddev"].is_number(), "{key}");
    }
}

#[test]
fn invalid_path_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let err = run_command(&fixtures().join("missing.scn"), &[1], &out, false, None).unwrap_err();
    assert_eq!(err.status(), ExitStatus::Invalid);
    assert_eq!(err.status().code(), 2);
    assert!(!out.exists());

    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "[scenario]\nhorizon_s = -1\n").unwrap();
    let err = run_command(&bad, &[1], &out, false, None).unwrap_err();
    assert_eq!(err.status(), ExitStatus::Invalid);
    assert!(!out.exists());
}

#[test]
fn parallel_seeds_match_sequential_runs() {
    let sc = load_scenario(&fixtures().join("hallway.scn"), true).unwrap();
    let seeds = [3, 1, 2];
    let par = run_seeds(&sc, &seeds, Fidelity::Mixed).unwrap();
    for (r, &s) in par.iter().zip(&seeds) {
        assert_eq!(r.to_json(), wsmobility::sim::run(&sc, s).unwrap().to_json());
    }
    assert_eq!(summarize(&par).seeds, seeds);
}

#[test]
fn distance_fixtures_give_four_rows_per_class() {
    let mut reports = Vec::new();
    for d in [300, 500, 700, 900] {
        let sc = load_scenario(&fixtures().join(format!("distance_{d}.scn")), true).unwrap();
        reports.extend(run_seeds(&sc, &[1, 2], Fidelity::Analytic).unwrap());
    }
    let csv = emit_plot_data(&reports, Figure::CdrVsDistance).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for class in ["stationary", "mobile"] {
        let xs: Vec<&str> = rows.iter().filter(|r| r[2] == class).map(|r| r[1]).collect();
        assert_eq!(xs, ["300", "500", "700", "900"], "{class}");
    }
}

fn node(id: u32, mobile: bool, distance: f64, cdr: f64, per: f64) -> NodeMetrics {
    NodeMetrics {
        node: id,
        mobile,
        speed_mps: if mobile { 10.0 } else { 0.0 },
        distance_m: Some(distance),
        generated: 10,
        delivered: 9,
        dropped: 1,
        pending: 0,
        transmissions: 10,
        decoded: 9,
        per: Some(per),
        cdr: Some(cdr),
        mean_latency_s: Some(0.25 * f64::from(id)),
        collection_time_s: Some(1.0),
        handoffs: 0,
        final_bs: Some(1),
        final_subcarrier_hz: Some(482.3e6),
        final_width_hz: Some(200e3),
        bs_cfo_hz: Some(1000.0),
        node_cfo_hz: Some(-1000.0),
        energy: EnergyBreakdown {
            total_j: 0.5 * f64::from(id),
            ..EnergyBreakdown::default()
        },
    }
}

fn handoff(width: f64, alignment: f64) -> HandoffRecord {
    HandoffRecord {
        node: 2,
        from_bs: Some(1),
        to_bs: Some(2),
        from_subcarrier_hz: Some(482.3e6),
        to_subcarrier_hz: Some(536.2e6),
        to_width_hz: Some(width),
        started_s: 3.0,
        discovery_s: 0.5,
        alignment_s: alignment,
        join_s: 0.25,
        total_s: 0.75 + alignment,
        completed: true,
    }
}

/// Hand-built reports with round numbers, so the golden files can be read.
fn synthetic() -> Vec<MetricsReport> {
    let mut a = MetricsReport::empty("road", 1, Fidelity::Analytic, 10.0, true);
    a.nodes = vec![node(1, false, 300.0, 1.0, 0.0), node(2, true, 500.0, 0.75, 0.25)];
    a.aggregate.throughput_bps = 1000.0;
    a.aggregate.delivered = 18;
    a.handoffs = vec![handoff(200e3, 0.125)];
    a.windows = vec![
        WindowRow { node: 1, start_s: 0.0, end_s: 5.0, transmissions: 4, decoded: 4, delivered: 4, dropped: 0, tx_energy_j: 0.5 },
        WindowRow { node: 1, start_s: 5.0, end_s: 10.0, transmissions: 6, decoded: 5, delivered: 5, dropped: 1, tx_energy_j: 0.75 },
    ];
    let mut b = MetricsReport::empty("road", 2, Fidelity::Analytic, 10.0, false);
    b.nodes = vec![node(1, false, 300.0, 1.0, 0.0), node(2, true, 500.0, 0.5, 0.5)];
    b.aggregate.throughput_bps = 3000.0;
    b.aggregate.delivered = 18;
    b.handoffs = vec![handoff(400e3, 0.25), handoff(200e3, 0.375)];
    vec![a, b]
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with UPDATE_GOLDEN=1 after review");
}

#[test]
fn plot_csvs_match_golden_files() {
    let reports = synthetic();
    for f in Figure::ALL {
        golden(&format!("{}.csv", f.name()), &emit_plot_data(&reports, f).unwrap());
    }
}

#[test]
fn report_csv_matches_golden_file() {
    golden("report.csv", &synthetic()[0].to_csv());
}

#[test]
fn cfo_comparison_has_three_series() {
    let mut reports = synthetic();
    let mut c = reports[0].clone();
    c.cfo_compensation = false;
    reports.push(c);
    let csv = emit_plot_data(&reports, Figure::CdrCfoComparison).unwrap();
    let mut series: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    series.dedup();
    assert_eq!(series, ["mobile-compensated", "mobile-uncompensated", "stationary"]);
    assert!(csv.starts_with(PLOT_HEADER));
}
