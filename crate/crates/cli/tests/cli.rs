use std::path::PathBuf;
use std::process::{Command, Output};

fn wsmob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsmob")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_reports_success_and_failure() {
    let ok = wsmob(&["validate", "--strict", &fixture("detroit.scn")]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "[scenario]\nhorizon_s = 0\nbogus = 1\n").unwrap();
    let out = wsmob(&["validate", "--strict", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("horizon_s"), "{err}");
}

#[test]
fn run_writes_reports_and_plot_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = wsmob(&["run", &fixture("hallway.scn"), "--seeds", "1..2", "--out", out, "--fidelity", "analytic"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let jsons: Vec<String> = ["hallway_seed1.json", "hallway_seed2.json"]
        .iter()
        .map(|f| dir.path().join(f).to_string_lossy().into_owned())
        .collect();
    let plot = wsmob(&["plot", "--figure", "per_vs_mobility", &jsons[0], &jsons[1]]);
    assert_eq!(plot.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&plot.stdout);
    assert!(csv.starts_with("schema_version,x,series,mean,stddev,n\n"), "{csv}");
    assert!(csv.contains(",stationary,") && csv.contains(",mobile,"), "{csv}");
}

#[test]
fn missing_scenario_exits_invalid_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let run = wsmob(&["run", "nowhere.scn", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bundled_fixtures_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = wsmob(&["fixtures", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for line in String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.ends_with(".scn")) {
        let v = wsmob(&["validate", "--strict", line]);
        assert_eq!(v.status.code(), Some(0), "{line}: {}", String::from_utf8_lossy(&v.stderr));
    }
}
