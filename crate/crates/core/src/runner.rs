//! Scenario runs across seeds, summaries and tidy plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{load_scenario, Fidelity, Scenario, ScenarioError};
use crate::sim::report::SCHEMA_VERSION;
use crate::sim::{run_with_fidelity, MetricsReport, SimError};

/// Process exit status of a runner command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Invalid = 2,
    Runtime = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("no seeds given")]
    NoSeeds,
}

impl RunError {
    pub fn status(&self) -> ExitStatus {
        match self {
            RunError::Scenario(_) | RunError::NoSeeds => ExitStatus::Invalid,
            RunError::Sim(SimError::Scenario(_)) => ExitStatus::Invalid,
            RunError::Sim(_) | RunError::Write { .. } => ExitStatus::Runtime,
        }
    }
}

/// Runs every seed independently; reports come back in seed order.
pub fn run_seeds(scenario: &Scenario, seeds: &[u64], fidelity: Fidelity) -> Result<Vec<MetricsReport>, SimError> {
    seeds
        .par_iter()
        .map(|&s| run_with_fidelity(scenario, s, fidelity))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub stddev: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, stddev, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub per: Option<Stat>,
    pub cdr: Option<Stat>,
    pub per_stationary: Option<Stat>,
    pub per_mobile: Option<Stat>,
    pub cdr_stationary: Option<Stat>,
    pub cdr_mobile: Option<Stat>,
    pub throughput_bps: Option<Stat>,
    pub tx_energy_j: Option<Stat>,
    pub total_energy_j: Option<Stat>,
    pub handoffs: Option<Stat>,
}

pub fn summarize(reports: &[MetricsReport]) -> Summary {
    let stat = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        Stat::of(&v)
    };
    Summary {
        scenario: reports.first().map(|r| r.scenario.clone()).unwrap_or_default(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        per: stat(&|r| r.aggregate.per),
        cdr: stat(&|r| r.aggregate.cdr),
        per_stationary: stat(&|r| r.aggregate.per_stationary),
        per_mobile: stat(&|r| r.aggregate.per_mobile),
        cdr_stationary: stat(&|r| r.aggregate.cdr_stationary),
        cdr_mobile: stat(&|r| r.aggregate.cdr_mobile),
        throughput_bps: stat(&|r| Some(r.aggregate.throughput_bps)),
        tx_energy_j: stat(&|r| Some(r.aggregate.tx_energy_j)),
        total_energy_j: stat(&|r| Some(r.aggregate.total_energy_j)),
        handoffs: stat(&|r| Some(r.aggregate.handoffs as f64)),
    }
}

fn write(path: PathBuf, text: &str) -> Result<(), RunError> {
    fs::write(&path, text).map_err(|source| RunError::Write { path, source })
}

/// Loads, runs and writes `<name>_seed<k>.csv/.json` per seed plus
/// `<name>_summary.json`. Nothing is written unless every run succeeds.
pub fn run_command(
    path: &Path,
    seeds: &[u64],
    out_dir: &Path,
    strict: bool,
    fidelity: Option<Fidelity>,
) -> Result<Vec<PathBuf>, RunError> {
    if seeds.is_empty() {
        return Err(RunError::NoSeeds);
    }
    let scenario = load_scenario(path, strict)?;
    let reports = run_seeds(&scenario, seeds, fidelity.unwrap_or(scenario.fidelity))?;
    fs::create_dir_all(out_dir).map_err(|source| RunError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let stem = file_stem(&scenario.name);
    let mut written = Vec::new();
    for r in &reports {
        let csv = out_dir.join(format!("{stem}_seed{}.csv", r.seed));
        let json = out_dir.join(format!("{stem}_seed{}.json", r.seed));
        write(csv.clone(), &r.to_csv())?;
        write(json.clone(), &r.to_json())?;
        written.extend([csv, json]);
    }
    let summary = out_dir.join(format!("{stem}_summary.json"));
    write(
        summary.clone(),
        &serde_json::to_string_pretty(&summarize(&reports)).expect("summary serializes"),
    )?;
    written.push(summary);
    Ok(written)
}

fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Figure {
    PerVsMobility,
    ThroughputVsNodes,
    EnergyVsDistance,
    LatencyVsNodes,
    CdrVsDistance,
    CdrCfoComparison,
    AlignmentLatencyVsBw,
}

impl Figure {
    pub const ALL: [Figure; 7] = [
        Figure::PerVsMobility,
        Figure::ThroughputVsNodes,
        Figure::EnergyVsDistance,
        Figure::LatencyVsNodes,
        Figure::CdrVsDistance,
        Figure::CdrCfoComparison,
        Figure::AlignmentLatencyVsBw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::PerVsMobility => "per_vs_mobility",
            Figure::ThroughputVsNodes => "throughput_vs_nodes",
            Figure::EnergyVsDistance => "energy_vs_distance",
            Figure::LatencyVsNodes => "latency_vs_nodes",
            Figure::CdrVsDistance => "cdr_vs_distance",
            Figure::CdrCfoComparison => "cdr_cfo_comparison",
            Figure::AlignmentLatencyVsBw => "alignment_latency_vs_bw",
        }
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Figure::ALL.iter().map(|f| f.name()).collect();
                format!("unknown figure '{s}'; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("{figure}: reports carry no {metric} values")]
    MissingMetric { figure: &'static str, metric: &'static str },
}

pub const PLOT_HEADER: &str = "schema_version,x,series,mean,stddev,n";

fn class(mobile: bool) -> &'static str {
    if mobile {
        "mobile"
    } else {
        "stationary"
    }
}

/// Distances are reported on a 1 m grid so replicated fixtures share an x.
fn metre(d: f64) -> f64 {
    d.round()
}

/// Tidy rows for one figure family, grouped by (series, x) in sorted order.
pub fn emit_plot_data(reports: &[MetricsReport], figure: Figure) -> Result<String, PlotError> {
    let mut out = format!("{PLOT_HEADER}\n");
    if reports.is_empty() {
        return Ok(out);
    }
    let mut points: Vec<(String, f64, f64)> = Vec::new();
    let metric = match figure {
        Figure::PerVsMobility => {
            for r in reports {
                for n in &r.nodes {
                    if let Some(p) = n.per {
                        points.push((class(n.mobile).into(), n.speed_mps, p));
                    }
                }
            }
            "per"
        }
        Figure::ThroughputVsNodes => {
            for r in reports {
                if r.aggregate.delivered > 0 {
                    points.push((r.scenario.clone(), r.nodes.len() as f64, r.aggregate.throughput_bps));
                }
            }
            "throughput_bps"
        }
        Figure::EnergyVsDistance => {
            for r in reports {
                for n in &r.nodes {
                    if let Some(d) = n.distance_m {
                        points.push((class(n.mobile).into(), metre(d), n.energy.total_j));
                    }
                }
            }
            "energy"
        }
        Figure::LatencyVsNodes => {
            for r in reports {
                for n in &r.nodes {
                    if let Some(l) = n.mean_latency_s {
                        points.push((class(n.mobile).into(), r.nodes.len() as f64, l));
                    }
                }
            }
            "mean_latency_s"
        }
        Figure::CdrVsDistance => {
            for r in reports {
                for n in &r.nodes {
                    if let (Some(d), Some(c)) = (n.distance_m, n.cdr) {
                        points.push((class(n.mobile).into(), metre(d), c));
                    }
                }
            }
            "cdr"
        }
        Figure::CdrCfoComparison => {
            for r in reports {
                for n in &r.nodes {
                    if let Some(c) = n.cdr {
                        let series = match (n.mobile, r.cfo_compensation) {
                            (false, _) => "stationary",
                            (true, true) => "mobile-compensated",
                            (true, false) => "mobile-uncompensated",
                        };
                        points.push((series.into(), f64::from(n.node), c));
                    }
                }
            }
            "cdr"
        }
        Figure::AlignmentLatencyVsBw => {
            for r in reports {
                for h in r.handoffs.iter().filter(|h| h.completed) {
                    if let Some(w) = h.to_width_hz {
                        points.push(("alignment".into(), w, h.alignment_s));
                    }
                }
            }
            "alignment_s"
        }
    };
    if points.is_empty() {
        return Err(PlotError::MissingMetric {
            figure: figure.name(),
            metric,
        });
    }
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut i = 0;
    while i < points.len() {
        let (series, x) = (&points[i].0, points[i].1);
        let j = points[i..]
            .iter()
            .position(|p| &p.0 != series || p.1 != x)
            .map_or(points.len(), |k| i + k);
        let values: Vec<f64> = points[i..j].iter().map(|p| p.2).collect();
        let s = Stat::of(&values).expect("group is non-empty");
        let _ = writeln!(out, "{SCHEMA_VERSION},{x},{series},{},{},{}", s.mean, s.stddev, s.n);
        i = j;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_uses_sample_deviation() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[7.0]).unwrap().stddev, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn empty_report_set_gives_header_only() {
        for f in Figure::ALL {
            assert_eq!(emit_plot_data(&[], f).unwrap(), format!("{PLOT_HEADER}\n"));
        }
    }

    #[test]
    fn figure_names_round_trip() {
        for f in Figure::ALL {
            assert_eq!(f.name().parse::<Figure>().unwrap(), f);
        }
        assert!("fig13".parse::<Figure>().is_err());
    }

    #[test]
    fn missing_metric_is_named() {
        let r = MetricsReport::empty("x", 1, Fidelity::Analytic, 1.0, true);
        let e = emit_plot_data(&[r], Figure::AlignmentLatencyVsBw).unwrap_err();
        assert_eq!(e.to_string(), "alignment_latency_vs_bw: reports carry no alignment_s values");
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("metro run/1"), "metro_run_1");
        assert_eq!(file_stem(""), "scenario");
    }
}
