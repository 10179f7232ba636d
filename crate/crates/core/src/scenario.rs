//! Scenario files: a line-oriented, sectioned `key = value` format.
//!
//! ```text
//! [scenario]
//! name = hallway
//! world = -100 -100 100 100
//! horizon_s = 30
//!
//! [bs]
//! id = 1
//! location = 0 0
//! channel = 16
//!
//! [node]
//! id = 1
//! location = 20 0
//! ```
//!
//! `[scenario]` and `[policy]` appear at most once; `[station]`, `[bs]` and
//! `[node]` repeat. Omitted keys take their defaults. Every parse or
//! validation problem is reported with its line and field.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseband::{is_allowed_bandwidth, Modulation, ALLOWED_BANDWIDTHS};
use crate::discovery::ScanStrategy;
use crate::geo::Point;
use crate::spectrum::{is_tv_channel, parse_station_table, Bounds, TvStation, FIRST_CHANNEL, LAST_CHANNEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// Every PHY decision from closed-form models.
    Analytic,
    /// Data packets are also rendered and demodulated sample by sample.
    Sample,
    /// Join preambles and alignment at sample level, data packets analytic.
    #[default]
    Mixed,
}

impl FromStr for Fidelity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(Fidelity::Analytic),
            "sample" => Ok(Fidelity::Sample),
            "mixed" => Ok(Fidelity::Mixed),
            other => Err(format!("unknown fidelity '{other}' (analytic, sample, mixed)")),
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Analytic => "analytic",
            Fidelity::Sample => "sample",
            Fidelity::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub cfo_compensation: bool,
    pub reestimation_period_s: f64,
    pub scan_strategy: ScanStrategy,
    pub use_hint: bool,
    pub channel_memory: usize,
    pub discovery_dwell_s: f64,
    pub retune_s: f64,
    pub duty_threshold: f64,
    pub variance_threshold_db2: f64,
    pub similarity_threshold_db: f64,
    pub backoff_base_s: f64,
    pub backoff_cap_s: f64,
    pub align_timeout_s: f64,
    pub beacon_interval_s: f64,
    pub out_of_range_intervals: u32,
    pub retry_limit: u32,
    pub backoff_doublings: u32,
    pub modulation: Modulation,
    pub sensitivity_dbm: f64,
    pub noise_figure_db: f64,
    pub path_loss_exponent: f64,
    pub mobile_fading_db: f64,
    pub stationary_fading_db: f64,
    pub mobility_tick_s: f64,
    /// Length of one CSV metric window; 0 reports the whole horizon as one.
    pub metric_window_s: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            cfo_compensation: true,
            reestimation_period_s: 1.0,
            scan_strategy: ScanStrategy::Narrow,
            use_hint: true,
            channel_memory: 4,
            discovery_dwell_s: 0.1,
            retune_s: 1e-3,
            duty_threshold: 0.9,
            variance_threshold_db2: 1.0,
            similarity_threshold_db: 6.0,
            backoff_base_s: 1.0,
            backoff_cap_s: 60.0,
            align_timeout_s: 10.0,
            beacon_interval_s: 0.1 / 3.0,
            out_of_range_intervals: 3,
            retry_limit: 4,
            backoff_doublings: 5,
            modulation: Modulation::Ook,
            sensitivity_dbm: -110.0,
            noise_figure_db: 6.0,
            path_loss_exponent: 3.5,
            mobile_fading_db: 3.0,
            stationary_fading_db: 0.0,
            mobility_tick_s: 0.1,
            metric_window_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsConfig {
    pub id: u32,
    pub location: Point,
    pub channel: u32,
    pub bandwidth_hz: f64,
    pub subcarrier_width_hz: f64,
    /// Index of the join subcarrier among the BS subcarriers, lowest first.
    pub join_index: usize,
    pub tx_power_dbm: f64,
    /// Radius of the eight-point channel list handed to joining nodes.
    pub hint_radius_m: f64,
}

impl Default for BsConfig {
    fn default() -> Self {
        Self {
            id: 0,
            location: Point::default(),
            channel: 0,
            bandwidth_hz: 6e6,
            subcarrier_width_hz: 200e3,
            join_index: 0,
            tx_power_dbm: 15.0,
            hint_radius_m: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MobilityConfig {
    Stationary,
    /// Back and forth along the polyline from the node location through
    /// `points`, at constant speed.
    Waypoints { points: Vec<Point>, speed_mps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: u32,
    pub location: Point,
    pub mobility: MobilityConfig,
    /// Rate used for subcarrier assignment; defaults to the travel speed.
    pub mobility_rate: Option<f64>,
    pub ppm: f64,
    pub packet_bytes: u32,
    pub packet_count: u32,
    pub packet_interval_s: f64,
    pub start_s: f64,
    pub tx_power_dbm: f64,
    /// Initial serving BS; the strongest one when omitted.
    pub bs: Option<u32>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            id: 0,
            location: Point::default(),
            mobility: MobilityConfig::Stationary,
            mobility_rate: None,
            ppm: 0.0,
            packet_bytes: 40,
            packet_count: 1000,
            packet_interval_s: 0.01,
            start_s: 0.0,
            tx_power_dbm: 15.0,
            bs: None,
        }
    }
}

impl NodeConfig {
    pub fn speed(&self) -> f64 {
        match &self.mobility {
            MobilityConfig::Stationary => 0.0,
            MobilityConfig::Waypoints { speed_mps, .. } => *speed_mps,
        }
    }

    pub fn is_mobile(&self) -> bool {
        self.speed() > 0.0
    }

    /// The node location followed by any waypoints.
    pub fn path(&self) -> Vec<Point> {
        let mut path = vec![self.location];
        if let MobilityConfig::Waypoints { points, .. } = &self.mobility {
            path.extend_from_slice(points);
        }
        path
    }

    pub fn assignment_rate(&self) -> f64 {
        self.mobility_rate.unwrap_or_else(|| self.speed())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub world: Bounds,
    pub horizon_s: f64,
    pub seed: u64,
    pub fidelity: Fidelity,
    /// Station registry file, relative to the scenario file.
    pub station_file: Option<String>,
    pub stations: Vec<TvStation>,
    pub policy: Policy,
    pub base_stations: Vec<BsConfig>,
    pub nodes: Vec<NodeConfig>,
    /// Stations read from `station_file` by [`load_scenario`]; never written.
    #[serde(skip)]
    pub file_stations: Vec<TvStation>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            world: Bounds {
                min: Point::new(-1000.0, -1000.0),
                max: Point::new(1000.0, 1000.0),
            },
            horizon_s: 60.0,
            seed: 1,
            fidelity: Fidelity::Mixed,
            station_file: None,
            stations: Vec::new(),
            policy: Policy::default(),
            base_stations: Vec::new(),
            nodes: Vec::new(),
            file_stations: Vec::new(),
        }
    }
}

impl Scenario {
    /// Inline stations followed by those loaded from the registry file.
    pub fn all_stations(&self) -> Vec<TvStation> {
        self.stations.iter().chain(&self.file_stations).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// 1-based line, 0 when the problem is not tied to one line.
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.field, self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ScenarioError::Invalid(v) => v,
            ScenarioError::Io { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Scenario,
    Policy,
    Station,
    Bs,
    Node,
}

struct Parser {
    strict: bool,
    issues: Vec<Issue>,
}

impl Parser {
    fn issue(&mut self, line: usize, field: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            line,
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn parse<T: FromStr>(&mut self, line: usize, field: &str, v: &str) -> Option<T> {
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.issue(line, field, format!("cannot parse '{v}'"));
                None
            }
        }
    }

    fn f64(&mut self, line: usize, field: &str, v: &str) -> Option<f64> {
        let x: f64 = self.parse(line, field, v)?;
        if x.is_finite() {
            Some(x)
        } else {
            self.issue(line, field, "must be finite");
            None
        }
    }

    fn floats(&mut self, line: usize, field: &str, v: &str) -> Option<Vec<f64>> {
        v.split_whitespace().map(|t| self.f64(line, field, t)).collect()
    }

    fn point(&mut self, line: usize, field: &str, v: &str) -> Option<Point> {
        match self.floats(line, field, v)?.as_slice() {
            [x, y] => Some(Point::new(*x, *y)),
            _ => {
                self.issue(line, field, "expected 'x y'");
                None
            }
        }
    }

    fn bool(&mut self, line: usize, field: &str, v: &str) -> Option<bool> {
        match v {
            "true" | "yes" | "on" => Some(true),
            "false" | "no" | "off" => Some(false),
            _ => {
                self.issue(line, field, format!("expected true or false, got '{v}'"));
                None
            }
        }
    }

    fn unknown(&mut self, line: usize, section: &str, key: &str) {
        if self.strict {
            self.issue(line, key, format!("unknown key in [{section}]"));
        }
    }
}

macro_rules! set {
    ($target:expr, $e:expr) => {
        if let Some(v) = $e {
            $target = v;
        }
    };
}

/// Parses scenario text. Unknown keys are errors only when `strict`.
pub fn parse_scenario(text: &str, strict: bool) -> Result<Scenario, ScenarioError> {
    let mut p = Parser {
        strict,
        issues: Vec::new(),
    };
    let mut sc = Scenario::default();
    let mut section: Option<Section> = None;
    let mut seen_scenario = false;
    let mut seen_policy = false;
    // line at which each repeated record starts, for validation messages
    let mut bs_lines = Vec::new();
    let mut node_lines = Vec::new();
    let mut station_lines = Vec::new();
    let mut station = TvStation {
        channel: 0,
        location: Point::default(),
        tx_power_dbm: 0.0,
        antenna_height_m: 10.0,
    };
    let mut in_station = false;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if in_station {
                sc.stations.push(station);
                in_station = false;
            }
            let name = line.trim_start_matches('[').trim_end_matches(']').trim();
            section = match name {
                "scenario" => {
                    if seen_scenario {
                        p.issue(ln, "[scenario]", "section repeated");
                    }
                    seen_scenario = true;
                    Some(Section::Scenario)
                }
                "policy" => {
                    if seen_policy {
                        p.issue(ln, "[policy]", "section repeated");
                    }
                    seen_policy = true;
                    Some(Section::Policy)
                }
                "station" => {
                    station = TvStation {
                        channel: 0,
                        location: Point::default(),
                        tx_power_dbm: 0.0,
                        antenna_height_m: 10.0,
                    };
                    in_station = true;
                    station_lines.push(ln);
                    Some(Section::Station)
                }
                "bs" => {
                    sc.base_stations.push(BsConfig::default());
                    bs_lines.push(ln);
                    Some(Section::Bs)
                }
                "node" => {
                    sc.nodes.push(NodeConfig::default());
                    node_lines.push(ln);
                    Some(Section::Node)
                }
                other => {
                    p.issue(ln, other, "unknown section");
                    None
                }
            };
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            p.issue(ln, line, "expected 'key = value'");
            continue;
        };
        let (key, v) = (key.trim(), value.trim());
        let Some(sec) = section else {
            p.issue(ln, key, "key outside of any section");
            continue;
        };
        match sec {
            Section::Scenario => match key {
                "name" => sc.name = v.to_string(),
                "world" => {
                    if let Some(f) = p.floats(ln, key, v) {
                        match f.as_slice() {
                            [a, b, c, d] => match Bounds::new(Point::new(*a, *b), Point::new(*c, *d)) {
                                Ok(bounds) => sc.world = bounds,
                                Err(e) => p.issue(ln, key, e.to_string()),
                            },
                            _ => p.issue(ln, key, "expected 'min_x min_y max_x max_y'"),
                        }
                    }
                }
                "horizon_s" => set!(sc.horizon_s, p.f64(ln, key, v)),
                "seed" => set!(sc.seed, p.parse(ln, key, v)),
                "fidelity" => match v.parse() {
                    Ok(f) => sc.fidelity = f,
                    Err(e) => p.issue(ln, key, e),
                },
                "station_file" => sc.station_file = Some(v.to_string()),
                _ => p.unknown(ln, "scenario", key),
            },
            Section::Policy => {
                let pol = &mut sc.policy;
                match key {
                    "cfo_compensation" => set!(pol.cfo_compensation, p.bool(ln, key, v)),
                    "reestimation_period_s" => set!(pol.reestimation_period_s, p.f64(ln, key, v)),
                    "scan_strategy" => match v.parse() {
                        Ok(s) => pol.scan_strategy = s,
                        Err(e) => p.issue(ln, key, e),
                    },
                    "use_hint" => set!(pol.use_hint, p.bool(ln, key, v)),
                    "channel_memory" => set!(pol.channel_memory, p.parse(ln, key, v)),
                    "discovery_dwell_s" => set!(pol.discovery_dwell_s, p.f64(ln, key, v)),
                    "retune_s" => set!(pol.retune_s, p.f64(ln, key, v)),
                    "duty_threshold" => set!(pol.duty_threshold, p.f64(ln, key, v)),
                    "variance_threshold_db2" => set!(pol.variance_threshold_db2, p.f64(ln, key, v)),
                    "similarity_threshold_db" => set!(pol.similarity_threshold_db, p.f64(ln, key, v)),
                    "backoff_base_s" => set!(pol.backoff_base_s, p.f64(ln, key, v)),
                    "backoff_cap_s" => set!(pol.backoff_cap_s, p.f64(ln, key, v)),
                    "align_timeout_s" => set!(pol.align_timeout_s, p.f64(ln, key, v)),
                    "beacon_interval_s" => set!(pol.beacon_interval_s, p.f64(ln, key, v)),
                    "out_of_range_intervals" => set!(pol.out_of_range_intervals, p.parse(ln, key, v)),
                    "retry_limit" => set!(pol.retry_limit, p.parse(ln, key, v)),
                    "backoff_doublings" => set!(pol.backoff_doublings, p.parse(ln, key, v)),
                    "modulation" => match v.parse() {
                        Ok(m) => pol.modulation = m,
                        Err(_) => p.issue(ln, key, format!("unknown modulation '{v}' (bpsk, ook)")),
                    },
                    "sensitivity_dbm" => set!(pol.sensitivity_dbm, p.f64(ln, key, v)),
                    "noise_figure_db" => set!(pol.noise_figure_db, p.f64(ln, key, v)),
                    "path_loss_exponent" => set!(pol.path_loss_exponent, p.f64(ln, key, v)),
                    "mobile_fading_db" => set!(pol.mobile_fading_db, p.f64(ln, key, v)),
                    "stationary_fading_db" => set!(pol.stationary_fading_db, p.f64(ln, key, v)),
                    "mobility_tick_s" => set!(pol.mobility_tick_s, p.f64(ln, key, v)),
                    "metric_window_s" => set!(pol.metric_window_s, p.f64(ln, key, v)),
                    _ => p.unknown(ln, "policy", key),
                }
            }
            Section::Station => match key {
                "channel" => set!(station.channel, p.parse(ln, key, v)),
                "location" => set!(station.location, p.point(ln, key, v)),
                "tx_power_dbm" => set!(station.tx_power_dbm, p.f64(ln, key, v)),
                "height_m" => set!(station.antenna_height_m, p.f64(ln, key, v)),
                _ => p.unknown(ln, "station", key),
            },
            Section::Bs => {
                let bs = sc.base_stations.last_mut().expect("bs section open");
                match key {
                    "id" => set!(bs.id, p.parse(ln, key, v)),
                    "location" => set!(bs.location, p.point(ln, key, v)),
                    "channel" => set!(bs.channel, p.parse(ln, key, v)),
                    "bandwidth_hz" => set!(bs.bandwidth_hz, p.f64(ln, key, v)),
                    "subcarrier_width_hz" => set!(bs.subcarrier_width_hz, p.f64(ln, key, v)),
                    "join_index" => set!(bs.join_index, p.parse(ln, key, v)),
                    "tx_power_dbm" => set!(bs.tx_power_dbm, p.f64(ln, key, v)),
                    "hint_radius_m" => set!(bs.hint_radius_m, p.f64(ln, key, v)),
                    _ => p.unknown(ln, "bs", key),
                }
            }
            Section::Node => {
                let node = sc.nodes.last_mut().expect("node section open");
                match key {
                    "id" => set!(node.id, p.parse(ln, key, v)),
                    "location" => set!(node.location, p.point(ln, key, v)),
                    "mobility" => match v {
                        "stationary" => node.mobility = MobilityConfig::Stationary,
                        "waypoints" => {
                            if !matches!(node.mobility, MobilityConfig::Waypoints { .. }) {
                                node.mobility = MobilityConfig::Waypoints {
                                    points: Vec::new(),
                                    speed_mps: 0.0,
                                };
                            }
                        }
                        _ => p.issue(ln, key, format!("unknown mobility '{v}' (stationary, waypoints)")),
                    },
                    "waypoints" => {
                        if let Some(f) = p.floats(ln, key, v) {
                            if f.is_empty() || f.len() % 2 != 0 {
                                p.issue(ln, key, "expected 'x y' pairs");
                            } else {
                                let pts = f.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
                                match &mut node.mobility {
                                    MobilityConfig::Waypoints { points, .. } => *points = pts,
                                    m => {
                                        *m = MobilityConfig::Waypoints {
                                            points: pts,
                                            speed_mps: 0.0,
                                        }
                                    }
                                }
                            }
                        }
                    }
                    "speed_mps" => {
                        if let Some(s) = p.f64(ln, key, v) {
                            match &mut node.mobility {
                                MobilityConfig::Waypoints { speed_mps, .. } => *speed_mps = s,
                                m => {
                                    *m = MobilityConfig::Waypoints {
                                        points: Vec::new(),
                                        speed_mps: s,
                                    }
                                }
                            }
                        }
                    }
                    "mobility_rate" => node.mobility_rate = p.f64(ln, key, v),
                    "ppm" => set!(node.ppm, p.f64(ln, key, v)),
                    "packet_bytes" => set!(node.packet_bytes, p.parse(ln, key, v)),
                    "packet_count" => set!(node.packet_count, p.parse(ln, key, v)),
                    "packet_interval_s" => set!(node.packet_interval_s, p.f64(ln, key, v)),
                    "start_s" => set!(node.start_s, p.f64(ln, key, v)),
                    "tx_power_dbm" => set!(node.tx_power_dbm, p.f64(ln, key, v)),
                    "bs" => node.bs = p.parse(ln, key, v),
                    _ => p.unknown(ln, "node", key),
                }
            }
        }
    }
    if in_station {
        sc.stations.push(station);
    }
    validate_into(&sc, &bs_lines, &node_lines, &station_lines, &mut p.issues);
    if p.issues.is_empty() {
        Ok(sc)
    } else {
        Err(ScenarioError::Invalid(p.issues))
    }
}

/// Checks scenario invariants; lines are unknown for programmatic scenarios.
pub fn validate(sc: &Scenario) -> Result<(), ScenarioError> {
    let mut issues = Vec::new();
    validate_into(sc, &[], &[], &[], &mut issues);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(issues))
    }
}

fn validate_into(
    sc: &Scenario,
    bs_lines: &[usize],
    node_lines: &[usize],
    station_lines: &[usize],
    issues: &mut Vec<Issue>,
) {
    let mut push = |line: usize, field: String, message: String| issues.push(Issue { line, field, message });
    if !(sc.horizon_s > 0.0) {
        push(0, "horizon_s".into(), "must be positive".into());
    }
    let pol = &sc.policy;
    for (name, v) in [
        ("policy.discovery_dwell_s", pol.discovery_dwell_s),
        ("policy.beacon_interval_s", pol.beacon_interval_s),
        ("policy.mobility_tick_s", pol.mobility_tick_s),
        ("policy.align_timeout_s", pol.align_timeout_s),
        ("policy.backoff_base_s", pol.backoff_base_s),
        ("policy.reestimation_period_s", pol.reestimation_period_s),
        ("policy.path_loss_exponent", pol.path_loss_exponent),
    ] {
        if !(v > 0.0) {
            push(0, name.into(), "must be positive".into());
        }
    }
    if pol.backoff_cap_s < pol.backoff_base_s {
        push(0, "policy.backoff_cap_s".into(), "must not be below backoff_base_s".into());
    }
    if pol.mobile_fading_db < 0.0 || pol.stationary_fading_db < 0.0 || pol.metric_window_s < 0.0 {
        push(0, "policy".into(), "fading spreads and metric window must be non-negative".into());
    }
    for (k, st) in sc.stations.iter().enumerate() {
        let line = station_lines.get(k).copied().unwrap_or(0);
        if !is_tv_channel(st.channel) {
            push(
                line,
                "station.channel".into(),
                format!("channel {} outside {FIRST_CHANNEL}..={LAST_CHANNEL}", st.channel),
            );
        }
    }
    let mut bs_ids = BTreeSet::new();
    for (k, bs) in sc.base_stations.iter().enumerate() {
        let line = bs_lines.get(k).copied().unwrap_or(0);
        if !bs_ids.insert(bs.id) {
            push(line, "bs.id".into(), format!("duplicate id {}", bs.id));
        }
        if !is_tv_channel(bs.channel) {
            push(
                line,
                "bs.channel".into(),
                format!("channel {} outside {FIRST_CHANNEL}..={LAST_CHANNEL}", bs.channel),
            );
        }
        if !is_allowed_bandwidth(bs.subcarrier_width_hz) {
            let allowed: Vec<String> = ALLOWED_BANDWIDTHS.iter().map(|b| format!("{}", b / 1e3)).collect();
            push(
                line,
                "bs.subcarrier_width_hz".into(),
                format!(
                    "{} kHz is not an allowed width; allowed: {{{}}} kHz",
                    bs.subcarrier_width_hz / 1e3,
                    allowed.join(", ")
                ),
            );
        } else {
            let m = (bs.bandwidth_hz / bs.subcarrier_width_hz + 1e-9).floor() as usize;
            if m < 2 {
                push(line, "bs.bandwidth_hz".into(), "must hold a join and a data subcarrier".into());
            } else if bs.join_index >= m {
                push(line, "bs.join_index".into(), format!("must be below {m}"));
            }
        }
        if !(bs.bandwidth_hz > 0.0 && bs.bandwidth_hz <= 6e6) {
            push(line, "bs.bandwidth_hz".into(), "must be in (0, 6 MHz]".into());
        }
        if !sc.world.contains(bs.location) {
            push(line, "bs.location".into(), "outside the world".into());
        }
    }
    let mut node_ids = BTreeSet::new();
    for (k, n) in sc.nodes.iter().enumerate() {
        let line = node_lines.get(k).copied().unwrap_or(0);
        if !node_ids.insert(n.id) {
            push(line, "node.id".into(), format!("duplicate id {}", n.id));
        }
        if let Some(b) = n.bs {
            if !bs_ids.contains(&b) {
                push(line, "node.bs".into(), format!("no base station with id {b}"));
            }
        }
        if let MobilityConfig::Waypoints { points, speed_mps } = &n.mobility {
            if points.is_empty() {
                push(line, "node.waypoints".into(), "waypoint mobility needs at least one waypoint".into());
            }
            if !(*speed_mps >= 0.0) {
                push(line, "node.speed_mps".into(), "must be non-negative".into());
            }
        }
        if n.mobility_rate.is_some_and(|r| r < 0.0) {
            push(line, "node.mobility_rate".into(), "must be non-negative".into());
        }
        if !(n.ppm.abs() < 1000.0) {
            push(line, "node.ppm".into(), "magnitude must be below 1000".into());
        }
        if n.packet_bytes == 0 {
            push(line, "node.packet_bytes".into(), "must be positive".into());
        }
        if !(n.packet_interval_s > 0.0) {
            push(line, "node.packet_interval_s".into(), "must be positive".into());
        }
        if n.start_s < 0.0 {
            push(line, "node.start_s".into(), "must be non-negative".into());
        }
    }
}

/// Reads and validates a scenario file, then loads its station registry.
pub fn load_scenario(path: &Path, strict: bool) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut sc = parse_scenario(&text, strict)?;
    if let Some(rel) = &sc.station_file {
        let full = path.parent().unwrap_or(Path::new(".")).join(rel);
        let table = std::fs::read_to_string(&full).map_err(|source| ScenarioError::Io {
            path: full.clone(),
            source,
        })?;
        sc.file_stations = parse_station_table(&table).map_err(|e| {
            ScenarioError::Invalid(vec![Issue {
                line: 0,
                field: "station_file".into(),
                message: e.to_string(),
            }])
        })?;
    }
    Ok(sc)
}

fn pt(p: Point) -> String {
    format!("{} {}", p.x, p.y)
}

/// Canonical text form; `parse_scenario(&write_scenario(s), true) == s`.
pub fn write_scenario(sc: &Scenario) -> String {
    let mut o = String::new();
    let w = &mut o;
    let _ = writeln!(w, "[scenario]");
    let _ = writeln!(w, "name = {}", sc.name);
    let _ = writeln!(
        w,
        "world = {} {} {} {}",
        sc.world.min.x, sc.world.min.y, sc.world.max.x, sc.world.max.y
    );
    let _ = writeln!(w, "horizon_s = {}", sc.horizon_s);
    let _ = writeln!(w, "seed = {}", sc.seed);
    let _ = writeln!(w, "fidelity = {}", sc.fidelity);
    if let Some(f) = &sc.station_file {
        let _ = writeln!(w, "station_file = {f}");
    }
    let p = &sc.policy;
    let _ = writeln!(w, "\n[policy]");
    let _ = writeln!(w, "cfo_compensation = {}", p.cfo_compensation);
    let _ = writeln!(w, "reestimation_period_s = {}", p.reestimation_period_s);
    let _ = writeln!(
        w,
        "scan_strategy = {}",
        match p.scan_strategy {
            ScanStrategy::Narrow => "narrow",
            ScanStrategy::Wide => "wide",
        }
    );
    let _ = writeln!(w, "use_hint = {}", p.use_hint);
    let _ = writeln!(w, "channel_memory = {}", p.channel_memory);
    let _ = writeln!(w, "discovery_dwell_s = {}", p.discovery_dwell_s);
    let _ = writeln!(w, "retune_s = {}", p.retune_s);
    let _ = writeln!(w, "duty_threshold = {}", p.duty_threshold);
    let _ = writeln!(w, "variance_threshold_db2 = {}", p.variance_threshold_db2);
    let _ = writeln!(w, "similarity_threshold_db = {}", p.similarity_threshold_db);
    let _ = writeln!(w, "backoff_base_s = {}", p.backoff_base_s);
    let _ = writeln!(w, "backoff_cap_s = {}", p.backoff_cap_s);
    let _ = writeln!(w, "align_timeout_s = {}", p.align_timeout_s);
    let _ = writeln!(w, "beacon_interval_s = {}", p.beacon_interval_s);
    let _ = writeln!(w, "out_of_range_intervals = {}", p.out_of_range_intervals);
    let _ = writeln!(w, "retry_limit = {}", p.retry_limit);
    let _ = writeln!(w, "backoff_doublings = {}", p.backoff_doublings);
    let _ = writeln!(w, "modulation = {}", p.modulation);
    let _ = writeln!(w, "sensitivity_dbm = {}", p.sensitivity_dbm);
    let _ = writeln!(w, "noise_figure_db = {}", p.noise_figure_db);
    let _ = writeln!(w, "path_loss_exponent = {}", p.path_loss_exponent);
    let _ = writeln!(w, "mobile_fading_db = {}", p.mobile_fading_db);
    let _ = writeln!(w, "stationary_fading_db = {}", p.stationary_fading_db);
    let _ = writeln!(w, "mobility_tick_s = {}", p.mobility_tick_s);
    let _ = writeln!(w, "metric_window_s = {}", p.metric_window_s);
    for s in &sc.stations {
        let _ = writeln!(w, "\n[station]");
        let _ = writeln!(w, "channel = {}", s.channel);
        let _ = writeln!(w, "location = {}", pt(s.location));
        let _ = writeln!(w, "tx_power_dbm = {}", s.tx_power_dbm);
        let _ = writeln!(w, "height_m = {}", s.antenna_height_m);
    }
    for b in &sc.base_stations {
        let _ = writeln!(w, "\n[bs]");
        let _ = writeln!(w, "id = {}", b.id);
        let _ = writeln!(w, "location = {}", pt(b.location));
        let _ = writeln!(w, "channel = {}", b.channel);
        let _ = writeln!(w, "bandwidth_hz = {}", b.bandwidth_hz);
        let _ = writeln!(w, "subcarrier_width_hz = {}", b.subcarrier_width_hz);
        let _ = writeln!(w, "join_index = {}", b.join_index);
        let _ = writeln!(w, "tx_power_dbm = {}", b.tx_power_dbm);
        let _ = writeln!(w, "hint_radius_m = {}", b.hint_radius_m);
    }
    for n in &sc.nodes {
        let _ = writeln!(w, "\n[node]");
        let _ = writeln!(w, "id = {}", n.id);
        let _ = writeln!(w, "location = {}", pt(n.location));
        match &n.mobility {
            MobilityConfig::Stationary => {
                let _ = writeln!(w, "mobility = stationary");
            }
            MobilityConfig::Waypoints { points, speed_mps } => {
                let _ = writeln!(w, "mobility = waypoints");
                let pts: Vec<String> = points.iter().map(|p| pt(*p)).collect();
                let _ = writeln!(w, "waypoints = {}", pts.join(" "));
                let _ = writeln!(w, "speed_mps = {speed_mps}");
            }
        }
        if let Some(r) = n.mobility_rate {
            let _ = writeln!(w, "mobility_rate = {r}");
        }
        let _ = writeln!(w, "ppm = {}", n.ppm);
        let _ = writeln!(w, "packet_bytes = {}", n.packet_bytes);
        let _ = writeln!(w, "packet_count = {}", n.packet_count);
        let _ = writeln!(w, "packet_interval_s = {}", n.packet_interval_s);
        let _ = writeln!(w, "start_s = {}", n.start_s);
        let _ = writeln!(w, "tx_power_dbm = {}", n.tx_power_dbm);
        if let Some(b) = n.bs {
            let _ = writeln!(w, "bs = {b}");
        }
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[scenario]
name = minimal

[bs]
id = 1
location = 0 0
channel = 16

[node]
id = 1
location = 20 0
";

    #[test]
    fn minimal_takes_defaults() {
        let sc = parse_scenario(MINIMAL, true).unwrap();
        let n = &sc.nodes[0];
        assert_eq!(n.packet_bytes, 40);
        assert_eq!(n.tx_power_dbm, 15.0);
        assert_eq!(sc.base_stations[0].bandwidth_hz, 6e6);
        assert_eq!(sc.base_stations[0].subcarrier_width_hz, 200e3);
        assert_eq!(sc.policy.sensitivity_dbm, -110.0);
        assert_eq!(sc.policy.modulation, Modulation::Ook);
    }

    #[test]
    fn rejects_disallowed_width() {
        let text = MINIMAL.replace("channel = 16", "channel = 16\nsubcarrier_width_hz = 300000");
        let err = parse_scenario(&text, false).unwrap_err();
        let issue = &err.issues()[0];
        assert_eq!(issue.field, "bs.subcarrier_width_hz");
        assert_eq!(issue.line, 4);
        assert!(issue.message.contains("100, 200, 400, 600"), "{}", issue.message);
    }

    #[test]
    fn strict_mode_rejects_unknown_keys() {
        let text = MINIMAL.replace("name = minimal", "name = minimal\ncolour = blue");
        assert!(parse_scenario(&text, false).is_ok());
        let err = parse_scenario(&text, true).unwrap_err();
        assert_eq!(err.issues()[0].line, 3);
        assert_eq!(err.issues()[0].field, "colour");
    }

    #[test]
    fn reports_every_problem_with_its_line() {
        let text = "[scenario]\nhorizon_s = abc\n[node]\nid = 1\nbs = 9\nppm = 5000\n";
        let err = parse_scenario(text, true).unwrap_err();
        let lines: Vec<usize> = err.issues().iter().map(|i| i.line).collect();
        assert!(lines.contains(&2));
        assert!(lines.contains(&3));
        assert!(err.issues().len() >= 3);
    }

    #[test]
    fn canonical_round_trip() {
        let mut sc = parse_scenario(MINIMAL, true).unwrap();
        sc.stations.push(TvStation {
            channel: 22,
            location: Point::new(1.5, -2.25),
            tx_power_dbm: 80.1,
            antenna_height_m: 300.0,
        });
        sc.nodes.push(NodeConfig {
            id: 2,
            mobility: MobilityConfig::Waypoints {
                points: vec![Point::new(0.1, 0.2), Point::new(100.0, 0.0)],
                speed_mps: 17.88,
            },
            mobility_rate: Some(3.0),
            bs: Some(1),
            ppm: -2.5,
            ..NodeConfig::default()
        });
        sc.policy.scan_strategy = ScanStrategy::Wide;
        sc.policy.beacon_interval_s = 0.1 / 3.0;
        let text = write_scenario(&sc);
        assert_eq!(parse_scenario(&text, true).unwrap(), sc);
    }
}
