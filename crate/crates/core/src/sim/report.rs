//! Run metrics: per-node totals, handoff records and windowed CSV rows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scenario::Fidelity;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub data_tx_s: f64,
    pub join_tx_s: f64,
    pub rx_s: f64,
    pub discovery_s: f64,
    pub wide_discovery_s: f64,
    pub alignment_s: f64,
    pub idle_s: f64,
    pub tx_j: f64,
    pub rx_j: f64,
    pub discovery_j: f64,
    pub alignment_j: f64,
    pub idle_j: f64,
    pub total_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node: u32,
    pub mobile: bool,
    pub speed_mps: f64,
    /// Closest approach of the node's track to its first serving BS.
    pub distance_m: Option<f64>,
    pub generated: u32,
    pub delivered: u32,
    pub dropped: u32,
    pub pending: u32,
    pub transmissions: u32,
    pub decoded: u32,
    /// Dropped over finished packets.
    pub per: Option<f64>,
    /// Decoded over transmitted packets.
    pub cdr: Option<f64>,
    pub mean_latency_s: Option<f64>,
    /// From the node's first packet to its last finished one.
    pub collection_time_s: Option<f64>,
    pub handoffs: u32,
    pub final_bs: Option<u32>,
    pub final_subcarrier_hz: Option<f64>,
    pub final_width_hz: Option<f64>,
    /// Uplink offset in the serving BS table, at the join subcarrier.
    pub bs_cfo_hz: Option<f64>,
    /// The node's own downlink offset estimate.
    pub node_cfo_hz: Option<f64>,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffRecord {
    pub node: u32,
    pub from_bs: Option<u32>,
    pub to_bs: Option<u32>,
    pub from_subcarrier_hz: Option<f64>,
    pub to_subcarrier_hz: Option<f64>,
    pub to_width_hz: Option<f64>,
    pub started_s: f64,
    pub discovery_s: f64,
    pub alignment_s: f64,
    pub join_s: f64,
    /// Sum of the three phase latencies.
    pub total_s: f64,
    pub completed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub node: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub transmissions: u32,
    pub decoded: u32,
    pub delivered: u32,
    pub dropped: u32,
    pub tx_energy_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub nodes: usize,
    pub delivered: u32,
    pub dropped: u32,
    pub transmissions: u32,
    pub decoded: u32,
    pub per: Option<f64>,
    pub cdr: Option<f64>,
    pub per_stationary: Option<f64>,
    pub per_mobile: Option<f64>,
    pub cdr_stationary: Option<f64>,
    pub cdr_mobile: Option<f64>,
    /// Delivered payload bits per second over the active span.
    pub throughput_bps: f64,
    pub collection_time_s: Option<f64>,
    pub tx_energy_j: f64,
    pub total_energy_j: f64,
    pub handoffs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub fidelity: Fidelity,
    pub horizon_s: f64,
    pub cfo_compensation: bool,
    pub aggregate: Aggregate,
    pub nodes: Vec<NodeMetrics>,
    pub handoffs: Vec<HandoffRecord>,
    pub windows: Vec<WindowRow>,
}

fn ratio(num: u32, den: u32) -> Option<f64> {
    (den > 0).then(|| f64::from(num) / f64::from(den))
}

impl Aggregate {
    pub fn from_nodes(nodes: &[NodeMetrics], handoffs: usize, active_span_s: Option<f64>, payload_bits: f64) -> Self {
        let sum = |f: &dyn Fn(&NodeMetrics) -> u32, pick: &dyn Fn(&NodeMetrics) -> bool| -> u32 {
            nodes.iter().filter(|n| pick(n)).map(f).sum()
        };
        let all = |_: &NodeMetrics| true;
        let stat = |n: &NodeMetrics| !n.mobile;
        let mob = |n: &NodeMetrics| n.mobile;
        let per_of = |pick: &dyn Fn(&NodeMetrics) -> bool| {
            let d = sum(&|n| n.dropped, pick);
            ratio(d, d + sum(&|n| n.delivered, pick))
        };
        let cdr_of = |pick: &dyn Fn(&NodeMetrics) -> bool| {
            ratio(sum(&|n| n.decoded, pick), sum(&|n| n.transmissions, pick))
        };
        Self {
            nodes: nodes.len(),
            delivered: sum(&|n| n.delivered, &all),
            dropped: sum(&|n| n.dropped, &all),
            transmissions: sum(&|n| n.transmissions, &all),
            decoded: sum(&|n| n.decoded, &all),
            per: per_of(&all),
            cdr: cdr_of(&all),
            per_stationary: per_of(&stat),
            per_mobile: per_of(&mob),
            cdr_stationary: cdr_of(&stat),
            cdr_mobile: cdr_of(&mob),
            throughput_bps: match active_span_s {
                Some(s) if s > 0.0 => payload_bits / s,
                _ => 0.0,
            },
            collection_time_s: nodes.iter().filter_map(|n| n.collection_time_s).reduce(f64::max),
            tx_energy_j: nodes.iter().map(|n| n.energy.tx_j).sum(),
            total_energy_j: nodes.iter().map(|n| n.energy.total_j).sum(),
            handoffs,
        }
    }
}

/// Bumped whenever a CSV column changes meaning or position.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema_version,scenario,seed,node,start_s,end_s,transmissions,decoded,delivered,dropped,tx_energy_j";

impl MetricsReport {
    pub fn empty(scenario: &str, seed: u64, fidelity: Fidelity, horizon_s: f64, cfo_compensation: bool) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            fidelity,
            horizon_s,
            cfo_compensation,
            aggregate: Aggregate::default(),
            nodes: Vec::new(),
            handoffs: Vec::new(),
            windows: Vec::new(),
        }
    }

    /// One row per node per metric window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for w in &self.windows {
            let _ = writeln!(
                out,
                "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{},{}",
                self.scenario,
                self.seed,
                w.node, w.start_s, w.end_s, w.transmissions, w.decoded, w.delivered, w.dropped, w.tx_energy_j
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
