//! Mobility-aware subcarrier assignment.
//!
//! Nodes are sorted from least to most mobile and subcarriers from least to
//! most widely available; the two orders are then walked in lockstep so that
//! stationary nodes take the scarce subcarriers and mobile nodes the ones
//! that stay usable over the largest area.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseband::Subcarrier;
use crate::geo::Point;
use crate::spectrum::{channel_of, SpectrumMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("{nodes} nodes but no subcarriers to assign")]
    NoSubcarriers { nodes: usize },
    #[error("invalid mobility rate {rate} for node {node}")]
    InvalidRate { node: NodeId, rate: f64 },
    #[error("node {0} listed twice")]
    DuplicateNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityProfile {
    pub node_id: NodeId,
    /// 0 for stationary nodes; larger means more mobile.
    pub mobility_rate: f64,
}

impl MobilityProfile {
    pub fn new(node_id: NodeId, mobility_rate: f64) -> Result<Self, AssignmentError> {
        if !(mobility_rate >= 0.0 && mobility_rate.is_finite()) {
            return Err(AssignmentError::InvalidRate {
                node: node_id,
                rate: mobility_rate,
            });
        }
        Ok(Self {
            node_id,
            mobility_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityScore {
    pub subcarrier: Subcarrier,
    /// Grid cells in the BS coverage disc where the subcarrier's channel is free.
    pub cell_count: usize,
}

pub fn order_nodes(profiles: &[MobilityProfile]) -> Vec<NodeId> {
    let mut v = profiles.to_vec();
    v.sort_by(|a, b| {
        a.mobility_rate
            .total_cmp(&b.mobility_rate)
            .then(a.node_id.cmp(&b.node_id))
    });
    v.into_iter().map(|p| p.node_id).collect()
}

fn cmp_scores(a: &AvailabilityScore, b: &AvailabilityScore) -> Ordering {
    a.cell_count
        .cmp(&b.cell_count)
        .then(a.subcarrier.center_freq.total_cmp(&b.subcarrier.center_freq))
        .then(a.subcarrier.bandwidth.total_cmp(&b.subcarrier.bandwidth))
}

pub fn order_subcarriers(scores: &[AvailabilityScore]) -> Vec<Subcarrier> {
    let mut v = scores.to_vec();
    v.sort_by(cmp_scores);
    v.into_iter().map(|s| s.subcarrier).collect()
}

/// Number of nodes the `idx`-th subcarrier receives out of `n` over `m`.
/// The first `n mod m` subcarriers carry the extra node.
pub fn load_of(idx: usize, n: usize, m: usize) -> usize {
    n / m + usize::from(idx < n % m)
}

/// Lockstep assignment over already ordered nodes and subcarriers.
pub fn assign(
    nodes: &[NodeId],
    subcarriers: &[Subcarrier],
) -> Result<BTreeMap<NodeId, Subcarrier>, AssignmentError> {
    let n = nodes.len();
    let m = subcarriers.len();
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    if m == 0 {
        return Err(AssignmentError::NoSubcarriers { nodes: n });
    }
    let mut out = BTreeMap::new();
    let mut next = nodes.iter();
    for (idx, sc) in subcarriers.iter().enumerate() {
        for node in next.by_ref().take(load_of(idx, n, m)) {
            if out.insert(*node, *sc).is_some() {
                return Err(AssignmentError::DuplicateNode(*node));
            }
        }
    }
    Ok(out)
}

/// Orders both inputs canonically, then assigns.
pub fn assign_by_mobility(
    profiles: &[MobilityProfile],
    scores: &[AvailabilityScore],
) -> Result<BTreeMap<NodeId, Subcarrier>, AssignmentError> {
    assign(&order_nodes(profiles), &order_subcarriers(scores))
}

/// Scores each subcarrier by counting white-space cells of its TV channel
/// inside the BS coverage disc. Subcarriers outside the TV band score 0.
pub fn availability_scores(
    map: &SpectrumMap,
    bs_location: Point,
    range_m: f64,
    subcarriers: &[Subcarrier],
) -> Vec<AvailabilityScore> {
    let cells: Vec<usize> = map.cells_within(bs_location, range_m).collect();
    subcarriers
        .iter()
        .map(|sc| AvailabilityScore {
            subcarrier: *sc,
            cell_count: channel_of(sc.center_freq)
                .map(|ch| cells.iter().filter(|&&c| map.cell_available(c, ch)).count())
                .unwrap_or(0),
        })
        .collect()
}
