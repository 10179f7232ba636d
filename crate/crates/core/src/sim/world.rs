//! The discrete-event world: base stations, nodes and the shared air.
//!
//! Node phases run ASSOCIATED -> OUT_OF_RANGE -> DISCOVERING -> ALIGNING ->
//! JOINING -> ASSOCIATED, with failure edges from ALIGNING and JOINING back
//! to DISCOVERING. Every phase change bumps the node epoch so that events
//! scheduled under an older phase are ignored.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::alignment::{align, alignment_windows, AlignConfig, AlignmentError, ALIGN_SAMPLE_RATE};
use crate::assignment::{assign_by_mobility, availability_scores, AssignmentError, AvailabilityScore, MobilityProfile, NodeId};
use crate::baseband::{Subcarrier, PREAMBLE_LEN};
use crate::cfo::{radial_doppler, CfoEstimate, CfoEstimator};
use crate::discovery::{
    build_scan_plan, discover, full_band, Backoff, BurstProfile, ChannelMemory, ClassifierConfig, ScanStrategy,
    SignalTrace, SpectrumObserver, TraceSynth,
};
use crate::energy::EnergyModel;
use crate::geo::{closest_approach, Point};
use crate::scenario::{validate, BsConfig, Fidelity, NodeConfig, Scenario, ScenarioError};
use crate::sim::csma::{backoff_delay, packet_airtime, CsmaConfig, CCA_S};
use crate::sim::events::EventQueue;
use crate::sim::link::{leakage, LinkBudget};
use crate::sim::mobility::Track;
use crate::sim::pep::packet_error_probability;
use crate::sim::phy::{estimate_preamble_offset, receive_packet, Arrival, BeaconAir};
use crate::sim::report::{Aggregate, EnergyBreakdown, HandoffRecord, MetricsReport, NodeMetrics, WindowRow};
use crate::spectrum::{channel_low_edge, EightPointEntry, Propagation, SpectrumError, SpectrumMap, DEFAULT_GRID_RESOLUTION_M};
use crate::units::{dbm_to_mw, mw_to_dbm};

const JOIN_PAYLOAD_BITS: u32 = 64;
const ACK_PAYLOAD_BITS: u32 = 32;
const BEACON_PAYLOAD_BITS: u32 = 64;
const JOIN_TURNAROUND_S: f64 = 1e-3;
const ACK_TURNAROUND_S: f64 = 2e-4;
/// Tone grid of rendered beacons, matched to the alignment bin width.
const BEACON_TONE_SPACING_HZ: f64 = 5e3;
/// Average on-air share of a BS as seen by a scanning node.
const BS_ACTIVITY: f64 = 0.4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("base station {0} has no usable subcarriers")]
    BadBaseStation(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Joining,
    Associated,
    Discovering,
    Aligning,
}

struct BaseStation {
    cfg: BsConfig,
    low: f64,
    high: f64,
    join: Subcarrier,
    scores: Vec<AvailabilityScore>,
    /// Associated nodes with their assignment rate and subcarrier.
    members: BTreeMap<u32, (f64, Subcarrier)>,
    cfo_table: BTreeMap<u32, CfoEstimate>,
    hint: Vec<EightPointEntry>,
    beacon_phase: f64,
}

struct Packet {
    generated_at: f64,
    attempts: u32,
    delivered: bool,
}

#[derive(Default)]
struct Seconds {
    data_tx: f64,
    join_tx: f64,
    rx: f64,
    discovery: f64,
    wide_discovery: f64,
    alignment: f64,
}

struct NodeState {
    cfg: NodeConfig,
    track: Track,
    rng: ChaCha8Rng,
    phase: Phase,
    epoch: u64,
    bs: Option<usize>,
    first_bs: Option<usize>,
    sc: Option<Subcarrier>,
    /// Uplink pre-compensation, ppm, and when it was last refreshed.
    ppm_est: Option<f64>,
    last_estimate: f64,
    dl_cfo: Option<CfoEstimate>,
    queue: VecDeque<Packet>,
    inflight: Option<Packet>,
    /// A transaction (sense, send, wait for ACK) is under way.
    active: bool,
    generated: u32,
    below_since: Option<f64>,
    memory: ChannelMemory,
    hint: Option<Vec<EightPointEntry>>,
    discovery_attempt: u32,
    join_attempt: u32,
    handoff: Option<HandoffRecord>,
    handoffs: u32,
    transmissions: u32,
    decoded: u32,
    delivered: u32,
    dropped: u32,
    latency_sum: f64,
    first_packet: Option<f64>,
    last_finish: Option<f64>,
    time: Seconds,
    windows: BTreeMap<usize, WindowRow>,
}

struct Transmission {
    id: u64,
    node: usize,
    bs: usize,
    sc: Subcarrier,
    residual_hz: f64,
    tx_dbm: f64,
    pos: Point,
    fade_db: f64,
    start: f64,
    end: f64,
    bits: u32,
}

enum Ev {
    Tick,
    Generate(usize),
    Attempt { node: usize, epoch: u64 },
    TxEnd { node: usize, id: u64, epoch: u64 },
    AckDone { node: usize, epoch: u64, uplink_ok: bool, ack_ok: bool, residual_hz: f64 },
    JoinStart { node: usize, epoch: u64, bs: usize },
    JoinDone { node: usize, epoch: u64, bs: usize, ok: bool, bs_est: Option<CfoEstimate>, dl_est: Option<CfoEstimate> },
    RetryDiscovery { node: usize, epoch: u64 },
    DiscoveryDone { node: usize, epoch: u64, bs: Option<usize> },
    AlignDone { node: usize, epoch: u64, bs: usize, ok: bool },
}

pub struct World {
    scenario: Scenario,
    seed: u64,
    fidelity: Fidelity,
    horizon: f64,
    link: LinkBudget,
    energy: EnergyModel,
    csma: CsmaConfig,
    map: SpectrumMap,
    bss: Vec<BaseStation>,
    nodes: Vec<NodeState>,
    queue: EventQueue<Ev>,
    active: Vec<Transmission>,
    finished: Vec<Transmission>,
    max_airtime: f64,
    next_tx: u64,
    handoffs: Vec<HandoffRecord>,
    first_generation: Option<f64>,
    last_delivery: Option<f64>,
    delivered_bits: f64,
}

/// Runs `scenario` with its own fidelity setting.
pub fn run(scenario: &Scenario, seed: u64) -> Result<MetricsReport, SimError> {
    run_with_fidelity(scenario, seed, scenario.fidelity)
}

pub fn run_with_fidelity(scenario: &Scenario, seed: u64, fidelity: Fidelity) -> Result<MetricsReport, SimError> {
    validate(scenario)?;
    if scenario.nodes.is_empty() {
        return Ok(MetricsReport::empty(
            &scenario.name,
            seed,
            fidelity,
            scenario.horizon_s,
            scenario.policy.cfo_compensation,
        ));
    }
    let mut w = World::new(scenario, seed, fidelity)?;
    w.start();
    w.run_events();
    Ok(w.report())
}

fn bs_band(cfg: &BsConfig) -> (f64, f64) {
    let edge = channel_low_edge(cfg.channel).unwrap_or(0.0);
    let low = edge + (6e6 - cfg.bandwidth_hz) / 2.0;
    (low, low + cfg.bandwidth_hz)
}

fn bs_subcarriers(cfg: &BsConfig) -> Vec<Subcarrier> {
    let (low, _) = bs_band(cfg);
    let w = cfg.subcarrier_width_hz;
    let m = (cfg.bandwidth_hz / w + 1e-9).floor() as usize;
    (0..m)
        .filter_map(|k| Subcarrier::new(low + w / 2.0 + k as f64 * w, w).ok())
        .collect()
}

fn same_subcarrier(a: &Subcarrier, b: &Subcarrier) -> bool {
    (a.center_freq - b.center_freq).abs() < 1.0 && (a.bandwidth - b.bandwidth).abs() < 1.0
}

impl World {
    fn new(sc: &Scenario, seed: u64, fidelity: Fidelity) -> Result<Self, SimError> {
        let pol = &sc.policy;
        let link = LinkBudget {
            path_loss_exponent: pol.path_loss_exponent,
            reference_distance_m: 1.0,
            noise_figure_db: pol.noise_figure_db,
            sensitivity_dbm: pol.sensitivity_dbm,
        };
        let map = SpectrumMap::build(
            sc.world,
            DEFAULT_GRID_RESOLUTION_M.min((sc.world.max.x - sc.world.min.x).min(sc.world.max.y - sc.world.min.y)),
            sc.all_stations(),
            Propagation::default(),
        )?;
        let mut world_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bss = Vec::new();
        for cfg in &sc.base_stations {
            let subs = bs_subcarriers(cfg);
            if subs.len() < 2 || cfg.join_index >= subs.len() {
                return Err(SimError::BadBaseStation(cfg.id));
            }
            let join = subs[cfg.join_index];
            let data: Vec<Subcarrier> = subs
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != cfg.join_index)
                .map(|(_, s)| *s)
                .collect();
            let (low, high) = bs_band(cfg);
            bss.push(BaseStation {
                cfg: cfg.clone(),
                low,
                high,
                join,
                scores: availability_scores(&map, cfg.location, cfg.hint_radius_m, &data),
                members: BTreeMap::new(),
                cfo_table: BTreeMap::new(),
                hint: map.eight_point_channel_list(cfg.location, cfg.hint_radius_m),
                beacon_phase: world_rng.gen_range(0.0..pol.beacon_interval_s),
            });
        }
        let nodes = sc
            .nodes
            .iter()
            .map(|cfg| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::from(cfg.id) + 1);
                NodeState {
                    track: Track::new(cfg.location, &cfg.mobility),
                    cfg: cfg.clone(),
                    rng,
                    phase: Phase::Idle,
                    epoch: 0,
                    bs: None,
                    first_bs: None,
                    sc: None,
                    ppm_est: None,
                    last_estimate: 0.0,
                    dl_cfo: None,
                    queue: VecDeque::new(),
                    inflight: None,
                    active: false,
                    generated: 0,
                    below_since: None,
                    memory: ChannelMemory::new(pol.channel_memory),
                    hint: None,
                    discovery_attempt: 0,
                    join_attempt: 0,
                    handoff: None,
                    handoffs: 0,
                    transmissions: 0,
                    decoded: 0,
                    delivered: 0,
                    dropped: 0,
                    latency_sum: 0.0,
                    first_packet: None,
                    last_finish: None,
                    time: Seconds::default(),
                    windows: BTreeMap::new(),
                }
            })
            .collect::<Vec<_>>();
        let max_airtime = sc
            .nodes
            .iter()
            .map(|n| {
                let min_rate = sc
                    .base_stations
                    .iter()
                    .map(|b| b.subcarrier_width_hz)
                    .fold(f64::INFINITY, f64::min);
                packet_airtime(n.packet_bytes, min_rate)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            scenario: sc.clone(),
            seed,
            fidelity,
            horizon: sc.horizon_s,
            link,
            energy: EnergyModel::default(),
            csma: CsmaConfig {
                retry_limit: pol.retry_limit,
                max_doublings: pol.backoff_doublings,
            },
            map,
            bss,
            nodes,
            queue: EventQueue::new(),
            active: Vec::new(),
            finished: Vec::new(),
            max_airtime,
            next_tx: 0,
            handoffs: Vec::new(),
            first_generation: None,
            last_delivery: None,
            delivered_bits: 0.0,
        })
    }

    // ---- geometry and link helpers ----

    fn pos(&self, n: usize, t: f64) -> Point {
        self.nodes[n].track.position_at(t)
    }

    fn beacon_rss(&self, b: usize, p: Point) -> f64 {
        let bs = &self.bss[b];
        self.link.rx_power_dbm(bs.cfg.tx_power_dbm, bs.cfg.location, p, bs.join.center_freq)
    }

    fn strongest_bs(&self, p: Point, channel: Option<u32>) -> Option<usize> {
        (0..self.bss.len())
            .filter(|&b| channel.is_none_or(|c| self.bss[b].cfg.channel == c))
            .map(|b| (b, self.beacon_rss(b, p)))
            .filter(|(_, rss)| *rss >= self.link.sensitivity_dbm)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(b, _)| b)
    }

    /// True oscillator-plus-Doppler offset of node `n` toward BS `b` at `freq`.
    fn true_offset(&self, n: usize, b: usize, freq: f64, t: f64) -> f64 {
        let node = &self.nodes[n];
        let p = node.track.position_at(t);
        let v = node.track.velocity_at(t);
        node.cfg.ppm * freq / 1e6 + radial_doppler(p, v, self.bss[b].cfg.location, freq)
    }

    fn fading_db(&mut self, n: usize) -> f64 {
        let pol = &self.scenario.policy;
        let node = &mut self.nodes[n];
        let sigma = if node.cfg.is_mobile() {
            pol.mobile_fading_db
        } else {
            pol.stationary_fading_db
        };
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite spread").sample(&mut node.rng)
        } else {
            0.0
        }
    }

    fn noise_mw(&self, bandwidth: f64) -> f64 {
        dbm_to_mw(self.link.noise_floor_dbm(bandwidth))
    }

    fn window_row(&mut self, n: usize, t: f64) -> &mut WindowRow {
        let w = self.scenario.policy.metric_window_s;
        let (idx, start, end) = if w > 0.0 {
            let k = (t / w).floor().max(0.0) as usize;
            (k, k as f64 * w, (k + 1) as f64 * w)
        } else {
            (0, 0.0, self.horizon)
        };
        let id = self.nodes[n].cfg.id;
        self.nodes[n].windows.entry(idx).or_insert_with(|| WindowRow {
            node: id,
            start_s: start,
            end_s: end,
            ..WindowRow::default()
        })
    }

    // ---- setup ----

    fn start(&mut self) {
        let mut chosen: Vec<Option<usize>> = Vec::new();
        for n in 0..self.nodes.len() {
            let p = self.pos(n, 0.0);
            let b = match self.nodes[n].cfg.bs {
                Some(id) => self.bss.iter().position(|b| b.cfg.id == id),
                None => self.strongest_bs(p, None),
            };
            chosen.push(b);
        }
        let beacon = self.scenario.policy.beacon_interval_s;
        for (n, c) in chosen.into_iter().enumerate() {
            match c {
                Some(b) => {
                    let jitter = self.nodes[n].rng.gen_range(0.0..beacon);
                    self.nodes[n].phase = Phase::Joining;
                    self.queue.push(jitter, Ev::JoinStart { node: n, epoch: 0, bs: b });
                }
                None => self.start_discovery(n, 0.0),
            }
            let (count, start, interval) = {
                let cfg = &self.nodes[n].cfg;
                (cfg.packet_count, cfg.start_s, cfg.packet_interval_s)
            };
            if count > 0 {
                let first = start + self.nodes[n].rng.gen_range(0.0..interval.min(1.0));
                self.queue.push(first, Ev::Generate(n));
            }
        }
        self.queue.push(0.0, Ev::Tick);
    }

    fn run_events(&mut self) {
        while let Some((t, ev)) = self.queue.pop() {
            if t > self.horizon {
                break;
            }
            match ev {
                Ev::Tick => self.on_tick(t),
                Ev::Generate(n) => self.on_generate(n, t),
                Ev::Attempt { node, epoch } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_attempt(node, t);
                    }
                }
                Ev::TxEnd { node, id, epoch } => self.on_tx_end(node, id, epoch, t),
                Ev::AckDone {
                    node,
                    epoch,
                    uplink_ok,
                    ack_ok,
                    residual_hz,
                } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_ack(node, t, uplink_ok, ack_ok, residual_hz);
                    }
                }
                Ev::JoinStart { node, epoch, bs } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_join_start(node, bs, t);
                    }
                }
                Ev::JoinDone {
                    node,
                    epoch,
                    bs,
                    ok,
                    bs_est,
                    dl_est,
                } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_join_done(node, bs, ok, bs_est, dl_est, t);
                    }
                }
                Ev::RetryDiscovery { node, epoch } => {
                    if self.nodes[node].epoch == epoch {
                        self.start_discovery(node, t);
                    }
                }
                Ev::DiscoveryDone { node, epoch, bs } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_discovery_done(node, bs, t);
                    }
                }
                Ev::AlignDone { node, epoch, bs, ok } => {
                    if self.nodes[node].epoch == epoch {
                        self.on_align_done(node, bs, ok, t);
                    }
                }
            }
        }
    }

    fn bump(&mut self, n: usize, phase: Phase) -> u64 {
        let node = &mut self.nodes[n];
        node.epoch += 1;
        node.phase = phase;
        node.active = false;
        node.epoch
    }

    // ---- mobility and range ----

    fn on_tick(&mut self, t: f64) {
        let pol = &self.scenario.policy;
        let hold = f64::from(pol.out_of_range_intervals) * pol.beacon_interval_s;
        let tick = pol.mobility_tick_s;
        for n in 0..self.nodes.len() {
            if self.nodes[n].phase != Phase::Associated {
                continue;
            }
            let Some(b) = self.nodes[n].bs else { continue };
            let rss = self.beacon_rss(b, self.pos(n, t));
            if rss >= self.link.sensitivity_dbm {
                self.nodes[n].below_since = None;
                continue;
            }
            let since = *self.nodes[n].below_since.get_or_insert(t);
            if t - since >= hold - 1e-12 {
                self.leave(n, t);
            }
        }
        if t + tick <= self.horizon {
            self.queue.push(t + tick, Ev::Tick);
        }
    }

    /// Out of range of the serving BS: release it and start looking.
    fn leave(&mut self, n: usize, t: f64) {
        let b = self.nodes[n].bs.take();
        let id = self.nodes[n].cfg.id;
        if let Some(b) = b {
            self.bss[b].members.remove(&id);
            self.bss[b].cfo_table.remove(&id);
            self.reassign(b);
        }
        let node = &mut self.nodes[n];
        if let Some(p) = node.inflight.take() {
            node.queue.push_front(p);
        }
        node.handoff = Some(HandoffRecord {
            node: id,
            from_bs: b.map(|b| self.bss[b].cfg.id),
            to_bs: None,
            from_subcarrier_hz: node.sc.map(|s| s.center_freq),
            to_subcarrier_hz: None,
            to_width_hz: None,
            started_s: t,
            discovery_s: 0.0,
            alignment_s: 0.0,
            join_s: 0.0,
            total_s: 0.0,
            completed: false,
        });
        node.sc = None;
        node.below_since = None;
        node.discovery_attempt = 0;
        self.start_discovery(n, t);
    }

    /// Recomputes the mobility-ordered assignment over the current members
    /// of BS `b` and moves associated nodes to their new subcarriers.
    fn reassign(&mut self, b: usize) {
        let profiles: Vec<MobilityProfile> = self.bss[b]
            .members
            .iter()
            .filter_map(|(id, (rate, _))| MobilityProfile::new(NodeId(*id), *rate).ok())
            .collect();
        let Ok(grants) = assign_by_mobility(&profiles, &self.bss[b].scores) else {
            return;
        };
        for (id, sc) in grants {
            if let Some(m) = self.bss[b].members.get_mut(&id.0) {
                m.1 = sc;
            }
            if let Some(node) = self.nodes.iter_mut().find(|x| x.cfg.id == id.0 && x.bs == Some(b)) {
                node.sc = Some(sc);
            }
        }
    }

    // ---- discovery ----

    fn start_discovery(&mut self, n: usize, t: f64) {
        let epoch = self.bump(n, Phase::Discovering);
        let pol = self.scenario.policy.clone();
        let width = self.nodes[n].cfg_width(&self.scenario);
        let hint = if pol.use_hint { self.nodes[n].hint.clone() } else { None };
        let plan = build_scan_plan(hint.as_deref(), &full_band(), pol.scan_strategy, width, pol.discovery_dwell_s)
            .or_else(|_| build_scan_plan(None, &full_band(), pol.scan_strategy, width, pol.discovery_dwell_s))
            .expect("full band plan is never empty");
        let plan = plan.prioritized(&self.nodes[n].memory.channels());
        let classifier = ClassifierConfig {
            sensitivity_dbm: pol.sensitivity_dbm,
            duty_threshold: pol.duty_threshold,
            variance_threshold_db2: pol.variance_threshold_db2,
            similarity_threshold_db: pol.similarity_threshold_db,
            min_window_s: pol.discovery_dwell_s.min(ClassifierConfig::default().min_window_s),
            retune_s: pol.retune_s,
            ..ClassifierConfig::default()
        };
        let pos = self.pos(n, t);
        let noise_dbm = self.link.noise_floor_dbm(plan.sense_bandwidth);
        let result = {
            let node = &mut self.nodes[n];
            let mut air = AirView {
                bss: &self.bss,
                map: &self.map,
                link: &self.link,
                pos,
                noise_dbm,
                synth: TraceSynth {
                    quiet_dbm: noise_dbm,
                    ..TraceSynth::default()
                },
                rng: &mut node.rng,
            };
            discover(&plan, &mut air, &classifier, &self.energy).expect("plan and traces are valid")
        };
        let node = &mut self.nodes[n];
        match pol.scan_strategy {
            ScanStrategy::Narrow => node.time.discovery += result.elapsed_s,
            ScanStrategy::Wide => node.time.wide_discovery += result.elapsed_s,
        }
        let found = result
            .found_channel
            .and_then(|ch| self.strongest_bs_on(pos, ch));
        let mut wait = result.elapsed_s;
        if found.is_none() {
            let node = &mut self.nodes[n];
            node.discovery_attempt += 1;
            wait += Backoff {
                base_s: pol.backoff_base_s,
                cap_s: pol.backoff_cap_s,
            }
            .delay(node.discovery_attempt);
        }
        if let Some(h) = self.nodes[n].handoff.as_mut() {
            h.discovery_s += wait;
        }
        if found.is_none() {
            self.queue.push(t + wait, Ev::RetryDiscovery { node: n, epoch });
        } else {
            self.queue.push(t + wait, Ev::DiscoveryDone { node: n, epoch, bs: found });
        }
    }

    /// The BS on `channel` a scanning node would lock onto, if any is audible.
    fn strongest_bs_on(&self, p: Point, channel: u32) -> Option<usize> {
        (0..self.bss.len())
            .filter(|&b| self.bss[b].cfg.channel == channel)
            .max_by(|a, b| self.beacon_rss(*a, p).total_cmp(&self.beacon_rss(*b, p)).then(b.cmp(a)))
    }

    fn on_discovery_done(&mut self, n: usize, bs: Option<usize>, t: f64) {
        let Some(b) = bs else {
            self.start_discovery(n, t);
            return;
        };
        let epoch = self.bump(n, Phase::Aligning);
        let (elapsed, ok) = self.run_alignment(n, b, t);
        self.nodes[n].time.alignment += elapsed;
        if let Some(h) = self.nodes[n].handoff.as_mut() {
            h.alignment_s += elapsed;
        }
        self.queue.push(t + elapsed, Ev::AlignDone { node: n, epoch, bs: b, ok });
    }

    fn align_config(&self) -> AlignConfig {
        let mut cfg = AlignConfig {
            timeout_s: self.scenario.policy.align_timeout_s,
            ..AlignConfig::default()
        };
        cfg.matching.noise_bin_mw = dbm_to_mw(crate::sim::link::THERMAL_NOISE_DBM_PER_HZ + self.link.noise_figure_db)
            * cfg.sample_rate;
        cfg
    }

    fn beacon_duration(&self, b: usize) -> f64 {
        f64::from(PREAMBLE_LEN as u32 + BEACON_PAYLOAD_BITS) / self.bss[b].join.symbol_rate()
    }

    /// Time to find the join subcarrier of BS `b` and whether it was found.
    fn run_alignment(&mut self, n: usize, b: usize, t: f64) -> (f64, bool) {
        let cfg = self.align_config();
        let windows = alignment_windows(self.bss[b].low, self.bss[b].high, &cfg);
        let pos = self.pos(n, t);
        let beacon_dbm = self.beacon_rss(b, pos);
        let interval = self.scenario.policy.beacon_interval_s;
        let duration = self.beacon_duration(b);
        let join = self.bss[b].join;
        let phase = self.bss[b].beacon_phase;
        match self.fidelity {
            Fidelity::Analytic => {
                let half = cfg.matching.template_half_span.unwrap_or(cfg.sample_rate / 2.0);
                let Some(w) = windows
                    .iter()
                    .position(|c| (join.center_freq - c).abs() + join.bandwidth / 2.0 <= half + 1e-6)
                else {
                    return (cfg.timeout_s, false);
                };
                let noise_dbm = mw_to_dbm(cfg.matching.noise_bin_mw);
                let detectable = mw_to_dbm(dbm_to_mw(beacon_dbm) + dbm_to_mw(noise_dbm)) > cfg.busy_threshold_dbm;
                if !detectable {
                    return (cfg.timeout_s, false);
                }
                let sweep = cfg.window_dwell_s * windows.len() as f64;
                let capture = cfg.fft_size as f64 / cfg.sample_rate;
                let mut open = t + w as f64 * cfg.window_dwell_s;
                while open - t < cfg.timeout_s {
                    let k = ((open - phase) / interval).ceil();
                    let start = phase + k * interval;
                    if start < open + cfg.window_dwell_s {
                        let elapsed = start + capture - t;
                        return if elapsed <= cfg.timeout_s {
                            (elapsed, true)
                        } else {
                            (cfg.timeout_s, false)
                        };
                    }
                    open += sweep;
                }
                (cfg.timeout_s, false)
            }
            Fidelity::Mixed | Fidelity::Sample => {
                let offset = self.nodes[n].cfg.ppm * join.center_freq / 1e6
                    - radial_doppler(
                        pos,
                        self.nodes[n].track.velocity_at(t),
                        self.bss[b].cfg.location,
                        join.center_freq,
                    );
                let noise_per_hz = cfg.matching.noise_bin_mw / ALIGN_SAMPLE_RATE;
                let node = &mut self.nodes[n];
                let mut air = BeaconAir {
                    join,
                    beacon_power_mw: dbm_to_mw(beacon_dbm),
                    interval_s: interval,
                    phase_s: phase,
                    duration_s: duration,
                    rx_offset_hz: offset,
                    noise_mw_per_hz: noise_per_hz,
                    tone_spacing_hz: BEACON_TONE_SPACING_HZ,
                    rng: &mut node.rng,
                };
                match align(&mut air, &windows, t, &cfg, &self.energy) {
                    Ok(r) => {
                        let ok = r.subcarrier.is_some_and(|s| same_subcarrier(&s, &join));
                        (r.elapsed_s, ok)
                    }
                    Err(_) => (cfg.timeout_s, false),
                }
            }
        }
    }

    fn on_align_done(&mut self, n: usize, b: usize, ok: bool, t: f64) {
        if !ok {
            self.nodes[n].discovery_attempt += 1;
            let pol = &self.scenario.policy;
            let wait = Backoff {
                base_s: pol.backoff_base_s,
                cap_s: pol.backoff_cap_s,
            }
            .delay(self.nodes[n].discovery_attempt);
            let epoch = self.bump(n, Phase::Discovering);
            if let Some(h) = self.nodes[n].handoff.as_mut() {
                h.discovery_s += wait;
            }
            self.queue.push(t + wait, Ev::RetryDiscovery { node: n, epoch });
            return;
        }
        let epoch = self.bump(n, Phase::Joining);
        self.nodes[n].join_attempt = 0;
        self.on_join_start_epoch(n, b, t, epoch);
    }

    // ---- join ----

    fn on_join_start(&mut self, n: usize, b: usize, t: f64) {
        let epoch = self.nodes[n].epoch;
        self.on_join_start_epoch(n, b, t, epoch);
    }

    fn on_join_start_epoch(&mut self, n: usize, b: usize, t: f64, epoch: u64) {
        let join = self.bss[b].join;
        let rate = join.symbol_rate();
        let req_bits = PREAMBLE_LEN as u32 + JOIN_PAYLOAD_BITS;
        let air = f64::from(req_bits) / rate;
        let duration = air + JOIN_TURNAROUND_S + air;
        let pos = self.pos(n, t);
        let bs_loc = self.bss[b].cfg.location;
        let scheme = self.scenario.policy.modulation;
        let noise = self.noise_mw(join.bandwidth);
        let up_dbm = self.link.rx_power_dbm(self.nodes[n].cfg.tx_power_dbm, pos, bs_loc, join.center_freq)
            + self.fading_db(n);
        let down_dbm = self.beacon_rss(b, pos) + self.fading_db(n);
        let up_offset = self.true_offset(n, b, join.center_freq, t);
        let doppler = up_offset - self.nodes[n].cfg.ppm * join.center_freq / 1e6;
        let down_offset = doppler - self.nodes[n].cfg.ppm * join.center_freq / 1e6;

        let sens = self.link.sensitivity_dbm;
        let up_snr = up_dbm - mw_to_dbm(noise);
        let down_snr = down_dbm - mw_to_dbm(noise);
        let node = &mut self.nodes[n];
        node.time.join_tx += air;
        node.time.rx += JOIN_TURNAROUND_S + air;
        let up_ok = up_dbm >= sens
            && node.rng.gen::<f64>() >= packet_error_probability(up_snr, up_offset, rate, req_bits, scheme);
        let down_ok = down_dbm >= sens
            && node.rng.gen::<f64>() >= packet_error_probability(down_snr, 0.0, rate, req_bits, scheme);
        let ok = up_ok && down_ok;
        let (bs_est, dl_est) = if ok {
            match self.fidelity {
                Fidelity::Analytic => {
                    let est = CfoEstimator {
                        scheme,
                        ..CfoEstimator::new(rate)
                    };
                    let fs = rate * crate::sim::phy::PREAMBLE_OVERSAMPLING as f64;
                    let per_sample = |snr_db: f64| dbm_to_mw(snr_db) / crate::sim::phy::PREAMBLE_OVERSAMPLING as f64;
                    let su = est.estimate_std(fs, per_sample(up_snr));
                    let sd = est.estimate_std(fs, per_sample(down_snr));
                    let nu: f64 = Normal::new(0.0, su).expect("finite std").sample(&mut node.rng);
                    let nd: f64 = Normal::new(0.0, sd).expect("finite std").sample(&mut node.rng);
                    (
                        Some(CfoEstimate::new(up_offset + nu, join.center_freq, t)),
                        Some(CfoEstimate::new(down_offset + nd, join.center_freq, t)),
                    )
                }
                Fidelity::Mixed | Fidelity::Sample => (
                    estimate_preamble_offset(&join, scheme, up_offset, dbm_to_mw(up_dbm), noise, t, &mut node.rng),
                    estimate_preamble_offset(&join, scheme, down_offset, dbm_to_mw(down_dbm), noise, t, &mut node.rng),
                ),
            }
        } else {
            (None, None)
        };
        let ok = ok && bs_est.is_some() && dl_est.is_some();
        if let Some(h) = node.handoff.as_mut() {
            h.join_s += duration;
        }
        self.queue.push(
            t + duration,
            Ev::JoinDone {
                node: n,
                epoch,
                bs: b,
                ok,
                bs_est,
                dl_est,
            },
        );
    }

    fn on_join_done(
        &mut self,
        n: usize,
        b: usize,
        ok: bool,
        bs_est: Option<CfoEstimate>,
        dl_est: Option<CfoEstimate>,
        t: f64,
    ) {
        if !ok {
            self.nodes[n].join_attempt += 1;
            if self.nodes[n].join_attempt > self.csma.retry_limit {
                self.nodes[n].join_attempt = 0;
                if self.nodes[n].handoff.is_none() {
                    self.nodes[n].handoff = Some(HandoffRecord {
                        node: self.nodes[n].cfg.id,
                        from_bs: None,
                        to_bs: None,
                        from_subcarrier_hz: None,
                        to_subcarrier_hz: None,
                        to_width_hz: None,
                        started_s: t,
                        discovery_s: 0.0,
                        alignment_s: 0.0,
                        join_s: 0.0,
                        total_s: 0.0,
                        completed: false,
                    });
                }
                self.start_discovery(n, t);
                return;
            }
            let join = self.bss[b].join;
            let air = f64::from(PREAMBLE_LEN as u32 + JOIN_PAYLOAD_BITS) / join.symbol_rate();
            let attempt = self.nodes[n].join_attempt;
            let wait = backoff_delay(attempt, air, &self.csma, &mut self.nodes[n].rng) + CCA_S;
            self.nodes[n].time.rx += CCA_S;
            if let Some(h) = self.nodes[n].handoff.as_mut() {
                h.join_s += wait;
            }
            let epoch = self.nodes[n].epoch;
            self.queue.push(t + wait, Ev::JoinStart { node: n, epoch, bs: b });
            return;
        }
        let id = self.nodes[n].cfg.id;
        let rate = self.nodes[n].cfg.assignment_rate();
        let bs_est = bs_est.expect("successful join carries estimates");
        let placeholder = self.bss[b].join;
        self.bss[b].members.insert(id, (rate, placeholder));
        self.bss[b].cfo_table.insert(id, bs_est);
        self.reassign(b);
        let sc = self.bss[b].members[&id].1;
        let channel = self.bss[b].cfg.channel;
        let bs_id = self.bss[b].cfg.id;
        let hint = self.bss[b].hint.clone();
        let compensate = self.scenario.policy.cfo_compensation;
        self.bump(n, Phase::Associated);
        let node = &mut self.nodes[n];
        node.bs = Some(b);
        node.first_bs.get_or_insert(b);
        node.sc = Some(sc);
        node.ppm_est = compensate.then_some(bs_est.ppm);
        node.last_estimate = t;
        node.dl_cfo = dl_est;
        node.memory.remember(channel);
        node.hint = Some(hint);
        node.join_attempt = 0;
        node.discovery_attempt = 0;
        node.below_since = None;
        if let Some(mut h) = node.handoff.take() {
            h.to_bs = Some(bs_id);
            h.to_subcarrier_hz = Some(sc.center_freq);
            h.to_width_hz = Some(sc.bandwidth);
            h.total_s = h.discovery_s + h.alignment_s + h.join_s;
            h.completed = true;
            if h.from_bs.is_some() {
                node.handoffs += 1;
            }
            self.handoffs.push(h);
        }
        self.kick(n, t);
    }

    // ---- data path ----

    fn on_generate(&mut self, n: usize, t: f64) {
        let node = &mut self.nodes[n];
        if node.generated >= node.cfg.packet_count {
            return;
        }
        node.queue.push_back(Packet {
            generated_at: t,
            attempts: 0,
            delivered: false,
        });
        node.generated += 1;
        node.first_packet.get_or_insert(t);
        self.first_generation = Some(self.first_generation.map_or(t, |f: f64| f.min(t)));
        if node.generated < node.cfg.packet_count {
            let next = t + node.cfg.packet_interval_s;
            self.queue.push(next, Ev::Generate(n));
        }
        self.kick(n, t);
    }

    /// Starts a transaction if the node is associated and idle.
    fn kick(&mut self, n: usize, t: f64) {
        let node = &mut self.nodes[n];
        if node.phase == Phase::Associated && !node.active && (node.inflight.is_some() || !node.queue.is_empty()) {
            node.active = true;
            let epoch = node.epoch;
            self.queue.push(t, Ev::Attempt { node: n, epoch });
        }
    }

    fn airtime_of(&self, n: usize) -> f64 {
        let sc = self.nodes[n].sc.expect("associated node has a subcarrier");
        packet_airtime(self.nodes[n].cfg.packet_bytes, sc.symbol_rate())
    }

    fn on_attempt(&mut self, n: usize, t: f64) {
        if self.nodes[n].phase != Phase::Associated {
            return;
        }
        if self.nodes[n].inflight.is_none() {
            let Some(p) = self.nodes[n].queue.pop_front() else {
                self.nodes[n].active = false;
                return;
            };
            self.nodes[n].inflight = Some(p);
        }
        let b = self.nodes[n].bs.expect("associated node has a BS");
        let sc = self.nodes[n].sc.expect("associated node has a subcarrier");
        let pos = self.pos(n, t);
        self.nodes[n].time.rx += CCA_S;
        let busy = self.active.iter().any(|tx| {
            tx.node != n
                && tx.start <= t
                && tx.end > t
                && (tx.sc.center_freq - sc.center_freq).abs() < 3e6
                && {
                    let p = self.link.rx_power_dbm(tx.tx_dbm, tx.pos, pos, tx.sc.center_freq)
                        + 10.0 * leakage(tx.sc.center_freq + tx.residual_hz - sc.center_freq, sc.symbol_rate()).log10();
                    p >= self.link.sensitivity_dbm
                }
        });
        let airtime = self.airtime_of(n);
        let epoch = self.nodes[n].epoch;
        if busy {
            let limit = self.csma.retry_limit;
            let p = self.nodes[n].inflight.as_mut().expect("packet in flight");
            p.attempts += 1;
            if p.attempts > limit {
                self.finish_packet(n, t);
                return;
            }
            let attempts = p.attempts;
            let wait = backoff_delay(attempts, airtime, &self.csma, &mut self.nodes[n].rng);
            self.queue.push(t + CCA_S + wait, Ev::Attempt { node: n, epoch });
            return;
        }
        let start = t + CCA_S;
        let freq = sc.center_freq;
        let actual = self.true_offset(n, b, freq, start);
        let residual = match self.nodes[n].ppm_est {
            Some(ppm) => actual - ppm * freq / 1e6,
            None => actual,
        };
        let fade = self.fading_db(n);
        let id = self.next_tx;
        self.next_tx += 1;
        let bits = self.nodes[n].cfg.packet_bytes * 8;
        self.active.push(Transmission {
            id,
            node: n,
            bs: b,
            sc,
            residual_hz: residual,
            tx_dbm: self.nodes[n].cfg.tx_power_dbm,
            pos,
            fade_db: fade,
            start,
            end: start + airtime,
            bits,
        });
        self.nodes[n].time.data_tx += airtime;
        let tx_j = self.energy.tx_power_w() * airtime;
        self.window_row(n, start).tx_energy_j += tx_j;
        self.queue.push(start + airtime, Ev::TxEnd { node: n, id, epoch });
    }

    fn rx_power_mw(&self, tx: &Transmission, at: Point) -> f64 {
        dbm_to_mw(self.link.rx_power_dbm(tx.tx_dbm, tx.pos, at, tx.sc.center_freq) + tx.fade_db)
    }

    fn decode(&mut self, tx: &Transmission) -> bool {
        let bs_loc = self.bss[tx.bs].cfg.location;
        let signal = self.rx_power_mw(tx, bs_loc);
        if mw_to_dbm(signal) < self.link.sensitivity_dbm {
            return false;
        }
        let dur = tx.end - tx.start;
        let rate = tx.sc.symbol_rate();
        let overlapping: Vec<&Transmission> = self
            .active
            .iter()
            .chain(self.finished.iter())
            .filter(|j| j.id != tx.id)
            .filter(|j| j.end.min(tx.end) - j.start.max(tx.start) > 0.0)
            .filter(|j| (j.sc.center_freq - tx.sc.center_freq).abs() < 3e6)
            .collect();
        let scheme = self.scenario.policy.modulation;
        let noise = self.noise_mw(tx.sc.bandwidth);
        match self.fidelity {
            Fidelity::Sample => {
                let rng = &mut self.nodes[tx.node].rng;
                let random_bits = |k: u32, rng: &mut ChaCha8Rng| (0..k).map(|_| rng.gen_range(0..2u8)).collect();
                let interferers: Vec<Arrival> = overlapping
                    .iter()
                    .map(|j| Arrival {
                        subcarrier: j.sc,
                        residual_hz: j.residual_hz,
                        power_mw: dbm_to_mw(self.link.rx_power_dbm(j.tx_dbm, j.pos, bs_loc, j.sc.center_freq) + j.fade_db),
                        bits: random_bits(j.bits, rng),
                        start_s: j.start - tx.start,
                    })
                    .collect();
                let target = Arrival {
                    subcarrier: tx.sc,
                    residual_hz: tx.residual_hz,
                    power_mw: signal,
                    bits: random_bits(tx.bits, rng),
                    start_s: 0.0,
                };
                receive_packet(&target, &interferers, scheme, noise, rng)
            }
            Fidelity::Analytic | Fidelity::Mixed => {
                let interference: f64 = overlapping
                    .iter()
                    .map(|j| {
                        let overlap = (j.end.min(tx.end) - j.start.max(tx.start)) / dur;
                        let p = self.rx_power_mw(j, bs_loc);
                        p * leakage(j.sc.center_freq + j.residual_hz - tx.sc.center_freq, rate) * overlap
                    })
                    .sum();
                let sinr = mw_to_dbm(signal) - mw_to_dbm(noise + interference);
                let pep = packet_error_probability(sinr, tx.residual_hz, rate, tx.bits, scheme);
                self.nodes[tx.node].rng.gen::<f64>() >= pep
            }
        }
    }

    fn on_tx_end(&mut self, n: usize, id: u64, epoch: u64, t: f64) {
        let Some(k) = self.active.iter().position(|tx| tx.id == id) else {
            return;
        };
        let ok = {
            let tx = &self.active[k];
            let tx = Transmission { ..*tx };
            self.decode(&tx)
        };
        let tx = self.active.swap_remove(k);
        let residual = tx.residual_hz;
        let bs_loc = self.bss[tx.bs].cfg.location;
        let sc = tx.sc;
        self.finished.push(tx);
        let horizon = t - self.max_airtime - CCA_S;
        self.finished.retain(|f| f.end >= horizon);

        self.nodes[n].transmissions += 1;
        if ok {
            self.nodes[n].decoded += 1;
        }
        {
            let row = self.window_row(n, t);
            row.transmissions += 1;
            if ok {
                row.decoded += 1;
            }
        }
        if self.nodes[n].epoch != epoch {
            return;
        }
        let b = self.nodes[n].bs.expect("associated node has a BS");
        let ack_bits = PREAMBLE_LEN as u32 + ACK_PAYLOAD_BITS;
        let ack_air = f64::from(ack_bits) / sc.symbol_rate();
        self.nodes[n].time.rx += ACK_TURNAROUND_S + ack_air;
        let ack_ok = ok && {
            let pos = self.pos(n, t);
            let down = self.link.rx_power_dbm(self.bss[b].cfg.tx_power_dbm, bs_loc, pos, sc.center_freq)
                + self.fading_db(n);
            let snr = down - mw_to_dbm(self.noise_mw(sc.bandwidth));
            let scheme = self.scenario.policy.modulation;
            down >= self.link.sensitivity_dbm
                && self.nodes[n].rng.gen::<f64>()
                    >= packet_error_probability(snr, 0.0, sc.symbol_rate(), ack_bits, scheme)
        };
        self.queue.push(
            t + ACK_TURNAROUND_S + ack_air,
            Ev::AckDone {
                node: n,
                epoch,
                uplink_ok: ok,
                ack_ok,
                residual_hz: residual,
            },
        );
    }

    fn on_ack(&mut self, n: usize, t: f64, uplink_ok: bool, ack_ok: bool, residual_hz: f64) {
        if uplink_ok {
            let first = {
                let p = self.nodes[n].inflight.as_mut().expect("packet in flight");
                !std::mem::replace(&mut p.delivered, true)
            };
            if first {
                let generated_at = self.nodes[n].inflight.as_ref().map(|p| p.generated_at).unwrap_or(t);
                self.nodes[n].delivered += 1;
                self.nodes[n].latency_sum += t - generated_at;
                self.delivered_bits += f64::from(self.nodes[n].cfg.packet_bytes * 8);
                self.last_delivery = Some(t);
                self.window_row(n, t).delivered += 1;
            }
            self.refresh_cfo(n, t, residual_hz);
        }
        if ack_ok {
            self.finish_packet(n, t);
            return;
        }
        let limit = self.csma.retry_limit;
        let p = self.nodes[n].inflight.as_mut().expect("packet in flight");
        p.attempts += 1;
        if p.attempts > limit {
            self.finish_packet(n, t);
            return;
        }
        let attempts = p.attempts;
        let airtime = self.airtime_of(n);
        let wait = backoff_delay(attempts, airtime, &self.csma, &mut self.nodes[n].rng);
        let epoch = self.nodes[n].epoch;
        self.queue.push(t + wait, Ev::Attempt { node: n, epoch });
    }

    /// The BS measures the residual on every decoded packet and returns a
    /// corrected offset in the ACK once the refresh period has passed.
    fn refresh_cfo(&mut self, n: usize, t: f64, residual_hz: f64) {
        let period = self.scenario.policy.reestimation_period_s;
        let node = &self.nodes[n];
        let (Some(ppm), Some(sc), Some(b)) = (node.ppm_est, node.sc, node.bs) else {
            return;
        };
        if t - node.last_estimate < period {
            return;
        }
        let rate = sc.symbol_rate();
        let scheme = self.scenario.policy.modulation;
        let est = CfoEstimator {
            scheme,
            ..CfoEstimator::new(rate)
        };
        let pos = self.pos(n, t);
        let snr_db = self.link.rx_power_dbm(node.cfg.tx_power_dbm, pos, self.bss[b].cfg.location, sc.center_freq)
            - self.link.noise_floor_dbm(sc.bandwidth);
        let over = crate::sim::phy::PREAMBLE_OVERSAMPLING as f64;
        let std = est.estimate_std(rate * over, dbm_to_mw(snr_db) / over);
        let noise: f64 = Normal::new(0.0, std).expect("finite std").sample(&mut self.nodes[n].rng);
        let new_ppm = ppm + (residual_hz + noise) * 1e6 / sc.center_freq;
        let id = self.nodes[n].cfg.id;
        let join_freq = self.bss[b].join.center_freq;
        self.bss[b]
            .cfo_table
            .insert(id, CfoEstimate::from_ppm(new_ppm, join_freq, t));
        let node = &mut self.nodes[n];
        node.ppm_est = Some(new_ppm);
        node.last_estimate = t;
    }

    fn finish_packet(&mut self, n: usize, t: f64) {
        let p = self.nodes[n].inflight.take().expect("packet in flight");
        if !p.delivered {
            self.nodes[n].dropped += 1;
            self.window_row(n, t).dropped += 1;
        }
        let node = &mut self.nodes[n];
        node.last_finish = Some(t);
        node.active = false;
        self.kick(n, t);
    }

    // ---- reporting ----

    fn report(self) -> MetricsReport {
        let h = self.horizon;
        let e = &self.energy;
        let mut windows = Vec::new();
        let mut nodes = Vec::new();
        for node in &self.nodes {
            let s = &node.time;
            let tx_s = s.data_tx + s.join_tx;
            let busy = tx_s + s.rx + s.discovery + s.wide_discovery + s.alignment;
            let idle_s = (h - busy).max(0.0);
            let tx_j = e.tx_power_w() * tx_s;
            let rx_j = e.rx_power_w() * s.rx;
            let discovery_j = e.rx_power_w() * (s.discovery + e.wide_sense_factor * s.wide_discovery);
            let alignment_j = e.rx_power_w() * s.alignment;
            let idle_j = e.idle_power_w() * idle_s;
            let pending = node.generated - node.delivered - node.dropped;
            let bs = node.bs.map(|b| &self.bss[b]);
            nodes.push(NodeMetrics {
                node: node.cfg.id,
                mobile: node.cfg.is_mobile(),
                speed_mps: node.cfg.speed(),
                distance_m: node.first_bs.map(|b| closest_approach(&self.bss[b].cfg.location, &node.cfg.path())),
                generated: node.generated,
                delivered: node.delivered,
                dropped: node.dropped,
                pending,
                transmissions: node.transmissions,
                decoded: node.decoded,
                per: (node.delivered + node.dropped > 0)
                    .then(|| f64::from(node.dropped) / f64::from(node.delivered + node.dropped)),
                cdr: (node.transmissions > 0).then(|| f64::from(node.decoded) / f64::from(node.transmissions)),
                mean_latency_s: (node.delivered > 0).then(|| node.latency_sum / f64::from(node.delivered)),
                collection_time_s: node.first_packet.zip(node.last_finish).map(|(a, b)| b - a),
                handoffs: node.handoffs,
                final_bs: bs.map(|b| b.cfg.id),
                final_subcarrier_hz: node.sc.map(|s| s.center_freq),
                final_width_hz: node.sc.map(|s| s.bandwidth),
                bs_cfo_hz: bs.and_then(|b| b.cfo_table.get(&node.cfg.id)).map(|c| c.delta_f),
                node_cfo_hz: node.dl_cfo.map(|c| c.delta_f),
                energy: EnergyBreakdown {
                    data_tx_s: s.data_tx,
                    join_tx_s: s.join_tx,
                    rx_s: s.rx,
                    discovery_s: s.discovery,
                    wide_discovery_s: s.wide_discovery,
                    alignment_s: s.alignment,
                    idle_s,
                    tx_j,
                    rx_j,
                    discovery_j,
                    alignment_j,
                    idle_j,
                    total_j: tx_j + rx_j + discovery_j + alignment_j + idle_j,
                },
            });
            windows.extend(node.windows.values().cloned());
        }
        let mut handoffs = self.handoffs.clone();
        for node in &self.nodes {
            if let Some(h) = &node.handoff {
                let mut h = h.clone();
                h.total_s = h.discovery_s + h.alignment_s + h.join_s;
                handoffs.push(h);
            }
        }
        handoffs.sort_by(|a, b| a.started_s.total_cmp(&b.started_s).then(a.node.cmp(&b.node)));
        let span = self.first_generation.zip(self.last_delivery).map(|(a, b)| b - a);
        let completed = handoffs.iter().filter(|h| h.completed && h.from_bs.is_some()).count();
        let aggregate = Aggregate::from_nodes(&nodes, completed, span, self.delivered_bits);
        MetricsReport {
            scenario: self.scenario.name.clone(),
            seed: self.seed,
            fidelity: self.fidelity,
            horizon_s: h,
            cfo_compensation: self.scenario.policy.cfo_compensation,
            aggregate,
            nodes,
            handoffs,
            windows,
        }
    }
}

impl NodeState {
    /// Sensing bandwidth per channel: the widest subcarrier the node may use.
    fn cfg_width(&self, sc: &Scenario) -> f64 {
        self.sc.map(|s| s.bandwidth).unwrap_or_else(|| {
            sc.base_stations
                .iter()
                .map(|b| b.subcarrier_width_hz)
                .fold(200e3, f64::min)
        })
    }
}

/// What a scanning node hears on each channel.
struct AirView<'a> {
    bss: &'a [BaseStation],
    map: &'a SpectrumMap,
    link: &'a LinkBudget,
    pos: Point,
    noise_dbm: f64,
    synth: TraceSynth,
    rng: &'a mut ChaCha8Rng,
}

impl AirView<'_> {
    fn bs_level(&self, ch: u32) -> Option<f64> {
        self.bss
            .iter()
            .filter(|b| b.cfg.channel == ch)
            .map(|b| self.link.rx_power_dbm(b.cfg.tx_power_dbm, b.cfg.location, self.pos, b.join.center_freq))
            .reduce(f64::max)
    }

    fn tv_level(&self, ch: u32) -> Option<f64> {
        self.map.tv_rss(ch, self.pos)
    }

    fn level(&self, ch: u32) -> f64 {
        [self.bs_level(ch), self.tv_level(ch)]
            .into_iter()
            .flatten()
            .fold(self.noise_dbm, f64::max)
    }
}

impl SpectrumObserver for AirView<'_> {
    fn observe(&mut self, channel: u32, window_s: f64) -> SignalTrace {
        let adjacent = self.level(channel.saturating_sub(1)).max(self.level(channel + 1));
        let tv = self.tv_level(channel).filter(|p| *p > self.noise_dbm + 3.0);
        let bs = self.bs_level(channel).filter(|p| *p > self.noise_dbm);
        match (tv, bs) {
            (Some(p), _) => self.synth.tv_trace(channel, p, adjacent, window_s, self.rng),
            (None, Some(p)) => {
                let bursts = BurstProfile {
                    activity: BS_ACTIVITY,
                    ..BurstProfile::default()
                };
                self.synth.bs_trace(channel, p, &bursts, adjacent, window_s, self.rng)
            }
            (None, None) => self.synth.noise_trace(channel, self.noise_dbm, adjacent, window_s, self.rng),
        }
    }
}
