//! Base-station discovery for nodes that have left their serving cell.
//!
//! A node listens (never transmits) on candidate TV channels, reduces each
//! RSS trace to four features and classifies it as a TV broadcast, a SNOW
//! base station or plain noise. TV signals are strong, steady and always on;
//! base-station traffic is bursty and its envelope fluctuates.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyModel;
use crate::spectrum::{all_channels, channel_center, EightPointEntry};
use crate::units::{dbm_to_mw, mw_to_dbm};

#[derive(Debug, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("observation window {window_s} s shorter than the {min_s} s minimum")]
    WindowTooShort { window_s: f64, min_s: f64 },
    #[error("signal trace has no samples")]
    EmptyTrace,
    #[error("scan plan has no candidate channels")]
    EmptyPlan,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, DiscoveryError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub rss_series: Vec<f64>,
    pub window_s: f64,
    pub channel: u32,
    /// Mean RSS of the two neighbouring channels, dBm.
    pub adjacent_rss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub mean_rss: f64,
    pub amplitude_variance: f64,
    pub duty_cycle: f64,
    pub adjacent_similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Tv,
    SnowBs,
    Noise,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Tv => "TV",
            Verdict::SnowBs => "SNOW_BS",
            Verdict::Noise => "NOISE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub confidence: f64,
    pub features: Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub sensitivity_dbm: f64,
    pub tv_threshold_dbm: f64,
    pub duty_threshold: f64,
    pub variance_threshold_db2: f64,
    pub similarity_threshold_db: f64,
    pub min_window_s: f64,
    pub retune_s: f64,
    /// Readings above `noise_floor_dbm + duty_margin_db` count as "on".
    pub noise_floor_dbm: f64,
    pub duty_margin_db: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            sensitivity_dbm: -110.0,
            tv_threshold_dbm: -84.0,
            duty_threshold: 0.9,
            variance_threshold_db2: 1.0,
            similarity_threshold_db: 6.0,
            min_window_s: 0.1,
            retune_s: 1e-3,
            noise_floor_dbm: -110.0,
            duty_margin_db: 3.0,
        }
    }
}


pub fn extract_features(trace: &SignalTrace, cfg: &ClassifierConfig) -> Result<Features> {
    if !(trace.window_s >= cfg.min_window_s) {
        return Err(DiscoveryError::WindowTooShort {
            window_s: trace.window_s,
            min_s: cfg.min_window_s,
        });
    }
    if trace.rss_series.is_empty() {
        return Err(DiscoveryError::EmptyTrace);
    }
    let n = trace.rss_series.len() as f64;
    let mean_rss = mw_to_dbm(trace.rss_series.iter().map(|&x| dbm_to_mw(x)).sum::<f64>() / n);
    let cut = cfg.noise_floor_dbm + cfg.duty_margin_db;
    let on: Vec<f64> = trace.rss_series.iter().copied().filter(|&x| x > cut).collect();
    let amplitude_variance = if on.len() < 2 {
        0.0
    } else {
        let m = on.iter().sum::<f64>() / on.len() as f64;
        on.iter().map(|x| (x - m).powi(2)).sum::<f64>() / on.len() as f64
    };
    Ok(Features {
        mean_rss,
        amplitude_variance,
        duty_cycle: on.len() as f64 / n,
        adjacent_similarity: (mean_rss - trace.adjacent_rss).abs(),
    })
}

/// Rule table. A steady, continuous signal that is too weak for the TV
/// threshold and unlike its neighbours is still a primary user, so it falls
/// back to `Tv` rather than being offered as a base station.
pub fn classify(f: &Features, cfg: &ClassifierConfig) -> Classification {
    let clamp = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    if f.mean_rss < cfg.sensitivity_dbm {
        return Classification {
            verdict: Verdict::Noise,
            confidence: clamp((cfg.sensitivity_dbm - f.mean_rss) / 10.0),
            features: *f,
        };
    }
    let var_margin = (f.amplitude_variance - cfg.variance_threshold_db2) / cfg.variance_threshold_db2;
    let duty_margin = (cfg.duty_threshold - f.duty_cycle) / cfg.duty_threshold;
    let sim_margin = (cfg.similarity_threshold_db - f.adjacent_similarity) / cfg.similarity_threshold_db;
    let bs_like = f.amplitude_variance > cfg.variance_threshold_db2
        || f.duty_cycle < cfg.duty_threshold
        || f.adjacent_similarity <= cfg.similarity_threshold_db;
    if bs_like {
        let m = var_margin.max(duty_margin).max(sim_margin);
        return Classification {
            verdict: Verdict::SnowBs,
            confidence: clamp(m),
            features: *f,
        };
    }
    let rss_margin = (f.mean_rss - cfg.tv_threshold_dbm) / 10.0;
    let m = rss_margin.min(-var_margin).min(-duty_margin).min(-sim_margin);
    Classification {
        verdict: Verdict::Tv,
        confidence: clamp(m),
        features: *f,
    }
}

pub fn classify_trace(trace: &SignalTrace, cfg: &ClassifierConfig) -> Result<Classification> {
    Ok(classify(&extract_features(trace, cfg)?, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanStrategy {
    /// Senses one channel per visit with the node's own subcarrier bandwidth.
    Narrow,
    /// Senses two adjacent channels per visit at twice the bandwidth.
    Wide,
}

impl ScanStrategy {
    pub fn channels_per_visit(self) -> usize {
        match self {
            ScanStrategy::Narrow => 1,
            ScanStrategy::Wide => 2,
        }
    }
}

impl std::str::FromStr for ScanStrategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "narrow" => Ok(ScanStrategy::Narrow),
            "wide" => Ok(ScanStrategy::Wide),
            other => Err(format!("unknown scan strategy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub channels: Vec<u32>,
    pub strategy: ScanStrategy,
    pub sense_bandwidth: f64,
    pub dwell_s: f64,
}

impl ScanPlan {
    /// Channel groups sensed together, in visit order.
    pub fn visits(&self) -> impl Iterator<Item = &[u32]> {
        self.channels.chunks(self.strategy.channels_per_visit())
    }

    pub fn visit_count(&self) -> usize {
        self.visits().count()
    }

    /// Moves `first` (in the given order) to the front, keeping the rest.
    pub fn prioritized(&self, first: &[u32]) -> ScanPlan {
        let mut seen = BTreeSet::new();
        let channels = first
            .iter()
            .filter(|c| self.channels.contains(c))
            .chain(&self.channels)
            .copied()
            .filter(|&c| seen.insert(c))
            .collect();
        ScanPlan {
            channels,
            ..self.clone()
        }
    }
}

pub fn full_band() -> Vec<u32> {
    all_channels().collect()
}

pub fn build_scan_plan(
    hint: Option<&[EightPointEntry]>,
    full_band: &[u32],
    strategy: ScanStrategy,
    subcarrier_bandwidth: f64,
    dwell_s: f64,
) -> Result<ScanPlan> {
    if !(subcarrier_bandwidth > 0.0 && dwell_s > 0.0) {
        return Err(DiscoveryError::InvalidArgument(format!(
            "bandwidth {subcarrier_bandwidth} and dwell {dwell_s} must be positive"
        )));
    }
    let set: BTreeSet<u32> = match hint {
        Some(entries) => entries
            .iter()
            .filter_map(|e| e.channels.as_ref())
            .flatten()
            .copied()
            .collect(),
        None => full_band.iter().copied().collect(),
    };
    if set.is_empty() {
        return Err(DiscoveryError::EmptyPlan);
    }
    let mut channels: Vec<u32> = set.into_iter().collect();
    channels.sort_by(|a, b| {
        let fa = channel_center(*a).unwrap_or(f64::from(*a));
        let fb = channel_center(*b).unwrap_or(f64::from(*b));
        fa.total_cmp(&fb)
    });
    let sense_bandwidth = subcarrier_bandwidth * strategy.channels_per_visit() as f64;
    Ok(ScanPlan {
        channels,
        strategy,
        sense_bandwidth,
        dwell_s,
    })
}

/// Passive access to the air on a channel.
pub trait SpectrumObserver {
    fn observe(&mut self, channel: u32, window_s: f64) -> SignalTrace;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub found_channel: Option<u32>,
    pub elapsed_s: f64,
    pub energy_j: f64,
    pub channels_visited: usize,
    pub classifications: Vec<(u32, Verdict)>,
}

/// Elapsed time after `visits` dwells; retuning happens between visits only.
pub fn scan_elapsed(visits: usize, dwell_s: f64, retune_s: f64) -> f64 {
    if visits == 0 {
        0.0
    } else {
        visits as f64 * dwell_s + (visits - 1) as f64 * retune_s
    }
}

pub fn scan_energy(elapsed_s: f64, strategy: ScanStrategy, energy: &EnergyModel) -> f64 {
    let factor = match strategy {
        ScanStrategy::Narrow => 1.0,
        ScanStrategy::Wide => energy.wide_sense_factor,
    };
    energy.rx_power_w() * factor * elapsed_s
}

/// Walks the plan, stopping at the first base-station verdict.
pub fn discover<O: SpectrumObserver + ?Sized>(
    plan: &ScanPlan,
    observer: &mut O,
    cfg: &ClassifierConfig,
    energy: &EnergyModel,
) -> Result<DiscoveryResult> {
    if plan.channels.is_empty() {
        return Err(DiscoveryError::EmptyPlan);
    }
    let mut visits = 0;
    let mut channels_visited = 0;
    let mut classifications = Vec::new();
    let mut found = None;
    for group in plan.visits() {
        visits += 1;
        for &ch in group {
            channels_visited += 1;
            let c = classify_trace(&observer.observe(ch, plan.dwell_s), cfg)?;
            classifications.push((ch, c.verdict));
            if c.verdict == Verdict::SnowBs {
                found = Some(ch);
                break;
            }
        }
        if found.is_some() {
            break;
        }
    }
    let elapsed_s = scan_elapsed(visits, plan.dwell_s, cfg.retune_s);
    Ok(DiscoveryResult {
        found_channel: found,
        elapsed_s,
        energy_j: scan_energy(elapsed_s, plan.strategy, energy),
        channels_visited,
        classifications,
    })
}

/// Exponential retry delay after an exhausted scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    pub base_s: f64,
    pub cap_s: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base_s: 1.0,
            cap_s: 60.0,
        }
    }
}

impl Backoff {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> f64 {
        (self.base_s * 2f64.powi(attempt.min(62) as i32)).min(self.cap_s)
    }
}

/// Most-recently-used serving channels; capacity 0 disables it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelMemory {
    capacity: usize,
    recent: VecDeque<u32>,
}

impl ChannelMemory {
    pub const DEFAULT_CAPACITY: usize = 4;

    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            recent: VecDeque::with_capacity(capacity),
        }
    }

    pub fn remember(&mut self, channel: u32) {
        if self.capacity == 0 {
            return;
        }
        self.recent.retain(|&c| c != channel);
        self.recent.push_front(channel);
        self.recent.truncate(self.capacity);
    }

    /// Most recent first.
    pub fn channels(&self) -> Vec<u32> {
        self.recent.iter().copied().collect()
    }
}

/// Synthetic RSS trace families used to exercise the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSynth {
    /// Reading period, seconds.
    pub reading_period_s: f64,
    /// Raw power samples averaged per reading.
    pub samples_per_reading: usize,
    /// Level of the quiet air in noiseless traces, dBm.
    pub quiet_dbm: f64,
    /// Signal-to-noise ratio of each raw sample; `None` for noiseless traces.
    pub snr_db: Option<f64>,
}

impl Default for TraceSynth {
    fn default() -> Self {
        Self {
            reading_period_s: 1e-3,
            samples_per_reading: 64,
            quiet_dbm: -120.0,
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstProfile {
    /// Long-run fraction of time the base station is on the air.
    pub activity: f64,
    /// Mean burst length in readings.
    pub mean_burst_readings: f64,
    /// Per-burst envelope spread, dB.
    pub fading_db: f64,
}

impl Default for BurstProfile {
    fn default() -> Self {
        Self {
            activity: 0.4,
            mean_burst_readings: 3.0,
            fading_db: 3.0,
        }
    }
}

impl TraceSynth {
    fn readings(&self, window_s: f64) -> usize {
        ((window_s / self.reading_period_s).round() as usize).max(1)
    }

    /// One averaged reading of `signal_mw` (constant envelope, random phase)
    /// in complex Gaussian noise of power `noise_mw`.
    fn reading<R: Rng + ?Sized>(&self, signal_mw: f64, noise_mw: f64, rng: &mut R) -> f64 {
        if noise_mw <= 0.0 {
            return mw_to_dbm(signal_mw.max(dbm_to_mw(self.quiet_dbm)));
        }
        let k = self.samples_per_reading.max(1);
        let sd = (noise_mw / 2.0).sqrt();
        let normal = Normal::new(0.0, sd).expect("finite noise");
        let amp = signal_mw.sqrt();
        let mut acc = 0.0;
        for _ in 0..k {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let re = amp * phase.cos() + normal.sample(rng);
            let im = amp * phase.sin() + normal.sample(rng);
            acc += re * re + im * im;
        }
        mw_to_dbm(acc / k as f64)
    }

    fn noise_for(&self, signal_dbm: f64) -> f64 {
        self.snr_db.map_or(0.0, |snr| dbm_to_mw(signal_dbm - snr))
    }

    /// Steady broadcast at `power_dbm`.
    pub fn tv_trace<R: Rng + ?Sized>(
        &self,
        channel: u32,
        power_dbm: f64,
        adjacent_rss: f64,
        window_s: f64,
        rng: &mut R,
    ) -> SignalTrace {
        let noise = self.noise_for(power_dbm);
        let s = dbm_to_mw(power_dbm);
        SignalTrace {
            rss_series: (0..self.readings(window_s)).map(|_| self.reading(s, noise, rng)).collect(),
            window_s,
            channel,
            adjacent_rss,
        }
    }

    /// On/off base-station traffic with per-burst fading around `power_dbm`.
    pub fn bs_trace<R: Rng + ?Sized>(
        &self,
        channel: u32,
        power_dbm: f64,
        bursts: &BurstProfile,
        adjacent_rss: f64,
        window_s: f64,
        rng: &mut R,
    ) -> SignalTrace {
        let noise = self.noise_for(power_dbm);
        let p_end = 1.0 / bursts.mean_burst_readings.max(1.0);
        let a = bursts.activity.clamp(1e-3, 0.999);
        let p_start = (p_end * a / (1.0 - a)).min(1.0);
        let fade = Normal::new(0.0, bursts.fading_db.max(0.0)).expect("finite spread");
        let mut on = rng.gen_bool(a);
        let mut level = power_dbm + fade.sample(rng);
        let mut series = Vec::with_capacity(self.readings(window_s));
        for _ in 0..self.readings(window_s) {
            let s = if on { dbm_to_mw(level) } else { 0.0 };
            series.push(self.reading(s, noise, rng));
            if on && rng.gen_bool(p_end) {
                on = false;
            } else if !on && rng.gen_bool(p_start) {
                on = true;
                level = power_dbm + fade.sample(rng);
            }
        }
        SignalTrace {
            rss_series: series,
            window_s,
            channel,
            adjacent_rss,
        }
    }

    /// Empty channel with receiver noise at `level_dbm`.
    pub fn noise_trace<R: Rng + ?Sized>(
        &self,
        channel: u32,
        level_dbm: f64,
        adjacent_rss: f64,
        window_s: f64,
        rng: &mut R,
    ) -> SignalTrace {
        let series = (0..self.readings(window_s))
            .map(|_| match self.snr_db {
                None => level_dbm,
                Some(_) => self.reading(0.0, dbm_to_mw(level_dbm), rng),
            })
            .collect();
        SignalTrace {
            rss_series: series,
            window_s,
            channel,
            adjacent_rss,
        }
    }
}

/// Draws a trace from one of the three reference families.
pub fn sample_family<R: Rng + ?Sized>(
    synth: &TraceSynth,
    family: Verdict,
    window_s: f64,
    rng: &mut R,
) -> SignalTrace {
    match family {
        Verdict::Tv => {
            let p = rng.gen_range(-80.0..-40.0);
            let diff = rng.gen_range(10.0..30.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            synth.tv_trace(30, p, p + diff, window_s, rng)
        }
        Verdict::SnowBs => {
            let p = rng.gen_range(-95.0..-60.0);
            let bursts = BurstProfile {
                activity: rng.gen_range(0.2..0.6),
                ..BurstProfile::default()
            };
            synth.bs_trace(30, p, &bursts, synth.quiet_dbm, window_s, rng)
        }
        Verdict::Noise => {
            let level = rng.gen_range(-125.0..-114.0);
            synth.noise_trace(30, level, level, window_s, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(series: Vec<f64>) -> SignalTrace {
        SignalTrace {
            rss_series: series,
            window_s: 0.1,
            channel: 21,
            adjacent_rss: -100.0,
        }
    }

    #[test]
    fn feature_examples() {
        let cfg = ClassifierConfig::default();
        let f = extract_features(&trace(vec![-60.0; 100]), &cfg).unwrap();
        assert!((f.mean_rss + 60.0).abs() < 1e-9);
        assert_eq!(f.amplitude_variance, 0.0);
        assert_eq!(f.duty_cycle, 1.0);

        let mut s = vec![-60.0; 50];
        s.extend(vec![-120.0; 50]);
        assert_eq!(extract_features(&trace(s), &cfg).unwrap().duty_cycle, 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = TraceSynth::default().bs_trace(21, -75.0, &BurstProfile::default(), -120.0, 0.1, &mut rng);
        let f = extract_features(&t, &cfg).unwrap();
        assert!(f.amplitude_variance > 3.0, "{f:?}");
        assert!(f.duty_cycle < 0.8, "{f:?}");

        let mut short = trace(vec![-60.0; 10]);
        short.window_s = 0.05;
        assert!(matches!(
            extract_features(&short, &cfg),
            Err(DiscoveryError::WindowTooShort { .. })
        ));
        assert_eq!(extract_features(&trace(vec![]), &cfg), Err(DiscoveryError::EmptyTrace));
    }

    #[test]
    fn rule_table_examples() {
        let cfg = ClassifierConfig::default();
        let f = |m, v, d, s| Features {
            mean_rss: m,
            amplitude_variance: v,
            duty_cycle: d,
            adjacent_similarity: s,
        };
        assert_eq!(classify(&f(-120.0, 9.0, 0.2, 0.0), &cfg).verdict, Verdict::Noise);
        let tv = classify(&f(-60.0, 0.1, 1.0, 20.0), &cfg);
        assert_eq!(tv.verdict, Verdict::Tv);
        assert!(tv.confidence > 0.0 && tv.confidence <= 1.0);
        let bs = classify(&f(-75.0, 6.0, 0.4, 1.0), &cfg);
        assert_eq!(bs.verdict, Verdict::SnowBs);
        assert!(bs.confidence > 0.5);
        assert_eq!(classify(&f(-95.0, 0.1, 1.0, 20.0), &cfg).verdict, Verdict::Tv);
    }

    #[test]
    fn plan_examples() {
        let hint = vec![
            EightPointEntry {
                location: Point::new(0.0, 0.0),
                channels: Some([22].into_iter().collect()),
            },
            EightPointEntry {
                location: Point::new(1.0, 0.0),
                channels: Some([21, 22].into_iter().collect()),
            },
            EightPointEntry {
                location: Point::new(2.0, 0.0),
                channels: None,
            },
        ];
        let p = build_scan_plan(Some(&hint), &full_band(), ScanStrategy::Narrow, 200e3, 0.1).unwrap();
        assert_eq!(p.channels, vec![21, 22]);
        assert_eq!(p.sense_bandwidth, 200e3);

        let narrow = build_scan_plan(None, &full_band(), ScanStrategy::Narrow, 200e3, 0.1).unwrap();
        assert_eq!(narrow.channels.len(), 38);
        assert_eq!(narrow.visit_count(), 38);
        let wide = build_scan_plan(None, &full_band(), ScanStrategy::Wide, 200e3, 0.1).unwrap();
        assert_eq!(wide.visit_count(), 19);
        assert_eq!(wide.sense_bandwidth, 400e3);

        assert_eq!(
            build_scan_plan(Some(&hint[2..]), &full_band(), ScanStrategy::Narrow, 200e3, 0.1),
            Err(DiscoveryError::EmptyPlan)
        );
        assert_eq!(narrow.prioritized(&[40, 14, 99]).channels[..3], [40, 14, 15]);
    }

    struct FixedWorld {
        bs_channel: Option<u32>,
        observed: Vec<u32>,
    }

    impl SpectrumObserver for FixedWorld {
        fn observe(&mut self, channel: u32, window_s: f64) -> SignalTrace {
            self.observed.push(channel);
            let series = if Some(channel) == self.bs_channel {
                (0..100).map(|i| if i % 3 == 0 { -70.0 } else { -120.0 }).collect()
            } else {
                vec![-118.0; 100]
            };
            SignalTrace {
                rss_series: series,
                window_s,
                channel,
                adjacent_rss: -118.0,
            }
        }
    }

    #[test]
    fn discover_timing_and_energy() {
        let cfg = ClassifierConfig::default();
        let e = EnergyModel::default();
        let plan = build_scan_plan(None, &full_band(), ScanStrategy::Narrow, 200e3, 0.1).unwrap();

        let mut w = FixedWorld {
            bs_channel: Some(14),
            observed: vec![],
        };
        let r = discover(&plan, &mut w, &cfg, &e).unwrap();
        assert_eq!(r.found_channel, Some(14));
        assert!((r.elapsed_s - 0.1).abs() < 1e-12);
        assert!((r.energy_j - e.rx_power_w() * 0.1).abs() < 1e-15);

        let mut w = FixedWorld {
            bs_channel: Some(18),
            observed: vec![],
        };
        let r = discover(&plan, &mut w, &cfg, &e).unwrap();
        assert_eq!(r.channels_visited, 5);
        assert!((r.elapsed_s - (5.0 * 0.1 + 4.0 * 1e-3)).abs() < 1e-12);

        let mut w = FixedWorld {
            bs_channel: None,
            observed: vec![],
        };
        let r = discover(&plan, &mut w, &cfg, &e).unwrap();
        assert_eq!(r.found_channel, None);
        assert_eq!(r.channels_visited, 38);
        assert!((r.elapsed_s - scan_elapsed(38, 0.1, 1e-3)).abs() < 1e-12);
        assert_eq!(w.observed, full_band());
    }

    #[test]
    fn energy_grows_with_visits() {
        let e = EnergyModel::default();
        let mut last = 0.0;
        for k in 1..40 {
            let j = scan_energy(scan_elapsed(k, 0.1, 1e-3), ScanStrategy::Narrow, &e);
            assert!(j > last);
            last = j;
        }
    }

    #[test]
    fn backoff_and_memory() {
        let b = Backoff::default();
        assert_eq!(
            (0..8).map(|a| b.delay(a)).collect::<Vec<_>>(),
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 60.0, 60.0]
        );
        let mut m = ChannelMemory::new(4);
        for c in [20, 21, 22, 23, 21, 24] {
            m.remember(c);
        }
        assert_eq!(m.channels(), vec![24, 21, 23, 22]);
        let mut off = ChannelMemory::new(0);
        off.remember(3);
        assert!(off.channels().is_empty());
    }

    #[test]
    fn families_classify_at_ten_db() {
        let cfg = ClassifierConfig::default();
        let synth = TraceSynth {
            snr_db: Some(10.0),
            ..TraceSynth::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut correct = 0;
        for i in 0..300 {
            let fam = [Verdict::Tv, Verdict::SnowBs, Verdict::Noise][i % 3];
            let t = sample_family(&synth, fam, 0.1, &mut rng);
            correct += usize::from(classify_trace(&t, &cfg).unwrap().verdict == fam);
        }
        assert!(correct >= 285, "{correct}/300");
    }

    #[test]
    fn families_classify_noiseless() {
        let cfg = ClassifierConfig::default();
        let synth = TraceSynth::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fam in [Verdict::Tv, Verdict::SnowBs, Verdict::Noise] {
            for _ in 0..200 {
                let t = sample_family(&synth, fam, 0.1, &mut rng);
                assert_eq!(classify_trace(&t, &cfg).unwrap().verdict, fam);
            }
        }
    }
}
