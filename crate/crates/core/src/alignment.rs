//! Subcarrier alignment with a base station of unknown subcarrier width.
//!
//! The node listens with a front end wider than any candidate subcarrier.
//! Cheap time-domain energy sensing gates an FFT of the most recent `M`
//! samples; the resulting PSD is compared against rectangular occupancy
//! templates on a 50 kHz offset lattice for every allowed width.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseband::{BasebandError, SampleBuffer, Subcarrier, ALLOWED_BANDWIDTHS};
use crate::energy::EnergyModel;

/// Front-end rate while aligning: 256 bins of 5 kHz.
pub const ALIGN_SAMPLE_RATE: f64 = 1.28e6;
pub const DEFAULT_FFT_SIZE: usize = 256;
pub const LATTICE_HZ: f64 = 50e3;
pub const SCORE_FLOOR: f64 = 0.5;
/// Half-span of the band templates may occupy; the rest of the front end is guard.
pub const TEMPLATE_HALF_SPAN_HZ: f64 = 600e3;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("buffer of {len} samples shorter than the required {needed}")]
    BufferTooShort { len: usize, needed: usize },
    #[error("FFT size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("no overlap pattern above the score floor (best {best:.3})")]
    NoPattern { best: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Baseband(#[from] BasebandError),
}

pub type Result<T> = std::result::Result<T, AlignmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SenseVerdict {
    Busy,
    Idle,
}

/// Moving average of instantaneous power (mW) over every full window.
pub fn moving_average_power(samples: &[Complex64], window: usize) -> Vec<f64> {
    if window == 0 || samples.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(samples.len() - window + 1);
    let mut acc: f64 = samples[..window].iter().map(|s| s.norm_sqr()).sum();
    out.push(acc / window as f64);
    for i in window..samples.len() {
        acc += samples[i].norm_sqr() - samples[i - window].norm_sqr();
        out.push(acc.max(0.0) / window as f64);
    }
    out
}

/// Start index of the first window whose mean power exceeds `threshold_dbm`.
pub fn first_busy_window(
    buf: &SampleBuffer,
    preamble_len_samples: usize,
    threshold_dbm: f64,
) -> Result<Option<usize>> {
    let window = preamble_len_samples / 2;
    if window == 0 {
        return Err(AlignmentError::InvalidArgument(
            "preamble must span at least two samples".into(),
        ));
    }
    if buf.len() < window {
        return Err(AlignmentError::BufferTooShort {
            len: buf.len(),
            needed: window,
        });
    }
    let threshold_mw = 10f64.powf(threshold_dbm / 10.0);
    Ok(moving_average_power(&buf.samples, window)
        .iter()
        .position(|&p| p > threshold_mw))
}

/// Energy detection with a moving-average window of half a preamble.
pub fn time_domain_sense(
    buf: &SampleBuffer,
    preamble_len_samples: usize,
    threshold_dbm: f64,
) -> Result<SenseVerdict> {
    Ok(match first_busy_window(buf, preamble_len_samples, threshold_dbm)? {
        Some(_) => SenseVerdict::Busy,
        None => SenseVerdict::Idle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsdWindow {
    #[default]
    Rectangular,
    Hann,
}

impl PsdWindow {
    fn coefficients(self, m: usize) -> Vec<f64> {
        match self {
            PsdWindow::Rectangular => vec![1.0; m],
            PsdWindow::Hann => (0..m)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / m as f64).cos())
                .collect(),
        }
    }
}

/// Power per frequency bin, lowest frequency first; bin `M/2` is DC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdVector {
    pub bins: Vec<f64>,
    pub bin_width: f64,
    pub total_power: f64,
    pub center_freq: f64,
}

impl PsdVector {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Baseband frequency at the center of bin `k`.
    pub fn bin_freq(&self, k: usize) -> f64 {
        (k as f64 - (self.len() / 2) as f64) * self.bin_width
    }

    /// Nominal sensed span, `M * bin_width`.
    pub fn span(&self) -> f64 {
        self.len() as f64 * self.bin_width
    }
}

/// Periodogram of the most recent `m` samples. `sum(bins)` equals the
/// windowed time-domain energy.
pub fn compute_psd(buf: &SampleBuffer, m: usize, window: PsdWindow) -> Result<PsdVector> {
    if m == 0 || !m.is_power_of_two() {
        return Err(AlignmentError::NotPowerOfTwo(m));
    }
    if buf.len() < m {
        return Err(AlignmentError::BufferTooShort {
            len: buf.len(),
            needed: m,
        });
    }
    let tail = &buf.samples[buf.len() - m..];
    let w = window.coefficients(m);
    let mut x: Vec<Complex64> = tail.iter().zip(&w).map(|(s, w)| s * *w).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut x);
    let mut bins: Vec<f64> = x.iter().map(|c| c.norm_sqr() / m as f64).collect();
    bins.rotate_right(m / 2);
    let total_power = bins.iter().sum();
    Ok(PsdVector {
        bins,
        bin_width: buf.sample_rate / m as f64,
        total_power,
        center_freq: buf.center_freq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPattern {
    pub candidate_bandwidth: f64,
    /// Subcarrier center relative to the sensing center, Hz.
    pub center_offset: f64,
    pub match_score: f64,
}

impl OverlapPattern {
    pub fn subcarrier(&self, sensing_center: f64) -> Result<Subcarrier> {
        Ok(Subcarrier::new(
            sensing_center + self.center_offset,
            self.candidate_bandwidth,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub lattice_hz: f64,
    pub score_floor: f64,
    /// Expected noise level of each bin, removed before scoring. For white
    /// noise this equals the per-sample noise power in mW.
    pub noise_bin_mw: f64,
    /// Templates stay within `+-half_span`; `None` uses the whole PSD.
    pub template_half_span: Option<f64>,
    /// Window the PSD was computed with; templates are smeared to match.
    pub window: PsdWindow,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            lattice_hz: LATTICE_HZ,
            score_floor: SCORE_FLOOR,
            noise_bin_mw: 0.0,
            template_half_span: Some(TEMPLATE_HALF_SPAN_HZ),
            window: PsdWindow::Rectangular,
        }
    }
}

/// Lattice offsets at which a `bandwidth` template fits inside `half_span`.
pub fn lattice_offsets(bandwidth: f64, half_span: f64, lattice: f64) -> Vec<f64> {
    let reach = half_span - bandwidth / 2.0;
    if reach < -1e-6 {
        return Vec::new();
    }
    let k = ((reach + 1e-6) / lattice).floor() as i64;
    (-k..=k).map(|i| i as f64 * lattice).collect()
}

/// Fraction of each bin covered by `[offset - b/2, offset + b/2]`, with bins
/// wrapping at the band edge as the DFT does. Edge bins are partially
/// covered, which gives the one-bin roll-off.
pub fn pattern_template(m: usize, bin_width: f64, bandwidth: f64, offset: f64) -> Vec<f64> {
    let lo = offset - bandwidth / 2.0;
    let hi = offset + bandwidth / 2.0;
    let span = m as f64 * bin_width;
    (0..m)
        .map(|k| {
            let c = (k as f64 - (m / 2) as f64) * bin_width;
            [-span, 0.0, span]
                .iter()
                .map(|shift| {
                    let a = (c + shift - bin_width / 2.0).max(lo);
                    let b = (c + shift + bin_width / 2.0).min(hi);
                    (b - a).max(0.0) / bin_width
                })
                .sum::<f64>()
                .min(1.0)
        })
        .collect()
}

/// Expected leakage of each occupied bin into its neighbours under `window`.
fn smear(t: Vec<f64>, window: PsdWindow) -> Vec<f64> {
    match window {
        PsdWindow::Rectangular => t,
        PsdWindow::Hann => {
            let m = t.len();
            (0..m)
                .map(|k| t[k] + 0.25 * (t[(k + m - 1) % m] + t[(k + 1) % m]))
                .collect()
        }
    }
}

/// PSD power above the configured noise floor, bin by bin.
pub fn excess_power(psd: &PsdVector, noise_bin_mw: f64) -> Vec<f64> {
    psd.bins.iter().map(|&p| (p - noise_bin_mw).max(0.0)).collect()
}

/// Cosine similarity between non-negative vectors; 0 when either is zero.
pub fn template_score(excess: &[f64], template: &[f64]) -> f64 {
    let dot: f64 = excess.iter().zip(template).map(|(a, b)| a * b).sum();
    let na: f64 = excess.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = template.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Best (bandwidth, offset) for the PSD. Ties prefer the smaller offset
/// magnitude, then the narrower bandwidth.
pub fn match_overlap_pattern(
    psd: &PsdVector,
    candidates: &[f64],
    cfg: &MatchConfig,
) -> Result<OverlapPattern> {
    if psd.is_empty() {
        return Err(AlignmentError::InvalidArgument("empty PSD".into()));
    }
    let excess = excess_power(psd, cfg.noise_bin_mw);
    let half_span = cfg.template_half_span.unwrap_or(psd.span() / 2.0);
    let mut best: Option<OverlapPattern> = None;
    for &b in candidates {
        for off in lattice_offsets(b, half_span, cfg.lattice_hz) {
            let t = smear(pattern_template(psd.len(), psd.bin_width, b, off), cfg.window);
            let s = template_score(&excess, &t);
            let better = match best {
                None => true,
                Some(cur) => {
                    if (s - cur.match_score).abs() > 1e-12 {
                        s > cur.match_score
                    } else if (off.abs() - cur.center_offset.abs()).abs() > 1e-6 {
                        off.abs() < cur.center_offset.abs()
                    } else {
                        b < cur.candidate_bandwidth
                    }
                }
            };
            if better {
                best = Some(OverlapPattern {
                    candidate_bandwidth: b,
                    center_offset: off,
                    match_score: s,
                });
            }
        }
    }
    match best {
        Some(p) if p.match_score >= cfg.score_floor => Ok(p),
        Some(p) => Err(AlignmentError::NoPattern { best: p.match_score }),
        None => Err(AlignmentError::NoPattern { best: 0.0 }),
    }
}

/// Share of excess power in bins outside the template span; large values
/// mean the signal runs off the edge of the sensed band.
pub fn guard_power_fraction(psd: &PsdVector, cfg: &MatchConfig) -> f64 {
    let Some(half_span) = cfg.template_half_span else {
        return 0.0;
    };
    let excess = excess_power(psd, cfg.noise_bin_mw);
    let total: f64 = excess.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let guard: f64 = excess
        .iter()
        .enumerate()
        .filter(|(k, _)| psd.bin_freq(*k).abs() > half_span + psd.bin_width)
        .map(|(_, p)| p)
        .sum();
    guard / total
}

/// A flat burst occupying `sc`: tones on a `tone_spacing` grid anchored at
/// the subcarrier center, with the two edge tones at half power. Total power
/// is `power_mw`; tone phases are random per burst.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBurst {
    tones: Vec<(f64, f64, f64)>,
}

impl FlatBurst {
    pub fn new<R: Rng + ?Sized>(sc: &Subcarrier, tone_spacing: f64, power_mw: f64, rng: &mut R) -> Self {
        let half = (sc.bandwidth / (2.0 * tone_spacing)).round() as i64;
        let weights: Vec<(i64, f64)> = (-half..=half)
            .map(|k| (k, if k.abs() == half { 0.5 } else { 1.0 }))
            .collect();
        let norm: f64 = weights.iter().map(|(_, w)| w).sum();
        let tones = weights
            .into_iter()
            .map(|(k, w)| {
                (
                    sc.center_freq + k as f64 * tone_spacing,
                    (power_mw * w / norm).sqrt(),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        Self { tones }
    }

    /// Adds the burst as seen by a receiver tuned to `rx_center` whose
    /// oscillator sits `rx_offset_hz` high.
    pub fn add_to(&self, buf: &mut SampleBuffer, rx_center: f64, rx_offset_hz: f64) {
        let fs = buf.sample_rate;
        for &(f, amp, phase) in &self.tones {
            let rel = f - rx_center - rx_offset_hz;
            if rel.abs() >= fs / 2.0 {
                continue;
            }
            let w = 2.0 * PI * rel;
            for (n, s) in buf.samples.iter_mut().enumerate() {
                let t = buf.start_time + n as f64 / fs;
                *s += Complex64::from_polar(amp, w * t + phase);
            }
        }
    }
}

/// Complex baseband from the air around a tuned center frequency.
pub trait AirSampler {
    fn sample(&mut self, center_freq: f64, sample_rate: f64, start_time: f64, n: usize) -> SampleBuffer;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub sample_rate: f64,
    pub fft_size: usize,
    pub psd_window: PsdWindow,
    pub preamble_len_samples: usize,
    pub busy_threshold_dbm: f64,
    /// Samples examined per time-domain sensing step.
    pub chunk_samples: usize,
    /// Time spent listening in one window before moving to the next.
    pub window_dwell_s: f64,
    /// Spacing of consecutive sensing windows across the channel.
    pub window_step_hz: f64,
    pub timeout_s: f64,
    /// Guard-band share of excess power above which a match is discarded.
    pub max_guard_fraction: f64,
    pub matching: MatchConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            sample_rate: ALIGN_SAMPLE_RATE,
            fft_size: DEFAULT_FFT_SIZE,
            psd_window: PsdWindow::Rectangular,
            preamble_len_samples: 64,
            busy_threshold_dbm: -104.0,
            chunk_samples: 1280,
            window_dwell_s: 0.04,
            window_step_hz: 500e3,
            timeout_s: 10.0,
            max_guard_fraction: 0.05,
            matching: MatchConfig::default(),
        }
    }
}

/// Sensing-window centers covering `[low, high]` so that every allowed
/// subcarrier on the lattice fits entirely inside one window's template span.
pub fn alignment_windows(low: f64, high: f64, cfg: &AlignConfig) -> Vec<f64> {
    let half = cfg.matching.template_half_span.unwrap_or(cfg.sample_rate / 2.0);
    let mut out = Vec::new();
    let mut c = low + half;
    loop {
        out.push(c);
        if c + half >= high {
            break;
        }
        c += cfg.window_step_hz;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlignStep {
    Sense { window: usize, busy: bool },
    Psd { window: usize },
    Match { window: usize, accepted: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// `None` after a timeout.
    pub subcarrier: Option<Subcarrier>,
    pub pattern: Option<OverlapPattern>,
    pub elapsed_s: f64,
    pub energy_j: f64,
    pub steps: Vec<AlignStep>,
}

/// Sweeps the sensing windows round-robin: energy-sense in chunks, and only
/// on a busy chunk take the PSD of the next `M` samples and match it.
pub fn align<S: AirSampler + ?Sized>(
    sampler: &mut S,
    windows: &[f64],
    start_time: f64,
    cfg: &AlignConfig,
    energy: &EnergyModel,
) -> Result<AlignmentResult> {
    if windows.is_empty() {
        return Err(AlignmentError::InvalidArgument("no sensing windows".into()));
    }
    if cfg.chunk_samples < cfg.preamble_len_samples / 2 {
        return Err(AlignmentError::InvalidArgument(
            "chunk shorter than the sensing window".into(),
        ));
    }
    let fs = cfg.sample_rate;
    let chunk_s = cfg.chunk_samples as f64 / fs;
    let chunks_per_window = ((cfg.window_dwell_s / chunk_s).ceil() as usize).max(1);
    let mut t = start_time;
    let mut steps = Vec::new();
    let mut w = 0;
    let finish = |t: f64, sc, pattern, steps| AlignmentResult {
        subcarrier: sc,
        pattern,
        elapsed_s: t - start_time,
        energy_j: energy.rx_power_w() * (t - start_time),
        steps,
    };
    loop {
        let center = windows[w];
        for _ in 0..chunks_per_window {
            if t - start_time >= cfg.timeout_s {
                return Ok(finish(start_time + cfg.timeout_s, None, None, steps));
            }
            let chunk = sampler.sample(center, fs, t, cfg.chunk_samples);
            let busy_at = first_busy_window(&chunk, cfg.preamble_len_samples, cfg.busy_threshold_dbm)?;
            steps.push(AlignStep::Sense {
                window: w,
                busy: busy_at.is_some(),
            });
            let Some(i) = busy_at else {
                t += chunk_s;
                continue;
            };
            let t_busy = t + i as f64 / fs;
            let capture = sampler.sample(center, fs, t_busy, cfg.fft_size);
            let t_done = t_busy + cfg.fft_size as f64 / fs;
            steps.push(AlignStep::Psd { window: w });
            let psd = compute_psd(&capture, cfg.fft_size, cfg.psd_window)?;
            let matched = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &cfg.matching)
                .ok()
                .filter(|_| guard_power_fraction(&psd, &cfg.matching) <= cfg.max_guard_fraction);
            steps.push(AlignStep::Match {
                window: w,
                accepted: matched.is_some(),
            });
            if let Some(p) = matched {
                return Ok(finish(t_done, Some(p.subcarrier(center)?), Some(p), steps));
            }
            t = t_done.max(t + chunk_s);
        }
        w = (w + 1) % windows.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseband::add_awgn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dbm(p: f64) -> f64 {
        10f64.powf(p / 10.0)
    }

    fn buf_with(power_dbm: &[f64]) -> SampleBuffer {
        SampleBuffer::new(
            power_dbm.iter().map(|&p| Complex64::new(dbm(p).sqrt(), 0.0)).collect(),
            1e6,
        )
        .unwrap()
    }

    #[test]
    fn sensing_examples() {
        let quiet = buf_with(&[-110.0; 400]);
        assert_eq!(time_domain_sense(&quiet, 64, -100.0).unwrap(), SenseVerdict::Idle);

        let mut p = vec![-110.0; 400];
        p[200..232].iter_mut().for_each(|x| *x = -90.0);
        assert_eq!(time_domain_sense(&buf_with(&p), 64, -100.0).unwrap(), SenseVerdict::Busy);

        assert!(matches!(
            time_domain_sense(&buf_with(&[-110.0; 10]), 64, -100.0),
            Err(AlignmentError::BufferTooShort { .. })
        ));
    }

    #[test]
    fn short_burst_matches_brute_force() {
        for len in 1..20 {
            let mut p = vec![-120.0; 300];
            p[100..100 + len].iter_mut().for_each(|x| *x = -97.0 + 3.0);
            let b = buf_with(&p);
            let window = 32;
            let brute = (0..=b.len() - window).any(|s| {
                let avg: f64 = b.samples[s..s + window].iter().map(|c| c.norm_sqr()).sum::<f64>() / window as f64;
                10.0 * avg.log10() > -100.0
            });
            let got = time_domain_sense(&b, 64, -100.0).unwrap() == SenseVerdict::Busy;
            assert_eq!(got, brute, "burst of {len}");
        }
    }

    #[test]
    fn tone_lands_in_one_bin() {
        let m = 256;
        let k = 37;
        let fs = 1.28e6;
        let f = (k as f64 - 128.0) * fs / m as f64;
        let s: Vec<Complex64> = (0..1000)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f * n as f64 / fs))
            .collect();
        let psd = compute_psd(&SampleBuffer::new(s, fs).unwrap(), m, PsdWindow::Rectangular).unwrap();
        let argmax = (0..m).max_by(|&a, &b| psd.bins[a].total_cmp(&psd.bins[b])).unwrap();
        assert_eq!(argmax, k);
        assert!(psd.bins[k] / psd.total_power >= 0.99);
        assert!((psd.bin_freq(k) - f).abs() < 1e-6);
    }

    #[test]
    fn white_noise_is_flat_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 256;
        let mut acc = vec![0.0; m];
        for _ in 0..100 {
            let mut b = SampleBuffer::zeros(m, 1.28e6);
            add_awgn(&mut b, 1.0, &mut rng);
            let psd = compute_psd(&b, m, PsdWindow::Rectangular).unwrap();
            acc.iter_mut().zip(&psd.bins).for_each(|(a, p)| *a += p / 100.0);
        }
        let max = acc.iter().cloned().fold(0.0, f64::max);
        let min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        // average of 100 exponentials: 4.5 sigma bounds are about 1.45 and 0.55
        assert!(max < 1.5 && min > 0.5, "{min} {max}");
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for window in [PsdWindow::Rectangular, PsdWindow::Hann] {
            let mut b = SampleBuffer::zeros(300, 1.28e6);
            add_awgn(&mut b, 2.5, &mut rng);
            let psd = compute_psd(&b, 256, window).unwrap();
            let w = window.coefficients(256);
            let energy: f64 = b.samples[44..].iter().zip(&w).map(|(s, w)| (s * w).norm_sqr()).sum();
            assert!((psd.total_power - energy).abs() <= 1e-9 * energy);
            assert!((psd.bins.iter().sum::<f64>() - psd.total_power).abs() <= 1e-9 * energy);
            assert!(psd.bins.iter().all(|&p| p >= 0.0));
        }
        let b = SampleBuffer::zeros(300, 1.28e6);
        assert!(matches!(compute_psd(&b, 100, PsdWindow::Rectangular), Err(AlignmentError::NotPowerOfTwo(100))));
        assert!(matches!(compute_psd(&b, 512, PsdWindow::Rectangular), Err(AlignmentError::BufferTooShort { .. })));
    }

    fn burst_psd(b: f64, off: f64, fs: f64, m: usize, seed: u64) -> PsdVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = Subcarrier::new(500e6 + off, b).unwrap();
        let mut buf = SampleBuffer::zeros(m, fs).with_center_freq(500e6);
        FlatBurst::new(&sc, fs / m as f64, 1e-9, &mut rng).add_to(&mut buf, 500e6, 0.0);
        compute_psd(&buf, m, PsdWindow::Rectangular).unwrap()
    }

    #[test]
    fn uniform_psd_is_full_overlap() {
        let psd = PsdVector {
            bins: vec![1.0; 256],
            bin_width: 5e3,
            total_power: 256.0,
            center_freq: 0.0,
        };
        let p = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &MatchConfig::default()).unwrap();
        assert_eq!(p.candidate_bandwidth, 600e3);
        assert_eq!(p.center_offset, 0.0);
    }

    #[test]
    fn upper_half_of_800k_band() {
        let psd = burst_psd(400e3, 200e3, 800e3, 256, 1);
        let cfg = MatchConfig {
            template_half_span: None,
            ..MatchConfig::default()
        };
        let p = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &cfg).unwrap();
        assert_eq!((p.candidate_bandwidth, p.center_offset), (400e3, 200e3));
        assert!(p.match_score > 0.99);
    }

    #[test]
    fn noise_has_no_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = SampleBuffer::zeros(256, ALIGN_SAMPLE_RATE);
        add_awgn(&mut b, 256.0, &mut rng);
        let psd = compute_psd(&b, 256, PsdWindow::Rectangular).unwrap();
        let cfg = MatchConfig {
            noise_bin_mw: 256.0,
            ..MatchConfig::default()
        };
        assert!(matches!(
            match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &cfg),
            Err(AlignmentError::NoPattern { .. })
        ));
    }

    #[test]
    fn lattice_counts() {
        let n: usize = ALLOWED_BANDWIDTHS
            .iter()
            .map(|&b| lattice_offsets(b, TEMPLATE_HALF_SPAN_HZ, LATTICE_HZ).len())
            .sum();
        assert_eq!(n, 23 + 21 + 17 + 13);
    }

    #[test]
    fn windows_cover_a_tv_channel() {
        let cfg = AlignConfig::default();
        let w = alignment_windows(500e6, 506e6, &cfg);
        assert_eq!(w.len(), 11);
        for b in ALLOWED_BANDWIDTHS {
            let mut lo = 500e6;
            while lo + b <= 506e6 + 1.0 {
                let fits = w.iter().any(|c| lo >= c - 600e3 - 1.0 && lo + b <= c + 600e3 + 1.0);
                assert!(fits, "{b} at {lo}");
                lo += 50e3;
            }
        }
    }

    struct PeriodicBs {
        sc: Subcarrier,
        period: f64,
        duty: f64,
        power_mw: f64,
        noise_mw: f64,
        rng: ChaCha8Rng,
    }

    impl AirSampler for PeriodicBs {
        fn sample(&mut self, center: f64, fs: f64, start: f64, n: usize) -> SampleBuffer {
            let mut buf = SampleBuffer::zeros(n, fs).with_start_time(start).with_center_freq(center);
            let mut on = SampleBuffer::zeros(n, fs).with_start_time(start);
            if self.power_mw > 0.0 {
                FlatBurst::new(&self.sc, 5e3, self.power_mw, &mut self.rng).add_to(&mut on, center, 0.0);
            }
            for (i, s) in on.samples.iter().enumerate() {
                let t = start + i as f64 / fs;
                if (t / self.period).fract() < self.duty {
                    buf.samples[i] += s;
                }
            }
            add_awgn(&mut buf, self.noise_mw, &mut self.rng);
            buf
        }
    }

    fn bs(duty: f64, power_dbm: f64) -> PeriodicBs {
        PeriodicBs {
            sc: Subcarrier::new(500.4e6, 200e3).unwrap(),
            period: 0.02,
            duty,
            power_mw: if power_dbm.is_finite() { dbm(power_dbm) } else { 0.0 },
            noise_mw: dbm(-113.0),
            rng: ChaCha8Rng::seed_from_u64(2),
        }
    }

    #[test]
    fn continuous_bs_aligns_in_one_pass() {
        let cfg = AlignConfig {
            matching: MatchConfig {
                noise_bin_mw: dbm(-113.0),
                ..MatchConfig::default()
            },
            ..AlignConfig::default()
        };
        let mut s = bs(1.0, -80.0);
        let r = align(&mut s, &[500.4e6], 0.0, &cfg, &EnergyModel::default()).unwrap();
        assert_eq!(r.subcarrier, Some(s.sc));
        assert_eq!(r.steps.len(), 3);
        assert!((r.elapsed_s - 256.0 / ALIGN_SAMPLE_RATE).abs() < 1e-12);
    }

    #[test]
    fn quarter_duty_waits_for_busy() {
        let cfg = AlignConfig {
            matching: MatchConfig {
                noise_bin_mw: dbm(-113.0),
                ..MatchConfig::default()
            },
            ..AlignConfig::default()
        };
        let mut s = bs(0.25, -80.0);
        let start = 0.006;
        let r = align(&mut s, &[500.4e6], start, &cfg, &EnergyModel::default()).unwrap();
        assert_eq!(r.subcarrier, Some(s.sc));
        // next burst begins at t = 0.02; detection lands within one window
        let expected = 0.02 - start + 256.0 / ALIGN_SAMPLE_RATE;
        let window_s = 32.0 / ALIGN_SAMPLE_RATE;
        assert!(r.elapsed_s >= expected - window_s && r.elapsed_s <= expected + 1e-9, "{}", r.elapsed_s);
        let mut psd_seen = 0;
        for (i, st) in r.steps.iter().enumerate() {
            if let AlignStep::Psd { .. } = st {
                psd_seen += 1;
                assert!(matches!(r.steps[i - 1], AlignStep::Sense { busy: true, .. }));
            }
        }
        assert_eq!(psd_seen, 1);
        let e = EnergyModel::default();
        assert!((r.energy_j - e.rx_power_w() * r.elapsed_s).abs() < 1e-15);
    }

    #[test]
    fn silent_bs_times_out() {
        let cfg = AlignConfig {
            timeout_s: 0.2,
            ..AlignConfig::default()
        };
        let mut s = bs(1.0, f64::NEG_INFINITY);
        let r = align(&mut s, &[500.4e6, 500.9e6], 0.0, &cfg, &EnergyModel::default()).unwrap();
        assert_eq!(r.subcarrier, None);
        assert!((r.elapsed_s - 0.2).abs() < 1e-12);
        assert!(r.steps.iter().all(|s| matches!(s, AlignStep::Sense { busy: false, .. })));
    }
}
