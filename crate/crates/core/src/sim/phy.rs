//! Sample-level rendering for the stages the simulator can run on raw
//! baseband: data packet reception, preamble CFO estimation and the air a
//! node samples while aligning.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::alignment::{AirSampler, FlatBurst};
use crate::baseband::{add_awgn, modulate, Modulation, Preamble, SampleBuffer, Subcarrier};
use crate::cfo::{apply_cfo, CfoEstimate, CfoEstimator};

/// Oversampling of rendered data packets relative to the target symbol rate.
pub const DATA_OVERSAMPLING: usize = 8;
/// Oversampling of rendered preambles.
pub const PREAMBLE_OVERSAMPLING: usize = 4;

/// One transmission as it reaches the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub subcarrier: Subcarrier,
    /// Offset of the carrier actually on the air from `subcarrier.center_freq`.
    pub residual_hz: f64,
    /// Average received power, mW.
    pub power_mw: f64,
    pub bits: Vec<u8>,
    /// Start relative to the packet under reception, seconds.
    pub start_s: f64,
}

/// Symbol amplitude giving average power `power_mw` for random bits.
fn amplitude(scheme: Modulation, power_mw: f64) -> f64 {
    match scheme {
        Modulation::Bpsk => power_mw.sqrt(),
        Modulation::Ook => (2.0 * power_mw).sqrt(),
    }
}

fn symbol(scheme: Modulation, bit: u8) -> f64 {
    match (scheme, bit) {
        (Modulation::Bpsk, 0) => -1.0,
        (Modulation::Ook, 0) => 0.0,
        _ => 1.0,
    }
}

/// Renders `target` plus overlapping `interferers` in the target's band,
/// adds receiver noise (`noise_mw` over one symbol bandwidth), and returns
/// whether every bit is recovered. The receiver integrates and dumps at the
/// nominal subcarrier and tracks the carrier phase ideally.
pub fn receive_packet<R: Rng + ?Sized>(
    target: &Arrival,
    interferers: &[Arrival],
    scheme: Modulation,
    noise_mw: f64,
    rng: &mut R,
) -> bool {
    let rate = target.subcarrier.symbol_rate();
    let fs = rate * DATA_OVERSAMPLING as f64;
    let len = target.bits.len() * DATA_OVERSAMPLING;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];

    let a = amplitude(scheme, target.power_mw);
    let phase0 = rng.gen_range(0.0..2.0 * PI);
    let w = 2.0 * PI * target.residual_hz / fs;
    let mut references = Vec::with_capacity(target.bits.len());
    for (k, &b) in target.bits.iter().enumerate() {
        let mut ref_sum = Complex64::new(0.0, 0.0);
        let start = k * DATA_OVERSAMPLING;
        for (n, slot) in buf[start..start + DATA_OVERSAMPLING].iter_mut().enumerate() {
            let rot = Complex64::from_polar(a, phase0 + w * (start + n) as f64);
            *slot += rot * symbol(scheme, b);
            ref_sum += rot;
        }
        references.push(ref_sum / DATA_OVERSAMPLING as f64);
    }

    for j in interferers {
        let rel = j.subcarrier.center_freq + j.residual_hz - target.subcarrier.center_freq;
        if rel.abs() + j.subcarrier.bandwidth / 2.0 > fs / 2.0 {
            continue;
        }
        let ratio = fs / j.subcarrier.symbol_rate();
        if (ratio - ratio.round()).abs() > 1e-9 {
            continue;
        }
        let per = ratio.round() as usize;
        let aj = amplitude(scheme, j.power_mw);
        let ph = rng.gen_range(0.0..2.0 * PI);
        let wj = 2.0 * PI * rel / fs;
        // Symbol edges sit on the receiver's grid: subcarriers stay orthogonal
        // and only carrier offsets leak.
        let grid = DATA_OVERSAMPLING as f64;
        let offset = ((j.start_s * fs / grid).round() * grid) as i64;
        for (k, &b) in j.bits.iter().enumerate() {
            let s = symbol(scheme, b);
            if s == 0.0 {
                continue;
            }
            for m in 0..per {
                let n = offset + (k * per + m) as i64;
                if n < 0 || n as usize >= len {
                    continue;
                }
                buf[n as usize] += Complex64::from_polar(aj * s, ph + wj * n as f64);
            }
        }
    }

    let sigma = (noise_mw * DATA_OVERSAMPLING as f64 / 2.0).sqrt();
    let normal = rand_distr::StandardNormal;
    for s in &mut buf {
        let re: f64 = rng.sample(normal);
        let im: f64 = rng.sample(normal);
        *s += Complex64::new(re * sigma, im * sigma);
    }

    buf.chunks_exact(DATA_OVERSAMPLING)
        .zip(&references)
        .zip(&target.bits)
        .all(|((chunk, r), &b)| {
            let z = chunk.iter().sum::<Complex64>() / DATA_OVERSAMPLING as f64;
            let decided = match scheme {
                Modulation::Bpsk => u8::from((z * r.conj()).re >= 0.0),
                Modulation::Ook => u8::from(z.norm_sqr() > r.norm_sqr() / 4.0),
            };
            decided == b
        })
}

/// Renders the standard preamble on `sc` with a carrier offset, received at
/// `power_mw` in noise `noise_mw` per symbol bandwidth, and estimates the
/// offset from it.
pub fn estimate_preamble_offset<R: Rng + ?Sized>(
    sc: &Subcarrier,
    scheme: Modulation,
    offset_hz: f64,
    power_mw: f64,
    noise_mw: f64,
    at_time: f64,
    rng: &mut R,
) -> Option<CfoEstimate> {
    let preamble = Preamble::default();
    let fs = sc.symbol_rate() * PREAMBLE_OVERSAMPLING as f64;
    let clean = modulate(preamble.bits(), scheme, sc, fs).ok()?;
    let a = amplitude(scheme, power_mw);
    let phase = Complex64::from_polar(a, rng.gen_range(0.0..2.0 * PI));
    let scaled = SampleBuffer {
        samples: clean.samples.iter().map(|s| s * phase).collect(),
        ..clean
    };
    let mut rx = apply_cfo(&scaled, offset_hz).ok()?;
    add_awgn(&mut rx, noise_mw * PREAMBLE_OVERSAMPLING as f64, rng);
    let est = CfoEstimator {
        scheme,
        ..CfoEstimator::new(sc.symbol_rate())
    };
    est.estimate(&rx, &preamble)
        .ok()
        .map(|e| CfoEstimate::new(e.delta_f, sc.center_freq, at_time))
}

/// The air around a node while a BS beacons on its join subcarrier.
pub struct BeaconAir<'a, R: Rng> {
    pub join: Subcarrier,
    pub beacon_power_mw: f64,
    /// Beacons start at `phase_s + k * interval_s` and last `duration_s`.
    pub interval_s: f64,
    pub phase_s: f64,
    pub duration_s: f64,
    /// Receiver oscillator error as seen against the beacon carrier, Hz.
    pub rx_offset_hz: f64,
    /// Per-sample noise power at the sampling rate in use, mW per Hz.
    pub noise_mw_per_hz: f64,
    pub tone_spacing_hz: f64,
    pub rng: &'a mut R,
}

impl<R: Rng> BeaconAir<'_, R> {
    fn beacon_active(&self, t: f64) -> bool {
        let x = (t - self.phase_s).rem_euclid(self.interval_s);
        x < self.duration_s
    }
}

impl<R: Rng> AirSampler for BeaconAir<'_, R> {
    fn sample(&mut self, center_freq: f64, sample_rate: f64, start_time: f64, n: usize) -> SampleBuffer {
        let mut buf = SampleBuffer::zeros(n, sample_rate)
            .with_start_time(start_time)
            .with_center_freq(center_freq);
        let end = start_time + n as f64 / sample_rate;
        let first_k = ((start_time - self.phase_s) / self.interval_s).floor() as i64;
        let last_k = ((end - self.phase_s) / self.interval_s).floor() as i64;
        let any_active = (first_k..=last_k).any(|k| {
            let b0 = self.phase_s + k as f64 * self.interval_s;
            b0 < end && b0 + self.duration_s > start_time
        });
        if any_active && self.beacon_power_mw > 0.0 {
            let mut on = SampleBuffer::zeros(n, sample_rate).with_start_time(start_time);
            FlatBurst::new(&self.join, self.tone_spacing_hz, self.beacon_power_mw, self.rng).add_to(
                &mut on,
                center_freq,
                self.rx_offset_hz,
            );
            for (i, s) in on.samples.iter().enumerate() {
                if self.beacon_active(start_time + i as f64 / sample_rate) {
                    buf.samples[i] += s;
                }
            }
        }
        add_awgn(&mut buf, self.noise_mw_per_hz * sample_rate, self.rng);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pep::packet_error_probability;
    use crate::units::linear_to_db;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..n).map(|_| rng.gen_range(0..2)).collect()
    }

    #[test]
    fn noiseless_packets_always_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sc = Subcarrier::new(500e6, 200e3).unwrap();
        for scheme in [Modulation::Bpsk, Modulation::Ook] {
            let t = Arrival {
                subcarrier: sc,
                residual_hz: 3e3,
                power_mw: 1e-9,
                bits: random_bits(320, &mut rng),
                start_s: 0.0,
            };
            assert!(receive_packet(&t, &[], scheme, 0.0, &mut rng));
        }
    }

    #[test]
    fn orthogonal_neighbor_does_not_interfere() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sc = Subcarrier::new(500e6, 200e3).unwrap();
        let t = Arrival {
            subcarrier: sc,
            residual_hz: 0.0,
            power_mw: 1e-9,
            bits: random_bits(320, &mut rng),
            start_s: 0.0,
        };
        let strong = Arrival {
            subcarrier: Subcarrier::new(500.2e6, 200e3).unwrap(),
            residual_hz: 0.0,
            power_mw: 1e-6,
            bits: random_bits(320, &mut rng),
            start_s: 0.0,
        };
        assert!(receive_packet(&t, std::slice::from_ref(&strong), Modulation::Bpsk, 0.0, &mut rng));
        // the same neighbor 20 kHz off the grid leaks far above the target
        let skewed = Arrival {
            residual_hz: 20e3,
            ..strong
        };
        assert!(!receive_packet(&t, &[skewed], Modulation::Bpsk, 0.0, &mut rng));
    }

    #[test]
    fn error_rate_tracks_the_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sc = Subcarrier::new(500e6, 200e3).unwrap();
        for (scheme, snr) in [(Modulation::Bpsk, 6.5f64), (Modulation::Ook, 13.5)] {
            let noise = 1e-12;
            let power = noise * 10f64.powf(snr / 10.0);
            let trials = 1500;
            let errors = (0..trials)
                .filter(|_| {
                    let t = Arrival {
                        subcarrier: sc,
                        residual_hz: 0.0,
                        power_mw: power,
                        bits: random_bits(160, &mut rng),
                        start_s: 0.0,
                    };
                    !receive_packet(&t, &[], scheme, noise, &mut rng)
                })
                .count();
            let measured = errors as f64 / trials as f64;
            let want = packet_error_probability(linear_to_db(power / noise), 0.0, 200e3, 160, scheme);
            assert!((measured - want).abs() < 0.04, "{scheme}: {measured} vs {want}");
        }
    }

    #[test]
    fn preamble_estimate_recovers_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sc = Subcarrier::new(500e6, 200e3).unwrap();
        let e = estimate_preamble_offset(&sc, Modulation::Bpsk, 1000.0, 1e-9, 1e-12, 2.0, &mut rng).unwrap();
        assert!((e.delta_f - 1000.0).abs() < 50.0, "{}", e.delta_f);
        assert_eq!(e.estimated_at, 2.0);
        assert!((e.ppm - 2.0).abs() < 0.1);
    }
}
