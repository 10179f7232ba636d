//! Carrier frequency offset: injection, two-stage preamble estimation,
//! ppm scaling between subcarriers, Doppler, and compensation.
//!
//! Estimation is data-aided. The known preamble symbols are stripped from the
//! received samples, leaving a pure rotation at the offset. The coarse stage
//! correlates samples one symbol apart inside the first 16 symbols; the fine
//! stage removes the coarse estimate and correlates samples 16 symbols apart,
//! pairing each sample of the first half with its twin in the second half.
//! Each stage sums all lagged conjugate products before taking the angle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseband::{
    samples_per_symbol, BasebandError, Modulation, Preamble, SampleBuffer, PREAMBLE_LEN,
    PREAMBLE_SPLIT,
};
use crate::geo::Point;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Default detection floor for a preamble, mW (-120 dBm).
pub const DEFAULT_DETECTION_THRESHOLD_MW: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CfoError {
    #[error("offset {delta_f} Hz is beyond Nyquist for {sample_rate} S/s")]
    BeyondNyquist { delta_f: f64, sample_rate: f64 },
    #[error("buffer holds {len} samples, preamble needs {needed}")]
    BufferTooShort { len: usize, needed: usize },
    #[error("no signal: preamble power {power_mw:e} mW below threshold {threshold_mw:e} mW")]
    NoSignal { power_mw: f64, threshold_mw: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Baseband(#[from] BasebandError),
}

pub type Result<T> = std::result::Result<T, CfoError>;

/// A measured offset together with the frequency it was measured at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfoEstimate {
    pub delta_f: f64,
    pub ppm: f64,
    pub reference_freq: f64,
    pub estimated_at: f64,
}

impl CfoEstimate {
    pub fn new(delta_f: f64, reference_freq: f64, estimated_at: f64) -> Self {
        Self {
            delta_f,
            ppm: ppm_from_offset(delta_f, reference_freq),
            reference_freq,
            estimated_at,
        }
    }

    pub fn from_ppm(ppm: f64, reference_freq: f64, estimated_at: f64) -> Self {
        Self {
            delta_f: ppm_to_offset(ppm, reference_freq),
            ppm,
            reference_freq,
            estimated_at,
        }
    }

    pub fn zero(reference_freq: f64) -> Self {
        Self::new(0.0, reference_freq, 0.0)
    }

    /// The same oscillator error expressed at another carrier.
    pub fn offset_at(&self, freq: f64) -> f64 {
        ppm_to_offset(self.ppm, freq)
    }
}

pub fn ppm_from_offset(delta_f: f64, freq: f64) -> f64 {
    1e6 * delta_f / freq
}

pub fn ppm_to_offset(ppm: f64, freq: f64) -> f64 {
    freq * ppm / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerParams {
    /// m/s, non-negative.
    pub speed: f64,
    pub carrier_freq: f64,
}

/// Upper bound on the mobility-induced offset, `(v / c) f_c`.
pub fn doppler_offset(p: DopplerParams) -> Result<f64> {
    if !(p.speed >= 0.0) || p.speed >= SPEED_OF_LIGHT {
        return Err(CfoError::InvalidArgument(format!(
            "speed {} m/s outside [0, c)",
            p.speed
        )));
    }
    Ok(p.speed / SPEED_OF_LIGHT * p.carrier_freq)
}

/// Signed Doppler shift seen between a moving node and a fixed station:
/// positive while the node approaches.
pub fn radial_doppler(node: Point, velocity: Point, station: Point, carrier_freq: f64) -> f64 {
    let los = station - node;
    let d = los.norm();
    if d == 0.0 {
        return 0.0;
    }
    let radial = velocity.dot(&los) / d;
    radial / SPEED_OF_LIGHT * carrier_freq
}

/// `y(t) = x(t) exp(j 2 pi delta_f t)` with `t` the absolute sample time.
pub fn apply_cfo(buf: &SampleBuffer, delta_f: f64) -> Result<SampleBuffer> {
    if delta_f.abs() >= buf.sample_rate / 2.0 {
        return Err(CfoError::BeyondNyquist {
            delta_f,
            sample_rate: buf.sample_rate,
        });
    }
    let mut out = buf.clone();
    if delta_f == 0.0 {
        return Ok(out);
    }
    // reduce the start phase first so long absolute times keep precision
    let phase0 = (delta_f * buf.start_time).fract() * 2.0 * PI;
    let step = 2.0 * PI * delta_f / buf.sample_rate;
    for (n, s) in out.samples.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, phase0 + step * n as f64);
    }
    Ok(out)
}

/// Receiver-side removal of an estimated offset.
pub fn compensate(buf: &SampleBuffer, est: &CfoEstimate) -> Result<SampleBuffer> {
    apply_cfo(buf, -est.delta_f)
}

pub fn reestimation_due(last: f64, now: f64, period: f64) -> Result<bool> {
    if !(period > 0.0) {
        return Err(CfoError::InvalidArgument(format!("period {period} must be positive")));
    }
    if now < last {
        return Err(CfoError::InvalidArgument(format!("now {now} precedes last {last}")));
    }
    Ok(now - last >= period)
}

/// Two-stage short/long preamble estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfoEstimator {
    pub symbol_rate: f64,
    pub scheme: Modulation,
    /// Mean received power below which the preamble is treated as absent, mW.
    pub detection_threshold_mw: f64,
}

impl CfoEstimator {
    pub fn new(symbol_rate: f64) -> Self {
        Self {
            symbol_rate,
            scheme: Modulation::Bpsk,
            detection_threshold_mw: DEFAULT_DETECTION_THRESHOLD_MW,
        }
    }

    /// Unambiguous range of the coarse stage, +/- Hz.
    pub fn coarse_range(&self) -> f64 {
        self.symbol_rate / 2.0
    }

    /// Unambiguous range of the fine stage, +/- Hz.
    pub fn fine_range(&self) -> f64 {
        self.symbol_rate / (2.0 * PREAMBLE_SPLIT as f64)
    }

    /// Estimates the offset of a preamble that starts at `rx.samples[0]`.
    /// The estimate is referenced to `rx.center_freq`.
    pub fn estimate(&self, rx: &SampleBuffer, preamble: &Preamble) -> Result<CfoEstimate> {
        let per_symbol = samples_per_symbol(rx.sample_rate, self.symbol_rate)?;
        let needed = PREAMBLE_LEN * per_symbol;
        if rx.len() < needed {
            return Err(CfoError::BufferTooShort {
                len: rx.len(),
                needed,
            });
        }
        let rx_samples = &rx.samples[..needed];
        let power = rx_samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / needed as f64;
        if power < self.detection_threshold_mw {
            return Err(CfoError::NoSignal {
                power_mw: power,
                threshold_mw: self.detection_threshold_mw,
            });
        }

        // strip the known modulation
        let stripped: Vec<Complex64> = rx_samples
            .iter()
            .enumerate()
            .map(|(n, y)| {
                let bit = preamble.bits()[n / per_symbol];
                match (self.scheme, bit) {
                    (Modulation::Bpsk, 0) => -y,
                    (Modulation::Ook, 0) => Complex64::new(0.0, 0.0),
                    _ => *y,
                }
            })
            .collect();

        let half = PREAMBLE_SPLIT * per_symbol;
        let coarse_corr: Complex64 = (per_symbol..half)
            .map(|n| stripped[n] * stripped[n - per_symbol].conj())
            .sum();
        let coarse_lag = per_symbol as f64 / rx.sample_rate;
        let coarse = coarse_corr.arg() / (2.0 * PI * coarse_lag);

        let step = -2.0 * PI * coarse / rx.sample_rate;
        let derotated: Vec<Complex64> = stripped
            .iter()
            .enumerate()
            .map(|(n, z)| z * Complex64::from_polar(1.0, step * n as f64))
            .collect();
        let fine_corr: Complex64 = (0..half)
            .map(|n| derotated[n + half] * derotated[n].conj())
            .sum();
        let fine_lag = half as f64 / rx.sample_rate;
        let fine = fine_corr.arg() / (2.0 * PI * fine_lag);

        Ok(CfoEstimate::new(coarse + fine, rx.center_freq, rx.start_time))
    }

    /// Standard deviation (Hz) of the fine-stage estimate at a per-sample
    /// SNR, from the phase variance of the averaged lagged products.
    pub fn estimate_std(&self, sample_rate: f64, snr_linear: f64) -> f64 {
        let per_symbol = (sample_rate / self.symbol_rate).round().max(1.0);
        let pairs = PREAMBLE_SPLIT as f64 * per_symbol;
        let active = match self.scheme {
            Modulation::Bpsk => 1.0,
            Modulation::Ook => 0.25,
        };
        let phase_var = (1.0 / snr_linear + 0.5 / (snr_linear * snr_linear)) / (pairs * active);
        let lag = PREAMBLE_SPLIT as f64 / self.symbol_rate;
        phase_var.sqrt() / (2.0 * PI * lag)
    }
}

/// [`CfoEstimator::estimate`] with BPSK training and the default threshold.
pub fn estimate_cfo(rx: &SampleBuffer, preamble: &Preamble, symbol_rate: f64) -> Result<CfoEstimate> {
    CfoEstimator::new(symbol_rate).estimate(rx, preamble)
}
