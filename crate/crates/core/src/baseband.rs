//! Sample-level D-OFDM primitives.
//!
//! Every buffer is complex baseband relative to some RF center frequency
//! (`SampleBuffer::center_freq`). A buffer produced by [`modulate`] is centered
//! on its own subcarrier; [`synthesize_composite`] shifts such buffers onto a
//! wide BS channel and [`extract_subcarrier`] brings one of them back down.
//!
//! Pulses are rectangular and one bit maps to one symbol, with the symbol rate
//! equal to the subcarrier bandwidth. Extraction integrates over each symbol
//! period, so streams whose centers differ by an integer multiple of the
//! symbol rate do not leak into each other at all.
//!
//! Sample magnitudes are in sqrt(mW): `|x|^2` is instantaneous power in mW.

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type ComplexSample = Complex64;

/// Subcarrier widths a BS may use.
pub const ALLOWED_BANDWIDTHS: [f64; 4] = [100e3, 200e3, 400e3, 600e3];

pub const PREAMBLE_LEN: usize = 32;
pub const PREAMBLE_SPLIT: usize = 16;

const BUFFER_MAGIC: [u8; 4] = *b"SBUF";

#[derive(Debug, Error)]
pub enum BasebandError {
    #[error("empty bit sequence")]
    EmptyBits,
    #[error("bit value {0} at index {1} is not 0 or 1")]
    InvalidBit(u8, usize),
    #[error("sample rate {rate} Hz aliases a signal needing {needed} Hz")]
    Aliasing { rate: f64, needed: f64 },
    #[error("sample rate {rate} Hz is not an integer multiple of symbol rate {symbol_rate} Hz")]
    FractionalSymbol { rate: f64, symbol_rate: f64 },
    #[error("buffer of {len} samples is not a whole number of {per_symbol}-sample symbols")]
    PartialSymbol { len: usize, per_symbol: usize },
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("subcarrier at {center} Hz (width {bandwidth} Hz) lies outside the composite band")]
    OutOfBand { center: f64, bandwidth: f64 },
    #[error("invalid subcarrier: center {center} Hz, bandwidth {bandwidth} Hz")]
    InvalidSubcarrier { center: f64, bandwidth: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("malformed sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, BasebandError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    /// On-off keying, the binary form of ASK.
    Ook,
}

impl Modulation {
    fn symbol(self, bit: u8) -> Complex64 {
        match (self, bit) {
            (Modulation::Bpsk, 0) => Complex64::new(-1.0, 0.0),
            (Modulation::Ook, 0) => Complex64::new(0.0, 0.0),
            _ => Complex64::new(1.0, 0.0),
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "ook" | "ask" => Ok(Modulation::Ook),
            other => Err(format!("unknown modulation '{other}' (expected bpsk or ook)")),
        }
    }
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modulation::Bpsk => write!(f, "bpsk"),
            Modulation::Ook => write!(f, "ook"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<ComplexSample>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Absolute time of `samples[0]`, seconds.
    pub start_time: f64,
    /// RF frequency that baseband 0 Hz corresponds to.
    pub center_freq: f64,
}

impl SampleBuffer {
    pub fn new(samples: Vec<ComplexSample>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(BasebandError::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(BasebandError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time: 0.0,
            center_freq: 0.0,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
            start_time: 0.0,
            center_freq: 0.0,
        }
    }

    pub fn with_start_time(mut self, t: f64) -> Self {
        self.start_time = t;
        self
    }

    pub fn with_center_freq(mut self, f: f64) -> Self {
        self.center_freq = f;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Absolute time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    /// Sum of `|x|^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Mean of `|x|^2` (mW); zero for an empty buffer.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    /// Writes the fixture format: 16-byte header (magic `SBUF`, f64 sample
    /// rate, u32 count) followed by interleaved little-endian f32 re/im.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let count = u32::try_from(self.samples.len())
            .map_err(|_| BasebandError::Format("more than u32::MAX samples".into()))?;
        w.write_all(&BUFFER_MAGIC)?;
        w.write_all(&self.sample_rate.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&(s.re as f32).to_le_bytes())?;
            w.write_all(&(s.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if header[0..4] != BUFFER_MAGIC {
            return Err(BasebandError::Format("bad magic".into()));
        }
        let rate = f64::from_le_bytes(header[4..12].try_into().unwrap());
        let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut body = vec![0u8; count * 8];
        r.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        SampleBuffer::new(samples, rate)
    }
}

/// A narrowband channel slice owned by one node.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Subcarrier {
    /// Absolute center frequency, Hz.
    pub center_freq: f64,
    pub bandwidth: f64,
}

impl Subcarrier {
    pub fn new(center_freq: f64, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !(center_freq > bandwidth / 2.0) || !center_freq.is_finite() {
            return Err(BasebandError::InvalidSubcarrier {
                center: center_freq,
                bandwidth,
            });
        }
        Ok(Self {
            center_freq,
            bandwidth,
        })
    }

    /// One bit per symbol at a symbol rate equal to the bandwidth.
    pub fn symbol_rate(&self) -> f64 {
        self.bandwidth
    }

    pub fn low_edge(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }

    pub fn high_edge(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }

    /// Width of the frequency range shared with `other`, Hz.
    pub fn overlap_with(&self, other: &Subcarrier) -> f64 {
        (self.high_edge().min(other.high_edge()) - self.low_edge().max(other.low_edge())).max(0.0)
    }

    pub fn has_allowed_width(&self) -> bool {
        is_allowed_bandwidth(self.bandwidth)
    }
}

pub fn is_allowed_bandwidth(bw: f64) -> bool {
    ALLOWED_BANDWIDTHS.iter().any(|a| (a - bw).abs() < 1e-6)
}

/// 32-bit training sequence; the first half drives coarse CFO estimation and
/// the second half the fine stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preamble {
    bits: [u8; PREAMBLE_LEN],
}

impl Preamble {
    /// Balanced (16 ones, 16 zeros) default pattern.
    pub const DEFAULT_BITS: [u8; PREAMBLE_LEN] = [
        1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 1, 0, //
        0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1, 0,
    ];

    pub fn new(bits: [u8; PREAMBLE_LEN]) -> Result<Self> {
        validate_bits(&bits)?;
        Ok(Self { bits })
    }

    pub fn from_u32(pattern: u32) -> Self {
        let mut bits = [0u8; PREAMBLE_LEN];
        for (i, b) in bits.iter_mut().enumerate() {
            *b = ((pattern >> (31 - i)) & 1) as u8;
        }
        Self { bits }
    }

    pub fn bits(&self) -> &[u8; PREAMBLE_LEN] {
        &self.bits
    }

    pub fn coarse(&self) -> &[u8] {
        &self.bits[..PREAMBLE_SPLIT]
    }

    pub fn fine(&self) -> &[u8] {
        &self.bits[PREAMBLE_SPLIT..]
    }

    pub fn split(&self) -> usize {
        PREAMBLE_SPLIT
    }
}

impl Default for Preamble {
    fn default() -> Self {
        Self {
            bits: Self::DEFAULT_BITS,
        }
    }
}

fn validate_bits(bits: &[u8]) -> Result<()> {
    if let Some((i, &b)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(BasebandError::InvalidBit(b, i));
    }
    Ok(())
}

/// Integer number of samples per symbol, or an error when the rates do not
/// divide evenly.
pub fn samples_per_symbol(sample_rate: f64, symbol_rate: f64) -> Result<usize> {
    let ratio = sample_rate / symbol_rate;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(BasebandError::FractionalSymbol {
            rate: sample_rate,
            symbol_rate,
        });
    }
    Ok(n as usize)
}

/// Maps bits onto rectangular symbols, centered on the subcarrier itself.
pub fn modulate(
    bits: &[u8],
    scheme: Modulation,
    subcarrier: &Subcarrier,
    sample_rate: f64,
) -> Result<SampleBuffer> {
    if bits.is_empty() {
        return Err(BasebandError::EmptyBits);
    }
    validate_bits(bits)?;
    if sample_rate < subcarrier.bandwidth {
        return Err(BasebandError::Aliasing {
            rate: sample_rate,
            needed: subcarrier.bandwidth,
        });
    }
    let per_symbol = samples_per_symbol(sample_rate, subcarrier.symbol_rate())?;
    let samples = bits
        .iter()
        .flat_map(|&b| std::iter::repeat_n(scheme.symbol(b), per_symbol))
        .collect();
    Ok(SampleBuffer {
        samples,
        sample_rate,
        start_time: 0.0,
        center_freq: subcarrier.center_freq,
    })
}

/// Integrate-and-dump over each symbol period.
pub fn symbol_means(buf: &SampleBuffer, symbol_rate: f64) -> Result<Vec<Complex64>> {
    let per_symbol = samples_per_symbol(buf.sample_rate, symbol_rate)?;
    if !buf.len().is_multiple_of(per_symbol) {
        return Err(BasebandError::PartialSymbol {
            len: buf.len(),
            per_symbol,
        });
    }
    let scale = 1.0 / per_symbol as f64;
    Ok(buf
        .samples
        .chunks_exact(per_symbol)
        .map(|c| c.iter().sum::<Complex64>() * scale)
        .collect())
}

/// Hard decisions assuming a unit-amplitude, zero-phase `1` symbol.
pub fn demodulate(buf: &SampleBuffer, scheme: Modulation, subcarrier: &Subcarrier) -> Result<Vec<u8>> {
    demodulate_with_reference(buf, scheme, subcarrier, Complex64::new(1.0, 0.0))
}

/// Hard decisions against `reference`, the expected per-symbol mean of a `1`.
/// BPSK decides on the sign of the projection onto the reference; OOK
/// compares symbol energy with a quarter of the reference energy.
pub fn demodulate_with_reference(
    buf: &SampleBuffer,
    scheme: Modulation,
    subcarrier: &Subcarrier,
    reference: Complex64,
) -> Result<Vec<u8>> {
    let means = symbol_means(buf, subcarrier.symbol_rate())?;
    let threshold = reference.norm_sqr() / 4.0;
    Ok(means
        .iter()
        .map(|z| match scheme {
            Modulation::Bpsk => u8::from((z * reference.conj()).re >= 0.0),
            Modulation::Ook => u8::from(z.norm_sqr() > threshold),
        })
        .collect())
}

/// Multiplies each sample by `exp(j 2 pi f t)` with `t` counted from the
/// buffer start.
pub(crate) fn shift_relative(samples: &mut [Complex64], freq: f64, sample_rate: f64) {
    if freq == 0.0 {
        return;
    }
    let w = 2.0 * PI * freq / sample_rate;
    for (n, s) in samples.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, w * n as f64);
    }
}

/// Adds circular complex Gaussian noise of total power `noise_power` (mW)
/// per sample.
pub fn add_awgn<R: Rng + ?Sized>(buf: &mut SampleBuffer, noise_power: f64, rng: &mut R) {
    if noise_power <= 0.0 {
        return;
    }
    let sigma = (noise_power / 2.0).sqrt();
    for s in &mut buf.samples {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(re * sigma, im * sigma);
    }
}

/// Wide band a composite buffer is synthesized into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeBand {
    pub center_freq: f64,
    pub sample_rate: f64,
}

impl CompositeBand {
    fn contains(&self, sc: &Subcarrier) -> bool {
        (sc.center_freq - self.center_freq).abs() + sc.bandwidth / 2.0 <= self.sample_rate / 2.0 + 1e-6
    }
}

/// Sums frequency-shifted streams into one buffer. Shorter streams are
/// zero-padded to the longest one.
pub fn synthesize_composite(
    band: CompositeBand,
    streams: &[(Subcarrier, SampleBuffer)],
) -> Result<SampleBuffer> {
    let len = streams.iter().map(|(_, b)| b.len()).max().unwrap_or(0);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let mut start_time = None;
    for (sc, buf) in streams {
        if (buf.sample_rate - band.sample_rate).abs() > 1e-9 * band.sample_rate {
            return Err(BasebandError::RateMismatch(band.sample_rate, buf.sample_rate));
        }
        if !band.contains(sc) {
            return Err(BasebandError::OutOfBand {
                center: sc.center_freq,
                bandwidth: sc.bandwidth,
            });
        }
        let mut shifted = buf.samples.clone();
        shift_relative(&mut shifted, sc.center_freq - band.center_freq, band.sample_rate);
        for (o, s) in out.iter_mut().zip(shifted) {
            *o += s;
        }
        start_time.get_or_insert(buf.start_time);
    }
    Ok(SampleBuffer {
        samples: out,
        sample_rate: band.sample_rate,
        start_time: start_time.unwrap_or(0.0),
        center_freq: band.center_freq,
    })
}

/// Shifts `sc` to 0 Hz, integrates over each symbol and decimates to one
/// sample per symbol. Trailing samples that do not fill a symbol are dropped.
pub fn extract_subcarrier(composite: &SampleBuffer, sc: &Subcarrier) -> Result<SampleBuffer> {
    let band = CompositeBand {
        center_freq: composite.center_freq,
        sample_rate: composite.sample_rate,
    };
    if !band.contains(sc) {
        return Err(BasebandError::OutOfBand {
            center: sc.center_freq,
            bandwidth: sc.bandwidth,
        });
    }
    let per_symbol = samples_per_symbol(composite.sample_rate, sc.symbol_rate())?;
    let whole = composite.len() / per_symbol * per_symbol;
    let mut shifted = composite.samples[..whole].to_vec();
    shift_relative(&mut shifted, band.center_freq - sc.center_freq, band.sample_rate);
    let scale = 1.0 / per_symbol as f64;
    let samples = shifted
        .chunks_exact(per_symbol)
        .map(|c| c.iter().sum::<Complex64>() * scale)
        .collect();
    Ok(SampleBuffer {
        samples,
        sample_rate: sc.symbol_rate(),
        start_time: composite.start_time,
        center_freq: sc.center_freq,
    })
}

/// Closed form of the integral over `[0, T']` of `cos(2 pi f_i t) cos(2 pi f_j t)`.
pub fn orthogonality(f_i: f64, f_j: f64, t_prime: f64) -> Result<f64> {
    if !(t_prime > 0.0) {
        return Err(BasebandError::InvalidArgument(format!(
            "integration time must be positive, got {t_prime}"
        )));
    }
    // integral of cos(w t) over [0, T], with the w -> 0 limit handled exactly
    let half_term = |w: f64| {
        if (w * t_prime).abs() < 1e-12 {
            t_prime
        } else {
            (w * t_prime).sin() / w
        }
    };
    let diff = 2.0 * PI * (f_i - f_j);
    let sum = 2.0 * PI * (f_i + f_j);
    Ok(0.5 * (half_term(diff) + half_term(sum)))
}

/// Number of subcarriers of width `sc_bandwidth` packed into `bs_bandwidth`
/// when neighbors overlap by `overlap_fraction`.
pub fn count_orthogonal_subcarriers(
    bs_bandwidth: f64,
    sc_bandwidth: f64,
    overlap_fraction: f64,
) -> Result<u32> {
    if !(sc_bandwidth > 0.0) || bs_bandwidth < sc_bandwidth {
        return Err(BasebandError::InvalidArgument(format!(
            "need 0 < subcarrier width ({sc_bandwidth}) <= BS width ({bs_bandwidth})"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(BasebandError::InvalidArgument(format!(
            "overlap fraction {overlap_fraction} outside [0, 1)"
        )));
    }
    let step = sc_bandwidth * (1.0 - overlap_fraction);
    let slots = (bs_bandwidth - sc_bandwidth) / step;
    Ok((slots + 1e-9).floor() as u32 + 1)
}
