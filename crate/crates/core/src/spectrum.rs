//! White-space ground truth: TV station registry, protection contours and
//! per-location channel availability.
//!
//! A location is usable on a channel when no point within 6 km of it sees a
//! TV signal above -84 dBm after the antenna-height correction. With a
//! monotone path-loss model that region is a disc around each station, so
//! the rule reduces to `distance > contour_radius + 6 km` for every station
//! on the channel.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfo::SPEED_OF_LIGHT;
use crate::geo::Point;

pub const FIRST_CHANNEL: u32 = 14;
pub const LAST_CHANNEL: u32 = 51;
pub const TV_BAND_LOW_HZ: f64 = 470e6;
pub const TV_CHANNEL_WIDTH_HZ: f64 = 6e6;

/// Protection contour edge: occupied when the corrected RSS is above this.
pub const PROTECTION_THRESHOLD_DBM: f64 = -84.0;
/// Extra separation required beyond the contour for portable devices.
pub const SEPARATION_M: f64 = 6000.0;
/// Correction applied to RSS measured with a 2 m antenna.
pub const ANTENNA_CORRECTION_DB: f64 = 7.5;
pub const DEFAULT_GRID_RESOLUTION_M: f64 = 100.0;
pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 3.5;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("unknown TV channel {0}")]
    UnknownChannel(u32),
    #[error("point {0} lies outside the map")]
    OutOfBounds(Point),
    #[error("station table line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SpectrumError>;

pub fn is_tv_channel(ch: u32) -> bool {
    (FIRST_CHANNEL..=LAST_CHANNEL).contains(&ch)
}

pub fn channel_low_edge(ch: u32) -> Option<f64> {
    is_tv_channel(ch).then(|| TV_BAND_LOW_HZ + (ch - FIRST_CHANNEL) as f64 * TV_CHANNEL_WIDTH_HZ)
}

pub fn channel_center(ch: u32) -> Option<f64> {
    channel_low_edge(ch).map(|lo| lo + TV_CHANNEL_WIDTH_HZ / 2.0)
}

/// TV channel containing `freq`.
pub fn channel_of(freq: f64) -> Option<u32> {
    if freq < TV_BAND_LOW_HZ {
        return None;
    }
    let ch = FIRST_CHANNEL + ((freq - TV_BAND_LOW_HZ) / TV_CHANNEL_WIDTH_HZ).floor() as u32;
    is_tv_channel(ch).then_some(ch)
}

pub fn all_channels() -> impl Iterator<Item = u32> {
    FIRST_CHANNEL..=LAST_CHANNEL
}

/// Hata urban antenna-height correction `3.2 (log10(11.5 h))^2 - 4.97` dB.
pub fn antenna_correction(h_m: f64) -> Result<f64> {
    if !(h_m > 0.0) {
        return Err(SpectrumError::InvalidArgument(format!(
            "antenna height {h_m} m must be positive"
        )));
    }
    Ok(3.2 * (11.5 * h_m).log10().powi(2) - 4.97)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvStation {
    pub channel: u32,
    pub location: Point,
    pub tx_power_dbm: f64,
    pub antenna_height_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropagationModel {
    FreeSpace,
    /// Free-space loss up to `reference_distance_m`, then `10 n log10(d / d0)`.
    LogDistance { exponent: f64, reference_distance_m: f64 },
}

impl Default for PropagationModel {
    fn default() -> Self {
        PropagationModel::LogDistance {
            exponent: DEFAULT_PATH_LOSS_EXPONENT,
            reference_distance_m: 1.0,
        }
    }
}

pub fn free_space_loss_db(distance_m: f64, freq: f64) -> f64 {
    20.0 * (4.0 * PI * distance_m * freq / SPEED_OF_LIGHT).log10()
}

impl PropagationModel {
    /// Loss in dB; distances below 1 m are clamped to 1 m.
    pub fn path_loss_db(&self, distance_m: f64, freq: f64) -> f64 {
        let d = distance_m.max(1.0);
        match *self {
            PropagationModel::FreeSpace => free_space_loss_db(d, freq),
            PropagationModel::LogDistance {
                exponent,
                reference_distance_m,
            } => {
                free_space_loss_db(reference_distance_m, freq)
                    + 10.0 * exponent * (d / reference_distance_m).log10()
            }
        }
    }

    /// Distance at which the loss reaches `loss_db` (inverse of
    /// [`path_loss_db`](Self::path_loss_db) above the 1 m clamp).
    pub fn distance_for_loss(&self, loss_db: f64, freq: f64) -> f64 {
        match *self {
            PropagationModel::FreeSpace => {
                10f64.powf(loss_db / 20.0) * SPEED_OF_LIGHT / (4.0 * PI * freq)
            }
            PropagationModel::LogDistance {
                exponent,
                reference_distance_m,
            } => {
                let l0 = free_space_loss_db(reference_distance_m, freq);
                reference_distance_m * 10f64.powf((loss_db - l0) / (10.0 * exponent))
            }
        }
    }
}

/// Propagation backend for TV signals, including the fixed correction added
/// to every measured RSS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub model: PropagationModel,
    pub antenna_correction_db: f64,
}

impl Default for Propagation {
    fn default() -> Self {
        Self {
            model: PropagationModel::default(),
            antenna_correction_db: ANTENNA_CORRECTION_DB,
        }
    }
}

impl Propagation {
    /// RSS a 2 m antenna measures, without correction.
    pub fn raw_rss(&self, station: &TvStation, point: Point) -> f64 {
        let freq = channel_center(station.channel).unwrap_or(TV_BAND_LOW_HZ);
        station.tx_power_dbm - self.model.path_loss_db(station.location.distance(&point), freq)
    }

    /// Corrected RSS used for white-space decisions.
    pub fn rss_at(&self, station: &TvStation, point: Point) -> f64 {
        self.raw_rss(station, point) + self.antenna_correction_db
    }

    /// Radius of the region where the corrected RSS exceeds the protection
    /// threshold; zero when even 1 m away the station stays below it.
    pub fn contour_radius(&self, station: &TvStation) -> f64 {
        let freq = channel_center(station.channel).unwrap_or(TV_BAND_LOW_HZ);
        let budget = station.tx_power_dbm + self.antenna_correction_db - PROTECTION_THRESHOLD_DBM;
        if budget <= self.model.path_loss_db(1.0, freq) {
            return 0.0;
        }
        self.model.distance_for_loss(budget, freq)
    }
}

/// Free-function form of [`Propagation::rss_at`].
pub fn rss_at(station: &TvStation, point: Point, propagation: &Propagation) -> f64 {
    propagation.rss_at(station, point)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(SpectrumError::InvalidArgument(format!(
                "empty bounds {min} .. {max}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EightPointEntry {
    pub location: Point,
    /// `None` when the location falls outside the map.
    pub channels: Option<BTreeSet<u32>>,
}

/// Offsets of the eight neighborhood points, in the order the list is built.
pub fn eight_point_offsets(r: f64) -> [Point; 8] {
    [
        Point::new(0.0, r),
        Point::new(0.0, -r),
        Point::new(r, 0.0),
        Point::new(-r, 0.0),
        Point::new(r, r),
        Point::new(r, -r),
        Point::new(-r, r),
        Point::new(-r, -r),
    ]
}

/// Gridded white-space map. Built once per scenario and read-only after.
#[derive(Debug, Clone)]
pub struct SpectrumMap {
    bounds: Bounds,
    resolution: f64,
    nx: usize,
    ny: usize,
    stations: Vec<TvStation>,
    contours: Vec<f64>,
    propagation: Propagation,
    /// Per cell, strongest corrected RSS for each channel (index ch - 14).
    rss: Vec<f64>,
    /// Per cell, bit `ch - 14` set when the channel is white space.
    available: Vec<u64>,
}

const NUM_CHANNELS: usize = (LAST_CHANNEL - FIRST_CHANNEL + 1) as usize;
const NO_SIGNAL_DBM: f64 = f64::NEG_INFINITY;

impl SpectrumMap {
    pub fn build(
        bounds: Bounds,
        resolution: f64,
        stations: Vec<TvStation>,
        propagation: Propagation,
    ) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(SpectrumError::InvalidArgument(format!(
                "grid resolution {resolution} must be positive"
            )));
        }
        if let Some(s) = stations.iter().find(|s| !is_tv_channel(s.channel)) {
            return Err(SpectrumError::UnknownChannel(s.channel));
        }
        if let Some(s) = stations.iter().find(|s| !s.tx_power_dbm.is_finite()) {
            return Err(SpectrumError::InvalidArgument(format!(
                "station on channel {} has non-finite power",
                s.channel
            )));
        }
        let nx = ((bounds.max.x - bounds.min.x) / resolution).ceil().max(1.0) as usize;
        let ny = ((bounds.max.y - bounds.min.y) / resolution).ceil().max(1.0) as usize;
        let contours = stations.iter().map(|s| propagation.contour_radius(s)).collect();
        let mut map = Self {
            bounds,
            resolution,
            nx,
            ny,
            stations,
            contours,
            propagation,
            rss: vec![NO_SIGNAL_DBM; nx * ny * NUM_CHANNELS],
            available: vec![0; nx * ny],
        };
        for cell in 0..nx * ny {
            let center = map.cell_center(cell);
            let mut mask = 0u64;
            for ch in all_channels() {
                let idx = (ch - FIRST_CHANNEL) as usize;
                let strongest = map
                    .stations
                    .iter()
                    .filter(|s| s.channel == ch)
                    .map(|s| map.propagation.rss_at(s, center))
                    .fold(NO_SIGNAL_DBM, f64::max);
                map.rss[cell * NUM_CHANNELS + idx] = strongest;
                if map.white_space_unchecked(ch, center) {
                    mask |= 1 << idx;
                }
            }
            map.available[cell] = mask;
        }
        Ok(map)
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn stations(&self) -> &[TvStation] {
        &self.stations
    }

    pub fn propagation(&self) -> &Propagation {
        &self.propagation
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        Point::new(
            self.bounds.min.x + (ix as f64 + 0.5) * self.resolution,
            self.bounds.min.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        if !self.bounds.contains(p) {
            return None;
        }
        let ix = (((p.x - self.bounds.min.x) / self.resolution) as usize).min(self.nx - 1);
        let iy = (((p.y - self.bounds.min.y) / self.resolution) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    /// Gridded availability of `ch` at `cell`.
    pub fn cell_available(&self, cell: usize, ch: u32) -> bool {
        is_tv_channel(ch) && self.available[cell] & (1 << (ch - FIRST_CHANNEL)) != 0
    }

    /// Gridded strongest corrected RSS of `ch` at `cell`; `-inf` with no station.
    pub fn cell_rss(&self, cell: usize, ch: u32) -> f64 {
        self.rss[cell * NUM_CHANNELS + (ch - FIRST_CHANNEL) as usize]
    }

    fn white_space_unchecked(&self, ch: u32, p: Point) -> bool {
        self.stations
            .iter()
            .zip(&self.contours)
            .filter(|(s, _)| s.channel == ch)
            .all(|(s, &r)| {
                let rss_ok = self.propagation.rss_at(s, p) < PROTECTION_THRESHOLD_DBM;
                rss_ok && (r == 0.0 || s.location.distance(&p) > r + SEPARATION_M)
            })
    }

    pub fn is_white_space(&self, ch: u32, p: Point) -> Result<bool> {
        if !is_tv_channel(ch) {
            return Err(SpectrumError::UnknownChannel(ch));
        }
        Ok(self.white_space_unchecked(ch, p))
    }

    pub fn available_channels(&self, p: Point) -> Result<BTreeSet<u32>> {
        if !self.bounds.contains(p) {
            return Err(SpectrumError::OutOfBounds(p));
        }
        Ok(all_channels().filter(|&ch| self.white_space_unchecked(ch, p)).collect())
    }

    /// Strongest raw (uncorrected) TV RSS on `ch` at `p`, dBm.
    pub fn tv_rss(&self, ch: u32, p: Point) -> Option<f64> {
        self.stations
            .iter()
            .filter(|s| s.channel == ch)
            .map(|s| self.propagation.raw_rss(s, p))
            .reduce(f64::max)
    }

    /// Channel sets at `(0, +-r)`, `(+-r, 0)` and `(+-r, +-r)` around `bs`.
    pub fn eight_point_channel_list(&self, bs: Point, r: f64) -> Vec<EightPointEntry> {
        eight_point_offsets(r)
            .iter()
            .map(|&off| {
                let location = bs + off;
                EightPointEntry {
                    location,
                    channels: self.available_channels(location).ok(),
                }
            })
            .collect()
    }

    /// Grid cells within `radius` of `center`.
    pub fn cells_within(&self, center: Point, radius: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.cell_count()).filter(move |&c| self.cell_center(c).distance(&center) <= radius)
    }

    /// Number of cells within `radius` of `center` where `ch` is white space.
    pub fn availability_count(&self, ch: u32, center: Point, radius: f64) -> usize {
        self.cells_within(center, radius)
            .filter(|&c| self.cell_available(c, ch))
            .count()
    }
}

/// Parses the plain-text station registry: one station per line with
/// `channel x_m y_m tx_power_dbm height_m`; `#` starts a comment line.
pub fn parse_station_table(text: &str) -> Result<Vec<TvStation>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(SpectrumError::Parse {
                line: line_no,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SpectrumError::Parse {
                    line: line_no,
                    msg: format!("bad {name} '{}'", fields[idx]),
                })
        };
        let channel: u32 = fields[0].parse().map_err(|_| SpectrumError::Parse {
            line: line_no,
            msg: format!("bad channel '{}'", fields[0]),
        })?;
        if !is_tv_channel(channel) {
            return Err(SpectrumError::Parse {
                line: line_no,
                msg: format!("channel {channel} outside {FIRST_CHANNEL}..={LAST_CHANNEL}"),
            });
        }
        out.push(TvStation {
            channel,
            location: Point::new(num(1, "x_m")?, num(2, "y_m")?),
            tx_power_dbm: num(3, "tx_power_dbm")?,
            antenna_height_m: num(4, "height_m")?,
        });
    }
    Ok(out)
}

pub fn write_station_table(stations: &[TvStation]) -> String {
    let mut s = String::from("# channel x_m y_m tx_power_dbm height_m\n");
    for st in stations {
        s.push_str(&format!(
            "{} {} {} {} {}\n",
            st.channel, st.location.x, st.location.y, st.tx_power_dbm, st.antenna_height_m
        ));
    }
    s
}
