//! Node-to-BS link budget and inter-carrier leakage.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geo::Point;
use crate::spectrum::PropagationModel;
use crate::units::{dbm_to_mw, mw_to_dbm};

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Power fraction an integrate-and-dump receiver at rate `symbol_rate`
/// collects from a tone `offset_hz` away from its center.
pub fn leakage(offset_hz: f64, symbol_rate: f64) -> f64 {
    sinc(offset_hz / symbol_rate).powi(2)
}

pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub noise_figure_db: f64,
    pub sensitivity_dbm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.5,
            reference_distance_m: 1.0,
            noise_figure_db: 6.0,
            sensitivity_dbm: -110.0,
        }
    }
}

impl LinkBudget {
    pub fn path_loss_db(&self, distance_m: f64, freq: f64) -> f64 {
        PropagationModel::LogDistance {
            exponent: self.path_loss_exponent,
            reference_distance_m: self.reference_distance_m,
        }
        .path_loss_db(distance_m, freq)
    }

    pub fn rx_power_dbm(&self, tx_power_dbm: f64, from: Point, to: Point, freq: f64) -> f64 {
        tx_power_dbm - self.path_loss_db(from.distance(&to), freq)
    }

    pub fn noise_floor_dbm(&self, bandwidth_hz: f64) -> f64 {
        noise_floor_dbm(bandwidth_hz, self.noise_figure_db)
    }

    /// Signal to noise-plus-interference ratio in dB over `bandwidth_hz`.
    pub fn sinr_db(&self, rx_power_dbm: f64, bandwidth_hz: f64, interference_mw: f64) -> f64 {
        let n = dbm_to_mw(self.noise_floor_dbm(bandwidth_hz));
        rx_power_dbm - mw_to_dbm(n + interference_mw.max(0.0))
    }

    /// SNR of a node at `node` transmitting `tx_power_dbm` to a BS at `bs`.
    pub fn link_snr(
        &self,
        tx_power_dbm: f64,
        node: Point,
        bs: Point,
        freq: f64,
        bandwidth_hz: f64,
        interference_mw: f64,
    ) -> f64 {
        self.sinr_db(self.rx_power_dbm(tx_power_dbm, node, bs, freq), bandwidth_hz, interference_mw)
    }
}
