//! Radio energy accounting from supply voltage and per-mode current draw.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub voltage_v: f64,
    pub rx_current_a: f64,
    pub tx_current_a: f64,
    pub idle_current_a: f64,
    /// RX draw multiplier while sensing with a widened front end.
    pub wide_sense_factor: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            voltage_v: 3.8,
            rx_current_a: 5.4e-3,
            tx_current_a: 13.4e-3,
            idle_current_a: 0.7e-6,
            wide_sense_factor: 1.5,
        }
    }
}

impl EnergyModel {
    pub fn tx_power_w(&self) -> f64 {
        self.voltage_v * self.tx_current_a
    }

    pub fn rx_power_w(&self) -> f64 {
        self.voltage_v * self.rx_current_a
    }

    pub fn idle_power_w(&self) -> f64 {
        self.voltage_v * self.idle_current_a
    }
}

/// Time on air of `bits` at `bit_rate` bits/s.
pub fn airtime(bits: u64, bit_rate: f64) -> f64 {
    bits as f64 / bit_rate
}

/// Accumulated time per radio mode for one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub tx_s: f64,
    pub rx_s: f64,
    /// RX time already scaled by the wide-sensing factor is kept separately.
    pub wide_rx_s: f64,
}

impl EnergyLedger {
    pub fn add_tx(&mut self, seconds: f64) {
        self.tx_s += seconds;
    }

    pub fn add_rx(&mut self, seconds: f64) {
        self.rx_s += seconds;
    }

    pub fn add_wide_rx(&mut self, seconds: f64) {
        self.wide_rx_s += seconds;
    }

    pub fn tx_joules(&self, m: &EnergyModel) -> f64 {
        m.tx_power_w() * self.tx_s
    }

    pub fn rx_joules(&self, m: &EnergyModel) -> f64 {
        m.rx_power_w() * (self.rx_s + m.wide_sense_factor * self.wide_rx_s)
    }

    /// Total including idle draw over the rest of `lifetime_s`.
    pub fn total_joules(&self, m: &EnergyModel, lifetime_s: f64) -> f64 {
        let idle = (lifetime_s - self.tx_s - self.rx_s - self.wide_rx_s).max(0.0);
        self.tx_joules(m) + self.rx_joules(m) + m.idle_power_w() * idle
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousand_packets_tx_budget() {
        let m = EnergyModel::default();
        let mut l = EnergyLedger::default();
        for _ in 0..1000 {
            l.add_tx(airtime(40 * 8, 200e3));
        }
        assert!((l.tx_s - 1.6).abs() < 1e-9);
        assert!((l.tx_joules(&m) - 0.081472).abs() < 1e-9);
    }

    #[test]
    fn wide_rx_costs_more() {
        let m = EnergyModel::default();
        let mut a = EnergyLedger::default();
        let mut b = EnergyLedger::default();
        a.add_rx(1.0);
        b.add_wide_rx(1.0);
        assert!((b.rx_joules(&m) / a.rx_joules(&m) - 1.5).abs() < 1e-12);
        assert!(a.total_joules(&m, 10.0) > a.rx_joules(&m));
    }
}
