//! Bit and packet error probabilities for the modelled receivers.

use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc;

use crate::baseband::Modulation;
use crate::sim::link::leakage;
use crate::units::db_to_linear;

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Coherent BPSK: `Q(sqrt(2 snr))`. Non-coherent OOK with a mid-amplitude
/// threshold: `exp(-snr / 2) / 2`, with `snr` the average-power SNR in the
/// symbol bandwidth.
pub fn bit_error_rate(scheme: Modulation, snr_linear: f64) -> f64 {
    let g = snr_linear.max(0.0);
    match scheme {
        Modulation::Bpsk => q_function((2.0 * g).sqrt()),
        Modulation::Ook => 0.5 * (-g / 2.0).exp(),
    }
}

/// SNR after the integrate-and-dump loss of a residual offset.
pub fn effective_snr_db(snr_db: f64, residual_cfo_hz: f64, symbol_rate: f64) -> f64 {
    snr_db + 10.0 * leakage(residual_cfo_hz, symbol_rate).log10()
}

pub fn packet_error_probability(
    snr_db: f64,
    residual_cfo_hz: f64,
    symbol_rate: f64,
    bits: u32,
    scheme: Modulation,
) -> f64 {
    let eff = effective_snr_db(snr_db, residual_cfo_hz, symbol_rate);
    let ber = bit_error_rate(scheme, db_to_linear(eff));
    // 1 - (1 - ber)^bits without cancellation at tiny ber
    -f64::exp_m1(bits as f64 * f64::ln_1p(-ber.min(1.0 - 1e-16)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::linear_to_db;
    use proptest::prelude::*;

    #[test]
    fn half_symbol_offset_costs_about_four_db() {
        let drop = 20.0 - effective_snr_db(20.0, 100e3, 200e3);
        // 10 log10(pi^2 / 4)
        assert!((drop - 3.9224).abs() < 1e-3, "{drop}");
    }

    #[test]
    fn bpsk_reference_points() {
        // textbook: 1e-5 needs about 9.6 dB
        let ber = bit_error_rate(Modulation::Bpsk, db_to_linear(9.5879));
        assert!((ber / 1e-5 - 1.0).abs() < 0.01, "{ber}");
        assert!((bit_error_rate(Modulation::Bpsk, 0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ook_closed_form() {
        let g = db_to_linear(12.0);
        assert!((bit_error_rate(Modulation::Ook, g) - 0.5 * (-g / 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn packet_error_matches_direct_power() {
        let snr = 8.0;
        let ber = bit_error_rate(Modulation::Bpsk, db_to_linear(snr));
        let direct = 1.0 - (1.0 - ber).powi(320);
        let pep = packet_error_probability(snr, 0.0, 200e3, 320, Modulation::Bpsk);
        assert!((pep - direct).abs() < 1e-12);
        assert_eq!(packet_error_probability(snr, 0.0, 200e3, 0, Modulation::Bpsk), 0.0);
        assert!(linear_to_db(db_to_linear(snr)) - snr < 1e-12);
    }

    proptest! {
        #[test]
        fn pep_monotone(snr in -5.0f64..30.0, d in 0.1f64..5.0, cfo in 0.0f64..90e3, bits in 1u32..2000) {
            for scheme in [Modulation::Bpsk, Modulation::Ook] {
                let p = packet_error_probability(snr, cfo, 200e3, bits, scheme);
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(packet_error_probability(snr + d, cfo, 200e3, bits, scheme) <= p);
                prop_assert!(packet_error_probability(snr, cfo + 5e3, 200e3, bits, scheme) >= p);
                prop_assert!(packet_error_probability(snr, cfo, 200e3, bits + 1, scheme) >= p);
            }
        }
    }
}
