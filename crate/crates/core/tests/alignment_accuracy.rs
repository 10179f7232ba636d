use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsmobility::alignment::*;
use wsmobility::baseband::{add_awgn, SampleBuffer, Subcarrier, ALLOWED_BANDWIDTHS};

const CENTER: f64 = 503e6;

fn lattice() -> Vec<(f64, f64)> {
    ALLOWED_BANDWIDTHS
        .iter()
        .flat_map(|&b| lattice_offsets(b, TEMPLATE_HALF_SPAN_HZ, LATTICE_HZ).into_iter().map(move |o| (b, o)))
        .collect()
}

/// PSD of a flat burst at `(b, off)`; `snr_db` is signal over noise inside the subcarrier band.
fn observe(b: f64, off: f64, snr_db: Option<f64>, window: PsdWindow, rng: &mut ChaCha8Rng) -> (PsdVector, f64) {
    let m = DEFAULT_FFT_SIZE;
    let fs = ALIGN_SAMPLE_RATE;
    let sc = Subcarrier::new(CENTER + off, b).unwrap();
    let mut buf = SampleBuffer::zeros(m, fs).with_center_freq(CENTER).with_start_time(rng.gen_range(0.0..1.0));
    let power = 1e-9;
    FlatBurst::new(&sc, fs / m as f64, power, rng).add_to(&mut buf, CENTER, 0.0);
    let noise = match snr_db {
        Some(snr) => power / 10f64.powf(snr / 10.0) * fs / b,
        None => 0.0,
    };
    add_awgn(&mut buf, noise, rng);
    (compute_psd(&buf, m, window).unwrap(), noise)
}

#[test]
fn every_lattice_pattern_is_identified_noiseless() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (b, off) in lattice() {
        let (psd, _) = observe(b, off, None, PsdWindow::Rectangular, &mut rng);
        let p = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &MatchConfig::default()).unwrap();
        assert_eq!((p.candidate_bandwidth, p.center_offset), (b, off));
    }
}

/// Hann leakage mixes neighbouring tones with random phases, so exact
/// identification is not guaranteed; it must still be right most of the time.
#[test]
fn hann_window_mostly_identifies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = MatchConfig { window: PsdWindow::Hann, ..MatchConfig::default() };
    let pats = lattice();
    let mut ok = 0;
    for i in 0..740 {
        let (b, off) = pats[i % pats.len()];
        let (psd, _) = observe(b, off, None, PsdWindow::Hann, &mut rng);
        let p = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &cfg).unwrap();
        ok += usize::from((p.candidate_bandwidth, p.center_offset) == (b, off));
    }
    println!("hann accuracy {ok}/740");
    assert!(ok >= 666, "{ok}");
}

#[test]
fn ten_db_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pats = lattice();
    let mut ok = 0;
    for i in 0..1000 {
        let (b, off) = pats[i % pats.len()];
        let (psd, noise) = observe(b, off, Some(10.0), PsdWindow::Rectangular, &mut rng);
        let cfg = MatchConfig { noise_bin_mw: noise, ..MatchConfig::default() };
        if let Ok(p) = match_overlap_pattern(&psd, &ALLOWED_BANDWIDTHS, &cfg) {
            ok += usize::from((p.candidate_bandwidth, p.center_offset) == (b, off));
        }
    }
    println!("10 dB accuracy {ok}/1000");
    assert!(ok >= 950);
}

#[test]
fn psd_depends_only_on_the_last_m_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut long = SampleBuffer::zeros(256 * 64, ALIGN_SAMPLE_RATE);
    add_awgn(&mut long, 1.0, &mut rng);
    let tail = SampleBuffer::new(long.samples[long.len() - 256..].to_vec(), ALIGN_SAMPLE_RATE).unwrap();
    let a = compute_psd(&long, 256, PsdWindow::Rectangular).unwrap();
    let b = compute_psd(&tail, 256, PsdWindow::Rectangular).unwrap();
    assert_eq!(a.bins, b.bins);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn score_bounded_and_monotone_in_template_power(
            psd in proptest::collection::vec(0.0f64..10.0, 256),
            idx in 0usize..74,
            c in 0.0f64..50.0,
            dc in 0.0f64..50.0,
            floor in 0.0f64..5.0,
        ) {
            let (b, off) = lattice()[idx];
            let t = pattern_template(256, 5e3, b, off);
            let with = |k: f64| {
                let bins: Vec<f64> = psd.iter().zip(&t).map(|(p, t)| p + k * t).collect();
                let v = PsdVector { total_power: bins.iter().sum(), bins, bin_width: 5e3, center_freq: 0.0 };
                template_score(&excess_power(&v, floor), &t)
            };
            let s1 = with(c);
            let s2 = with(c + dc);
            prop_assert!((0.0..=1.0).contains(&s1));
            prop_assert!(s2 >= s1 - 1e-12);
        }
    }
}
