//! Sense-before-send access with binary exponential backoff measured in
//! packet airtimes.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Carrier-sense listening time before each transmission.
pub const CCA_S: f64 = 128e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsmaConfig {
    /// Failed attempts tolerated after the first before a packet is dropped.
    pub retry_limit: u32,
    pub max_doublings: u32,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        Self {
            retry_limit: 4,
            max_doublings: 5,
        }
    }
}

pub fn packet_airtime(bytes: u32, bit_rate: f64) -> f64 {
    f64::from(bytes) * 8.0 / bit_rate
}

/// Slots to choose from after `attempt` consecutive failures (attempt >= 1).
pub fn contention_window(attempt: u32, max_doublings: u32) -> u32 {
    1 << attempt.clamp(1, max_doublings.max(1))
}

pub fn backoff_slots<R: Rng + ?Sized>(attempt: u32, max_doublings: u32, rng: &mut R) -> u32 {
    rng.gen_range(0..contention_window(attempt, max_doublings))
}

/// Backoff delay in seconds with slots one airtime long.
pub fn backoff_delay<R: Rng + ?Sized>(attempt: u32, airtime: f64, cfg: &CsmaConfig, rng: &mut R) -> f64 {
    f64::from(backoff_slots(attempt, cfg.max_doublings, rng)) * airtime
}

/// Probability that two colliding nodes pick different slots within
/// `depth` backoff rounds.
pub fn resolution_probability(depth: u32, max_doublings: u32) -> f64 {
    let unresolved: f64 = (1..=depth)
        .map(|a| 1.0 / f64::from(contention_window(a, max_doublings)))
        .product();
    1.0 - unresolved
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forty_bytes_at_200k() {
        assert!((packet_airtime(40, 200e3) - 1.6e-3).abs() < 1e-15);
    }

    #[test]
    fn window_caps() {
        assert_eq!(contention_window(1, 5), 2);
        assert_eq!(contention_window(3, 5), 8);
        assert_eq!(contention_window(9, 5), 32);
    }

    /// Walks every joint slot choice of two nodes up to `depth` rounds.
    fn enumerate(depth: u32, max: u32, attempt: u32) -> f64 {
        if attempt > depth {
            return 0.0;
        }
        let w = contention_window(attempt, max);
        let mut p = 0.0;
        for a in 0..w {
            for b in 0..w {
                let weight = 1.0 / f64::from(w * w);
                p += weight * if a != b { 1.0 } else { enumerate(depth, max, attempt + 1) };
            }
        }
        p
    }

    #[test]
    fn two_node_resolution_matches_tree() {
        for depth in 1..=3 {
            let tree = enumerate(depth, 5, 1);
            assert!((resolution_probability(depth, 5) - tree).abs() < 1e-12);
        }
        // empirical draws agree with the closed form
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let trials = 20000;
        let resolved = (0..trials)
            .filter(|_| {
                (1..=3).any(|a| backoff_slots(a, 5, &mut rng) != backoff_slots(a, 5, &mut rng))
            })
            .count();
        let p = resolved as f64 / trials as f64;
        assert!((p - resolution_probability(3, 5)).abs() < 0.01, "{p}");
    }
}
