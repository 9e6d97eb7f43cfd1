//! Fleet generation, per-round participation and inter-round mobility.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::{ClientProfile, SystemParams};

use super::config::ScenarioConfig;

const FLEET_STREAM: u64 = 0;
const CANDIDATE_STREAM: u64 = 1;
const RESPAWN_STREAM: u64 = 2;

/// Independent generator for one purpose, derived from the scenario seed.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// splitmix64 finaliser, used to derive per-(round, client) seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9E37_79B9_7F4A_7C15, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Fleet of `M` clients with uniform radius, velocity, clock and core draws.
pub fn generate_fleet(cfg: &ScenarioConfig) -> Vec<ClientProfile> {
    let mut rng = stream(cfg.seed, FLEET_STREAM);
    (0..cfg.clients)
        .map(|id| ClientProfile {
            id,
            distance: uniform(&mut rng, cfg.radius_min, cfg.radius_max),
            velocity: uniform(&mut rng, cfg.velocity_min, cfg.velocity_max),
            gpu_freq: uniform(&mut rng, cfg.gpu_freq_min, cfg.gpu_freq_max),
            cores: uniform(&mut rng, cfg.cores_min, cfg.cores_max),
            flops_per_cycle: cfg.flops_per_cycle,
            client_flops: cfg.client_flops,
        })
        .collect()
}

/// Poisson draw truncated to `[1, fleet]`.
pub fn candidate_count<R: Rng>(rng: &mut R, mean: f64, fleet: usize) -> usize {
    let raw = if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    raw.clamp(1, fleet)
}

/// Candidate ids for one round, sorted ascending.
pub fn draw_candidates<R: Rng>(rng: &mut R, mean: f64, fleet: usize) -> Vec<usize> {
    let n = candidate_count(rng, mean, fleet);
    let mut ids = index::sample(rng, fleet, n).into_vec();
    ids.sort_unstable();
    ids
}

/// Move every client radially by `v * elapsed`; clients that leave coverage
/// re-enter at a uniform radius in `[radius_min, radius_max]`.
pub fn advance_mobility<R: Rng>(
    fleet: &mut [ClientProfile],
    elapsed: f64,
    params: &SystemParams,
    radius: (f64, f64),
    rng: &mut R,
) {
    if !(elapsed > 0.0) {
        return;
    }
    for c in fleet {
        c.distance += c.velocity * elapsed;
        if c.distance > params.coverage_radius {
            c.distance = uniform(rng, radius.0, radius.1);
        }
    }
}

/// Mutable state carried from round to round.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub fleet: Vec<ClientProfile>,
    candidates: ChaCha8Rng,
    respawn: ChaCha8Rng,
}

impl Scenario {
    /// Deterministic scenario from `config`.
    pub fn new(config: ScenarioConfig) -> Self {
        let fleet = generate_fleet(&config);
        let candidates = stream(config.seed, CANDIDATE_STREAM);
        let respawn = stream(config.seed, RESPAWN_STREAM);
        Self {
            config,
            fleet,
            candidates,
            respawn,
        }
    }

    pub fn next_candidates(&mut self) -> Vec<usize> {
        draw_candidates(
            &mut self.candidates,
            self.config.poisson_mean,
            self.config.clients,
        )
    }

    pub fn advance(&mut self, elapsed: f64) {
        let radius = (self.config.radius_min, self.config.radius_max);
        advance_mobility(
            &mut self.fleet,
            elapsed,
            &self.config.params,
            radius,
            &mut self.respawn,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(distance: f64, velocity: f64) -> ClientProfile {
        ClientProfile {
            id: 0,
            gpu_freq: 1e9,
            cores: 4.0,
            flops_per_cycle: 1.0,
            velocity,
            distance,
            client_flops: 1e8,
        }
    }

    #[test]
    fn same_seed_same_fleet() {
        let cfg = ScenarioConfig::default();
        assert_eq!(generate_fleet(&cfg), generate_fleet(&cfg));
        let other = ScenarioConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate_fleet(&cfg), generate_fleet(&other));
    }

    #[test]
    fn fleet_within_ranges() {
        let cfg = ScenarioConfig::default();
        for c in generate_fleet(&cfg) {
            assert!((cfg.radius_min..cfg.radius_max).contains(&c.distance));
            assert!((cfg.velocity_min..cfg.velocity_max).contains(&c.velocity));
            assert!((cfg.gpu_freq_min..cfg.gpu_freq_max).contains(&c.gpu_freq));
            assert!((cfg.cores_min..cfg.cores_max).contains(&c.cores));
        }
    }

    #[test]
    fn zero_mean_gives_one_candidate() {
        let mut rng = stream(3, 9);
        for _ in 0..100 {
            assert_eq!(candidate_count(&mut rng, 0.0, 50), 1);
        }
    }

    #[test]
    fn candidate_mean_matches_poisson() {
        let mut rng = stream(11, 9);
        let n = 10_000;
        let mean = 8.0;
        let total: usize = (0..n).map(|_| candidate_count(&mut rng, mean, 1000)).sum();
        let got = total as f64 / n as f64;
        let sigma = (mean / n as f64).sqrt();
        assert!((got - mean).abs() < 3.0 * sigma, "{got}");
    }

    #[test]
    fn candidates_are_distinct_and_sorted() {
        let mut rng = stream(5, 9);
        let ids = draw_candidates(&mut rng, 30.0, 40);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(ids.iter().all(|&i| i < 40));
    }

    #[test]
    fn mobility_examples() {
        let p = SystemParams::default();
        let mut rng = stream(0, 0);
        let mut still = vec![client(100.0, 0.0)];
        advance_mobility(&mut still, 50.0, &p, (5.0, 500.0), &mut rng);
        assert_eq!(still[0].distance, 100.0);

        let mut moving = vec![client(100.0, 3.0)];
        advance_mobility(&mut moving, 0.0, &p, (5.0, 500.0), &mut rng);
        assert_eq!(moving[0].distance, 100.0);
        advance_mobility(&mut moving, 2.0, &p, (5.0, 500.0), &mut rng);
        assert_eq!(moving[0].distance, 106.0);

        // 490 + 10 * 2 = 510 > 500: respawn inside the placement range
        let mut leaving = vec![client(490.0, 10.0)];
        advance_mobility(&mut leaving, 2.0, &p, (5.0, 500.0), &mut rng);
        assert!(leaving[0].distance <= 500.0);
        assert_ne!(leaving[0].distance, 510.0);
    }
}
