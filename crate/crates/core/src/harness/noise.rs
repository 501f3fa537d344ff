//! Seeded randomness for scenarios.
//!
//! Generator: ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64`.
//! Gaussian variates: `rand_distr::StandardNormal` (ziggurat), scaled by σ.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type ScenarioRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ScenarioRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `y + ε`, `ε_i ~ N(0, σ_i²)` independent. Always draws three variates so the
/// stream position does not depend on σ.
pub fn add_measurement_noise(y: &Vector3<f64>, sigma: &Vector3<f64>, rng: &mut ScenarioRng) -> Vector3<f64> {
    let eps = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    y + sigma.component_mul(&eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = seeded(1);
        let y = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(add_measurement_noise(&y, &Vector3::zeros(), &mut rng), y);
    }

    #[test]
    fn sample_mean_near_zero() {
        let mut rng = seeded(7);
        let n = 100_000;
        let mut acc = Vector3::zeros();
        for _ in 0..n {
            acc += add_measurement_noise(&Vector3::zeros(), &Vector3::repeat(1.0), &mut rng);
        }
        let mean = acc / n as f64;
        assert!(mean.amax() < 0.02, "{mean}");
    }

    #[test]
    fn same_seed_same_stream() {
        let (mut a, mut b) = (seeded(99), seeded(99));
        let s = Vector3::new(0.005, 0.01, 1.0);
        for _ in 0..50 {
            assert_eq!(
                add_measurement_noise(&Vector3::zeros(), &s, &mut a),
                add_measurement_noise(&Vector3::zeros(), &s, &mut b)
            );
        }
    }
}
