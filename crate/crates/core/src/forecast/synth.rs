use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// `y = x/2 + sin x + noise`, `x ~ U(−10, 10)`.
    Sinusoidal,
    /// `y = 2x² + noise`, `x ~ U(0, 5)`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Heterogeneous,
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDataSpec {
    pub kind: SynthKind,
    pub noise: NoiseKind,
    pub n_points: usize,
    pub seed: u64,
}

impl SynthKind {
    pub fn x_range(self) -> (f64, f64) {
        match self {
            SynthKind::Sinusoidal => (-10.0, 10.0),
            SynthKind::Quadratic => (0.0, 5.0),
        }
    }

    /// Noise-free part of the target.
    pub fn mean(self, x: f64) -> f64 {
        match self {
            SynthKind::Sinusoidal => 0.5 * x + x.sin(),
            SynthKind::Quadratic => 2.0 * x * x,
        }
    }

    /// Multiplier applied to the standard normal noise draw.
    pub fn noise_scale(self, noise: NoiseKind, x: f64) -> f64 {
        match (self, noise) {
            (SynthKind::Sinusoidal, NoiseKind::Heterogeneous) => 0.25 * x,
            (SynthKind::Sinusoidal, NoiseKind::Homogeneous) => 0.25,
            (SynthKind::Quadratic, NoiseKind::Heterogeneous) => 0.5 * x * x,
            (SynthKind::Quadratic, NoiseKind::Homogeneous) => 1.0,
        }
    }

    /// Target for input `x` and noise draw `eps`.
    pub fn target(self, noise: NoiseKind, x: f64, eps: f64) -> f64 {
        self.mean(x) + self.noise_scale(noise, x) * eps
    }
}

/// Draws `(x, y)` pairs; bitwise reproducible for a given seed.
pub fn gen_synth_data(spec: &SynthDataSpec) -> Result<Vec<(f64, f64)>> {
    if spec.n_points == 0 {
        return Err(Error::invalid("n_points must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.kind.x_range();
    Ok((0..spec.n_points)
        .map(|_| {
            let x = rng.gen_range(lo..hi);
            let eps: f64 = rng.sample(StandardNormal);
            (x, spec.kind.target(spec.noise, x, eps))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_targets() {
        assert_eq!(
            SynthKind::Sinusoidal.target(NoiseKind::Heterogeneous, 0.0, 0.0),
            0.0
        );
        assert_eq!(
            SynthKind::Quadratic.target(NoiseKind::Homogeneous, 2.0, 0.0),
            8.0
        );
        assert_eq!(
            SynthKind::Quadratic.target(NoiseKind::Heterogeneous, 2.0, 1.0),
            10.0
        );
    }

    #[test]
    fn reproducible_and_in_range() {
        let spec = SynthDataSpec {
            kind: SynthKind::Quadratic,
            noise: NoiseKind::Heterogeneous,
            n_points: 500,
            seed: 9,
        };
        let a = gen_synth_data(&spec).unwrap();
        assert_eq!(a, gen_synth_data(&spec).unwrap());
        assert!(a.iter().all(|(x, _)| (0.0..5.0).contains(x)));
        assert_ne!(
            a,
            gen_synth_data(&SynthDataSpec { seed: 10, ..spec }).unwrap()
        );
        assert!(gen_synth_data(&SynthDataSpec {
            n_points: 0,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn homogeneous_noise_is_centered() {
        let n = 100_000;
        let spec = SynthDataSpec {
            kind: SynthKind::Sinusoidal,
            noise: NoiseKind::Homogeneous,
            n_points: n,
            seed: 1,
        };
        let data = gen_synth_data(&spec).unwrap();
        let mean = data
            .iter()
            .map(|(x, y)| y - (0.5 * x + x.sin()))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() <= 3.0 * 0.25 / (n as f64).sqrt());
    }
}
