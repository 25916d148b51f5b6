use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Linear decay of the exploration scale from `start` to `end` over `decay_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self {
            start: 0.3,
            end: 0.05,
            decay_steps: 100_000,
        }
    }
}

impl SigmaSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    OrnsteinUhlenbeck,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::OrnsteinUhlenbeck => "ou",
        }
    }
}

/// Stateful action-noise source. Gaussian noise is memoryless; the
/// Ornstein–Uhlenbeck process mean-reverts toward zero with rate `theta`.
#[derive(Clone, Debug)]
pub struct NoiseProcess<T> {
    kind: NoiseKind,
    theta: T,
    state: Vec<T>,
}

impl<T: Real> NoiseProcess<T> {
    pub fn new(kind: NoiseKind, dim: usize) -> Self {
        Self {
            kind,
            theta: T::lit(0.15),
            state: vec![T::zero(); dim],
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Clears process memory, e.g. at an episode boundary.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = T::zero());
    }

    pub fn sample(&mut self, sigma: T, rng: &mut impl Rng) -> Vec<T> {
        match self.kind {
            NoiseKind::Gaussian => (0..self.state.len()).map(|_| sigma * gaussian(rng)).collect(),
            NoiseKind::OrnsteinUhlenbeck => {
                for s in &mut self.state {
                    *s = *s - self.theta * *s + sigma * gaussian::<T>(rng);
                }
                self.state.clone()
            }
        }
    }
}

pub(crate) fn gaussian<T: Real>(rng: &mut impl Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}
