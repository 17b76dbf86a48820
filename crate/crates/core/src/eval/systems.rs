//! Reference systems used by the experiment harnesses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{simulate, InputSequence, ModelParams, Noise, TimeSeriesMatrix};
use crate::scalar::Scalar;

/// A fully specified network whose channels can be split into observed and
/// hidden sets.
#[derive(Debug, Clone)]
pub struct ReferenceSystem<T: Scalar> {
    /// Stacked coupling over all channels.
    pub a: DMatrix<T>,
    pub alpha: Vec<T>,
    pub sigma: DMatrix<T>,
    /// Initial state of every channel.
    pub initial: DVector<T>,
}

impl<T: Scalar> ReferenceSystem<T> {
    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    pub fn params(&self) -> ModelParams<T> {
        let mut p = ModelParams::zeros(self.alpha.clone(), Vec::new(), 0);
        p.a11 = self.a.clone();
        p.sigma1 = self.sigma.clone();
        p
    }

    /// Simulate `len` samples starting from `initial`. Channels are labelled
    /// `1..=d`.
    pub fn simulate(&self, len: usize, noise_seed: u64) -> Result<TimeSeriesMatrix<T>> {
        let sim = simulate(
            &self.params(),
            Some(&self.initial),
            None,
            &InputSequence::zeros(0, len.saturating_sub(1)),
            len,
            Noise::Seeded(noise_seed),
        )?;
        sim.observed.with_labels((1..=self.channels()).map(|i| i.to_string()).collect())
    }
}

/// The three-node pedagogical network with orders `{0.7, 1.1, 0.8}`,
/// isotropic noise of variance `noise_var` and initial state `initial`.
pub fn three_node<T: Scalar>(noise_var: f64, initial: [f64; 3]) -> ReferenceSystem<T> {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 0.2, -0.01, -0.02, 0.3, 0.01, -0.03, -0.05]);
    ReferenceSystem {
        a: a.map(T::lit),
        alpha: [0.7, 1.1, 0.8].map(T::lit).to_vec(),
        sigma: DMatrix::identity(3, 3) * T::lit(noise_var),
        initial: DVector::from_iterator(3, initial.map(T::lit)),
    }
}

/// Layout of the synthetic reveal-sweep networks: a fixed block that is
/// always observed and a pool of candidates that start hidden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepNetwork {
    pub fixed: usize,
    pub pool: usize,
    /// Magnitude of the pool → fixed coupling; zero decouples the pool.
    pub pool_drive: f64,
    pub noise_var: f64,
    /// Initial states are uniform in `±initial_range`.
    pub initial_range: f64,
    /// Generator seed for the coupling pattern and initial state.
    pub seed: u64,
}

impl Default for SweepNetwork {
    fn default() -> Self {
        Self {
            fixed: 12,
            pool: 9,
            pool_drive: 0.15,
            noise_var: 1e-3,
            initial_range: 2.0,
            seed: 7,
        }
    }
}

impl SweepNetwork {
    pub fn channels(&self) -> usize {
        self.fixed + self.pool
    }

    /// Build the network. Fixed channels decay with orders in `[0.7, 0.9]`
    /// and weak sparse mutual coupling. Pool channels are slow (orders in
    /// `[0.9, 1.1]`, small self-terms) and each drives a few fixed channels
    /// with strength `pool_drive`.
    pub fn build<T: Scalar>(&self) -> ReferenceSystem<T> {
        let d = self.channels();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut alpha = vec![0.0; d];
        for i in 0..self.fixed {
            a[(i, i)] = -rng.random_range(0.05..0.2);
            alpha[i] = 0.7 + 0.1 * (i % 3) as f64;
            for j in 0..self.fixed {
                if i != j && rng.random_bool(0.2) {
                    a[(i, j)] = rng.random_range(-0.05..0.05);
                }
            }
        }
        for k in 0..self.pool {
            let j = self.fixed + k;
            a[(j, j)] = -rng.random_range(0.002..0.01);
            alpha[j] = 0.9 + 0.1 * (k % 3) as f64;
            for i in 0..self.fixed {
                if rng.random_bool(0.4) {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    a[(i, j)] = sign * self.pool_drive * rng.random_range(0.5..1.0);
                }
            }
            for l in 0..self.pool {
                if l != k && rng.random_bool(0.2) {
                    a[(j, self.fixed + l)] = rng.random_range(-0.02..0.02);
                }
            }
        }
        let r = self.initial_range;
        let initial = DVector::from_fn(d, |_, _| if r > 0.0 { rng.random_range(-r..r) } else { 0.0 });
        ReferenceSystem {
            a: a.map(T::lit),
            alpha: alpha.into_iter().map(T::lit).collect(),
            sigma: DMatrix::identity(d, d) * T::lit(self.noise_var),
            initial: initial.map(T::lit),
        }
    }
}
