//! Seeded Gaussian noise with one independent generator stream per batch row.
//!
//! Row `i` of every draw comes from the ChaCha8 stream `(seed, i)`, so results
//! do not depend on how a batch is split or scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::state::StateBatch;

#[derive(Debug, Clone)]
pub struct NoiseStreams {
    rows: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fresh `n × d` batch of standard normals.
    pub fn standard_normal(&mut self, d: usize) -> StateBatch {
        let mut out = StateBatch::zeros(self.rows.len(), d);
        self.fill_normal(&mut out);
        out
    }

    pub fn fill_normal(&mut self, out: &mut StateBatch) {
        assert_eq!(out.len(), self.rows.len(), "noise stream count mismatch");
        for (i, rng) in self.rows.iter_mut().enumerate() {
            for v in out.row_mut(i) {
                *v = rng.sample(StandardNormal);
            }
        }
    }

    /// One uniform draw in `[0, 1)` per row.
    pub fn uniform(&mut self) -> Vec<f64> {
        self.rows.iter_mut().map(|r| r.random::<f64>()).collect()
    }

    pub fn row_rng(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.rows[i]
    }
}
