use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejection sampler pushing accepted labels toward a uniform histogram.
///
/// Bins: one underflow bin, `n` equal bins over `[lo, hi)`, one overflow
/// bin. A label in bin `b` is accepted with probability
/// `min(1, (h_min + 1) / (h_b + 1))`, where `h_min` is the smallest nonzero
/// count. Accepted labels increment their bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBalancer {
    edges: Vec<f64>,
    counts: Vec<u64>,
    rng: ChaCha8Rng,
}

impl LabelBalancer {
    /// Ten bins over `[-0.05, 0.05)`.
    pub fn new(seed: u64) -> Self {
        Self::with_bins(-0.05, 0.05, 10, seed).expect("default bins are valid")
    }

    pub fn with_bins(lo: f64, hi: f64, n: usize, seed: u64) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument("balancer needs n >= 1 and hi > lo".into()));
        }
        let edges: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("bin edges not strictly increasing".into()));
        }
        Ok(Self { edges, counts: vec![0; n + 2], rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Bin index: 0 is underflow, `n + 1` overflow.
    pub fn bin(&self, label: f64) -> usize {
        self.edges.partition_point(|e| *e <= label)
    }

    pub fn accept_probability(&self, label: f64) -> f64 {
        let Some(h_min) = self.counts.iter().copied().filter(|c| *c > 0).min() else { return 1.0 };
        let h_b = self.counts[self.bin(label)];
        ((h_min as f64 + 1.0) / (h_b as f64 + 1.0)).min(1.0)
    }

    /// True when the label is rejected. One uniform draw per call.
    pub fn reject(&mut self, label: f64) -> bool {
        let p = self.accept_probability(label);
        let u: f64 = self.rng.random();
        if u < p {
            let b = self.bin(label);
            self.counts[b] += 1;
            false
        } else {
            true
        }
    }
}

/// Pearson chi-square of `counts` against a uniform distribution over the
/// bins listed in `bins`.
pub fn chi_square_uniform(counts: &[u64], bins: &[usize]) -> f64 {
    let total: u64 = bins.iter().map(|b| counts[*b]).sum();
    if bins.is_empty() || total == 0 {
        return 0.0;
    }
    let e = total as f64 / bins.len() as f64;
    bins.iter().map(|b| (counts[*b] as f64 - e).powi(2) / e).sum()
}
