use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed-capacity buffer drained in a seeded uniform random order.
#[derive(Debug, Clone)]
pub struct ShuffleBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T> ShuffleBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn push(&mut self, item: T) -> Result<()> {
        if self.is_full() {
            return Err(Error::InvalidArgument("buffer is full".into()));
        }
        self.items.push(item);
        Ok(())
    }

    /// Empties the buffer in a fresh random permutation.
    pub fn drain_shuffled(&mut self) -> Vec<T> {
        let mut out = std::mem::take(&mut self.items);
        out.shuffle(&mut self.rng);
        out
    }
}

/// Repeatedly fills the buffer from `source`, shuffles and drains it, for
/// at most `iterations` rounds. A source that runs dry mid-fill still has
/// its partial buffer drained. Returns the drained epochs in order.
pub fn buffer_cycle<T>(buffer: &mut ShuffleBuffer<T>, source: &mut impl Iterator<Item = T>, iterations: usize) -> Vec<Vec<T>> {
    let mut epochs = Vec::new();
    for _ in 0..iterations {
        while !buffer.is_full() {
            match source.next() {
                Some(x) => buffer.items.push(x),
                None => break,
            }
        }
        if buffer.is_empty() {
            break;
        }
        if !buffer.is_full() {
            tracing::info!(len = buffer.len(), capacity = buffer.capacity, "source exhausted, draining partial buffer");
        }
        epochs.push(buffer.drain_shuffled());
    }
    epochs
}
