use std::sync::{Mutex, RwLock, RwLockReadGuard};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{JointAction, Observation};
use crate::error::{Error, Result};

/// One joint transition `(s_t, a_t, r_t, s_{t+1}, done)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub obs: Vec<Observation>,
    pub actions: JointAction,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Observation>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of experiences.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer_capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            cursor: 0,
        })
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

    /// Inserts at the write cursor, evicting the oldest entry when full.
    pub fn insert(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.cursor] = e;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Storage slot `i`; slots are stable until overwritten.
    pub fn slot(&self, i: usize) -> &Experience {
        &self.items[i]
    }

    /// Entries oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `batch` distinct slots drawn uniformly, or `None` while fewer are stored.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }
}

/// Replay ring shared by concurrent rollout workers and one learner.
///
/// Workers insert into per-worker staging lists; [`SharedReplay::commit`] moves
/// staged entries into the ring in worker order, so ring contents do not depend
/// on thread interleaving. The learner draws under a read lock that excludes commits.
#[derive(Debug)]
pub struct SharedReplay {
    ring: RwLock<ReplayBuffer>,
    staging: Vec<Mutex<Vec<Experience>>>,
}

impl SharedReplay {
    pub fn new(capacity: usize, workers: usize) -> Result<Self> {
        Ok(Self {
            ring: RwLock::new(ReplayBuffer::new(capacity)?),
            staging: (0..workers.max(1)).map(|_| Mutex::new(Vec::new())).collect(),
        })
    }

    pub fn workers(&self) -> usize {
        self.staging.len()
    }

    pub fn stage(&self, worker: usize, e: Experience) {
        self.staging[worker].lock().expect("staging lock").push(e);
    }

    /// Moves all staged entries into the ring; returns them in commit order.
    pub fn commit(&self) -> Vec<Experience> {
        let mut ring = self.ring.write().expect("ring lock");
        let mut committed = Vec::new();
        for s in &self.staging {
            let staged = std::mem::take(&mut *s.lock().expect("staging lock"));
            for e in staged {
                committed.push(e.clone());
                ring.insert(e);
            }
        }
        committed
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ReplayBuffer> {
        self.ring.read().expect("ring lock")
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: f64) -> Experience {
        Experience {
            obs: vec![Observation {
                agent: 0,
                vector: vec![tag],
            }],
            actions: JointAction::uniform_space(vec![0], 2).unwrap(),
            rewards: vec![tag],
            next_obs: vec![Observation {
                agent: 0,
                vector: vec![tag],
            }],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_drops_the_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for k in 0..5 {
            b.insert(exp(k as f64));
        }
        let tags: Vec<f64> = b.iter().map(|e| e.rewards[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn not_ready_below_batch() {
        let mut b = ReplayBuffer::new(8).unwrap();
        b.insert(exp(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample_indices(2, &mut rng).is_none());
        b.insert(exp(1.0));
        let mut idx = b.sample_indices(2, &mut rng).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn commit_order_is_by_worker() {
        let s = SharedReplay::new(10, 2).unwrap();
        s.stage(1, exp(1.0));
        s.stage(0, exp(0.0));
        s.stage(1, exp(2.0));
        let tags: Vec<f64> = s.commit().iter().map(|e| e.rewards[0]).collect();
        assert_eq!(tags, vec![0.0, 1.0, 2.0]);
        assert_eq!(s.len(), 3);
    }
}
