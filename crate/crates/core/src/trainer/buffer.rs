//! Episode replay buffer: a small FIFO ring holding whole episodes only.
//! Every inserted episode is validated so downstream updates can assume
//! the chaining invariant without re-checking.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::Episode;

pub const DEFAULT_CAPACITY: usize = 200;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            episodes: VecDeque::with_capacity(capacity),
            capacity,
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of episodes ever inserted, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, idx: usize) -> Option<&Episode> {
        self.episodes.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// Insert one episode, evicting the oldest when full.
    pub fn push(&mut self, episode: Episode) -> Result<()> {
        episode.validate()?;
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
        Ok(())
    }

    /// Rebuild a buffer from snapshot content (oldest first), keeping the
    /// historical insertion count.
    pub fn restore(capacity: usize, episodes: Vec<Episode>, inserted: u64) -> Result<Self> {
        let mut buf = ReplayBuffer::new(capacity)?;
        for ep in episodes {
            buf.push(ep)?;
        }
        buf.inserted = inserted.max(buf.inserted);
        Ok(buf)
    }

    /// Sample up to `n` distinct episode indices uniformly. When fewer
    /// than `n` episodes exist, every index is returned (the caller may
    /// treat that as an under-filled warning).
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        let len = self.episodes.len();
        if len <= n {
            return (0..len).collect();
        }
        // Partial Fisher-Yates over index slots.
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = rng.random_range(i..len);
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::types::{Action, InherentFeatures, NominalState, Observation, TrendFactors};
    use crate::mdp::{ItemId, Transition};
    use crate::streams::{stream, Tag};

    fn obs(day: u32) -> Observation {
        let mut s = NominalState::fresh(0.0, 0.0, 0.0);
        s.days_on_market = day;
        Observation {
            s,
            x_t: TrendFactors::zeros(),
            x_i: InherentFeatures {
                content: vec![0.0; 4],
                category_id: 0,
                brand_id: 0,
                shop_id: 0,
            },
        }
    }

    fn episode(item: u32, len: usize) -> Episode {
        let transitions = (0..len)
            .map(|t| Transition {
                item: ItemId(item),
                day: t as u32,
                obs: obs(t as u32),
                action: Action { y_rl: 0.5, price: 1.0 },
                reward: 0.1,
                next_obs: obs(t as u32 + 1),
                terminal: t + 1 == len,
            })
            .collect();
        Episode {
            item: ItemId(item),
            transitions,
        }
    }

    #[test]
    fn fifo_eviction_keeps_newest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(episode(i, 2)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.inserted(), 5);
        let items: Vec<u32> = buf.iter().map(|e| e.item.0).collect();
        assert_eq!(items, vec![2, 3, 4]);
    }

    #[test]
    fn rejects_broken_chain() {
        let mut ep = episode(0, 3);
        ep.transitions[1].next_obs.s.days_on_market = 99;
        let mut buf = ReplayBuffer::new(4).unwrap();
        assert!(buf.push(ep).is_err());
        assert_eq!(buf.len(), 0);
    }

    #[test]
    fn sampling_is_distinct_and_complete_when_small() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..6 {
            buf.push(episode(i, 2)).unwrap();
        }
        let mut rng = stream(7, Tag::BatchSample, &[0]);
        let all = buf.sample_indices(50, &mut rng);
        assert_eq!(all, vec![0, 1, 2, 3, 4, 5]);
        let four = buf.sample_indices(4, &mut rng);
        assert_eq!(four.len(), 4);
        let mut sorted = four.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4, "indices must be distinct");
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(ReplayBuffer::new(0).is_err());
    }
}
