//! Fixed-capacity replay buffer for sub-reward samples.

use super::SubRewardSample;

/// Ring buffer; once full, the oldest sample is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<SubRewardSample>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn push(&mut self, sample: SubRewardSample) {
        if self.items.len() < self.capacity {
            self.items.push(sample);
        } else {
            self.items[self.next] = sample;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &SubRewardSample {
        &self.items[idx]
    }
}
