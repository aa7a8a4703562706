use rand::Rng;

/// On-policy storage for one PPO rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub capacity: usize,
    pub obs: Vec<Vec<f64>>,
    /// Continuous values or level indices stored as f64.
    pub actions: Vec<Vec<f64>>,
    pub logprobs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, logprob: f64, reward: f64, value: f64, done: bool) {
        assert!(!self.is_full(), "rollout buffer overflow");
        self.obs.push(obs);
        self.actions.push(action);
        self.logprobs.push(logprob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        let cap = self.capacity;
        *self = Self::new(cap);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "sampling from an empty replay buffer");
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition { s: vec![r], a: vec![], r, s2: vec![], done: false }
    }

    #[test]
    fn ring_keeps_the_newest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..7 {
            b.push(tr(i as f64));
        }
        assert_eq!(b.len(), 3);
        let mut rs: Vec<f64> = b.iter().map(|t| t.r).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(tr(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 10];
        let draws = 1_000_000;
        for t in b.sample(draws, &mut rng) {
            counts[t.r as usize] += 1;
        }
        let expected = draws as f64 / 10.0;
        for c in counts {
            assert!((c as f64 - expected).abs() < 0.05 * expected, "{counts:?}");
        }
    }

    #[test]
    fn rollout_capacity() {
        let mut b = RolloutBuffer::new(2);
        b.push(vec![0.0], vec![1.0], -0.5, 1.0, 0.0, false);
        b.push(vec![0.0], vec![1.0], -0.5, 1.0, 0.0, true);
        assert!(b.is_full());
        b.clear();
        assert!(b.is_empty());
        assert_eq!(b.capacity, 2);
    }
}
