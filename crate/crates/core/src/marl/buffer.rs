use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

/// One stored episode. Row `t` of `states`/`histories` is the pre-step
/// state at time `t`; the final row is the terminal state. Rewards are the
/// raw environment rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub n_agents: usize,
    pub state_dim: usize,
    pub history_dim: usize,
    pub len: usize,
    /// `(len + 1) × state_dim`
    pub states: Vec<f64>,
    /// `(len + 1) × n_agents × history_dim`
    pub histories: Vec<f64>,
    /// `len × n_agents × 2`, the executed joint action
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl EpisodeRecord {
    pub fn new(n_agents: usize, state_dim: usize, history_dim: usize) -> Self {
        EpisodeRecord {
            n_agents,
            state_dim,
            history_dim,
            len: 0,
            states: Vec::new(),
            histories: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn push_observation(&mut self, state: &[f64], histories: &[&[f64]]) {
        self.states.extend_from_slice(state);
        for h in histories {
            self.histories.extend_from_slice(h);
        }
    }

    pub fn push_step(&mut self, actions: &[[f64; 2]], reward: f64, done: bool) {
        for a in actions {
            self.actions.extend_from_slice(a);
        }
        self.rewards.push(reward);
        self.dones.push(done);
        self.len += 1;
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn history(&self, t: usize, agent: usize) -> &[f64] {
        let start = (t * self.n_agents + agent) * self.history_dim;
        &self.histories[start..start + self.history_dim]
    }

    pub fn joint_action(&self, t: usize) -> &[f64] {
        let w = 2 * self.n_agents;
        &self.actions[t * w..(t + 1) * w]
    }
}

/// Minibatch of transitions flattened from sampled episodes.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    /// One `M × history_dim` matrix per agent.
    pub histories: Vec<Array2<f64>>,
    pub next_histories: Vec<Array2<f64>>,
    /// `M × 2N`
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// The `M × 2` block of agent `i`'s executed actions.
    pub fn agent_actions(&self, agent: usize) -> Array2<f64> {
        self.actions
            .slice(ndarray::s![.., 2 * agent..2 * agent + 2])
            .to_owned()
    }

    pub fn from_episodes(episodes: &[&EpisodeRecord]) -> Batch {
        let first = episodes[0];
        let (n, sd, hd) = (first.n_agents, first.state_dim, first.history_dim);
        let m: usize = episodes.iter().map(|e| e.len).sum();
        let mut states = Array2::zeros((m, sd));
        let mut next_states = Array2::zeros((m, sd));
        let mut histories = vec![Array2::zeros((m, hd)); n];
        let mut next_histories = vec![Array2::zeros((m, hd)); n];
        let mut actions = Array2::zeros((m, 2 * n));
        let mut rewards = Array1::zeros(m);
        let mut dones = Array1::zeros(m);
        let mut row = 0;
        for ep in episodes {
            for t in 0..ep.len {
                states.row_mut(row).assign(&ndarray::aview1(ep.state(t)));
                next_states.row_mut(row).assign(&ndarray::aview1(ep.state(t + 1)));
                for i in 0..n {
                    histories[i].row_mut(row).assign(&ndarray::aview1(ep.history(t, i)));
                    next_histories[i]
                        .row_mut(row)
                        .assign(&ndarray::aview1(ep.history(t + 1, i)));
                }
                actions.row_mut(row).assign(&ndarray::aview1(ep.joint_action(t)));
                rewards[row] = ep.rewards[t];
                dones[row] = if ep.dones[t] { 1.0 } else { 0.0 };
                row += 1;
            }
        }
        Batch {
            states,
            next_states,
            histories,
            next_histories,
            actions,
            rewards,
            dones,
        }
    }
}

/// FIFO ring of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, ep: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
        self.inserted += 1;
    }

    /// Stored episodes, oldest first.
    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Draws `count` episodes uniformly with replacement from the most recent
    /// `window` entries.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, window: usize, rng: &mut R) -> Batch {
        assert!(!self.episodes.is_empty(), "sampling an empty buffer");
        let window = window.min(self.episodes.len()).max(1);
        let offset = self.episodes.len() - window;
        let picks: Vec<&EpisodeRecord> = (0..count)
            .map(|_| &self.episodes[offset + rng.random_range(0..window)])
            .collect();
        Batch::from_episodes(&picks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(tag: f64, len: usize) -> EpisodeRecord {
        let mut ep = EpisodeRecord::new(2, 4, 4);
        for t in 0..=len {
            let s = [tag, t as f64, 0.0, 0.0];
            ep.push_observation(&s, &[&s, &s]);
            if t < len {
                ep.push_step(&[[tag, 0.0], [0.0, tag]], -(t as f64), t + 1 == len);
            }
        }
        ep
    }

    #[test]
    fn fifo_keeps_latest() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(episode(k as f64, 2));
        }
        assert_eq!(b.len(), 3);
        let tags: Vec<f64> = b.episodes().map(|e| e.states[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batch_layout() {
        let mut b = ReplayBuffer::new(4);
        b.push(episode(7.0, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(2, 4, &mut rng);
        assert_eq!(batch.len(), 6);
        assert_eq!(batch.states.row(1).to_vec(), vec![7.0, 1.0, 0.0, 0.0]);
        assert_eq!(batch.next_states.row(1).to_vec(), vec![7.0, 2.0, 0.0, 0.0]);
        assert_eq!(batch.actions.row(0).to_vec(), vec![7.0, 0.0, 0.0, 7.0]);
        assert_eq!(batch.agent_actions(1).row(0).to_vec(), vec![0.0, 7.0]);
        assert_eq!(batch.dones.to_vec(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(batch.rewards[2], -2.0);
    }
}
