//! Worst-case attackers: with the defender actors frozen, the agents flagged
//! by a partition are handed to a MADDPG learner trained on the negated team
//! reward.

use std::collections::BTreeSet;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::env::{History, Partition, Rendezvous};
use crate::error::{Error, Result};
use crate::marl::{
    actor_action, build_actor, run_episode, stream, Learner, LearnerSettings, ReplayBuffer, RngStreams,
};
use crate::nn::{Checkpoint, Net};

/// Stream offset keeping attacker randomness apart from defender training.
const ATTACK_STREAM_BASE: u64 = 10;
const PARTITION_STREAM: u64 = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackJob {
    pub partition: Partition,
    pub budget_steps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackCurvePoint {
    pub epoch: u64,
    pub env_steps: u64,
    /// Undiscounted team return (raw, not negated) of the training episode.
    pub team_return: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

/// Trained adversarial actors for the flagged agents of one partition.
#[derive(Debug, Clone)]
pub struct Adversary {
    partition: Partition,
    actors: Vec<(usize, Net)>,
}

impl Adversary {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn actor(&self, agent: usize) -> Option<&Net> {
        self.actors.iter().find(|(i, _)| *i == agent).map(|(_, n)| n)
    }

    pub fn act(&self, agent: usize, history: &History) -> Result<[f64; 2]> {
        let net = self
            .actor(agent)
            .ok_or_else(|| Error::Partition(format!("agent {agent} is not an adversary")))?;
        actor_action(net, history)
    }

    /// Rebuilds the adversary actors from a checkpoint carrying a partition
    /// record.
    pub fn from_checkpoint(cfg: &RunConfig, ck: &Checkpoint) -> Result<Self> {
        let flags = ck
            .partition
            .clone()
            .ok_or_else(|| Error::Checkpoint("adversary checkpoint has no partition record".into()))?;
        let partition = Partition::new(flags);
        if partition.n_agents() != cfg.env.n_agents {
            return Err(Error::Partition(format!(
                "checkpoint partition has {} agents, config has {}",
                partition.n_agents(),
                cfg.env.n_agents
            )));
        }
        let mut rng = stream(0, 0);
        let actors = partition
            .adversaries()
            .into_iter()
            .map(|i| {
                let mut net = build_actor(&adversary_actor_name(i), cfg.history_dim(), cfg.train.hidden_dim, &mut rng)?;
                ck.load_into(net.params_mut())?;
                Ok((i, net))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Adversary { partition, actors })
    }
}

pub fn adversary_actor_name(agent: usize) -> String {
    format!("adv.actor.{agent}")
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub adversary: Adversary,
    /// Adversary networks plus the partition record.
    pub checkpoint: Checkpoint,
    pub curve: Vec<AttackCurvePoint>,
    pub defender_digest_before: String,
    pub defender_digest_after: String,
}

/// SHA-256 over the parameters of a set of actors.
pub fn actors_digest(actors: &[Net]) -> String {
    let mut h = Sha256::new();
    for a in actors {
        a.params().hash_into(&mut h);
    }
    hex::encode(h.finalize())
}

/// Trains adversaries for the flagged agents of `job.partition` against the
/// frozen `defenders` (one actor per agent).
pub fn train_adversary(cfg: &RunConfig, defenders: &[Net], job: &AttackJob) -> Result<AttackOutcome> {
    let n = cfg.env.n_agents;
    if defenders.len() != n {
        return Err(Error::Dimension {
            layer: "defender actors".into(),
            expected: n,
            got: defenders.len(),
        });
    }
    if job.partition.n_agents() != n {
        return Err(Error::Partition(format!(
            "partition `{}` has length {}, expected {n}",
            job.partition,
            job.partition.n_agents()
        )));
    }
    if job.partition.is_attack_free() {
        return Err(Error::Partition("partition has no adversary; nothing to train".into()));
    }
    if job.budget_steps == 0 {
        return Err(Error::Config {
            field: "attack.budget_steps".into(),
            msg: "must be positive".into(),
        });
    }
    let before = actors_digest(defenders);

    let mut rngs = RngStreams::with_base(job.seed, ATTACK_STREAM_BASE);
    let mut env = Rendezvous::new(cfg.env_config());
    let adversaries = job.partition.adversaries();
    let fixed: Vec<Option<Net>> = (0..n)
        .map(|i| (!job.partition.is_adversary(i)).then(|| defenders[i].clone()))
        .collect();
    let settings = LearnerSettings {
        gamma: cfg.train.gamma,
        tau: cfg.train.tau,
        actor_adam: cfg.actor_adam(),
        critic_adam: cfg.critic_adam(),
        reward_sign: -1.0,
        m3ddpg_epsilon: None,
    };
    let state_dim = 2 * n;
    let mut learner = Learner::new(
        "adv.",
        n,
        state_dim,
        cfg.history_dim(),
        cfg.train.hidden_dim,
        &adversaries,
        fixed,
        settings,
        &mut rngs.init,
    )?;
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_size);
    let noise = Normal::new(0.0, cfg.train.exploration_noise.max(0.0)).expect("valid std");
    let len = cfg.env.max_episode_len as u64;
    let epochs = job.budget_steps.div_ceil(len);
    let mut curve = Vec::with_capacity(epochs as usize);
    let mut env_steps = 0;

    for epoch in 1..=epochs {
        let seed = rngs.next_episode_seed();
        let (l, explore) = (&learner, &mut rngs.explore);
        let record = run_episode(&mut env, seed, cfg.env.history_window, |hists| {
            (0..n)
                .map(|i| {
                    let a = l.act(i, &hists[i])?;
                    Ok(if l.is_learning(i) {
                        [
                            (a[0] + noise.sample(explore)).clamp(-1.0, 1.0),
                            (a[1] + noise.sample(explore)).clamp(-1.0, 1.0),
                        ]
                    } else {
                        a
                    })
                })
                .collect()
        })?;
        let team_return = record.total_reward();
        env_steps += record.len as u64;
        buffer.push(record);

        let mut losses = None;
        if buffer.len() >= cfg.warmup_episodes() {
            let rounds = cfg.train.train_epochs * cfg.train.num_batches;
            let (mut c, mut a, mut done) = (0.0, 0.0, 0usize);
            for _ in 0..rounds {
                let batch = buffer.sample(cfg.train.batch_size, buffer.len(), &mut rngs.buffer);
                if let Some(u) = learner.update(&batch, batch.rewards.view())? {
                    c += u.critic;
                    a += u.actor;
                    done += 1;
                }
            }
            if done > 0 {
                losses = Some((c / done as f64, a / done as f64));
            }
        }
        curve.push(AttackCurvePoint {
            epoch,
            env_steps,
            team_return,
            critic_loss: losses.map(|l| l.0),
            actor_loss: losses.map(|l| l.1),
        });
    }

    let mut checkpoint = Checkpoint::new();
    learner.add_to_checkpoint(&mut checkpoint);
    checkpoint.partition = Some(job.partition.flags().to_vec());
    let actors = learner
        .agents()
        .iter()
        .map(|a| (a.agent, a.actor.renamed(adversary_actor_name(a.agent))))
        .collect();
    Ok(AttackOutcome {
        adversary: Adversary {
            partition: job.partition.clone(),
            actors,
        },
        checkpoint,
        curve,
        defender_digest_after: actors_digest(defenders),
        defender_digest_before: before,
    })
}

/// The `n` one-hot partitions in agent order.
pub fn enumerate_single_adversary_partitions(n: usize) -> Vec<Partition> {
    (0..n).map(|i| Partition::one_hot(n, i)).collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// `count` distinct partitions with exactly `k` adversaries, drawn uniformly
/// without replacement and reproducible from `seed`.
pub fn sample_multi_adversary_partitions(n: usize, k: usize, count: usize, seed: u64) -> Result<Vec<Partition>> {
    if k == 0 || k > n {
        return Err(Error::Partition(format!("need 1 <= k <= N, got k={k}, N={n}")));
    }
    let total = binomial(n, k);
    if count as u128 > total {
        return Err(Error::Partition(format!(
            "cannot draw {count} distinct {k}-adversary partitions of {n} agents (only {total} exist)"
        )));
    }
    let mut rng = stream(seed, PARTITION_STREAM);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut idx = index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        if seen.insert(idx.clone()) {
            let mut flags = vec![false; n];
            for i in idx {
                flags[i] = true;
            }
            out.push(Partition::new(flags));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_enumeration() {
        let p = enumerate_single_adversary_partitions(3);
        let bits: Vec<String> = p.iter().map(Partition::bitstring).collect();
        assert_eq!(bits, ["100", "010", "001"]);
        assert_eq!(enumerate_single_adversary_partitions(1)[0].bitstring(), "1");
    }

    #[test]
    fn multi_sample_contract() {
        let a = sample_multi_adversary_partitions(5, 2, 5, 9).unwrap();
        let set: BTreeSet<String> = a.iter().map(Partition::bitstring).collect();
        assert_eq!(set.len(), 5);
        assert!(a.iter().all(|p| p.n_adversaries() == 2));
        assert_eq!(a, sample_multi_adversary_partitions(5, 2, 5, 9).unwrap());

        let all = sample_multi_adversary_partitions(4, 4, 1, 0).unwrap();
        assert_eq!(all[0].bitstring(), "1111");
        assert!(sample_multi_adversary_partitions(4, 4, 2, 0).is_err());
        assert_eq!(sample_multi_adversary_partitions(5, 2, 10, 3).unwrap().len(), 10);
        assert!(sample_multi_adversary_partitions(5, 2, 11, 3).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(4, 4), 1);
        assert_eq!(binomial(10, 1), 10);
    }
}
