//! MADDPG learner over a subset of agents: decentralized actors, one
//! centralized critic per learning agent, and target copies of both. Agents
//! outside the subset follow fixed deterministic policies.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::buffer::Batch;
use super::updates::{actor_step, critic_step, m3ddpg_perturb, td_targets};
use crate::env::History;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, Checkpoint, Net};

pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone)]
pub struct AgentNets {
    pub agent: usize,
    pub actor: Net,
    pub target_actor: Net,
    pub critic: Net,
    pub target_critic: Net,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSettings {
    pub gamma: f64,
    pub tau: f64,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    /// Sign applied to rewards before they enter the critic targets.
    pub reward_sign: f64,
    pub m3ddpg_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    pub actor: f64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    n_agents: usize,
    state_dim: usize,
    agents: Vec<AgentNets>,
    fixed: Vec<Option<Net>>,
    settings: LearnerSettings,
}

pub fn build_actor<R: Rng + ?Sized>(name: &str, history_dim: usize, hidden: usize, rng: &mut R) -> Result<Net> {
    Net::new(
        name,
        &[history_dim, hidden, ACTION_DIM],
        &[Activation::Relu, Activation::Tanh],
        rng,
    )
}

pub fn build_critic<R: Rng + ?Sized>(name: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Result<Net> {
    Net::new(
        name,
        &[input_dim, hidden, 1],
        &[Activation::Relu, Activation::Linear],
        rng,
    )
}

impl Learner {
    /// `fixed[i]` must be `Some` exactly for the agents not in `learning`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        n_agents: usize,
        state_dim: usize,
        history_dim: usize,
        hidden: usize,
        learning: &[usize],
        fixed: Vec<Option<Net>>,
        settings: LearnerSettings,
        rng: &mut R,
    ) -> Result<Self> {
        if fixed.len() != n_agents {
            return Err(Error::Topology(format!("{} fixed slots for {n_agents} agents", fixed.len())));
        }
        for (i, f) in fixed.iter().enumerate() {
            if f.is_some() == learning.contains(&i) {
                return Err(Error::Topology(format!(
                    "agent {i} must be either learning or fixed"
                )));
            }
        }
        let critic_in = state_dim + ACTION_DIM * n_agents;
        let agents = learning
            .iter()
            .map(|&i| {
                let actor = build_actor(&format!("{prefix}actor.{i}"), history_dim, hidden, rng)?;
                let critic = build_critic(&format!("{prefix}critic.{i}"), critic_in, hidden, rng)?;
                Ok(AgentNets {
                    agent: i,
                    target_actor: actor.renamed(format!("{prefix}target_actor.{i}")),
                    target_critic: critic.renamed(format!("{prefix}target_critic.{i}")),
                    actor,
                    critic,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Learner {
            n_agents,
            state_dim,
            agents,
            fixed,
            settings,
        })
    }

    pub fn agents(&self) -> &[AgentNets] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentNets] {
        &mut self.agents
    }

    pub fn settings(&self) -> &LearnerSettings {
        &self.settings
    }

    pub fn learning_agents(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.agent).collect()
    }

    fn slot(&self, agent: usize) -> Option<&AgentNets> {
        self.agents.iter().find(|a| a.agent == agent)
    }

    /// Noise-free action of `agent`.
    pub fn act(&self, agent: usize, history: &History) -> Result<[f64; 2]> {
        let net = match self.slot(agent) {
            Some(a) => &a.actor,
            None => self.fixed[agent].as_ref().expect("fixed policy present"),
        };
        super::rollout::actor_action(net, history)
    }

    pub fn is_learning(&self, agent: usize) -> bool {
        self.slot(agent).is_some()
    }

    fn next_joint_actions(&self, batch: &Batch) -> Result<Array2<f64>> {
        let m = batch.len();
        let mut out = Array2::zeros((m, ACTION_DIM * self.n_agents));
        for i in 0..self.n_agents {
            let net = match self.slot(i) {
                Some(a) => &a.target_actor,
                None => self.fixed[i].as_ref().unwrap(),
            };
            let a = net.infer_batch(batch.next_histories[i].view())?;
            out.slice_mut(s![.., ACTION_DIM * i..ACTION_DIM * (i + 1)]).assign(&a);
        }
        Ok(out)
    }

    /// One critic and actor update for every learning agent on `batch`,
    /// using `rewards` (already shaped, before sign flip) in the targets.
    /// Returns `None` when a target is not finite; nothing is updated then.
    pub fn update(&mut self, batch: &Batch, rewards: ArrayView1<'_, f64>) -> Result<Option<UpdateLosses>> {
        let st = self.settings;
        let signed: Array1<f64> = rewards.mapv(|r| st.reward_sign * r);
        let next_actions = self.next_joint_actions(batch)?;
        let next_input = concatenate![Axis(1), batch.next_states, next_actions];
        let input = concatenate![Axis(1), batch.states, batch.actions];

        let mut targets = Vec::with_capacity(self.agents.len());
        for a in self.agents.iter_mut() {
            let mut nin = next_input.clone();
            if let Some(eps) = st.m3ddpg_epsilon {
                m3ddpg_perturb(&mut a.target_critic, &mut nin, self.state_dim, eps, a.agent)?;
            }
            let next_q = a.target_critic.infer_batch(nin.view())?;
            let y = td_targets(signed.view(), batch.dones.view(), next_q.column(0), st.gamma);
            if y.iter().any(|v| !v.is_finite()) {
                log::warn!("non-finite TD target for agent {}, batch skipped", a.agent);
                return Ok(None);
            }
            targets.push(y);
        }

        let mut critic_loss = 0.0;
        for (a, y) in self.agents.iter_mut().zip(&targets) {
            critic_loss += critic_step(&mut a.critic, input.view(), y.view(), &st.critic_adam)?;
        }

        let mut actor_loss = 0.0;
        for a in self.agents.iter_mut() {
            let mut cin = input.clone();
            if let Some(eps) = st.m3ddpg_epsilon {
                m3ddpg_perturb(&mut a.critic, &mut cin, self.state_dim, eps, a.agent)?;
            }
            let offset = self.state_dim + ACTION_DIM * a.agent;
            actor_loss += actor_step(
                &mut a.actor,
                &mut a.critic,
                batch.histories[a.agent].view(),
                cin,
                offset,
                &st.actor_adam,
            )?;
        }

        for a in self.agents.iter_mut() {
            a.target_critic.soft_update_from(&a.critic, st.tau)?;
            a.target_actor.soft_update_from(&a.actor, st.tau)?;
        }

        let k = self.agents.len() as f64;
        Ok(Some(UpdateLosses {
            critic: critic_loss / k,
            actor: actor_loss / k,
        }))
    }

    pub fn hash_into(&self, h: &mut Sha256) {
        for a in &self.agents {
            for net in [&a.actor, &a.target_actor, &a.critic, &a.target_critic] {
                net.params().hash_into(h);
            }
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.hash_into(&mut h);
        hex::encode(h.finalize())
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint) {
        for a in &self.agents {
            for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
                ck.add_store(net.params());
            }
        }
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        for a in self.agents.iter_mut() {
            for net in [&mut a.actor, &mut a.critic, &mut a.target_actor, &mut a.target_critic] {
                ck.load_into(net.params_mut())?;
            }
        }
        Ok(())
    }
}
