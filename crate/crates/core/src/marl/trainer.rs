//! Defender training loop: one exploratory rollout per epoch, then CLUB
//! fitting and MI-shaped MADDPG updates.

use std::time::Instant;

use ndarray::Array1;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::buffer::ReplayBuffer;
use super::learner::{build_actor, Learner, LearnerSettings, ACTION_DIM};
use super::rollout::{run_episode, RngStreams};
use super::updates::shape_reward_total;
use crate::club::{ClubNet, MiEstimate};
use crate::config::{Algorithm, RunConfig};
use crate::env::{DecPomdp, Rendezvous};
use crate::error::Result;
use crate::nn::{Checkpoint, Net};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub env_steps: u64,
    pub episode_return: f64,
    pub mi_total: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub wall_time_s: f64,
}

pub struct Trainer {
    cfg: RunConfig,
    env: Rendezvous,
    learner: Learner,
    clubs: Option<Vec<ClubNet>>,
    buffer: ReplayBuffer,
    rngs: RngStreams,
    noise: Normal<f64>,
    epoch: u64,
    env_steps: u64,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rngs = RngStreams::new(cfg.seed);
        let env = Rendezvous::new(cfg.env_config());
        let n = cfg.env.n_agents;
        let settings = LearnerSettings {
            gamma: cfg.train.gamma,
            tau: cfg.train.tau,
            actor_adam: cfg.actor_adam(),
            critic_adam: cfg.critic_adam(),
            reward_sign: 1.0,
            m3ddpg_epsilon: (cfg.algorithm == Algorithm::M3ddpg).then_some(cfg.m3ddpg.epsilon),
        };
        let all: Vec<usize> = (0..n).collect();
        let learner = Learner::new(
            "",
            n,
            env.state_dim(),
            cfg.history_dim(),
            cfg.train.hidden_dim,
            &all,
            vec![None; n],
            settings,
            &mut rngs.init,
        )?;
        // CLUB nets draw their initial weights from the CLUB stream so the
        // backbone initialization is identical with and without them.
        let clubs = if cfg.algorithm == Algorithm::Mir3 {
            Some(
                (0..n)
                    .map(|i| {
                        ClubNet::new(
                            &format!("club.{i}"),
                            cfg.history_dim(),
                            ACTION_DIM,
                            cfg.mi_hidden_dim(),
                            &mut rngs.club,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Trainer {
            env,
            learner,
            clubs,
            buffer: ReplayBuffer::new(cfg.train.buffer_size),
            noise: Normal::new(0.0, cfg.train.exploration_noise.max(0.0)).expect("valid std"),
            rngs,
            cfg: cfg.clone(),
            epoch: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn clubs(&self) -> Option<&[ClubNet]> {
        self.clubs.as_deref()
    }

    /// Epochs needed to consume `train.total_timesteps` environment steps.
    pub fn total_epochs(&self) -> u64 {
        self.cfg
            .train
            .total_timesteps
            .div_ceil(self.cfg.env.max_episode_len as u64)
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.train.total_timesteps
    }

    pub fn actors(&self) -> Vec<&Net> {
        self.learner.agents().iter().map(|a| &a.actor).collect()
    }

    /// Hash of every backbone parameter (actors, critics and their targets).
    pub fn param_digest(&self) -> String {
        let mut h = Sha256::new();
        self.learner.hash_into(&mut h);
        hex::encode(h.finalize())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.learner.add_to_checkpoint(&mut ck);
        if let Some(clubs) = &self.clubs {
            for c in clubs {
                ck.add_store(c.mean_net().params());
                ck.add_store(c.logvar_net().params());
            }
        }
        ck
    }

    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let seed = self.rngs.next_episode_seed();
        let n = self.cfg.env.n_agents;
        let window = self.cfg.env.history_window;
        let (learner, rngs, noise) = (&self.learner, &mut self.rngs, &self.noise);
        let record = run_episode(&mut self.env, seed, window, |hists| {
            (0..n)
                .map(|i| {
                    let a = learner.act(i, &hists[i])?;
                    Ok([
                        (a[0] + noise.sample(&mut rngs.explore)).clamp(-1.0, 1.0),
                        (a[1] + noise.sample(&mut rngs.explore)).clamp(-1.0, 1.0),
                    ])
                })
                .collect()
        })?;
        let episode_return = record.total_reward();
        self.env_steps += record.len as u64;
        self.buffer.push(record);
        self.epoch += 1;

        let mut mi_total = None;
        let mut losses = None;
        if self.buffer.len() >= self.cfg.warmup_episodes() {
            let rounds = self.cfg.train.train_epochs * self.cfg.train.num_batches;
            let (mut c_sum, mut a_sum, mut mi_sum, mut done) = (0.0, 0.0, 0.0, 0usize);
            for _ in 0..rounds {
                let batch = self.buffer.sample(
                    self.cfg.train.batch_size,
                    self.buffer.len(),
                    &mut self.rngs.buffer,
                );
                let rewards = match self.clubs.as_mut() {
                    Some(clubs) => {
                        // A separate MI sample is only drawn when the MI window
                        // differs from the replay window.
                        let separate = (self.cfg.mi_buffer_size() < self.buffer.len()).then(|| {
                            self.buffer.sample(
                                self.cfg.train.batch_size,
                                self.cfg.mi_buffer_size(),
                                &mut self.rngs.club,
                            )
                        });
                        let fit_on = separate.as_ref().unwrap_or(&batch);
                        let adam = self.cfg.mi_adam();
                        for (i, club) in clubs.iter_mut().enumerate() {
                            club.fit(
                                fit_on.histories[i].view(),
                                fit_on.agent_actions(i).view(),
                                self.cfg.mir3.mi_train_epochs,
                                &adam,
                            )?;
                        }
                        let mut per_sample = Array1::<f64>::zeros(batch.len());
                        let mut per_agent = Vec::with_capacity(n);
                        for (i, club) in clubs.iter().enumerate() {
                            let pw = club.pointwise(
                                batch.histories[i].view(),
                                batch.agent_actions(i).view(),
                                &mut self.rngs.club,
                            )?;
                            per_agent.push(pw.mean().unwrap_or(0.0));
                            per_sample += &pw;
                        }
                        let est = MiEstimate::from_per_agent(per_agent);
                        let lambda = self.cfg.mir3.lambda;
                        let mean_abs_r = batch.rewards.mapv(f64::abs).mean().unwrap_or(0.0);
                        if lambda * est.total.abs() > 0.1 * mean_abs_r {
                            log::debug!(
                                "MI shaping {:.3e} exceeds 10% of mean |r| {:.3e}",
                                lambda * est.total,
                                mean_abs_r
                            );
                        }
                        if est.total < 0.0 {
                            log::debug!("negative CLUB estimate {:.4}", est.total);
                        }
                        mi_sum += est.total;
                        Array1::from_iter(
                            batch
                                .rewards
                                .iter()
                                .zip(per_sample.iter())
                                .map(|(&r, &mi)| shape_reward_total(r, mi, lambda)),
                        )
                    }
                    None => batch.rewards.clone(),
                };
                if let Some(l) = self.learner.update(&batch, rewards.view())? {
                    c_sum += l.critic;
                    a_sum += l.actor;
                    done += 1;
                }
            }
            if self.clubs.is_some() && rounds > 0 {
                mi_total = Some(mi_sum / rounds as f64);
            }
            if done > 0 {
                losses = Some((c_sum / done as f64, a_sum / done as f64));
            }
        }

        Ok(EpochMetrics {
            epoch: self.epoch,
            env_steps: self.env_steps,
            episode_return,
            mi_total,
            critic_loss: losses.map(|l| l.0),
            actor_loss: losses.map(|l| l.1),
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }
}

/// Loads the defender actors of a trained run from its checkpoint.
pub fn load_actors(cfg: &RunConfig, ck: &Checkpoint) -> Result<Vec<Net>> {
    let mut rng = super::rollout::stream(0, 0);
    (0..cfg.env.n_agents)
        .map(|i| {
            let mut net = build_actor(&format!("actor.{i}"), cfg.history_dim(), cfg.train.hidden_dim, &mut rng)?;
            ck.load_into(net.params_mut())?;
            Ok(net)
        })
        .collect()
}
