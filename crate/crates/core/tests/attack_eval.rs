mod common;

use common::small_config;
use mir3::adversary::{actors_digest, enumerate_single_adversary_partitions, train_adversary, AttackJob};
use mir3::config::{Algorithm, RunConfig};
use mir3::env::{Partition, Rendezvous};
use mir3::eval::{
    attack_protocol, confidence_interval, cooperative_report, run_episodes, Attacker, Defender, Scenario,
};
use mir3::marl::{run_episode, Batch, Learner, LearnerSettings, Trainer};
use mir3::nn::{AdamConfig, Net};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fresh_defender(cfg: &RunConfig, seed: u64) -> Defender {
    let mut c = cfg.clone();
    c.seed = seed;
    let t = Trainer::new(&c).unwrap();
    Defender {
        seed,
        actors: t.actors().into_iter().cloned().collect(),
    }
}

fn trained_defender(cfg: &RunConfig, epochs: usize) -> Vec<Net> {
    let mut t = Trainer::new(cfg).unwrap();
    for _ in 0..epochs {
        t.train_epoch().unwrap();
    }
    t.actors().into_iter().cloned().collect()
}

#[test]
fn defender_is_frozen_during_attack() {
    let cfg = small_config(Algorithm::Maddpg, 1);
    let defenders = trained_defender(&cfg, 20);
    let digest = actors_digest(&defenders);
    let job = AttackJob {
        partition: Partition::one_hot(3, 1),
        budget_steps: 25 * 10,
        seed: 4,
    };
    let out = train_adversary(&cfg, &defenders, &job).unwrap();
    assert_eq!(out.defender_digest_before, digest);
    assert_eq!(out.defender_digest_after, digest);
    assert_eq!(actors_digest(&defenders), digest);
    assert_eq!(out.curve.len(), 10);
    assert!(out.curve.iter().all(|p| p.team_return <= 0.0));
    assert_eq!(out.checkpoint.partition.as_deref(), Some(&[false, true, false][..]));
    assert!(out.adversary.actor(1).is_some() && out.adversary.actor(0).is_none());
}

#[test]
fn attack_rejects_empty_partition_and_budget() {
    let cfg = small_config(Algorithm::Maddpg, 1);
    let defenders = fresh_defender(&cfg, 1).actors;
    let mut job = AttackJob {
        partition: Partition::none(3),
        budget_steps: 100,
        seed: 0,
    };
    assert!(train_adversary(&cfg, &defenders, &job).is_err());
    job.partition = Partition::one_hot(3, 0);
    job.budget_steps = 0;
    assert!(train_adversary(&cfg, &defenders, &job).is_err());
    job.budget_steps = 100;
    job.partition = Partition::one_hot(4, 0);
    assert!(train_adversary(&cfg, &defenders, &job).is_err());
}

fn settings(sign: f64) -> LearnerSettings {
    LearnerSettings {
        gamma: 0.99,
        tau: 0.01,
        actor_adam: AdamConfig::new(1e-3),
        critic_adam: AdamConfig::new(1e-3),
        reward_sign: sign,
        m3ddpg_epsilon: None,
    }
}

#[test]
fn adversary_critic_sees_negated_reward() {
    let cfg = small_config(Algorithm::Maddpg, 0);
    let mut env = Rendezvous::new(cfg.env_config());
    let rec = run_episode(&mut env, 3, 1, |h| Ok(vec![[0.3, -0.2]; h.len()])).unwrap();
    let batch = Batch::from_episodes(&[&rec]);
    let hd = cfg.history_dim();
    let fixed = || vec![None, Some(fresh_defender(&cfg, 9).actors[1].clone()), None];
    let build = |sign| {
        Learner::new("adv.", 3, 6, hd, 16, &[0, 2], fixed(), settings(sign), &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    };
    let mut negated = build(-1.0);
    let mut plain = build(1.0);
    assert!(batch.rewards.iter().all(|&r| r < 0.0));
    negated.update(&batch, batch.rewards.view()).unwrap().unwrap();
    plain.update(&batch, batch.rewards.mapv(|r| -r).view()).unwrap().unwrap();
    assert_eq!(negated.digest(), plain.digest());
}

#[test]
fn trained_adversary_beats_random_against_random_defender() {
    let mut cfg = small_config(Algorithm::Maddpg, 0);
    cfg.attack.budget_steps = 25 * 150;
    let (mut trained, mut random) = (0.0, 0.0);
    for seed in 1..=5 {
        let d = fresh_defender(&cfg, seed);
        let p = Partition::one_hot(3, (seed % 3) as usize);
        let job = AttackJob {
            partition: p.clone(),
            budget_steps: cfg.attack.budget_steps,
            seed,
        };
        let out = train_adversary(&cfg, &d.actors, &job).unwrap();
        let t = run_episodes(&cfg, &d.actors, Attacker::Trained(&out.adversary), &p, 16, seed).unwrap();
        let r = run_episodes(&cfg, &d.actors, Attacker::Random, &p, 16, seed).unwrap();
        trained += t.iter().sum::<f64>() / t.len() as f64 / 5.0;
        random += r.iter().sum::<f64>() / r.len() as f64 / 5.0;
    }
    println!("trained adversary {trained:.3}, random adversary {random:.3}");
    assert!(trained <= random, "trained {trained} > random {random}");
}

#[test]
fn episodes_are_deterministic_and_validated() {
    let cfg = small_config(Algorithm::Maddpg, 0);
    let d = fresh_defender(&cfg, 2);
    let none = Partition::none(3);
    let a = run_episodes(&cfg, &d.actors, Attacker::None, &none, 6, 11).unwrap();
    let b = run_episodes(&cfg, &d.actors, Attacker::None, &none, 6, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    assert!(a.iter().all(|&r| r <= 0.0 && r >= -2.0 * 2f64.sqrt() * 25.0));
    let empty = run_episodes(&cfg, &d.actors, Attacker::None, &none, 0, 11).unwrap();
    assert!(empty.is_empty());
    assert!(confidence_interval(&empty, 0.95).is_err());
    let attacked = Partition::one_hot(3, 0);
    assert!(run_episodes(&cfg, &d.actors, Attacker::None, &attacked, 2, 0).is_err());
    assert!(run_episodes(&cfg, &d.actors, Attacker::Random, &none, 2, 0).is_err());
}

fn protocol_cfg(n: usize) -> RunConfig {
    let mut cfg = small_config(Algorithm::Maddpg, 0);
    cfg.env.n_agents = n;
    cfg.attack.budget_steps = 25 * 3;
    cfg.eval.episodes = 4;
    cfg
}

#[test]
fn protocol_cell_counts() {
    for (n, cells) in [(4, 20), (1, 5)] {
        let cfg = protocol_cfg(n);
        let ds: Vec<Defender> = (1..=5).map(|s| fresh_defender(&cfg, s)).collect();
        let parts = enumerate_single_adversary_partitions(n);
        let res = attack_protocol(&cfg, &ds, Scenario::SingleAdversary, &parts).unwrap();
        assert_eq!(res.report.cells.len(), cells);
        assert_eq!(res.report.aggregate.n, cells);
        assert_eq!(res.random_report.cells.len(), cells);
        let coop = cooperative_report(&cfg, &ds).unwrap();
        assert_eq!(coop.cells.len(), 5);
        assert!(coop.cells.iter().all(|c| c.partition.is_attack_free()));
    }
}

#[test]
fn protocol_is_reproducible_and_aggregates_consistently() {
    let cfg = protocol_cfg(2);
    let ds: Vec<Defender> = (1..=3).map(|s| fresh_defender(&cfg, s)).collect();
    let parts = enumerate_single_adversary_partitions(2);
    let a = attack_protocol(&cfg, &ds, Scenario::SingleAdversary, &parts).unwrap();
    let b = attack_protocol(&cfg, &ds, Scenario::SingleAdversary, &parts).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.random_report, b.random_report);
    let r = &a.report;
    let eps: usize = r.cells.iter().map(|c| c.episodes).sum();
    let weighted: f64 = r.cells.iter().map(|c| c.mean_return * c.episodes as f64).sum::<f64>() / eps as f64;
    assert!((r.aggregate.mean - weighted).abs() <= 1e-12 * weighted.abs().max(1.0));
    assert!(r.aggregate.ci95_halfwidth >= 0.0);
    for c in &a.cells {
        assert_eq!(c.outcome.defender_digest_before, c.outcome.defender_digest_after);
    }
}
