//! Evaluation protocol: noise-free episode returns, normal-approximation
//! confidence intervals, the per-agent attack protocol and timing.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::adversary::{
    actors_digest, enumerate_single_adversary_partitions, sample_multi_adversary_partitions,
    train_adversary, Adversary, AttackJob, AttackOutcome,
};
use crate::config::RunConfig;
use crate::env::{compose_perturbed_action, Partition, Rendezvous};
use crate::error::{Error, Result};
use crate::marl::{actor_action, run_episode, stream, Trainer};
use crate::nn::Net;

const EVAL_STREAM: u64 = 30;
const RANDOM_ADV_STREAM: u64 = 31;

/// Who controls the agents flagged by the partition.
#[derive(Debug, Clone, Copy)]
pub enum Attacker<'a> {
    None,
    Trained(&'a Adversary),
    /// Uniform random actions in `[-1, 1]²`.
    Random,
}

/// Undiscounted returns of `n_episodes` noise-free episodes. Episode start
/// states depend only on `seed`, so runs with the same seed are paired.
pub fn run_episodes(
    cfg: &RunConfig,
    defenders: &[Net],
    attacker: Attacker<'_>,
    partition: &Partition,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = cfg.env.n_agents;
    if defenders.len() != n || partition.n_agents() != n {
        return Err(Error::Dimension {
            layer: "evaluation agents".into(),
            expected: n,
            got: if defenders.len() != n { defenders.len() } else { partition.n_agents() },
        });
    }
    match attacker {
        Attacker::None if !partition.is_attack_free() => {
            return Err(Error::Partition(format!(
                "partition `{partition}` flags adversaries but no adversary was given"
            )))
        }
        Attacker::Trained(_) | Attacker::Random if partition.is_attack_free() => {
            return Err(Error::Partition("adversary given with an attack-free partition".into()))
        }
        Attacker::Trained(adv) if adv.partition() != partition => {
            return Err(Error::Partition(format!(
                "adversary trained for `{}`, evaluated under `{partition}`",
                adv.partition()
            )))
        }
        _ => {}
    }
    let mut env = Rendezvous::new(cfg.env_config());
    let mut seeds = stream(seed, EVAL_STREAM);
    let mut random = stream(seed, RANDOM_ADV_STREAM);
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let ep_seed = seeds.next_u64();
        let record = run_episode(&mut env, ep_seed, cfg.env.history_window, |hists| {
            let def = (0..n)
                .map(|i| {
                    if partition.is_adversary(i) {
                        Ok([0.0; 2])
                    } else {
                        actor_action(&defenders[i], &hists[i])
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let adv = (0..n)
                .map(|i| {
                    if !partition.is_adversary(i) {
                        return Ok([0.0; 2]);
                    }
                    match attacker {
                        Attacker::Trained(a) => a.act(i, &hists[i]),
                        Attacker::Random => Ok([random.random_range(-1.0..=1.0), random.random_range(-1.0..=1.0)]),
                        Attacker::None => unreachable!("validated above"),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            compose_perturbed_action(&def, &adv, partition)
        })?;
        returns.push(record.total_reward());
    }
    Ok(returns)
}

/// `(mean, z · s / √n)` with `s` the sample standard deviation and `z` the
/// two-sided normal quantile for `level`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            need: 2,
            got: samples.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!("confidence level {level} outside (0, 1)")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, z_value(level) * var.sqrt() / n.sqrt()))
}

pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Cooperative,
    SingleAdversary,
    KAdversary(usize),
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Cooperative => f.write_str("cooperative"),
            Scenario::SingleAdversary => f.write_str("single-adversary"),
            Scenario::KAdversary(k) => write!(f, "{k}-adversary"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cooperative" => Ok(Scenario::Cooperative),
            "single-adversary" => Ok(Scenario::SingleAdversary),
            other => other
                .strip_suffix("-adversary")
                .and_then(|k| k.parse().ok())
                .map(Scenario::KAdversary)
                .ok_or_else(|| Error::Schema(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub defender_seed: u64,
    pub partition: Partition,
    pub mean_return: f64,
    pub episodes: usize,
    /// Halfwidth over the cell's episodes; absent below two episodes.
    pub ci95_halfwidth: Option<f64>,
}

impl Cell {
    pub fn from_returns(defender_seed: u64, partition: Partition, returns: &[f64], level: f64) -> Self {
        let mean = if returns.is_empty() {
            f64::NAN
        } else {
            returns.iter().sum::<f64>() / returns.len() as f64
        };
        Cell {
            defender_seed,
            partition,
            mean_return: mean,
            episodes: returns.len(),
            ci95_halfwidth: confidence_interval(returns, level).ok().map(|c| c.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub ci95_halfwidth: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub cells: Vec<Cell>,
    pub aggregate: Aggregate,
}

pub const REPORT_COLUMNS: [&str; 6] = [
    "scenario",
    "defender_seed",
    "partition",
    "n_episodes",
    "mean_return",
    "ci95_halfwidth",
];

impl EvalReport {
    /// Aggregates over cells: episode-weighted mean, interval over the cell
    /// means, `n` = number of cells. A single cell falls back to the interval
    /// over its own episodes.
    pub fn from_cells(scenario: Scenario, cells: Vec<Cell>, level: f64) -> Result<Self> {
        let total: usize = cells.iter().map(|c| c.episodes).sum();
        if total == 0 {
            return Err(Error::InsufficientSamples { need: 1, got: 0 });
        }
        let mean = cells
            .iter()
            .filter(|c| c.episodes > 0)
            .map(|c| c.mean_return * c.episodes as f64)
            .sum::<f64>()
            / total as f64;
        let means: Vec<f64> = cells.iter().map(|c| c.mean_return).collect();
        let half = match cells.as_slice() {
            [only] => only.ci95_halfwidth.ok_or(Error::InsufficientSamples {
                need: 2,
                got: only.episodes,
            })?,
            _ => confidence_interval(&means, level)?.1,
        };
        Ok(EvalReport {
            scenario,
            aggregate: Aggregate {
                mean,
                ci95_halfwidth: half,
                n: cells.len(),
            },
            cells,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_COLUMNS)?;
        let scen = self.scenario.to_string();
        for c in &self.cells {
            out.write_record([
                scen.clone(),
                c.defender_seed.to_string(),
                c.partition.bitstring(),
                c.episodes.to_string(),
                c.mean_return.to_string(),
                c.ci95_halfwidth.map(|h| h.to_string()).unwrap_or_default(),
            ])?;
        }
        out.write_record([
            "aggregate".to_string(),
            String::new(),
            String::new(),
            self.aggregate.n.to_string(),
            self.aggregate.mean.to_string(),
            self.aggregate.ci95_halfwidth.to_string(),
        ])?;
        out.flush().map_err(|e| Error::io("<eval report>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let idx: Vec<usize> = REPORT_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Schema(format!("bad {what} `{s}`")))
        };
        let mut cells = Vec::new();
        let mut scenario = None;
        let mut aggregate = None;
        for rec in rdr.records() {
            let rec = rec?;
            let f = |k: usize| rec.get(idx[k]).unwrap_or("");
            if f(0) == "aggregate" {
                aggregate = Some(Aggregate {
                    n: num(f(3), "n_episodes")? as usize,
                    mean: num(f(4), "mean_return")?,
                    ci95_halfwidth: num(f(5), "ci95_halfwidth")?,
                });
                continue;
            }
            scenario = Some(f(0).parse::<Scenario>()?);
            cells.push(Cell {
                defender_seed: f(1).parse().map_err(|_| Error::Schema(format!("bad defender_seed `{}`", f(1))))?,
                partition: f(2).parse()?,
                episodes: num(f(3), "n_episodes")? as usize,
                mean_return: num(f(4), "mean_return")?,
                ci95_halfwidth: if f(5).is_empty() { None } else { Some(num(f(5), "ci95_halfwidth")?) },
            });
        }
        Ok(EvalReport {
            scenario: scenario.ok_or_else(|| Error::Schema("report has no cell rows".into()))?,
            cells,
            aggregate: aggregate.ok_or_else(|| Error::Schema("report has no aggregate row".into()))?,
        })
    }
}

/// A trained defender as seen by the evaluation protocol.
#[derive(Debug, Clone)]
pub struct Defender {
    pub seed: u64,
    pub actors: Vec<Net>,
}

/// Cooperative report: every defender on the attack-free partition.
pub fn cooperative_report(cfg: &RunConfig, defenders: &[Defender]) -> Result<EvalReport> {
    let n = cfg.env.n_agents;
    let cells = defenders
        .iter()
        .map(|d| {
            let r = run_episodes(cfg, &d.actors, Attacker::None, &Partition::none(n), cfg.eval.episodes, d.seed)?;
            Ok(Cell::from_returns(d.seed, Partition::none(n), &r, cfg.eval.ci_level))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_cells(Scenario::Cooperative, cells, cfg.eval.ci_level)
}

/// Attack partitions selected by `attack.partitions`: `auto-single`,
/// `auto-multi` (sampled `k_adversaries`-hot) or comma-separated bitstrings.
pub fn attack_partitions(cfg: &RunConfig, seed: u64) -> Result<(Scenario, Vec<Partition>)> {
    let n = cfg.env.n_agents;
    let spec = cfg.attack.partitions.trim();
    match spec {
        "auto-single" => Ok((Scenario::SingleAdversary, enumerate_single_adversary_partitions(n))),
        "auto-multi" => {
            let k = cfg.attack.k_adversaries;
            Ok((Scenario::KAdversary(k), sample_multi_adversary_partitions(n, k, 5, seed)?))
        }
        list => {
            let parts = list
                .split(',')
                .map(|s| Partition::parse_attack(s.trim(), n))
                .collect::<Result<Vec<_>>>()?;
            let k = parts[0].n_adversaries();
            let scen = if parts.iter().all(|p| p.n_adversaries() == 1) {
                Scenario::SingleAdversary
            } else {
                Scenario::KAdversary(k)
            };
            Ok((scen, parts))
        }
    }
}

/// One attacked cell of the protocol with everything needed for auditing.
#[derive(Debug, Clone)]
pub struct AttackCell {
    pub defender_seed: u64,
    pub outcome: AttackOutcome,
    pub attacked_returns: Vec<f64>,
    pub random_returns: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub report: EvalReport,
    /// Same cells with a uniform random adversary in place of the trained one.
    pub random_report: EvalReport,
    pub cells: Vec<AttackCell>,
}

/// Trains and evaluates one adversary per (defender, partition) cell, in
/// parallel on the current rayon pool.
pub fn attack_protocol(
    cfg: &RunConfig,
    defenders: &[Defender],
    scenario: Scenario,
    partitions: &[Partition],
) -> Result<ProtocolResult> {
    let jobs: Vec<(&Defender, &Partition)> = defenders
        .iter()
        .flat_map(|d| partitions.iter().map(move |p| (d, p)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|(d, p)| attack_cell(cfg, d, p))
        .collect::<Result<Vec<_>>>()?;
    let level = cfg.eval.ci_level;
    let to_cells = |pick: fn(&AttackCell) -> &[f64]| {
        cells
            .iter()
            .map(|c| Cell::from_returns(c.defender_seed, c.outcome.adversary.partition().clone(), pick(c), level))
            .collect::<Vec<_>>()
    };
    Ok(ProtocolResult {
        report: EvalReport::from_cells(scenario, to_cells(|c| &c.attacked_returns), level)?,
        random_report: EvalReport::from_cells(scenario, to_cells(|c| &c.random_returns), level)?,
        cells,
    })
}

/// Trains the adversary for one cell and evaluates it next to a random
/// adversary on the same episode seeds.
pub fn attack_cell(cfg: &RunConfig, defender: &Defender, partition: &Partition) -> Result<AttackCell> {
    let job = AttackJob {
        partition: partition.clone(),
        budget_steps: cfg.attack.budget_steps,
        seed: defender.seed,
    };
    let outcome = train_adversary(cfg, &defender.actors, &job)?;
    if actors_digest(&defender.actors) != outcome.defender_digest_before {
        return Err(Error::Invalid("defender parameters changed during the attack".into()));
    }
    let eps = cfg.eval.episodes;
    let attacked_returns = run_episodes(
        cfg,
        &defender.actors,
        Attacker::Trained(&outcome.adversary),
        partition,
        eps,
        defender.seed,
    )?;
    let random_returns = run_episodes(cfg, &defender.actors, Attacker::Random, partition, eps, defender.seed)?;
    Ok(AttackCell {
        defender_seed: defender.seed,
        outcome,
        attacked_returns,
        random_returns,
    })
}

/// Mean wall-clock seconds per training epoch of a fresh trainer. Epochs
/// before the first update (warmup) are run but not timed.
pub fn timing_benchmark(cfg: &RunConfig, epochs: usize) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut trainer = Trainer::new(cfg)?;
    for _ in 0..cfg.warmup_episodes().saturating_sub(1) {
        trainer.train_epoch()?;
    }
    let mut total = 0.0;
    for _ in 0..epochs {
        total += trainer.train_epoch()?.wall_time_s;
    }
    Ok(total / epochs as f64)
}
