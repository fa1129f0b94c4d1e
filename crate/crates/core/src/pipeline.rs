//! Multi-run orchestration used by the command line: attacking a trained
//! run, evaluating sets of runs, and the shaping-coefficient sweep.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::adversary::{train_adversary, AttackJob};
use crate::config::{Algorithm, RunConfig};
use crate::env::Partition;
use crate::error::{Error, Result};
use crate::eval::{attack_partitions, cooperative_report, run_episodes, Aggregate, Attacker, Cell, EvalReport};
use crate::run::{file_sha256, train_run, RunDir};

/// Reuses a completed run of `cfg` under `out_dir`, or trains it.
pub fn ensure_trained(cfg: &RunConfig, out_dir: &Path) -> Result<RunDir> {
    let dir = RunDir::at(out_dir.join(RunDir::name_for(cfg)));
    if dir.is_complete() {
        log::info!("reusing {}", dir.root().display());
        return Ok(dir);
    }
    if dir.root().exists() {
        std::fs::remove_dir_all(dir.root()).map_err(|e| Error::io(dir.root(), e))?;
    }
    Ok(train_run(cfg, out_dir, |_, _| {})?.dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub partition: Partition,
    pub seed: u64,
    pub dir: PathBuf,
    /// Mean team return over the last tenth of the attack's training episodes.
    pub late_team_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSummary {
    pub records: Vec<AttackRecord>,
    pub defender_hash_before: String,
    pub defender_hash_after: String,
}

/// Trains and stores one adversary per partition against the run's final
/// defender. `overrides` are applied on top of the run's stored config.
/// Fails if the defender checkpoint changes on disk.
pub fn attack_run(run: &RunDir, partitions: &[Partition], seed: u64, overrides: &[String]) -> Result<AttackSummary> {
    let (cfg, defender, before) = run.defender()?;
    let cfg = cfg.with_overrides(overrides)?;
    let records = partitions
        .par_iter()
        .map(|p| {
            let job = AttackJob {
                partition: p.clone(),
                budget_steps: cfg.attack.budget_steps,
                seed,
            };
            let outcome = train_adversary(&cfg, &defender.actors, &job)?;
            let dir = run.save_attack(&job, &outcome)?;
            let tail = (outcome.curve.len() / 10).max(1);
            let late = outcome.curve[outcome.curve.len() - tail..]
                .iter()
                .map(|c| c.team_return)
                .sum::<f64>()
                / tail as f64;
            Ok(AttackRecord {
                partition: p.clone(),
                seed,
                dir,
                late_team_return: late,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let after = file_sha256(&run.final_checkpoint())?;
    if after != before {
        return Err(Error::Invalid(format!(
            "defender checkpoint {} changed during the attack",
            run.final_checkpoint().display()
        )));
    }
    Ok(AttackSummary {
        records,
        defender_hash_before: before,
        defender_hash_after: after,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Cooperative,
    /// Uses stored adversaries; missing ones are trained when `train_missing`
    /// is set and reported as missing otherwise.
    Attacked { train_missing: bool },
}

/// Evaluates each run under its stored config with `overrides` applied.
pub fn evaluate_runs(runs: &[RunDir], mode: EvalMode, overrides: &[String]) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::Invalid("no defender runs given".into()));
    }
    let loaded = runs
        .iter()
        .map(|r| {
            let (cfg, d, _) = r.defender()?;
            Ok((r, cfg.with_overrides(overrides)?, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let level = loaded[0].1.eval.ci_level;
    match mode {
        EvalMode::Cooperative => {
            let mut cells = Vec::new();
            for (_, cfg, d) in &loaded {
                cells.extend(cooperative_report(cfg, std::slice::from_ref(d))?.cells);
            }
            EvalReport::from_cells(crate::eval::Scenario::Cooperative, cells, level)
        }
        EvalMode::Attacked { train_missing } => {
            let mut scenario = None;
            let mut jobs = Vec::new();
            let mut missing = Vec::new();
            for (run, cfg, d) in &loaded {
                let (scen, parts) = attack_partitions(cfg, d.seed)?;
                scenario.get_or_insert(scen);
                for p in parts {
                    let path = run.attack_dir(&p, d.seed).join("adversary.ckpt");
                    if !path.is_file() {
                        if !train_missing {
                            missing.push(path);
                            continue;
                        }
                        attack_run(run, std::slice::from_ref(&p), d.seed, overrides)?;
                    }
                    jobs.push((*run, cfg, d, p));
                }
            }
            if !missing.is_empty() {
                return Err(Error::MissingArtifacts(missing));
            }
            let cells = jobs
                .par_iter()
                .map(|(run, cfg, d, p)| {
                    let adv = run.adversary(cfg, p, d.seed)?;
                    let r = run_episodes(cfg, &d.actors, Attacker::Trained(&adv), p, cfg.eval.episodes, d.seed)?;
                    Ok(Cell::from_returns(d.seed, p.clone(), &r, level))
                })
                .collect::<Result<Vec<_>>>()?;
            EvalReport::from_cells(scenario.expect("at least one run"), cells, level)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub cooperative: Aggregate,
    pub attacked: Aggregate,
    pub runs: Vec<RunDir>,
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "lambda",
    "cooperative_mean",
    "cooperative_ci95_halfwidth",
    "attacked_mean",
    "attacked_ci95_halfwidth",
    "n_seeds",
];

/// Train, attack and evaluate MIR3 defenders for every `(λ, seed)`.
pub fn sweep(base: &RunConfig, lambdas: &[f64], seeds: &[u64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::Invalid("sweep needs at least one lambda and one seed".into()));
    }
    let cfgs: Vec<RunConfig> = lambdas
        .iter()
        .flat_map(|&l| {
            seeds.iter().map(move |&s| {
                let mut c = base.clone();
                c.algorithm = Algorithm::Mir3;
                c.mir3.lambda = l;
                c.seed = s;
                c
            })
        })
        .collect();
    for c in &cfgs {
        c.validate()?;
    }
    let runs = cfgs
        .par_iter()
        .map(|c| ensure_trained(c, out_dir))
        .collect::<Result<Vec<_>>>()?;
    lambdas
        .iter()
        .zip(runs.chunks(seeds.len()))
        .map(|(&lambda, runs)| {
            let coop = evaluate_runs(runs, EvalMode::Cooperative, &[])?;
            let att = evaluate_runs(runs, EvalMode::Attacked { train_missing: true }, &[])?;
            Ok(SweepRow {
                lambda,
                cooperative: coop.aggregate,
                attacked: att.aggregate,
                runs: runs.to_vec(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.lambda.to_string(),
            r.cooperative.mean.to_string(),
            r.cooperative.ci95_halfwidth.to_string(),
            r.attacked.mean.to_string(),
            r.attacked.ci95_halfwidth.to_string(),
            r.runs.len().to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<sweep csv>", e))
}
