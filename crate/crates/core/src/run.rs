//! Run directories: config snapshot, per-epoch metrics, checkpoints, a
//! sample trajectory, and attack sub-directories.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::adversary::{AttackCurvePoint, AttackJob, AttackOutcome, Adversary};
use crate::config::RunConfig;
use crate::env::{Partition, Rendezvous};
use crate::error::{Error, Result};
use crate::eval::Defender;
use crate::marl::{actor_action, load_actors, run_episode, EpochMetrics, Trainer};
use crate::nn::{Checkpoint, Net};

pub const METRICS_COLUMNS: [&str; 7] = [
    "epoch",
    "env_steps",
    "episode_return",
    "mi_total",
    "critic_loss",
    "actor_loss",
    "wall_time_s",
];
pub const CURVE_COLUMNS: [&str; 5] = ["epoch", "env_steps", "team_return", "critic_loss", "actor_loss"];
pub const TRAJECTORY_COLUMNS: [&str; 4] = ["step", "agent", "x", "y"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_record(m: &EpochMetrics) -> [String; 7] {
    [
        m.epoch.to_string(),
        m.env_steps.to_string(),
        m.episode_return.to_string(),
        opt(m.mi_total),
        opt(m.critic_loss),
        opt(m.actor_loss),
        m.wall_time_s.to_string(),
    ]
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| read_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_err(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingArtifact(path.to_path_buf())
    } else {
        Error::io(path, e)
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// `<algorithm>-<config hash prefix>-seed<seed>`; the hash ignores the
    /// seed so runs of one configuration share a prefix.
    pub fn name_for(cfg: &RunConfig) -> String {
        let mut unseeded = cfg.clone();
        unseeded.seed = 0;
        format!("{}-{}-seed{}", cfg.algorithm, &unseeded.digest()[..8], cfg.seed)
    }

    pub fn at(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    /// Opens an existing run; the config snapshot must be present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let dir = RunDir::at(root);
        if !dir.config_path().is_file() {
            return Err(Error::MissingArtifact(dir.config_path()));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoints_dir().join("final.ckpt")
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.root.join("trajectory.csv")
    }

    pub fn attack_dir(&self, partition: &Partition, seed: u64) -> PathBuf {
        self.root
            .join("attacks")
            .join(format!("{}-seed{seed}", partition.bitstring()))
    }

    pub fn is_complete(&self) -> bool {
        self.final_checkpoint().is_file()
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config_path()).map_err(|e| match e {
            Error::Io { path, source } => read_err(&path, source),
            e => e,
        })
    }

    /// Defender actors from the final checkpoint together with the SHA-256
    /// of the checkpoint file.
    pub fn defender(&self) -> Result<(RunConfig, Defender, String)> {
        let cfg = self.config()?;
        let path = self.final_checkpoint();
        let hash = file_sha256(&path)?;
        let ck = Checkpoint::load(&path)?;
        let actors = load_actors(&cfg, &ck)?;
        Ok((cfg.clone(), Defender { seed: cfg.seed, actors }, hash))
    }

    pub fn adversary(&self, cfg: &RunConfig, partition: &Partition, seed: u64) -> Result<Adversary> {
        let path = self.attack_dir(partition, seed).join("adversary.ckpt");
        let ck = Checkpoint::load(&path)?;
        let adv = Adversary::from_checkpoint(cfg, &ck)?;
        if adv.partition() != partition {
            return Err(Error::Partition(format!(
                "{} holds partition `{}`",
                path.display(),
                adv.partition()
            )));
        }
        Ok(adv)
    }

    /// Writes an attack's checkpoint and learning curve.
    pub fn save_attack(&self, job: &AttackJob, outcome: &AttackOutcome) -> Result<PathBuf> {
        let dir = self.attack_dir(&job.partition, job.seed);
        mkdir(&dir)?;
        outcome.checkpoint.save(&dir.join("adversary.ckpt"))?;
        write_curve(&dir.join("curve.csv"), &outcome.curve)?;
        Ok(dir)
    }
}

pub fn write_curve(path: &Path, curve: &[AttackCurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_COLUMNS)?;
    for p in curve {
        w.write_record([
            p.epoch.to_string(),
            p.env_steps.to_string(),
            p.team_return.to_string(),
            opt(p.critic_loss),
            opt(p.actor_loss),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Positions of one noise-free episode, step 0 being the initial placement.
pub fn write_trajectory(path: &Path, cfg: &RunConfig, actors: &[Net], seed: u64) -> Result<()> {
    let mut env = Rendezvous::new(cfg.env_config());
    let rec = run_episode(&mut env, seed, cfg.env.history_window, |h| {
        actors.iter().zip(h).map(|(a, h)| actor_action(a, h)).collect()
    })?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_COLUMNS)?;
    for t in 0..=rec.len {
        let s = rec.state(t);
        for i in 0..cfg.env.n_agents {
            w.write_record([t.to_string(), i.to_string(), s[2 * i].to_string(), s[2 * i + 1].to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub dir: RunDir,
    pub epochs: u64,
    pub final_param_digest: String,
}

/// Trains until `train.total_timesteps` are consumed, writing every artifact
/// of the run under `out_dir`. `on_epoch` sees each metrics row as written.
pub fn train_run(
    cfg: &RunConfig,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochMetrics, &Trainer),
) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = RunDir::at(out_dir.join(RunDir::name_for(cfg)));
    if dir.metrics_path().exists() {
        return Err(Error::Invalid(format!(
            "run directory {} already holds a run",
            dir.root().display()
        )));
    }
    mkdir(&dir.checkpoints_dir())?;
    fs::write(dir.config_path(), cfg.to_toml_string()).map_err(|e| Error::io(dir.config_path(), e))?;

    let mut trainer = Trainer::new(cfg)?;
    let mut metrics = csv::Writer::from_path(dir.metrics_path())?;
    metrics.write_record(METRICS_COLUMNS)?;
    let interval = cfg.train.checkpoint_interval;
    while !trainer.is_finished() {
        let m = match trainer.train_epoch() {
            Ok(m) => m,
            Err(e) => {
                let abort = dir.checkpoints_dir().join("abort.ckpt");
                trainer.checkpoint().save(&abort)?;
                log::error!("training aborted at epoch {}: {e}; state saved to {}", trainer.epoch(), abort.display());
                metrics.flush().map_err(|e| Error::io(dir.metrics_path(), e))?;
                return Err(e);
            }
        };
        metrics.write_record(metrics_record(&m))?;
        on_epoch(&m, &trainer);
        if interval > 0 && m.epoch % interval == 0 {
            metrics.flush().map_err(|e| Error::io(dir.metrics_path(), e))?;
            let p = dir.checkpoints_dir().join(format!("epoch-{:06}.ckpt", m.epoch));
            trainer.checkpoint().save(&p)?;
        }
    }
    metrics.flush().map_err(|e| Error::io(dir.metrics_path(), e))?;
    trainer.checkpoint().save(&dir.final_checkpoint())?;
    let actors: Vec<Net> = trainer.actors().into_iter().cloned().collect();
    write_trajectory(&dir.trajectory_path(), cfg, &actors, cfg.seed)?;
    Ok(TrainSummary {
        epochs: trainer.epoch(),
        final_param_digest: trainer.param_digest(),
        dir,
    })
}
