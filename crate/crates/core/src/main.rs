use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mir3::config::{Algorithm, RunConfig};
use mir3::env::Partition;
use mir3::eval::{attack_partitions, timing_benchmark};
use mir3::pipeline::{attack_run, evaluate_runs, sweep, write_sweep_csv, EvalMode};
use mir3::plot::plot_files;
use mir3::run::{train_run, RunDir};
use mir3::{Error, Result};

/// Mutual-information regularized robust MARL on swarm rendezvous.
#[derive(Debug, Parser)]
#[command(name = "mir3", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set mir3.lambda=1e-4` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Worker threads for parallel jobs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Cooperative,
    Attacked,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a defender team.
    Train {
        #[arg(long)]
        algo: Option<Algorithm>,
    },
    /// Train worst-case adversaries against a trained run.
    Attack {
        run_dir: PathBuf,
        /// Bitstring(s) separated by commas, `auto-single` or `auto-multi`.
        #[arg(long, default_value = "auto-single")]
        partition: String,
    },
    /// Evaluate trained runs and write the report CSV.
    Eval {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "cooperative")]
        mode: Mode,
        /// Train adversaries that are missing instead of failing.
        #[arg(long)]
        train_attackers: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train, attack and evaluate across shaping coefficients.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,1e-5,5e-5,1e-4,5e-4,1e-3,1e-2,1e-1")]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render CSV artifacts as SVG charts.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Mean seconds per training epoch.
    Bench {
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
    },
}

impl Global {
    fn config(&self, algo: Option<Algorithm>) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::MissingArtifact(p.clone()));
                }
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        let mut sets = Vec::new();
        if let Some(a) = algo {
            sets.push(format!("algorithm=\"{a}\""));
        }
        sets.extend(self.overrides.iter().cloned());
        let mut cfg = base.with_overrides(&sets)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let threads = if g.deterministic { Some(1) } else { g.jobs };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train { algo } => {
            let cfg = g.config(algo)?;
            std::fs::create_dir_all(&g.out_dir).map_err(|e| Error::io(&g.out_dir, e))?;
            let total = cfg.train.total_timesteps.div_ceil(cfg.env.max_episode_len as u64);
            let every = (total / 20).max(1);
            let summary = train_run(&cfg, &g.out_dir, |m, _| {
                if m.epoch % every == 0 {
                    log::info!("epoch {}/{total} return {:.3}", m.epoch, m.episode_return);
                }
            })?;
            println!("{}", summary.dir.root().display());
        }
        Command::Attack { run_dir, partition } => {
            let run = RunDir::open(&run_dir)?;
            let cfg = run.config()?.with_overrides(&g.overrides)?;
            if !run.is_complete() {
                return Err(Error::MissingArtifact(run.final_checkpoint()));
            }
            let mut pcfg = cfg.clone();
            pcfg.attack.partitions = partition;
            let seed = g.seed.unwrap_or(cfg.seed);
            let (_, parts): (_, Vec<Partition>) = attack_partitions(&pcfg, seed)?;
            let summary = attack_run(&run, &parts, seed, &g.overrides)?;
            for r in &summary.records {
                println!("{}\t{}\t{:.4}", r.partition, r.dir.display(), r.late_team_return);
            }
            println!("defender sha256 {}", summary.defender_hash_after);
        }
        Command::Eval {
            run_dirs,
            mode,
            train_attackers,
            output,
        } => {
            let runs = run_dirs.iter().map(RunDir::open).collect::<Result<Vec<_>>>()?;
            let mode = match mode {
                Mode::Cooperative => EvalMode::Cooperative,
                Mode::Attacked => EvalMode::Attacked {
                    train_missing: train_attackers,
                },
            };
            let report = evaluate_runs(&runs, mode, &g.overrides)?;
            if let Some(p) = &output {
                report.write_csv(File::create(p).map_err(|e| Error::io(p, e))?)?;
            } else {
                report.write_csv(std::io::stdout().lock())?;
            }
            let a = report.aggregate;
            eprintln!(
                "{} aggregate: mean {:.4} ± {:.4} (n = {})",
                report.scenario, a.mean, a.ci95_halfwidth, a.n
            );
        }
        Command::Sweep { lambdas, seeds, output } => {
            let cfg = g.config(Some(Algorithm::Mir3))?;
            std::fs::create_dir_all(&g.out_dir).map_err(|e| Error::io(&g.out_dir, e))?;
            let rows = sweep(&cfg, &lambdas, &seeds, &g.out_dir)?;
            let out = output.unwrap_or_else(|| g.out_dir.join("ablation.csv"));
            write_sweep_csv(&rows, File::create(&out).map_err(|e| Error::io(&out, e))?)?;
            println!("{}", out.display());
        }
        Command::Plot { csv, output_dir } => {
            let out = output_dir.unwrap_or_else(|| g.out_dir.join("plots"));
            for p in plot_files(&csv, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Bench { algo, epochs } => {
            let cfg = g.config(algo)?;
            let secs = timing_benchmark(&cfg, epochs)?;
            println!("{} {:.6} s/epoch over {epochs} epochs (N = {})", cfg.algorithm, secs, cfg.env.n_agents);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
