use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crowdnav::archive::{read_archive, verify_archive, write_archive, ArchiveHeader, ARCHIVE_VERSION};
use crowdnav::checkpoint::Checkpoint;
use crowdnav::config::{Config, CONFIG_ENV};
use crowdnav::parallel::{self, RayonPairs};
use crowdnav::report::{evaluation_table, rank_table, EvaluationOutput};
use crowdnav::teleop::{self, BridgeOptions, TickMode};
use crowdnav_core::demo::DemoSource;
use crowdnav_core::nav::{aggregate, run_world, EpisodeResult, PolicyDriver, ScriptedExpert};
use crowdnav_core::reward_net::RewardModel;
use crowdnav_core::sim::make_scenario;
use crowdnav_core::tmedirl::{pairwise_accuracy, train_with, EpochStats};

#[derive(Parser)]
#[command(name = "crowdnav", version, about = "Socially-aware crowd navigation with trajectory-ranked deep IRL")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults are used for missing keys.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set training.epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set training.seed=N` (train) or the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one headless episode and print its metrics.
    Simulate {
        /// Drive with this checkpoint instead of the scripted expert.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Noise level of the scripted expert.
        #[arg(long, default_value_t = 0.0)]
        p_noise: f64,
        /// Also write the episode to this archive.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record demonstrations from the scripted expert or a teleop client.
    Collect {
        #[arg(long)]
        out: PathBuf,
        /// Serve the teleoperation bridge instead of running the expert.
        #[arg(long)]
        teleop: bool,
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        /// One tick per received command instead of 10 Hz wall clock.
        #[arg(long)]
        lockstep: bool,
        /// Reward model overlaid on teleop state updates.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Exit after this many teleop client sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Learn a reward model from an archive.
    Train {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch statistics as JSON lines; stdout when omitted.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Held-out archive for per-epoch pairwise accuracy.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Run seeded evaluation episodes and report metrics.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Full JSON report; the per-episode lines still go to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Held-out archive for pairwise accuracy.
        #[arg(long)]
        holdout: Option<PathBuf>,
        /// Skip the per-episode JSON lines on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Print the SVCR ranking of an archive.
    Rank {
        #[arg(long)]
        archive: PathBuf,
    },
    /// Replay every episode of an archive and check its stored values.
    Verify {
        #[arg(long)]
        archive: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_model(path: &Path) -> anyhow::Result<RewardModel> {
    Checkpoint::load(path)?.model()
}

fn header(config: &Config) -> ArchiveHeader {
    ArchiveHeader { version: ARCHIVE_VERSION, dt: config.sim.dt, scenario: config.scenario.clone(), config: config.runtime() }
}

fn print_json_line(out: &mut impl Write, value: &impl serde::Serialize) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct EpochRecord<'a> {
    #[serde(flatten)]
    stats: &'a EpochStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout_accuracy: Option<f64>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.common.set.clone();
    if let Some(seed) = cli.common.seed {
        let key = match cli.command {
            Command::Train { .. } => "training.seed",
            Command::Evaluate { .. } => "evaluate.seed",
            Command::Collect { .. } => "collect.seed",
            _ => "scenario.seed",
        };
        overrides.push(format!("{key}={seed}"));
    }
    let config = Config::load(cli.common.config.as_deref(), &overrides)?;
    let runtime = config.runtime();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    match cli.command {
        Command::Config => write!(out, "{}", config.to_toml()?)?,
        Command::Simulate { checkpoint, p_noise, out: archive } => {
            let world = make_scenario(&config.scenario, &runtime.sim)?;
            let demo = match checkpoint {
                Some(path) => {
                    let model = load_model(&path)?;
                    let mut driver = PolicyDriver { reward: &model };
                    run_world(world, &config.scenario, &mut driver, DemoSource::Synthetic, 0, &runtime)?
                }
                None => {
                    let (noise, seed) = (config.collect.noise_model, parallel::noise_seed(config.scenario.seed));
                    let mut expert = ScriptedExpert::with_noise(noise, p_noise, seed);
                    let source = DemoSource::ScriptedExpert { p_noise, seed, noise };
                    run_world(world, &config.scenario, &mut expert, source, 0, &runtime)?
                }
            };
            let result = EpisodeResult::from_demo(&demo, &runtime);
            print_json_line(&mut out, &result)?;
            writeln!(out, "{}", evaluation_table(&aggregate(std::slice::from_ref(&result), None)))?;
            if let Some(path) = archive {
                write_archive(&path, &header(&config), std::slice::from_ref(&demo))?;
            }
        }
        Command::Collect { out: path, teleop: false, .. } => {
            let c = &config.collect;
            let demos = parallel::collect(&config.scenario, c.episodes, c.seed, c.noise_model, &c.noise_levels, &runtime)?;
            write_archive(&path, &header(&config), &demos)?;
            writeln!(out, "{}", rank_table(&demos))?;
        }
        Command::Collect { out: path, teleop: true, bind, lockstep, checkpoint, sessions } => {
            let options = BridgeOptions {
                archive: path,
                mode: if lockstep { TickMode::Lockstep } else { TickMode::Realtime },
                stale_after: 0.5,
                model: checkpoint.as_deref().map(load_model).transpose()?,
                max_sessions: sessions,
            };
            let saved = teleop::serve(bind.as_str(), &config, &options, |addr| {
                eprintln!("teleop bridge listening on ws://{addr}");
            })?;
            writeln!(out, "{}", rank_table(&saved))?;
        }
        Command::Train { archive, out: path, stats, holdout } => {
            let dataset = read_archive(&archive)?.demos;
            let held = holdout.as_deref().map(read_archive).transpose()?.map(|a| a.demos);
            let mut sink: Box<dyn Write> = match &stats {
                Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
                None => Box::new(std::io::stdout()),
            };
            let training = config.training.clone();
            let mut failure = None;
            let model = train_with(&dataset, &training, &RayonPairs, |stats, model| {
                let line = held
                    .as_deref()
                    .map(|h| pairwise_accuracy(h, model, training.gamma_mdp))
                    .transpose()
                    .map_err(anyhow::Error::from)
                    .and_then(|holdout| print_json_line(&mut sink, &EpochRecord { stats, holdout_accuracy: holdout.flatten() }));
                if let Err(e) = line {
                    failure.get_or_insert(e);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            sink.flush()?;
            Checkpoint::from_model(&model, Some(training.clone())).save(&path)?;
            if let Some(h) = &held {
                let acc = pairwise_accuracy(h, &model, training.gamma_mdp)?;
                eprintln!("held-out pairwise accuracy: {}", acc.map_or("-".into(), |a| format!("{a:.4}")));
            }
        }
        Command::Evaluate { checkpoint, out: path, holdout, quiet } => {
            let model = load_model(&checkpoint)?;
            let scenarios: Vec<_> = (0..config.evaluate.episodes as u64).map(|k| config.scenario.with_seed(config.evaluate.seed + k)).collect();
            let results = parallel::evaluate(&model, &scenarios, &runtime)?;
            let accuracy = match holdout {
                Some(h) => pairwise_accuracy(&read_archive(&h)?.demos, &model, config.training.gamma_mdp)?,
                None => None,
            };
            let summary = aggregate(&results, accuracy);
            if !quiet {
                for r in &results {
                    print_json_line(&mut out, r)?;
                }
            }
            write!(out, "{}", evaluation_table(&summary))?;
            if let Some(path) = path {
                let report = EvaluationOutput { checkpoint: checkpoint.display().to_string(), seed: config.evaluate.seed, summary, episodes: results };
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Rank { archive } => {
            let archive = read_archive(&archive)?;
            write!(out, "{}", rank_table(&archive.demos))?;
        }
        Command::Verify { archive } => {
            let archive = read_archive(&archive)?;
            verify_archive(&archive)?;
            writeln!(out, "{} episodes verified", archive.demos.len())?;
        }
    }
    Ok(())
}

