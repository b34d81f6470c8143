use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use thzuav::harness::{self, ExperimentSpec, ExportBundle, Scheme, TrajectoryPolicy};
use thzuav::ppo::Checkpoint;
use thzuav::{ExperimentConfig, NetworkConfig};

const CHECKPOINT_FILE: &str = "policy.json";

#[derive(Parser)]
#[command(name = "thzuav", version, about = "THz multi-UAV downlink simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a trajectory policy with PPO.
    Train(TrainArgs),
    /// Evaluate one benchmark scheme over a list of seeds.
    Run(RunArgs),
    /// Evaluate a scheme for several UAV counts with matched seeds.
    Sweep(SweepArgs),
    /// Summarize every metrics.csv below a directory.
    Report(ReportArgs),
    /// Print the default configuration as TOML.
    Defaults {
        /// The reduced two-UAV, eight-GU, 50 m setting.
        #[arg(long)]
        scaled: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the reduced two-UAV setting instead of the full one.
    #[arg(long)]
    scaled: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if self.scaled {
            if self.config.is_some() {
                bail!("--scaled and --config are mutually exclusive");
            }
            cfg.network = NetworkConfig::scaled();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides `ppo.episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Print progress every this many episodes (0 silences it).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// One of su-rp, ou-rp, su-pp, ou-pp.
    #[arg(long)]
    scheme: Scheme,
    /// Policy checkpoint, required by the ou-* schemes.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma list and/or ranges, e.g. `0..20` or `1,2,7`.
    #[arg(long, default_value = "0..20")]
    seeds: String,
    /// Overrides `network.n_slots`.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "su-pp")]
    scheme: Scheme,
    /// UAV counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    uavs: Vec<usize>,
    /// Policy checkpoints for ou-* schemes, one per UAV count.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, default_value = "0..20")]
    seeds: String,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory searched recursively for metrics.csv files.
    #[arg(long)]
    dir: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().with_context(|| format!("bad seed range {part:?}"))?;
            let b: u64 = b.parse().with_context(|| format!("bad seed range {part:?}"))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().with_context(|| format!("bad seed {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

fn load_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    if ck.ppo_config_hash != cfg.ppo.content_hash() {
        eprintln!(
            "warning: {} was trained with a different [ppo] section",
            path.display()
        );
    }
    Ok(ck)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(e) = args.episodes {
        cfg.ppo.episodes = e;
    }
    let every = args.log_every;
    let result = harness::train_policy(&cfg, args.seed, |ep, reward, stats| {
        if every > 0 && (ep + 1) % every == 0 {
            eprintln!(
                "episode {:>6}  reward {:>9.4}  clip {:.3}  kl {:+.2e}",
                ep + 1,
                reward,
                stats.clip_fraction,
                stats.approx_kl
            );
        }
    })?;
    harness::export(
        &args.out,
        &ExportBundle {
            command: "train",
            config: &cfg,
            schemes: vec![],
            seeds: vec![args.seed],
            records: &[],
            traces: &[],
            reward_curve: &result.reward_curve,
        },
    )?;
    let ck_path = args.out.join(CHECKPOINT_FILE);
    Checkpoint::new(result.params, &cfg.ppo).save(&ck_path)?;
    println!("wrote {}", ck_path.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut spec = ExperimentSpec::new(args.scheme, parse_seeds(&args.seeds)?);
    spec.n_slots = args.slots;
    let ck = match (&args.checkpoint, args.scheme.trajectory()) {
        (Some(p), TrajectoryPolicy::Learned) => Some(load_checkpoint(p, &cfg)?),
        _ => None,
    };
    let out = harness::run_scheme(&cfg, &spec, ck.as_ref().map(|c| &c.params))?;
    harness::export(
        &args.out,
        &ExportBundle {
            command: "run",
            config: &spec.apply(&cfg),
            schemes: vec![args.scheme],
            seeds: spec.seeds.clone(),
            records: &out.records,
            traces: &out.traces,
            reward_curve: &[],
        },
    )?;
    let rate = harness::per_seed_mean(&out.records, |r| r.mean_gu_rate);
    let (mean, std) = harness::mean_std(&rate.values().copied().collect::<Vec<_>>());
    println!(
        "{}: mean per-GU rate {:.6e} bit/s (std {:.3e}, {} seeds) -> {}",
        args.scheme,
        mean,
        std,
        rate.len(),
        args.out.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut spec = ExperimentSpec::new(args.scheme, parse_seeds(&args.seeds)?);
    spec.n_slots = args.slots;
    spec.uav_sweep = args.uavs.clone();
    let mut policies = BTreeMap::new();
    for p in &args.checkpoint {
        let ck = load_checkpoint(p, &cfg)?;
        policies.insert(ck.params.act_dim / 2, ck.params);
    }
    let runs = harness::sweep_uavs(&cfg, &spec, &policies)?;
    for (k, run) in &runs {
        let mut c = spec.apply(&cfg);
        c.network.n_uavs = *k;
        let dir = args.out.join(format!("k{k}"));
        harness::export(
            &dir,
            &ExportBundle {
                command: "sweep",
                config: &c,
                schemes: vec![args.scheme],
                seeds: spec.seeds.clone(),
                records: &run.records,
                traces: &run.traces,
                reward_curve: &[],
            },
        )?;
        let rate = harness::per_seed_mean(&run.records, |r| r.mean_gu_rate);
        let (mean, std) = harness::mean_std(&rate.values().copied().collect::<Vec<_>>());
        println!("K={k}: mean per-GU rate {mean:.6e} bit/s (std {std:.3e})");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => {
            print!("{}", harness::report(&a.dir)?);
            Ok(())
        }
        Command::Defaults { scaled } => {
            let mut cfg = ExperimentConfig::default();
            if scaled {
                cfg.network = NetworkConfig::scaled();
            }
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}
