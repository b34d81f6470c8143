//! Benchmark schemes, sweeps, aggregation and file export.
//!
//! A scheme pairs a trajectory rule with a power rule:
//!
//! | scheme | UAVs                  | power       |
//! |--------|-----------------------|-------------|
//! | SU_RP  | frozen at start       | random      |
//! | OU_RP  | trained PPO policy    | random      |
//! | SU_PP  | frozen at start       | SCA         |
//! | OU_PP  | trained PPO policy    | SCA         |
//!
//! Evaluation episodes always run the full `n_slots`, so a proximity
//! violation costs its penalty but does not truncate the record.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{content_hash, ExperimentConfig, NetworkConfig, PowerPolicy};
use crate::env::{initial_topology, Env, EnvAction};
use crate::error::{Error, Result};
use crate::model::Topology;
use crate::ppo::dist::SquashedGaussian;
use crate::ppo::{train_with, PolicyParams, TrainResult, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SU_RP")]
    SuRp,
    #[serde(rename = "OU_RP")]
    OuRp,
    #[serde(rename = "SU_PP")]
    SuPp,
    #[serde(rename = "OU_PP")]
    OuPp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryPolicy {
    /// UAVs hover at their start positions.
    Static,
    /// Greedy actions of a trained policy.
    Learned,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::SuRp, Scheme::OuRp, Scheme::SuPp, Scheme::OuPp];

    pub fn trajectory(self) -> TrajectoryPolicy {
        match self {
            Scheme::SuRp | Scheme::SuPp => TrajectoryPolicy::Static,
            Scheme::OuRp | Scheme::OuPp => TrajectoryPolicy::Learned,
        }
    }

    pub fn power(self) -> PowerPolicy {
        match self {
            Scheme::SuRp | Scheme::OuRp => PowerPolicy::Random,
            Scheme::SuPp | Scheme::OuPp => PowerPolicy::Sca,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SuRp => "SU_RP",
            Scheme::OuRp => "OU_RP",
            Scheme::SuPp => "SU_PP",
            Scheme::OuPp => "OU_PP",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    /// Accepts `su-rp` as well as `SU_RP`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scheme: Scheme,
    pub seeds: Vec<u64>,
    /// Overrides `network.n_slots`.
    pub n_slots: Option<usize>,
    /// Overrides `ppo.episodes` when training.
    pub episodes: Option<usize>,
    /// Values of `n_uavs` visited by [`sweep_uavs`].
    pub uav_sweep: Vec<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(scheme: Scheme, seeds: Vec<u64>) -> Self {
        Self {
            scheme,
            seeds,
            n_slots: None,
            episodes: None,
            uav_sweep: Vec::new(),
            out_dir: None,
        }
    }

    /// `cfg` with this spec's overrides applied.
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        if let Some(n) = self.n_slots {
            c.network.n_slots = n;
        }
        if let Some(e) = self.episodes {
            c.ppo.episodes = e;
        }
        c
    }
}

/// Metrics of one slot of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    pub seed: u64,
    pub slot: usize,
    pub n_uavs: usize,
    pub mean_gu_rate: f64,
    pub uav_rates: Vec<f64>,
    pub reward: f64,
    pub dc_objective: Option<f64>,
    /// Number of UAV pairs closer than `d_min`.
    pub proximity_violations: usize,
    pub config_hash: String,
}

/// One row of the long-format metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scheme: String,
    pub seed: u64,
    pub slot: usize,
    pub metric: String,
    pub value: f64,
}

impl MetricsRecord {
    pub fn sum_rate(&self) -> f64 {
        self.uav_rates.iter().sum()
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        let row = |metric: String, value: f64| MetricRow {
            scheme: self.scheme.name().into(),
            seed: self.seed,
            slot: self.slot,
            metric,
            value,
        };
        let mut out = vec![
            row("mean_gu_rate".into(), self.mean_gu_rate),
            row("sum_rate".into(), self.sum_rate()),
            row("reward".into(), self.reward),
            row("proximity_violations".into(), self.proximity_violations as f64),
        ];
        if let Some(dc) = self.dc_objective {
            out.push(row("dc_objective".into(), dc));
        }
        for (k, r) in self.uav_rates.iter().enumerate() {
            out.push(row(format!("uav_rate_{k}"), *r));
        }
        out
    }
}

/// Position and action of one UAV in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub scheme: Scheme,
    pub seed: u64,
    pub slot: usize,
    pub uav_id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    /// Turn applied this slot, rad.
    pub phi: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemeRun {
    pub records: Vec<MetricsRecord>,
    pub traces: Vec<TraceRecord>,
}

impl SchemeRun {
    fn extend(&mut self, other: SchemeRun) {
        self.records.extend(other.records);
        self.traces.extend(other.traces);
    }
}

/// GUs uniform over the area and UAVs at their start positions.
pub fn generate_scenario(net: &NetworkConfig, seed: u64) -> Topology {
    initial_topology(net, seed)
}

/// Trains a policy on `cfg` with the configured power rule.
pub fn train_policy(
    cfg: &ExperimentConfig,
    seed: u64,
    on_episode: impl FnMut(usize, f64, &UpdateStats),
) -> Result<TrainResult> {
    cfg.validate()?;
    train_with(|| Env::new(cfg), &cfg.ppo, seed, on_episode)
}

fn run_seed(cfg: &ExperimentConfig, scheme: Scheme, policy: Option<&PolicyParams>, seed: u64) -> Result<SchemeRun> {
    let hash = cfg.content_hash();
    let mut env = Env::new(cfg)?.with_power_policy(scheme.power()).with_termination(false);
    let mut state = env.reset(seed)?;
    let bounds = env.action_bounds();
    let k = cfg.network.n_uavs;
    let mut run = SchemeRun::default();
    while !env.is_done() {
        let action = match policy {
            None => EnvAction::hover(k),
            Some(p) => {
                let out = p.forward(state.as_slice())?;
                let dist = SquashedGaussian {
                    mean: &out.mean,
                    log_std: &out.log_std,
                    bounds: &bounds,
                };
                EnvAction::from_flat(&dist.mode_action())
            }
        };
        let o = env.step(&action)?;
        let rec = &o.info.record;
        for (u, q) in rec.uav_pos.iter().enumerate() {
            run.traces.push(TraceRecord {
                scheme,
                seed,
                slot: rec.slot,
                uav_id: u,
                x: q[0],
                y: q[1],
                z: q[2],
                v: rec.speed[u],
                phi: rec.turn[u],
                reward: o.reward,
            });
        }
        run.records.push(MetricsRecord {
            scheme,
            seed,
            slot: rec.slot,
            n_uavs: k,
            mean_gu_rate: o.info.mean_gu_rate,
            uav_rates: o.info.uav_rates.clone(),
            reward: o.reward,
            dc_objective: o.info.dc_objective,
            proximity_violations: o.info.proximity.len(),
            config_hash: hash.clone(),
        });
        state = o.next_state;
    }
    Ok(run)
}

/// Evaluates one scheme on every seed of `spec`. Learned schemes need `policy`.
pub fn run_scheme(cfg: &ExperimentConfig, spec: &ExperimentSpec, policy: Option<&PolicyParams>) -> Result<SchemeRun> {
    let cfg = spec.apply(cfg);
    cfg.validate()?;
    let policy = match spec.scheme.trajectory() {
        TrajectoryPolicy::Static => None,
        TrajectoryPolicy::Learned => {
            let p = policy.ok_or_else(|| Error::MissingCheckpoint(spec.scheme.name().into()))?;
            let dim = crate::env::EnvState::dim(&cfg.network);
            if p.obs_dim != dim || p.act_dim != 2 * cfg.network.n_uavs {
                return Err(Error::Shape {
                    expected: dim,
                    got: p.obs_dim,
                });
            }
            Some(p)
        }
    };
    let runs: Vec<SchemeRun> = spec
        .seeds
        .par_iter()
        .map(|&s| run_seed(&cfg, spec.scheme, policy, s))
        .collect::<Result<_>>()?;
    let mut out = SchemeRun::default();
    for r in runs {
        out.extend(r);
    }
    Ok(out)
}

/// Runs the scheme once per `n_uavs` value of the sweep with matched seeds.
///
/// Learned schemes look up a policy per UAV count in `policies`.
pub fn sweep_uavs(
    cfg: &ExperimentConfig,
    spec: &ExperimentSpec,
    policies: &BTreeMap<usize, PolicyParams>,
) -> Result<BTreeMap<usize, SchemeRun>> {
    if spec.uav_sweep.is_empty() {
        return Err(Error::Config("sweep needs at least one n_uavs value".into()));
    }
    spec.uav_sweep
        .par_iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.network.n_uavs = k;
            run_scheme(&c, spec, policies.get(&k)).map(|r| (k, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: String,
    pub metric: String,
    /// Number of seeds.
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
}

/// Mean and spread across seeds of each seed's slot-averaged metric.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut per_seed: BTreeMap<(String, String), BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let e = per_seed
            .entry((r.scheme.clone(), r.metric.clone()))
            .or_default()
            .entry(r.seed)
            .or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    per_seed
        .into_iter()
        .map(|((scheme, metric), seeds)| {
            let vals: Vec<f64> = seeds.values().map(|(s, c)| s / *c as f64).collect();
            let (mean, std) = mean_std(&vals);
            Aggregate {
                scheme,
                metric,
                n: vals.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed average of `f` over the records of each seed.
pub fn per_seed_mean(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.seed).or_insert((0.0, 0));
        e.0 += f(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(s, (v, c))| (s, v / c as f64)).collect()
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const REWARD_CURVE_FILE: &str = "reward_curve.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["scheme", "seed", "slot", "metric", "value"])?;
    for r in records {
        for row in r.rows() {
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}

pub fn write_traces_jsonl(path: &Path, traces: &[TraceRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_traces_jsonl(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
}

pub fn write_reward_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["episode", "mean_reward"])?;
    for (episode, &mean_reward) in curve.iter().enumerate() {
        w.serialize(CurvePoint { episode, mean_reward })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_reward_curve(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for p in r.deserialize::<CurvePoint>() {
        out.push(p?.mean_reward);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub schemes: Vec<String>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Content hash of every file written next to the manifest.
    pub files: BTreeMap<String, String>,
}

/// Everything one CLI invocation writes.
#[derive(Debug, Clone)]
pub struct ExportBundle<'a> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub records: &'a [MetricsRecord],
    pub traces: &'a [TraceRecord],
    pub reward_curve: &'a [f64],
}

/// Writes metrics, traces, reward curve and manifest into `dir`.
pub fn export(dir: &Path, bundle: &ExportBundle) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics_csv(&dir.join(METRICS_FILE), bundle.records)?;
    write_traces_jsonl(&dir.join(TRACES_FILE), bundle.traces)?;
    write_reward_curve(&dir.join(REWARD_CURVE_FILE), bundle.reward_curve)?;
    let mut files = BTreeMap::new();
    for name in [METRICS_FILE, TRACES_FILE, REWARD_CURVE_FILE] {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        files.insert(name.to_string(), content_hash(&bytes));
    }
    let manifest = Manifest {
        tool: "thzuav".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: bundle.command.into(),
        schemes: bundle.schemes.iter().map(|s| s.name().to_string()).collect(),
        seeds: bundle.seeds.clone(),
        config_hash: bundle.config.content_hash(),
        config: bundle.config.clone(),
        files,
    };
    write_manifest(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Every `metrics.csv` below `root`, sorted by path.
pub fn find_metrics_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == METRICS_FILE) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Summary table of every metrics file under `root`; also writes `summary.csv` there.
pub fn report(root: &Path) -> Result<String> {
    let files = find_metrics_files(root)?;
    let summary_path = root.join("summary.csv");
    let file = fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["run", "scheme", "metric", "n", "mean", "std"])?;
    let mut text = format!("{:<24} {:<6} {:<22} {:>4} {:>14} {:>14}\n", "run", "scheme", "metric", "n", "mean", "std");
    for f in files {
        let run = f
            .parent()
            .and_then(|p| p.strip_prefix(root).ok())
            .map(|p| p.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        for a in aggregate(&read_metrics_csv(&f)?) {
            w.write_record([
                run.clone(),
                a.scheme.clone(),
                a.metric.clone(),
                a.n.to_string(),
                a.mean.to_string(),
                a.std.to_string(),
            ])?;
            text.push_str(&format!(
                "{:<24} {:<6} {:<22} {:>4} {:>14.6e} {:>14.6e}\n",
                run, a.scheme, a.metric, a.n, a.mean, a.std
            ));
        }
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.network = NetworkConfig::scaled();
        c.network.n_slots = 4;
        c
    }

    #[test]
    fn scheme_table() {
        let table = [
            (Scheme::SuRp, TrajectoryPolicy::Static, PowerPolicy::Random),
            (Scheme::OuRp, TrajectoryPolicy::Learned, PowerPolicy::Random),
            (Scheme::SuPp, TrajectoryPolicy::Static, PowerPolicy::Sca),
            (Scheme::OuPp, TrajectoryPolicy::Learned, PowerPolicy::Sca),
        ];
        for (s, t, p) in table {
            assert_eq!((s.trajectory(), s.power()), (t, p));
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(s.name().to_lowercase().replace('_', "-").parse::<Scheme>().unwrap(), s);
        }
        assert!("xx-pp".parse::<Scheme>().is_err());
    }

    #[test]
    fn scenario_counts_and_determinism() {
        let net = NetworkConfig::default();
        let t = generate_scenario(&net, 5);
        assert_eq!(t.gu_pos.len(), 36);
        assert_eq!(t, generate_scenario(&net, 5));
    }

    #[test]
    fn scenario_mean_is_central() {
        let net = NetworkConfig {
            n_gus: 10_000,
            ..NetworkConfig::default()
        };
        let t = generate_scenario(&net, 11);
        let mx = t.gu_pos.iter().map(|p| p[0]).sum::<f64>() / 1e4;
        let my = t.gu_pos.iter().map(|p| p[1]).sum::<f64>() / 1e4;
        assert!(((mx - 100.0).powi(2) + (my - 100.0).powi(2)).sqrt() < 2.0);
    }

    #[test]
    fn learned_scheme_needs_policy() {
        let spec = ExperimentSpec::new(Scheme::OuPp, vec![1]);
        assert!(matches!(run_scheme(&small_cfg(), &spec, None), Err(Error::MissingCheckpoint(_))));
    }

    #[test]
    fn static_run_shapes() {
        let spec = ExperimentSpec::new(Scheme::SuPp, vec![1, 2, 3]);
        let run = run_scheme(&small_cfg(), &spec, None).unwrap();
        assert_eq!(run.records.len(), 12);
        assert_eq!(run.traces.len(), 24);
        let again = run_scheme(&small_cfg(), &spec, None).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn sweep_row_count_and_degenerate_case() {
        let mut spec = ExperimentSpec::new(Scheme::SuRp, vec![4, 5]);
        spec.uav_sweep = vec![2, 4, 8];
        let out = sweep_uavs(&small_cfg(), &spec, &BTreeMap::new()).unwrap();
        let total: usize = out.values().map(|r| r.records.len()).sum();
        assert_eq!(total, 3 * 2 * 4);
        assert!(out[&8].records.iter().all(|r| r.uav_rates.len() == 8));
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        let spec = ExperimentSpec::new(Scheme::SuRp, vec![9]);
        let run = run_scheme(&cfg, &spec, None).unwrap();
        let curve = [0.5, 1.25, -2.0];
        let m = export(
            dir.path(),
            &ExportBundle {
                command: "run",
                config: &cfg,
                schemes: vec![Scheme::SuRp],
                seeds: vec![9],
                records: &run.records,
                traces: &run.traces,
                reward_curve: &curve,
            },
        )
        .unwrap();
        let rows: Vec<MetricRow> = run.records.iter().flat_map(|r| r.rows()).collect();
        assert_eq!(read_metrics_csv(&dir.path().join(METRICS_FILE)).unwrap(), rows);
        assert_eq!(read_traces_jsonl(&dir.path().join(TRACES_FILE)).unwrap(), run.traces);
        assert_eq!(read_reward_curve(&dir.path().join(REWARD_CURVE_FILE)).unwrap(), curve);
        assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
        assert_eq!(m.config_hash, run.records[0].config_hash);
    }

    #[test]
    fn empty_export_has_headers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        export(
            dir.path(),
            &ExportBundle {
                command: "run",
                config: &cfg,
                schemes: vec![],
                seeds: vec![],
                records: &[],
                traces: &[],
                reward_curve: &[],
            },
        )
        .unwrap();
        let m = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(m, "scheme,seed,slot,metric,value\n");
        let c = fs::read_to_string(dir.path().join(REWARD_CURVE_FILE)).unwrap();
        assert_eq!(c, "episode,mean_reward\n");
        assert!(read_metrics_csv(&dir.path().join(METRICS_FILE)).unwrap().is_empty());
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn aggregate_means_per_seed_first() {
        let row = |seed, slot, value| MetricRow {
            scheme: "SU_PP".into(),
            seed,
            slot,
            metric: "m".into(),
            value,
        };
        let a = aggregate(&[row(1, 1, 1.0), row(1, 2, 3.0), row(2, 1, 4.0)]);
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].n, a[0].mean), (2, 3.0));
        assert!((a[0].std - 2f64.sqrt()).abs() < 1e-15);
    }
}
