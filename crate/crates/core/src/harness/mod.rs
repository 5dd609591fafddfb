//! Experiment runner, metrics and the desk-scale trainer.

mod config;
mod metrics;
mod rollout;
mod train;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

pub use config::{CurriculumStage, ExperimentConfig, RewardSection, RunSection, TrainSection, WorldSection};
pub use metrics::{
    mean, metrics_from_rows, population_stdev, write_metrics_csv, Aggregate, MetricsReport, Summary, METRICS_HEADER,
};
pub use rollout::{collect_rollouts, observation_digest, robot_rng, run_episode, Rollout, RolloutOptions, StepRecord};
pub use train::{
    a2c_samples, ablation, bandit, discounted_returns, evaluate, stage_episode, train, write_ablation_csv,
    write_curve_csv, Ablation, AblationRow, BanditReport, CurveRow, EpisodeStats, TrainOutcome, CURVE_HEADER,
    EVAL_SEED_OFFSET,
};

use crate::error::{Error, Result};
use crate::mapgen::MapKind;
use crate::policy::{PolicyNet, PolicySpec, SelectMode};

/// Resolves `run.policy`; `learned` loads `run.weights` and acts greedily.
pub fn policy_from_config(cfg: &ExperimentConfig) -> Result<PolicySpec> {
    policy_by_name(&cfg.run.policy, cfg.run.weights.as_deref())
}

pub fn policy_by_name(name: &str, weights: Option<&str>) -> Result<PolicySpec> {
    if name == "learned" {
        let path = weights.ok_or_else(|| Error::Config("policy `learned` needs run.weights".into()))?;
        let net = PolicyNet::load(Path::new(path))?;
        return Ok(PolicySpec::Learned { net: Arc::new(net), mode: SelectMode::Greedy });
    }
    name.parse()
}

pub struct Experiment {
    pub reports: Vec<MetricsReport>,
    pub summary: Summary,
    pub rollouts: Vec<Rollout>,
}

/// Runs `run.repetitions` episodes with seeds `run.seed, run.seed + 1, ...`.
pub fn run_experiment(cfg: &ExperimentConfig, policy: &PolicySpec) -> Result<Experiment> {
    cfg.validate()?;
    let opts = RolloutOptions { keep_inputs: false, timing: cfg.run.timing };
    let n = cfg.run.n_robots;
    let rollouts = collect_rollouts(|s| cfg.episode(s, n), policy, cfg.run.repetitions, cfg.run.seed, opts)?;
    let reports: Vec<MetricsReport> =
        rollouts.iter().enumerate().map(|(i, r)| MetricsReport::from_rollout(i, r)).collect();
    let summary = Summary::of(&reports);
    Ok(Experiment { reports, summary, rollouts })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, w: std::io::Result<()>) -> Result<()> {
    w.map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `summary.csv` and, when enabled, per-run
/// `trajectory_<run>.csv` and `events_<run>.jsonl` into `dir`.
pub fn write_experiment(cfg: &ExperimentConfig, exp: &Experiment, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("metrics.csv");
    let mut w = create(&p)?;
    finish(&p, write_metrics_csv(&exp.reports, &mut w).and_then(|_| w.flush()))?;
    let p = dir.join("summary.csv");
    let mut w = create(&p)?;
    finish(&p, exp.summary.write_csv(&mut w).and_then(|_| w.flush()))?;
    if cfg.run.trajectories {
        for (i, r) in exp.rollouts.iter().enumerate() {
            let p = dir.join(format!("trajectory_{i}.csv"));
            let mut w = create(&p)?;
            finish(&p, crate::env::write_trajectory_csv(&r.trajectory, &mut w).and_then(|_| w.flush()))?;
            let p = dir.join(format!("events_{i}.jsonl"));
            let mut w = create(&p)?;
            finish(&p, r.events.iter().try_for_each(|e| e.write_jsonl(&mut w)).and_then(|_| w.flush()))?;
        }
    }
    Ok(())
}

/// One cell of the baseline comparison grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub policy: String,
    pub map_kind: MapKind,
    pub n_robots: usize,
    pub summary: Summary,
}

pub const BENCH_HEADER: &str =
    "policy,map_kind,n_robots,runs,success,steps,eta_t,eta_d,sigma_pct,makespan_m,steps_sd,eta_d_sd,sigma_pct_sd";

/// Every policy on every map kind with the rest of `cfg` unchanged.
pub fn bench_grid(cfg: &ExperimentConfig, policies: &[PolicySpec], kinds: &[MapKind]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &kind in kinds {
        let mut c = cfg.clone();
        c.world.kind = kind;
        for p in policies {
            let exp = run_experiment(&c, p)?;
            rows.push(BenchRow { policy: p.label(), map_kind: kind, n_robots: c.run.n_robots, summary: exp.summary });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{BENCH_HEADER}")?;
    for r in rows {
        let s = &r.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.map_kind,
            r.n_robots,
            s.runs,
            s.success.mean,
            s.steps.mean,
            s.eta_t.mean,
            s.eta_d.mean,
            s.sigma_pct.mean,
            s.makespan_m.mean,
            s.steps.stdev,
            s.eta_d.stdev,
            s.sigma_pct.stdev
        )?;
    }
    Ok(())
}
