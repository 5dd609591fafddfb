use std::io::Write;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CurriculumStage, ExperimentConfig};
use super::metrics::mean;
use super::rollout::{run_episode, Rollout, RolloutOptions};
use crate::env::{EpisodeConfig, NODE_FEATURES};
use crate::error::{Error, Result};
use crate::mapgen::MapSpec;
use crate::policy::{
    batch_gradient, select_action, Adam, LossCoefs, LossStats, PolicyConfig, PolicyInput, PolicyNet, PolicySpec, Sample,
    SelectMode,
};

pub const CURVE_HEADER: &str = "window,success_rate,mean_steps,mean_distance";

/// Outcome of one training or evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
    /// Meters travelled by the whole team.
    pub distance: f64,
}

impl EpisodeStats {
    pub fn of(r: &Rollout) -> Self {
        Self { seed: r.seed, success: r.success, steps: r.steps, distance: r.total_distance() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub window: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_distance: f64,
}

impl CurveRow {
    pub fn of(window: usize, stats: &[EpisodeStats]) -> Self {
        let ok: Vec<f64> = stats.iter().map(|s| if s.success { 1.0 } else { 0.0 }).collect();
        Self {
            window,
            success_rate: mean(&ok),
            mean_steps: mean(&stats.iter().map(|s| s.steps as f64).collect::<Vec<_>>()),
            mean_distance: mean(&stats.iter().map(|s| s.distance).collect::<Vec<_>>()),
        }
    }
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.window, r.success_rate, r.mean_steps, r.mean_distance)?;
    }
    Ok(())
}

/// Episode drawn from `stage` for `seed`: map kind by weight, robot count
/// uniform over the stage's range.
pub fn stage_episode(cfg: &ExperimentConfig, stage: &CurriculumStage, seed: u64) -> EpisodeConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4355_5252);
    let weights = WeightedIndex::new(stage.maps.iter().map(|m| m.1)).expect("validated stage weights");
    let kind = stage.maps[weights.sample(&mut rng)].0;
    let n = rng.gen_range(stage.robots.0..=stage.robots.1);
    let resolution = cfg.world.resolution;
    let map = match stage.size {
        Some((w, h)) => MapSpec { kind, seed, width: w, height: h, resolution },
        None => {
            let (w, h) = kind.default_extent();
            MapSpec::from_extent(kind, seed, w, h, resolution)
        }
    };
    let mut e = cfg.episode(seed, n);
    e.map = map;
    e.seed = seed;
    e.budget = stage.budget.unwrap_or_else(|| EpisodeConfig::default_budget(kind));
    e
}

/// Discounted per-robot returns of a rollout, aligned with its records.
pub fn discounted_returns(r: &Rollout, gamma: f64, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; r.records.len()];
    let mut acc = vec![0.0; r.config.n_robots];
    for (i, rec) in r.records.iter().enumerate().rev() {
        acc[rec.robot] = rec.reward.total * scale + gamma * acc[rec.robot];
        out[i] = acc[rec.robot];
    }
    out
}

/// Actor-critic samples from rollouts: advantages are returns minus the
/// critic's value, normalized over the batch.
pub fn a2c_samples(net: &PolicyNet, rollouts: &[Rollout], gamma: f64, scale: f64) -> Result<Vec<Sample>> {
    let mut pending = Vec::new();
    for r in rollouts {
        let returns = discounted_returns(r, gamma, scale);
        for (rec, g) in r.records.iter().zip(returns) {
            let input = rec.input.clone().ok_or_else(|| Error::Contract("rollout was collected without inputs".into()))?;
            pending.push((input, rec.action, g));
        }
    }
    let values: Vec<f64> = pending
        .par_iter()
        .map(|(input, _, _)| net.forward(input).map(|o| o.value.unwrap_or(0.0)))
        .collect::<Result<_>>()?;
    let adv: Vec<f64> = pending.iter().zip(&values).map(|((_, _, g), v)| g - v).collect();
    let m = mean(&adv);
    let sd = super::metrics::population_stdev(&adv);
    Ok(pending
        .into_iter()
        .zip(adv)
        .map(|((input, action, target), a)| Sample {
            input,
            action,
            advantage: if sd > 1e-8 { (a - m) / sd } else { a - m },
            target,
        })
        .collect())
}

pub struct TrainOutcome {
    pub net: PolicyNet,
    pub curve: Vec<CurveRow>,
    pub episodes: Vec<EpisodeStats>,
    pub losses: Vec<LossStats>,
}

/// Trains on the configured stages in order, for at most `budget` episodes
/// in total. Episode `e` uses seed `seed + e`.
pub fn train(cfg: &ExperimentConfig, net: PolicyNet, budget: usize, seed: u64) -> Result<TrainOutcome> {
    let t = &cfg.train;
    if net.config() != &t.policy {
        return Err(Error::Config("network shape does not match the train.policy section".into()));
    }
    let schedule: Vec<&CurriculumStage> =
        t.stages.iter().flat_map(|s| std::iter::repeat(s).take(s.episodes)).take(budget).collect();
    let mut net = net;
    let mut adam = Adam::new(t.lr);
    let mut episodes = Vec::with_capacity(schedule.len());
    let mut losses = Vec::new();
    for (b, chunk) in schedule.chunks(t.batch_episodes).enumerate() {
        let policy = PolicySpec::Learned { net: Arc::new(net.clone()), mode: SelectMode::Sample };
        let base = (b * t.batch_episodes) as u64;
        let opts = RolloutOptions { keep_inputs: true, timing: false };
        let rollouts: Vec<Rollout> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, stage)| {
                let s = seed.wrapping_add(base + i as u64);
                run_episode(&stage_episode(cfg, stage, s), &policy, opts)
            })
            .collect::<Result<_>>()?;
        episodes.extend(rollouts.iter().map(EpisodeStats::of));
        let samples = a2c_samples(&net, &rollouts, cfg.reward.weights.gamma, t.reward_scale)?;
        if samples.is_empty() {
            continue;
        }
        let (stats, grad) = batch_gradient(&net, &samples, &t.loss)?;
        adam.step(&mut net, &grad)?;
        losses.push(stats);
    }
    let curve = episodes.chunks(t.window).enumerate().map(|(w, s)| CurveRow::of(w, s)).collect();
    Ok(TrainOutcome { net, curve, episodes, losses })
}

/// Runs `episodes` episodes of `stage` with seeds `seed, seed + 1, ...`.
pub fn evaluate(cfg: &ExperimentConfig, stage: &CurriculumStage, policy: &PolicySpec, episodes: usize, seed: u64) -> Result<Vec<EpisodeStats>> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            run_episode(&stage_episode(cfg, stage, s), policy, RolloutOptions::default()).map(|r| EpisodeStats::of(&r))
        })
        .collect()
}

/// One row of the with/without map-surplus comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub success_pct: f64,
    pub steps: f64,
    pub distance_m: f64,
}

pub struct Ablation {
    pub rows: Vec<AblationRow>,
    pub curves: Vec<Vec<CurveRow>>,
    pub nets: Vec<PolicyNet>,
}

/// Offset between training and evaluation seeds.
pub const EVAL_SEED_OFFSET: u64 = 1_000_000;

/// Trains from the same initial network on the same episode seeds with the
/// surplus field enabled and disabled, then evaluates both greedily on the
/// last stage.
pub fn ablation(cfg: &ExperimentConfig, budget: usize, seed: u64) -> Result<Ablation> {
    let stage = cfg.train.stages.last().ok_or_else(|| Error::Config("no training stages".into()))?;
    let init = PolicyNet::new(cfg.train.policy, seed)?;
    let mut out = Ablation { rows: Vec::new(), curves: Vec::new(), nets: Vec::new() };
    for (name, enabled) in [("with_surplus", true), ("without_surplus", false)] {
        let mut c = cfg.clone();
        c.reward.surplus_enabled = enabled;
        let trained = train(&c, init.clone(), budget, seed)?;
        let policy = PolicySpec::Learned { net: Arc::new(trained.net.clone()), mode: SelectMode::Greedy };
        let stats = evaluate(&c, stage, &policy, cfg.train.eval_episodes, seed.wrapping_add(EVAL_SEED_OFFSET))?;
        let row = CurveRow::of(0, &stats);
        out.rows.push(AblationRow {
            variant: name.into(),
            success_pct: row.success_rate * 100.0,
            steps: row.mean_steps,
            distance_m: row.mean_distance,
        });
        out.curves.push(trained.curve);
        out.nets.push(trained.net);
    }
    Ok(out)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "variant,S(%),Steps,D(m)")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.variant, r.success_pct, r.steps, r.distance_m)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditReport {
    /// Updates taken until the rewarded arm reached the target probability.
    pub updates: usize,
    pub reached: bool,
    /// Probability of the rewarded arm after each update.
    pub history: Vec<f64>,
}

/// Two-armed bandit on a three-vertex graph: from the current vertex the
/// robot may move to either neighbor and only one of them pays 1. Each
/// update draws `batch` actions from the current policy.
pub fn bandit(seed: u64, max_updates: usize, target: f64, lr: f64) -> Result<BanditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNet::new(PolicyConfig { d: 8, layers: 1, ff: 8, k: 2 }, seed)?;
    let mut feat = |x: f64| -> [f64; NODE_FEATURES] { [x, rng.gen_range(-0.5..0.5), rng.gen_range(0.0..1.0), 0.0, 0.0, 0.0] };
    let features = vec![[0.0, 0.0, 0.0, 1.0, -1.0, 0.0], feat(0.5), feat(-0.5)];
    let input = PolicyInput { features, edges: vec![(0, 1), (0, 2)], current: 0, candidates: vec![Some(1), Some(2)] };
    let rewarded = rng.gen_range(0..2);
    let coefs = LossCoefs { value: 0.5, entropy: 0.0 };
    let mut adam = Adam::new(lr);
    let batch = 16;
    let mut history = Vec::new();
    for u in 0..max_updates {
        let out = net.forward(&input)?;
        let v = out.value.unwrap_or(0.0);
        let samples: Vec<Sample> = (0..batch)
            .map(|_| {
                let a = select_action(&out, SelectMode::Sample, &mut rng);
                let r = if a == rewarded { 1.0 } else { 0.0 };
                Sample { input: input.clone(), action: a, advantage: r - v, target: r }
            })
            .collect();
        let (_, grad) = batch_gradient(&net, &samples, &coefs)?;
        adam.step(&mut net, &grad)?;
        let p = net.forward(&input)?.probs[rewarded];
        history.push(p);
        if p >= target {
            return Ok(BanditReport { updates: u + 1, reached: true, history });
        }
    }
    Ok(BanditReport { updates: max_updates, reached: false, history })
}
