use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::comms::CommEvent;
use crate::env::{Episode, EpisodeConfig, Observation, RewardBreakdown, TrajectoryRow};
use crate::error::{Error, Result};
use crate::policy::{PolicyInput, PolicySpec, RobotView};

/// One robot's decision at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Step at which the decision was taken.
    pub step: u32,
    pub robot: usize,
    pub digest: u64,
    pub action: usize,
    /// Weighted reward components received for the decision.
    pub reward: RewardBreakdown,
    /// Episode finished with this step.
    pub done: bool,
    pub input: Option<PolicyInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub seed: u64,
    pub config: EpisodeConfig,
    pub records: Vec<StepRecord>,
    pub success: bool,
    pub steps: u32,
    pub trajectory: Vec<TrajectoryRow>,
    pub events: Vec<CommEvent>,
    /// Mean wall time per decision step in milliseconds, or 0 when untimed.
    pub plan_ms: f64,
}

impl Rollout {
    /// Sum of total rewards over all robots and steps.
    pub fn reward_sum(&self) -> f64 {
        self.records.iter().map(|r| r.reward.total).sum()
    }

    /// Meters travelled by the team.
    pub fn total_distance(&self) -> f64 {
        self.final_rows().iter().map(|r| r.distance).sum()
    }

    pub fn final_rows(&self) -> &[TrajectoryRow] {
        let n = self.config.n_robots;
        &self.trajectory[self.trajectory.len() - n..]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RolloutOptions {
    /// Keep each decision's policy input (needed for training).
    pub keep_inputs: bool,
    /// Measure wall-clock planning time.
    pub timing: bool,
}

/// Stable hash of what a policy sees.
pub fn observation_digest(o: &Observation) -> u64 {
    let mut h = DefaultHasher::new();
    for f in o.features() {
        for x in f {
            x.to_bits().hash(&mut h);
        }
    }
    o.edges.hash(&mut h);
    o.current.hash(&mut h);
    o.candidates.hash(&mut h);
    h.finish()
}

/// Random stream of robot `robot` in the episode with `seed`.
pub fn robot_rng(seed: u64, robot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(robot as u64 + 1);
    rng
}

/// Runs one episode to completion. Errors carry the episode seed.
pub fn run_episode(config: &EpisodeConfig, policy: &PolicySpec, opts: RolloutOptions) -> Result<Rollout> {
    let seed = config.seed;
    run_inner(config, policy, opts).map_err(|e| match e {
        Error::Episode { .. } => e,
        other => Error::Episode { seed, source: Box::new(other) },
    })
}

fn run_inner(config: &EpisodeConfig, policy: &PolicySpec, opts: RolloutOptions) -> Result<Rollout> {
    let n = config.n_robots;
    let mut ep = Episode::new(config.clone())?;
    let mut controllers: Vec<_> = (0..n).map(|_| policy.controller()).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| robot_rng(config.seed, i)).collect();
    let mut records = Vec::new();
    let mut elapsed = 0.0;
    let mut decisions = 0u32;
    while !ep.is_done() {
        let start = opts.timing.then(Instant::now);
        let step = ep.step_count();
        let mut actions = vec![0; n];
        let mut pending = Vec::new();
        for i in 0..n {
            if !ep.is_active(i) {
                continue;
            }
            let obs = ep.observation(i);
            let view = RobotView { obs, robot: &ep.robots()[i], step };
            actions[i] = controllers[i].act(&view, &mut rngs[i])?;
            pending.push(StepRecord {
                step,
                robot: i,
                digest: observation_digest(obs),
                action: actions[i],
                reward: RewardBreakdown::default(),
                done: false,
                input: opts.keep_inputs.then(|| PolicyInput::from(obs)),
            });
        }
        let outcome = ep.step(&actions)?;
        if let Some(t) = start {
            elapsed += t.elapsed().as_secs_f64() * 1e3;
            decisions += 1;
        }
        for mut r in pending {
            r.reward = outcome.rewards[r.robot];
            r.done = outcome.done;
            records.push(r);
        }
    }
    Ok(Rollout {
        seed: config.seed,
        config: config.clone(),
        records,
        success: ep.success(),
        steps: ep.step_count(),
        trajectory: ep.trajectory().to_vec(),
        events: ep.events().to_vec(),
        plan_ms: if decisions > 0 { elapsed / decisions as f64 } else { 0.0 },
    })
}

/// Runs `episodes` independent episodes with seeds `seed, seed + 1, ...` in
/// parallel and returns them in seed order.
pub fn collect_rollouts<F>(config_for: F, policy: &PolicySpec, episodes: usize, seed: u64, opts: RolloutOptions) -> Result<Vec<Rollout>>
where
    F: Fn(u64) -> EpisodeConfig + Sync,
{
    (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let mut config = config_for(s);
            config.seed = s;
            run_episode(&config, policy, opts)
        })
        .collect()
}
