//! The multi-robot exploration episode: per-robot beliefs and graphs,
//! observations, joint stepping and rewards.

mod observation;
mod robot;
mod surplus;

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use observation::{action_candidates, AugmentedNode, Observation, TeammateView, NODE_FEATURES, UTILITY_CAP};
pub use robot::{RobotState, TeammateInfo};
pub use surplus::{map_surplus_field, SurplusField, SurplusParams, SurplusPath, SurplusTarget};

use crate::comms::{connectivity_components, sync_component, CommEvent, CommsParams, SyncContext};
use crate::error::{Error, Result};
use crate::geometry::{CellCoord, Point};
use crate::grid::{coverage_fraction, extract_frontiers, lidar_scan, Belief, OccupancyGrid, SensorSpec, COMPLETION_THRESHOLD};
use crate::mapgen::{generate_map, MapKind, MapSpec};
use crate::roadmap::{
    extend_global_graph, frontier_centers, planning_graph, prune_global_graph, refresh_utilities, sparsify,
    build_local_graph, FrontierIndex, GraphParams,
};
use observation::{build_observation, ObservationInputs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Weights of observable frontiers, distance, frontier gain and surplus.
    pub alpha: [f64; 4],
    pub completion: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha: [1.0, 0.1, 1.0, 0.5], completion: 20.0, gamma: 0.99 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.alpha.iter().chain([&self.completion]).any(|a| !a.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub n_robots: usize,
    /// Decision-step budget.
    pub budget: u32,
    pub map: MapSpec,
    pub sensor: SensorSpec,
    pub comms: CommsParams,
    pub graph: GraphParams,
    pub reward: RewardWeights,
    pub surplus: SurplusParams,
    /// Disables both the surplus field in observations and the surplus reward.
    pub surplus_enabled: bool,
    /// Seed for start placement.
    pub seed: u64,
    /// Robot `i` starts moving at step `i * stagger`.
    pub stagger: u32,
    /// Action slots offered to the policy.
    pub k_actions: usize,
}

impl EpisodeConfig {
    pub fn new(map: MapSpec, n_robots: usize, budget: u32) -> Self {
        Self {
            n_robots,
            budget,
            seed: map.seed,
            map,
            sensor: SensorSpec::default(),
            comms: CommsParams::default(),
            graph: GraphParams::default(),
            reward: RewardWeights::default(),
            surplus: SurplusParams::default(),
            surplus_enabled: true,
            stagger: 0,
            k_actions: 8,
        }
    }

    /// Step budget used for a map kind in training and evaluation.
    pub fn default_budget(kind: MapKind) -> u32 {
        match kind {
            MapKind::Complex => 384,
            _ => 196,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots == 0 {
            return Err(Error::Config("need at least one robot".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.k_actions == 0 {
            return Err(Error::Config("k_actions must be positive".into()));
        }
        self.sensor.validate()?;
        self.comms.validate()?;
        self.graph.validate()?;
        self.reward.validate()?;
        self.surplus.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub observable: f64,
    pub distance: f64,
    pub frontier: f64,
    pub surplus: f64,
    pub completion: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn weighted(self, w: &RewardWeights) -> Self {
        let total = w.alpha[0] * self.observable
            + w.alpha[1] * self.distance
            + w.alpha[2] * self.frontier
            + w.alpha[3] * self.surplus
            + self.completion;
        Self { total, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// One entry per robot; inactive robots get zeros.
    pub rewards: Vec<RewardBreakdown>,
    pub done: bool,
    pub success: bool,
    pub events: Vec<CommEvent>,
}

/// One row of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: u32,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub reward: RewardBreakdown,
    pub coverage: f64,
    /// Cumulative meters travelled by this robot.
    pub distance: f64,
    /// Known area of the team-union map, m².
    pub team_known_m2: f64,
}

pub const TRAJECTORY_HEADER: &str = "step,robot,x,y,r_o,r_d,r_f,r_s,r_c,reward,coverage,distance,team_known_m2";

impl TrajectoryRow {
    pub fn to_csv(&self) -> String {
        let r = &self.reward;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.robot,
            self.x,
            self.y,
            r.observable,
            r.distance,
            r.frontier,
            r.surplus,
            r.completion,
            r.total,
            self.coverage,
            self.distance,
            self.team_known_m2
        )
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}

/// True iff every robot's belief covers at least 99% of the true free space.
pub fn is_done(robots: &[RobotState], truth: &OccupancyGrid) -> Result<bool> {
    for r in robots {
        if coverage_fraction(r.belief.grid(), truth)? < COMPLETION_THRESHOLD {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Picks `n` distinct free start cells: a seeded random base cell, then the
/// nearest free cells (breadth-first) at least two cells from each other.
pub fn start_cells(truth: &OccupancyGrid, n: usize, seed: u64) -> Result<Vec<CellCoord>> {
    let free: Vec<CellCoord> = truth.free_cells().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5747_4152_5453);
    let &base = free.choose(&mut rng).ok_or(Error::NoFreeSpace)?;
    let mut seen = vec![false; truth.len()];
    let mut queue = std::collections::VecDeque::from([base]);
    seen[truth.index(base).expect("in bounds")] = true;
    let mut out: Vec<CellCoord> = Vec::with_capacity(n);
    while let Some(c) = queue.pop_front() {
        if out.iter().all(|o| (o.x - c.x).abs().max((o.y - c.y).abs()) >= 2) {
            out.push(c);
            if out.len() == n {
                return Ok(out);
            }
        }
        for nb in c.neighbors4() {
            if truth.is_free(nb) {
                let i = truth.index(nb).expect("free implies in bounds");
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    Err(Error::Config(format!("map has room for only {} of {n} robots", out.len())))
}

pub struct Episode {
    config: EpisodeConfig,
    truth: OccupancyGrid,
    robots: Vec<RobotState>,
    privileged: Belief,
    observations: Vec<Observation>,
    step: u32,
    done: bool,
    success: bool,
    events: Vec<CommEvent>,
    rows: Vec<TrajectoryRow>,
    notes: Vec<String>,
}

impl Episode {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let truth = generate_map(&config.map)?;
        Self::with_truth(config, truth)
    }

    /// Starts an episode on a given ground-truth map; `config.map` is only
    /// used as a label.
    pub fn with_truth(config: EpisodeConfig, truth: OccupancyGrid) -> Result<Self> {
        config.validate()?;
        let starts = start_cells(&truth, config.n_robots, config.seed)?;
        Self::with_starts(config, truth, &starts)
    }

    pub fn with_starts(config: EpisodeConfig, truth: OccupancyGrid, starts: &[CellCoord]) -> Result<Self> {
        config.validate()?;
        if starts.len() != config.n_robots {
            return Err(Error::Config(format!("{} start cells for {} robots", starts.len(), config.n_robots)));
        }
        if let Some(&bad) = starts.iter().find(|&&c| !truth.is_free(c)) {
            return Err(Error::InvalidPose(bad));
        }
        let n = config.n_robots;
        let mut robots: Vec<RobotState> =
            starts.iter().enumerate().map(|(i, &c)| RobotState::new(i, c, &truth, n)).collect();
        // Start positions are common knowledge.
        for r in robots.iter_mut() {
            for (k, &c) in starts.iter().enumerate() {
                if k != r.id {
                    r.teammates[k] = Some(TeammateInfo { cell: c, step: 0, known_area: 0 });
                }
            }
        }
        let privileged = Belief::unknown_like(&truth);
        let mut ep = Self {
            config,
            truth,
            robots,
            privileged,
            observations: Vec::new(),
            step: 0,
            done: false,
            success: false,
            events: Vec::new(),
            rows: Vec::new(),
            notes: Vec::new(),
        };
        let zero = vec![RewardBreakdown::default(); n];
        ep.set_active();
        let _ = ep.sense_all(&(0..n).collect::<Vec<_>>())?;
        ep.communicate()?;
        ep.refresh()?;
        ep.finish_step(zero)?;
        Ok(ep)
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn truth(&self) -> &OccupancyGrid {
        &self.truth
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    /// Union of all robots' scans. Feeds the frontier reward only.
    pub fn privileged(&self) -> &Belief {
        &self.privileged
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn observation(&self, robot: usize) -> &Observation {
        &self.observations[robot]
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn success(&self) -> bool {
        self.success
    }

    pub fn events(&self) -> &[CommEvent] {
        &self.events
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    /// Fallback actions, unreachable teammates and similar non-fatal events.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn is_active(&self, robot: usize) -> bool {
        self.robots[robot].active
    }

    pub fn coverage(&self, robot: usize) -> Result<f64> {
        coverage_fraction(self.robots[robot].belief.grid(), &self.truth)
    }

    fn set_active(&mut self) {
        let stagger = self.config.stagger as u64;
        for r in self.robots.iter_mut() {
            r.active = r.id as u64 * stagger <= self.step as u64;
        }
    }

    /// Scans from each listed robot in id order; returns the signed change in
    /// privileged frontier count credited to each of them.
    fn sense_all(&mut self, who: &[usize]) -> Result<Vec<f64>> {
        let mut gains = vec![0.0; self.robots.len()];
        let mut frontiers = extract_frontiers(self.privileged.grid()).len() as f64;
        for &i in who {
            let pose = self.truth.cell_center(self.robots[i].cell);
            let scan = lidar_scan(&self.truth, pose, &self.config.sensor)?;
            self.robots[i].belief.integrate_scan(&scan, self.step)?;
            self.privileged.integrate_scan(&scan, self.step)?;
            let after = extract_frontiers(self.privileged.grid()).len() as f64;
            gains[i] = after - frontiers;
            frontiers = after;
        }
        Ok(gains)
    }

    fn communicate(&mut self) -> Result<()> {
        let positions: Vec<Point> = self.robots.iter().map(|r| self.truth.cell_center(r.cell)).collect();
        let groups = connectivity_components(&positions, &self.truth, &self.config.comms);
        let ctx = SyncContext { truth: &self.truth, comms: &self.config.comms, graph: &self.config.graph, step: self.step };
        for g in groups {
            if let Some(ev) = sync_component(&mut self.robots, &g, &ctx)? {
                self.events.push(ev);
            }
        }
        Ok(())
    }

    /// Rebuilds every robot's graphs and observation from its belief.
    fn refresh(&mut self) -> Result<()> {
        let params = self.config.graph;
        let sensor_range = self.config.sensor.range;
        let step = self.step;
        let mut obs = Vec::with_capacity(self.robots.len());
        for i in 0..self.robots.len() {
            let robot = &mut self.robots[i];
            let grid = robot.belief.grid();
            let range_cells = sensor_range / grid.resolution();
            let fi = FrontierIndex::new(grid, &extract_frontiers(grid));
            let local = build_local_graph(grid, robot.cell, &params, sensor_range, &fi);
            let centers: Vec<CellCoord> = frontier_centers(&local, params.r_g).iter().map(|c| c.cell).collect();
            let report = extend_global_graph(&mut robot.global, robot.cell, &centers, grid, &params);
            if !report.unreachable.is_empty() {
                self.notes.push(format!("step {step}: robot {i} cannot reach {} frontier centers", report.unreachable.len()));
            }
            // Vertices that still see frontier cells carry the global layer's
            // memory of where exploration is unfinished, so they are kept.
            refresh_utilities(&mut robot.global, grid, &fi, range_cells);
            let exempt: BTreeSet<CellCoord> = robot.robot_cells().collect();
            let mut keep = exempt.clone();
            keep.extend(robot.global.vertices().filter(|v| v.utility > 0).map(|v| v.cell));
            sparsify(&mut robot.global, grid, params.r_m, &keep);
            if step > 0 && step % params.prune_period == 0 {
                let centers: Vec<_> = frontier_centers(&robot.global, params.r_g).iter().map(|c| c.vertex).collect();
                let anchors: Vec<_> = exempt.iter().filter_map(|&c| robot.global.vertex_at(c)).collect();
                robot.global = prune_global_graph(&robot.global, &anchors, &centers);
            }
            robot.planning = planning_graph(&robot.global, &local, grid, &params);
            let inputs = ObservationInputs {
                graph_params: &params,
                surplus: &self.config.surplus,
                surplus_enabled: self.config.surplus_enabled,
                diagonal: self.truth.diagonal(),
                k: self.config.k_actions,
                step,
            };
            let o = build_observation(robot, &inputs);
            if o.fallback {
                self.notes.push(format!("step {step}: robot {i} has no neighbors and stays"));
            }
            for t in &o.unreachable_teammates {
                self.notes.push(format!("step {step}: robot {i} has no path to teammate {t}"));
            }
            obs.push(o);
        }
        self.observations = obs;
        Ok(())
    }

    fn finish_step(&mut self, mut rewards: Vec<RewardBreakdown>) -> Result<StepOutcome> {
        let complete = is_done(&self.robots, &self.truth)?;
        self.success = complete;
        self.done = complete || self.step >= self.config.budget;
        for r in rewards.iter_mut() {
            if complete && self.step > 0 {
                r.completion = self.config.reward.completion;
            }
            *r = r.weighted(&self.config.reward);
        }
        let team = self.privileged.known_count() as f64 * self.truth.resolution() * self.truth.resolution();
        for (i, robot) in self.robots.iter().enumerate() {
            let p = self.truth.cell_center(robot.cell);
            self.rows.push(TrajectoryRow {
                step: self.step,
                robot: i,
                x: p.x,
                y: p.y,
                reward: rewards[i],
                coverage: coverage_fraction(robot.belief.grid(), &self.truth)?,
                distance: robot.distance,
                team_known_m2: team,
            });
        }
        let first_event = self.events.partition_point(|e| e.step < self.step);
        Ok(StepOutcome { rewards, done: self.done, success: self.success, events: self.events[first_event..].to_vec() })
    }

    /// Advances one decision step. `actions[i]` is a candidate slot of robot
    /// `i`'s current observation; entries of robots not yet launched are
    /// ignored.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("episode is already done".into()));
        }
        if actions.len() != self.robots.len() {
            return Err(Error::Contract(format!("{} actions for {} robots", actions.len(), self.robots.len())));
        }
        let mut rewards = vec![RewardBreakdown::default(); self.robots.len()];
        let mut movers = Vec::new();
        let mut moves = Vec::new();
        for (i, &slot) in actions.iter().enumerate() {
            if !self.robots[i].active {
                continue;
            }
            let o = &self.observations[i];
            let node = o.candidates.get(slot).copied().flatten().ok_or_else(|| {
                Error::Contract(format!("robot {i}: slot {slot} is not a valid candidate"))
            })?;
            let meters = o.distance(o.current, node);
            rewards[i].observable = o.utility[node] as f64;
            rewards[i].distance = -meters;
            rewards[i].surplus = if self.config.surplus_enabled { o.surplus[node] } else { 0.0 };
            moves.push((i, o.cells[node], meters));
            movers.push(i);
        }
        for (i, cell, meters) in moves {
            self.robots[i].travel(cell, meters);
        }
        self.step += 1;
        let gains = self.sense_all(&movers)?;
        for &i in &movers {
            rewards[i].frontier = gains[i];
        }
        self.communicate()?;
        self.set_active();
        self.refresh()?;
        self.finish_step(rewards)
    }

    pub fn write_trajectory<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_trajectory_csv(&self.rows, out)
    }
}

#[cfg(test)]
mod tests;
