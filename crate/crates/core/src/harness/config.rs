use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::CommsParams;
use crate::env::{EpisodeConfig, RewardWeights, SurplusParams};
use crate::error::{Error, Result};
use crate::grid::{SensorSpec, DEFAULT_RESOLUTION};
use crate::mapgen::{MapKind, MapSpec};
use crate::policy::{LossCoefs, PolicyConfig};
use crate::roadmap::GraphParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub kind: MapKind,
    /// Cells; `None` takes the kind's default extent.
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub resolution: f64,
    pub sensor: SensorSpec,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self { kind: MapKind::Corridor, width: None, height: None, resolution: DEFAULT_RESOLUTION, sensor: SensorSpec::default() }
    }
}

impl WorldSection {
    pub fn map_spec(&self, seed: u64) -> MapSpec {
        let (w, h) = self.kind.default_extent();
        let mut spec = MapSpec::from_extent(self.kind, seed, w, h, self.resolution);
        // Overrides are in cells.
        if let Some(w) = self.width {
            spec.width = w;
        }
        if let Some(h) = self.height {
            spec.height = h;
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub weights: RewardWeights,
    pub surplus: SurplusParams,
    /// Turns the surplus field and its reward term off.
    pub surplus_enabled: bool,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { weights: RewardWeights::default(), surplus: SurplusParams::default(), surplus_enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_robots: usize,
    /// Decision steps; `None` uses 384 for Complex maps and 196 otherwise.
    pub budget: Option<u32>,
    pub repetitions: usize,
    pub seed: u64,
    /// `greedy`, `nearest`, `pursuit[:t]`, `preplanned[:T]`, `random` or `learned`.
    pub policy: String,
    /// Weights file for `learned`.
    pub weights: Option<String>,
    pub stagger: u32,
    pub k_actions: usize,
    /// Measure wall-clock planning time. Off by default so metrics files are
    /// reproducible byte for byte.
    pub timing: bool,
    /// Write per-run trajectory CSVs and comm-event logs.
    pub trajectories: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_robots: 4,
            budget: None,
            repetitions: 3,
            seed: 0,
            policy: "greedy".into(),
            weights: None,
            stagger: 0,
            k_actions: 8,
            timing: false,
            trajectories: true,
        }
    }
}

/// A training stage: map mix and robot-count range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumStage {
    pub name: String,
    /// Map kinds with relative weights.
    pub maps: Vec<(MapKind, f64)>,
    /// Inclusive robot-count range.
    pub robots: (usize, usize),
    pub episodes: usize,
    /// Map size in cells; `None` takes each kind's default extent.
    pub size: Option<(usize, usize)>,
    /// Step budget; `None` takes the per-kind default.
    pub budget: Option<u32>,
}

impl CurriculumStage {
    pub fn easy(episodes: usize) -> Self {
        Self {
            name: "easy".into(),
            maps: vec![(MapKind::Simple, 1.0), (MapKind::Corridor, 1.0)],
            robots: (3, 5),
            episodes,
            size: None,
            budget: None,
        }
    }

    pub fn difficult(episodes: usize) -> Self {
        Self {
            name: "difficult".into(),
            maps: vec![(MapKind::Corridor, 1.0), (MapKind::Hybrid, 1.0), (MapKind::Complex, 1.0)],
            robots: (4, 6),
            episodes,
            size: None,
            budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() || self.maps.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::Config(format!("stage {}: map weights must be positive", self.name)));
        }
        if self.robots.0 == 0 || self.robots.0 > self.robots.1 {
            return Err(Error::Config(format!("stage {}: bad robot range {:?}", self.name, self.robots)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub stages: Vec<CurriculumStage>,
    pub policy: PolicyConfig,
    /// Episodes per gradient step.
    pub batch_episodes: usize,
    pub lr: f64,
    pub loss: LossCoefs,
    /// Rewards are multiplied by this before computing returns.
    pub reward_scale: f64,
    /// Training episodes per curve row.
    pub window: usize,
    /// Greedy evaluation episodes per variant in ablation tables.
    pub eval_episodes: usize,
    /// Also train without the surplus field on the same seeds.
    pub ablation: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            stages: vec![CurriculumStage::easy(200), CurriculumStage::difficult(200)],
            policy: PolicyConfig { d: 32, layers: 2, ff: 64, k: 8 },
            batch_episodes: 8,
            lr: 3e-3,
            loss: LossCoefs::default(),
            reward_scale: 0.02,
            window: 40,
            eval_episodes: 20,
            ablation: false,
        }
    }
}

impl TrainSection {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        for s in &self.stages {
            s.validate()?;
        }
        if self.batch_episodes == 0 || self.window == 0 {
            return Err(Error::Config("batch_episodes and window must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::Config("lr must be >= 0 and reward_scale > 0".into()));
        }
        Ok(())
    }
}

/// The experiment config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldSection,
    pub comms: CommsParams,
    pub graph: GraphParams,
    pub reward: RewardSection,
    pub run: RunSection,
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        self.train.validate()?;
        self.episode(self.run.seed, self.run.n_robots).validate()
    }

    pub fn budget(&self) -> u32 {
        self.run.budget.unwrap_or_else(|| EpisodeConfig::default_budget(self.world.kind))
    }

    /// Episode on a map generated from `seed`.
    pub fn episode(&self, seed: u64, n_robots: usize) -> EpisodeConfig {
        let mut e = EpisodeConfig::new(self.world.map_spec(seed), n_robots, self.budget());
        e.sensor = self.world.sensor;
        e.comms = self.comms;
        e.graph = self.graph;
        e.reward = self.reward.weights;
        e.surplus = self.reward.surplus;
        e.surplus_enabled = self.reward.surplus_enabled;
        e.stagger = self.run.stagger;
        e.k_actions = self.run.k_actions;
        e
    }
}
