//! Attention policy network, action selection, and scripted baselines.

mod baseline;
mod net;
pub mod tape;
mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{rendezvous_cell, Baseline, BaselineKind};
pub use net::{PolicyConfig, PolicyInput, PolicyNet, PolicyOutput, POINTER_CLIP};
pub use train::{
    batch_gradient, gradcheck, random_sample, sample_gradient, sample_loss_value, Adam, GradcheckReport, LossCoefs,
    LossStats, Sample, GRADCHECK_FLOOR, GRADCHECK_STEP,
};

use crate::env::{Observation, RobotState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Sample,
    Greedy,
}

/// Picks a slot from `output.probs`. Greedy takes the first maximum;
/// sampling draws one uniform number from `rng`.
pub fn select_action(output: &PolicyOutput, mode: SelectMode, rng: &mut ChaCha8Rng) -> usize {
    match mode {
        SelectMode::Greedy => {
            let mut best = 0;
            for (i, &p) in output.probs.iter().enumerate() {
                if p > output.probs[best] {
                    best = i;
                }
            }
            best
        }
        SelectMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in output.probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        }
    }
}

/// Everything a controller may look at when choosing an action.
pub struct RobotView<'a> {
    pub obs: &'a Observation,
    pub robot: &'a RobotState,
    pub step: u32,
}

/// Per-robot, per-episode decision maker.
pub trait Controller: Send {
    /// Returns a candidate slot of `view.obs`.
    fn act(&mut self, view: &RobotView<'_>, rng: &mut ChaCha8Rng) -> Result<usize>;
}

/// Which controller to run; cheap to clone and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Learned { net: Arc<PolicyNet>, mode: SelectMode },
    Baseline(BaselineKind),
    /// Uniform over unmasked candidates.
    Random,
}

impl PolicySpec {
    pub fn controller(&self) -> Box<dyn Controller> {
        match self {
            PolicySpec::Learned { net, mode } => Box::new(Learned { net: net.clone(), mode: *mode }),
            PolicySpec::Baseline(kind) => Box::new(Baseline::new(*kind)),
            PolicySpec::Random => Box::new(Uniform),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicySpec::Learned { mode, .. } => format!("learned-{}", if *mode == SelectMode::Greedy { "greedy" } else { "sample" }),
            PolicySpec::Baseline(k) => k.to_string(),
            PolicySpec::Random => "random".into(),
        }
    }
}

struct Learned {
    net: Arc<PolicyNet>,
    mode: SelectMode,
}

impl Controller for Learned {
    fn act(&mut self, view: &RobotView<'_>, rng: &mut ChaCha8Rng) -> Result<usize> {
        let out = self.net.forward(&PolicyInput::from(view.obs))?;
        Ok(select_action(&out, self.mode, rng))
    }
}

struct Uniform;

impl Controller for Uniform {
    fn act(&mut self, view: &RobotView<'_>, rng: &mut ChaCha8Rng) -> Result<usize> {
        let live: Vec<usize> = (0..view.obs.candidates.len()).filter(|&s| view.obs.candidates[s].is_some()).collect();
        Ok(live[rng.gen_range(0..live.len())])
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::GreedyUtility => write!(f, "greedy"),
            BaselineKind::NearestFrontier => write!(f, "nearest"),
            BaselineKind::Pursuit { threshold } => write!(f, "pursuit:{threshold}"),
            BaselineKind::Preplanned { period } => write!(f, "preplanned:{period}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    /// `greedy`, `nearest`, `pursuit[:threshold]`, `preplanned[:period]` or `random`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| Error::Config(format!("bad policy argument in {s:?}"))))
        };
        let kind = match name {
            "greedy" => BaselineKind::GreedyUtility,
            "nearest" => BaselineKind::NearestFrontier,
            "pursuit" => BaselineKind::Pursuit { threshold: num(1.0)? },
            "preplanned" => BaselineKind::Preplanned { period: num(20.0)? as u32 },
            "random" => return Ok(PolicySpec::Random),
            _ => return Err(Error::Config(format!("unknown policy {s:?}"))),
        };
        if let BaselineKind::Preplanned { period: 0 } = kind {
            return Err(Error::Config("preplanned period must be positive".into()));
        }
        Ok(PolicySpec::Baseline(kind))
    }
}

#[cfg(test)]
mod tests;
