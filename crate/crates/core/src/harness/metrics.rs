use std::io::Write;

use serde::{Deserialize, Serialize};

use super::rollout::Rollout;
use crate::env::TrajectoryRow;
use crate::mapgen::MapKind;

pub const METRICS_HEADER: &str = "run_id,seed,n_robots,map_kind,success,steps,eta_t,eta_d,sigma_pct,plan_ms";

/// Per-run exploration metrics.
///
/// * `eta_t`: team-known area (m²) per decision step.
/// * `eta_d`: team-known area (m²) per meter travelled by the whole team.
/// * `sigma_pct`: population standard deviation, over robots, of each robot's
///   map coverage in percent of the true free area.
/// * `steps` is the makespan in decision steps; `makespan_m` is the longest
///   single-robot trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: usize,
    pub seed: u64,
    pub n_robots: usize,
    pub map_kind: MapKind,
    pub success: bool,
    pub steps: u32,
    pub eta_t: f64,
    pub eta_d: f64,
    pub sigma_pct: f64,
    pub plan_ms: f64,
    pub makespan_m: f64,
}

/// Metrics from the last step's rows of a trajectory log.
pub fn metrics_from_rows(final_rows: &[TrajectoryRow]) -> (f64, f64, f64, f64) {
    let steps = final_rows.first().map_or(0, |r| r.step);
    let team = final_rows.first().map_or(0.0, |r| r.team_known_m2);
    let distance: f64 = final_rows.iter().map(|r| r.distance).sum();
    let coverage: Vec<f64> = final_rows.iter().map(|r| r.coverage * 100.0).collect();
    let eta_t = if steps > 0 { team / steps as f64 } else { 0.0 };
    let eta_d = if distance > 0.0 { team / distance } else { 0.0 };
    let makespan = final_rows.iter().map(|r| r.distance).fold(0.0, f64::max);
    (eta_t, eta_d, population_stdev(&coverage), makespan)
}

impl MetricsReport {
    pub fn from_rollout(run_id: usize, r: &Rollout) -> Self {
        let (eta_t, eta_d, sigma_pct, makespan_m) = metrics_from_rows(r.final_rows());
        Self {
            run_id,
            seed: r.seed,
            n_robots: r.config.n_robots,
            map_kind: r.config.map.kind,
            success: r.success,
            steps: r.steps,
            eta_t,
            eta_d,
            sigma_pct,
            plan_ms: r.plan_ms,
            makespan_m,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.n_robots,
            self.map_kind,
            self.success,
            self.steps,
            self.eta_t,
            self.eta_d,
            self.sigma_pct,
            self.plan_ms
        )
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with divisor `n`.
pub fn population_stdev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stdev: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), stdev: population_stdev(xs) }
    }
}

/// Mean and population standard deviation of each metric over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub success: Aggregate,
    pub steps: Aggregate,
    pub eta_t: Aggregate,
    pub eta_d: Aggregate,
    pub sigma_pct: Aggregate,
    pub plan_ms: Aggregate,
    pub makespan_m: Aggregate,
}

impl Summary {
    pub fn of(reports: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| Aggregate::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: reports.len(),
            success: col(|r| if r.success { 1.0 } else { 0.0 }),
            steps: col(|r| r.steps as f64),
            eta_t: col(|r| r.eta_t),
            eta_d: col(|r| r.eta_d),
            sigma_pct: col(|r| r.sigma_pct),
            plan_ms: col(|r| r.plan_ms),
            makespan_m: col(|r| r.makespan_m),
        }
    }

    fn rows(&self) -> [(&'static str, Aggregate); 7] {
        [
            ("success", self.success),
            ("steps", self.steps),
            ("eta_t", self.eta_t),
            ("eta_d", self.eta_d),
            ("sigma_pct", self.sigma_pct),
            ("plan_ms", self.plan_ms),
            ("makespan_m", self.makespan_m),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "metric,mean,stdev,runs")?;
        for (name, a) in self.rows() {
            writeln!(out, "{name},{},{},{}", a.mean, a.stdev, self.runs)?;
        }
        Ok(())
    }
}

pub fn write_metrics_csv<W: Write>(reports: &[MetricsReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}
