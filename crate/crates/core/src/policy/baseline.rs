use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Controller, RobotView};
use crate::env::Observation;
use crate::error::Result;
use crate::geometry::CellCoord;
use crate::grid::OccupancyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineKind {
    /// Highest-utility candidate; toward the nearest frontier vertex when no
    /// candidate sees a frontier.
    GreedyUtility,
    /// Always toward the nearest vertex with nonzero utility.
    NearestFrontier,
    /// GreedyUtility, except that a teammate is chased when the believed
    /// map advantage (m²) per meter of graph distance exceeds `threshold`.
    Pursuit { threshold: f64 },
    /// Explore for `period` steps, then head for a common rendezvous cell for
    /// `period` steps, and repeat.
    Preplanned { period: u32 },
}

pub struct Baseline {
    kind: BaselineKind,
    rendezvous: Option<CellCoord>,
}

impl Baseline {
    pub fn new(kind: BaselineKind) -> Self {
        Self { kind, rendezvous: None }
    }

    /// Rendezvous cell currently targeted, if in a rendezvous phase.
    pub fn rendezvous(&self) -> Option<CellCoord> {
        self.rendezvous
    }
}

fn first_live(o: &Observation) -> usize {
    o.candidates.iter().position(Option::is_some).unwrap_or(0)
}

fn nearest_frontier(o: &Observation) -> Option<usize> {
    let (dist, _) = o.shortest_from(o.current);
    let target = (0..o.len())
        .filter(|&n| n != o.current && o.utility[n] > 0 && dist[n].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
    o.step_toward(target)
}

fn greedy_utility(o: &Observation) -> usize {
    let mut best: Option<(u32, usize)> = None;
    for (slot, c) in o.candidates.iter().enumerate() {
        if let Some(n) = c {
            if best.map_or(true, |(u, _)| o.utility[*n] > u) {
                best = Some((o.utility[*n], slot));
            }
        }
    }
    match best {
        Some((u, slot)) if u > 0 => slot,
        _ => nearest_frontier(o).unwrap_or_else(|| first_live(o)),
    }
}

fn pursuit(o: &Observation, threshold: f64) -> Option<usize> {
    if !threshold.is_finite() {
        return None;
    }
    let (dist, _) = o.shortest_from(o.current);
    let area = o.resolution * o.resolution;
    let mut best: Option<(f64, usize)> = None;
    for t in &o.teammates {
        let d = dist[t.node];
        if t.node == o.current || !d.is_finite() || t.delta_m <= 0.0 {
            continue;
        }
        let ratio = t.delta_m * area / d;
        if ratio > threshold && best.map_or(true, |(r, _)| ratio > r) {
            best = Some((ratio, t.node));
        }
    }
    best.and_then(|(_, node)| o.step_toward(node))
}

/// Free cell of `belief` minimizing the largest 4-connected path length
/// from any of `positions` (ties: lowest row-major index). Cells unreachable
/// from some position count as infinitely far.
pub fn rendezvous_cell(belief: &OccupancyGrid, positions: &[CellCoord]) -> Option<CellCoord> {
    let mut worst = vec![0u32; belief.len()];
    for &p in positions {
        let mut dist = vec![u32::MAX; belief.len()];
        let Some(start) = belief.index(p) else { continue };
        dist[start] = 0;
        let mut queue = VecDeque::from([p]);
        while let Some(c) = queue.pop_front() {
            let d = dist[belief.index(c).expect("queued cells are in bounds")];
            for nb in c.neighbors4() {
                if let Some(i) = belief.index(nb) {
                    if belief.is_free(nb) && dist[i] == u32::MAX {
                        dist[i] = d + 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
        for (w, d) in worst.iter_mut().zip(dist) {
            *w = (*w).max(d);
        }
    }
    (0..belief.len())
        .filter(|&i| belief.is_free(belief.coord(i)))
        .min_by_key(|&i| (worst[i], i))
        .map(|i| belief.coord(i))
}

impl Controller for Baseline {
    fn act(&mut self, view: &RobotView<'_>, _rng: &mut ChaCha8Rng) -> Result<usize> {
        let o = view.obs;
        Ok(match self.kind {
            BaselineKind::GreedyUtility => greedy_utility(o),
            BaselineKind::NearestFrontier => nearest_frontier(o).unwrap_or_else(|| first_live(o)),
            BaselineKind::Pursuit { threshold } => pursuit(o, threshold).unwrap_or_else(|| greedy_utility(o)),
            BaselineKind::Preplanned { period } => {
                if (view.step / period.max(1)) % 2 == 0 {
                    self.rendezvous = None;
                    return Ok(greedy_utility(o));
                }
                let target = *self.rendezvous.get_or_insert_with(|| {
                    let positions: Vec<CellCoord> = view.robot.robot_cells().collect();
                    rendezvous_cell(view.robot.belief.grid(), &positions).unwrap_or(view.robot.cell)
                });
                let node = (0..o.len())
                    .min_by_key(|&n| (o.cells[n].dist2(target), n))
                    .expect("observation has the robot vertex");
                o.step_toward(node).unwrap_or_else(|| greedy_utility(o))
            }
        })
    }
}
