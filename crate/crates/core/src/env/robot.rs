use crate::geometry::{cell_line, CellCoord};
use crate::grid::{Belief, OccupancyGrid};
use crate::roadmap::HierGraph;

/// What a robot remembers about a teammate from their last contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeammateInfo {
    pub cell: CellCoord,
    pub step: u32,
    /// Known cells in the belief the two shared at that contact.
    pub known_area: usize,
}

#[derive(Debug, Clone)]
pub struct RobotState {
    pub id: usize,
    pub cell: CellCoord,
    pub belief: Belief,
    pub global: HierGraph,
    /// Global plus local layer, rebuilt every decision step.
    pub planning: HierGraph,
    /// Indexed by robot id; the own slot stays `None`.
    pub teammates: Vec<Option<TeammateInfo>>,
    pub trajectory: Vec<CellCoord>,
    /// Meters travelled.
    pub distance: f64,
    pub active: bool,
    visited: Vec<bool>,
    width: usize,
}

impl RobotState {
    pub fn new(id: usize, cell: CellCoord, truth: &OccupancyGrid, n_robots: usize) -> Self {
        let mut state = Self {
            id,
            cell,
            belief: Belief::unknown_like(truth),
            global: HierGraph::new(truth.resolution()),
            planning: HierGraph::new(truth.resolution()),
            teammates: vec![None; n_robots],
            trajectory: vec![cell],
            distance: 0.0,
            active: false,
            visited: vec![false; truth.len()],
            width: truth.width(),
        };
        state.mark(cell);
        state
    }

    fn mark(&mut self, c: CellCoord) {
        if c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width {
            if let Some(slot) = self.visited.get_mut(c.y as usize * self.width + c.x as usize) {
                *slot = true;
            }
        }
    }

    /// Moves to `to`, marking every cell on the way as visited.
    pub fn travel(&mut self, to: CellCoord, meters: f64) {
        let from = self.cell;
        for c in cell_line(from, to) {
            self.mark(c);
        }
        self.cell = to;
        self.distance += meters;
        self.trajectory.push(to);
    }

    pub fn visited(&self, c: CellCoord) -> bool {
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width {
            return false;
        }
        self.visited.get(c.y as usize * self.width + c.x as usize).copied().unwrap_or(false)
    }

    /// True when the trajectory passed within `radius` cells of `c`.
    pub fn passed_near(&self, c: CellCoord, radius: f64) -> bool {
        let r = radius.floor() as i32;
        let r2 = radius * radius;
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 <= r2 && self.visited(CellCoord::new(c.x + dx, c.y + dy)) {
                    return true;
                }
            }
        }
        false
    }

    /// Own cell followed by every teammate's last-known cell.
    pub fn robot_cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        std::iter::once(self.cell).chain(self.teammates.iter().flatten().map(|t| t.cell))
    }
}
