use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;

use super::local::lattice_step;
use super::{line_of_sight, GraphParams, HierGraph, Layer, VertexId};
use crate::geometry::CellCoord;
use crate::grid::OccupancyGrid;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(PartialEq, Eq)]
struct Open {
    f: OrderedFloat<f64>,
    h: OrderedFloat<f64>,
    index: usize,
}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (f, h, index).
        (other.f, other.h, other.index).cmp(&(self.f, self.h, self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: CellCoord, b: CellCoord) -> f64 {
    let dx = (a.x - b.x).abs() as f64;
    let dy = (a.y - b.y).abs() as f64;
    dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
}

/// 8-connected A* over free cells (no corner cutting) with octile costs.
/// Ties are broken by `(f, h, cell index)`. Returns the cell path including
/// both endpoints and its length in cells.
pub fn astar_cells(grid: &OccupancyGrid, start: CellCoord, goal: CellCoord) -> Option<(Vec<CellCoord>, f64)> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let n = grid.len();
    let mut g = vec![f64::INFINITY; n];
    let mut came = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let si = grid.index(start)?;
    let gi = grid.index(goal)?;
    g[si] = 0.0;
    let mut open = BinaryHeap::new();
    let h0 = octile(start, goal);
    open.push(Open { f: OrderedFloat(h0), h: OrderedFloat(h0), index: si });
    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        if index == gi {
            let mut path = vec![goal];
            let mut cur = gi;
            while cur != si {
                cur = came[cur];
                path.push(grid.coord(cur));
            }
            path.reverse();
            return Some((path, g[gi]));
        }
        closed[index] = true;
        let c = grid.coord(index);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nc = CellCoord::new(c.x + dx, c.y + dy);
                if !grid.is_free(nc) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(grid.is_free(CellCoord::new(c.x + dx, c.y)) && grid.is_free(CellCoord::new(c.x, c.y + dy))) {
                    continue;
                }
                let ni = grid.index(nc).expect("free implies in bounds");
                if closed[ni] {
                    continue;
                }
                let ng = g[index] + if diagonal { SQRT2 } else { 1.0 };
                if ng < g[ni] {
                    g[ni] = ng;
                    came[ni] = index;
                    let h = octile(nc, goal);
                    open.push(Open { f: OrderedFloat(ng + h), h: OrderedFloat(h), index: ni });
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtendReport {
    pub robot_vertex: VertexId,
    pub added: Vec<VertexId>,
    /// Frontier centers with no free-space path from the robot.
    pub unreachable: Vec<CellCoord>,
}

/// Keeps a path cell when it is the goal, when the following cell is not
/// visible from the last kept cell, or when the spacing has been covered.
/// Consecutive kept cells are always in line of sight.
fn subsample(grid: &OccupancyGrid, path: &[CellCoord], step: i32) -> Vec<CellCoord> {
    let mut kept = Vec::new();
    let mut last = path[0];
    let spacing2 = (step as i64) * (step as i64);
    for t in 1..path.len() {
        let is_goal = t + 1 == path.len();
        let next_hidden = !is_goal && !line_of_sight(grid, last, path[t + 1]);
        if is_goal || next_hidden || last.dist2(path[t]) >= spacing2 {
            kept.push(path[t]);
            last = path[t];
        }
    }
    kept
}

/// Adds the robot cell to the global layer and extends it along A* paths
/// toward each frontier center. Waypoints are chained in order and also
/// wired to the rest of the layer by kNN line of sight.
pub fn extend_global_graph(
    global: &mut HierGraph,
    robot: CellCoord,
    centers: &[CellCoord],
    belief: &OccupancyGrid,
    params: &GraphParams,
) -> ExtendReport {
    let step = lattice_step(params, belief.resolution());
    let before = global.next_id();
    let robot_vertex = global.add_vertex(robot, Layer::Global);
    let mut report = ExtendReport { robot_vertex, ..Default::default() };
    let mut touched = vec![robot_vertex];
    for &center in centers {
        let Some((path, _)) = astar_cells(belief, robot, center) else {
            report.unreachable.push(center);
            continue;
        };
        let mut prev = robot_vertex;
        for cell in subsample(belief, &path, step) {
            let id = global.add_vertex(cell, Layer::Global);
            global.add_edge(prev, id);
            touched.push(id);
            prev = id;
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let fresh: Vec<VertexId> = touched.iter().copied().filter(|&id| id >= before).collect();
    global.connect_knn(belief, params.k, &fresh);
    report.added = fresh;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    #[test]
    fn astar_straight_corridor() {
        let mut g = OccupancyGrid::filled(20, 5, 1.0, Cell::Occupied);
        for x in 1..19 {
            for y in 1..4 {
                g.set(CellCoord::new(x, y), Cell::Free);
            }
        }
        let (path, len) = astar_cells(&g, CellCoord::new(1, 2), CellCoord::new(18, 2)).unwrap();
        assert_eq!(len, 17.0);
        assert!(path.iter().all(|c| c.y == 2));
    }

    #[test]
    fn astar_unreachable() {
        let mut g = OccupancyGrid::filled(10, 10, 1.0, Cell::Free);
        for y in 0..10 {
            g.set(CellCoord::new(5, y), Cell::Occupied);
        }
        assert!(astar_cells(&g, CellCoord::new(1, 1), CellCoord::new(8, 8)).is_none());
    }

    #[test]
    fn zero_centers_adds_robot_only() {
        let g = OccupancyGrid::filled(10, 10, 1.0, Cell::Free);
        let mut global = HierGraph::new(1.0);
        let r = extend_global_graph(&mut global, CellCoord::new(3, 3), &[], &g, &GraphParams::default());
        assert_eq!(global.len(), 1);
        assert_eq!(r.added, vec![r.robot_vertex]);
    }
}
