use serde::{Deserialize, Serialize};

use super::{line_of_sight, GraphParams, HierGraph, Layer, VertexId};
use crate::geometry::{cell_line, CellCoord};
use crate::grid::{Cell, FrontierSet, OccupancyGrid};

/// Lattice spacing in cells (at least one).
pub fn lattice_step(params: &GraphParams, resolution: f64) -> i32 {
    ((params.lattice_spacing / resolution).round() as i32).max(1)
}

fn on_lattice(c: CellCoord, step: i32) -> bool {
    c.x.rem_euclid(step) == step / 2 && c.y.rem_euclid(step) == step / 2
}

/// Frontier cells with a dense membership mask for radius queries.
#[derive(Debug, Clone)]
pub struct FrontierIndex {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    count: usize,
}

impl FrontierIndex {
    pub fn new(grid: &OccupancyGrid, frontiers: &FrontierSet) -> Self {
        let mut mask = vec![false; grid.len()];
        for &c in &frontiers.cells {
            if let Some(i) = grid.index(c) {
                mask[i] = true;
            }
        }
        Self { width: grid.width(), height: grid.height(), mask, count: frontiers.len() }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        c.x >= 0
            && c.y >= 0
            && (c.x as usize) < self.width
            && (c.y as usize) < self.height
            && self.mask[c.y as usize * self.width + c.x as usize]
    }
}

/// Frontier cells in line of sight from `cell` that also expose one of
/// their unknown 4-neighbors: the neighbor lies within `range_cells` and the
/// segment to it crosses only known-free cells before reaching it. A scan
/// from `cell` is then certain to observe that neighbor, so a vertex with
/// nonzero utility always has something left to see.
pub fn vertex_utility(grid: &OccupancyGrid, frontiers: &FrontierIndex, cell: CellCoord, range_cells: f64) -> u32 {
    if frontiers.is_empty() {
        return 0;
    }
    let r2 = range_cells * range_cells;
    let reach = range_cells.floor() as i32;
    let exposes = |u: CellCoord| {
        grid.get(u) == Some(Cell::Unknown)
            && cell.dist2(u) as f64 <= r2
            && cell_line(cell, u).filter(|&c| c != u).all(|c| grid.is_free(c))
    };
    let mut count = 0;
    for y in cell.y - reach..=cell.y + reach {
        for x in cell.x - reach..=cell.x + reach {
            let f = CellCoord::new(x, y);
            if frontiers.contains(f)
                && cell.dist2(f) as f64 <= r2
                && line_of_sight(grid, cell, f)
                && f.neighbors4().iter().any(|&u| exposes(u))
            {
                count += 1;
            }
        }
    }
    count
}

pub fn refresh_utilities(graph: &mut HierGraph, grid: &OccupancyGrid, frontiers: &FrontierIndex, range_cells: f64) {
    let ids: Vec<VertexId> = graph.ids().collect();
    for id in ids {
        let cell = graph.cell(id);
        let u = vertex_utility(grid, frontiers, cell, range_cells);
        if let Some(v) = graph.vertex_mut(id) {
            v.utility = u;
        }
    }
}

/// Dense local graph: free lattice points inside the box of half-width `d_r`
/// around the robot plus the robot cell, wired by kNN line of sight, with
/// utilities from the belief's frontiers.
pub fn build_local_graph(
    belief: &OccupancyGrid,
    robot: CellCoord,
    params: &GraphParams,
    sensor_range: f64,
    frontiers: &FrontierIndex,
) -> HierGraph {
    let res = belief.resolution();
    let step = lattice_step(params, res);
    let half = (params.d_r(sensor_range) / res).floor() as i32;
    let mut graph = HierGraph::new(res);
    let mut ids = Vec::new();
    if belief.is_free(robot) {
        ids.push(graph.add_vertex(robot, Layer::Local));
    }
    let x0 = (robot.x - half).max(0);
    let x1 = (robot.x + half).min(belief.width() as i32 - 1);
    let y0 = (robot.y - half).max(0);
    let y1 = (robot.y + half).min(belief.height() as i32 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = CellCoord::new(x, y);
            if on_lattice(c, step) && belief.is_free(c) {
                ids.push(graph.add_vertex(c, Layer::Local));
            }
        }
    }
    ids.dedup();
    graph.connect_knn(belief, params.k, &ids);
    refresh_utilities(&mut graph, belief, frontiers, sensor_range / res);
    graph
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierCenter {
    pub vertex: VertexId,
    pub cell: CellCoord,
    /// Number of nonzero-utility vertices absorbed into this cluster.
    pub members: usize,
}

/// Greedy clustering of nonzero-utility vertices: in descending utility
/// (ties by id) each unclaimed vertex seeds a cluster that absorbs every
/// unclaimed nonzero vertex within `r_g` meters. The seed is the center, so
/// centers are pairwise more than `r_g` apart and every nonzero vertex lies
/// within `r_g` of one.
pub fn frontier_centers(graph: &HierGraph, r_g: f64) -> Vec<FrontierCenter> {
    let mut nonzero: Vec<(u32, VertexId, CellCoord)> =
        graph.vertices().filter(|v| v.utility > 0).map(|v| (v.utility, v.id, v.cell)).collect();
    nonzero.sort_by_key(|&(u, id, _)| (std::cmp::Reverse(u), id));
    let r = r_g / graph.resolution();
    let r2 = r * r;
    let mut claimed = vec![false; nonzero.len()];
    let mut centers = Vec::new();
    for i in 0..nonzero.len() {
        if claimed[i] {
            continue;
        }
        let (_, id, cell) = nonzero[i];
        let mut members = 0;
        for j in i..nonzero.len() {
            if !claimed[j] && cell.dist2(nonzero[j].2) as f64 <= r2 {
                claimed[j] = true;
                members += 1;
            }
        }
        centers.push(FrontierCenter { vertex: id, cell, members });
    }
    centers
}
