use std::collections::BTreeMap;

use super::local::lattice_step;
use super::{line_of_sight, GraphParams, HierGraph, Layer, VertexId};
use crate::grid::OccupancyGrid;

/// Single graph for planning: the global layer plus the local layer, with
/// local vertices folded into any global vertex within half a lattice spacing
/// (the local utility wins), and kNN line-of-sight edges across both layers.
pub fn planning_graph(global: &HierGraph, local: &HierGraph, grid: &OccupancyGrid, params: &GraphParams) -> HierGraph {
    let mut out = global.clone();
    let step = lattice_step(params, grid.resolution()) as f64;
    let half2 = (step / 2.0) * (step / 2.0);
    let global_cells: Vec<(VertexId, _)> = global.vertices().map(|v| (v.id, v.cell)).collect();
    let mut map = BTreeMap::new();
    for v in local.vertices() {
        let twin = global_cells
            .iter()
            .filter(|(_, c)| v.cell.dist2(*c) as f64 <= half2)
            .min_by_key(|(id, c)| (v.cell.dist2(*c), *id))
            .map(|&(id, _)| id);
        let id = match twin {
            Some(id) => id,
            None => out.add_vertex(v.cell, Layer::Local),
        };
        if let Some(t) = out.vertex_mut(id) {
            t.utility = v.utility;
        }
        map.insert(v.id, id);
    }
    for (a, b) in local.edges() {
        let (ma, mb) = (map[&a], map[&b]);
        if line_of_sight(grid, out.cell(ma), out.cell(mb)) {
            out.add_edge(ma, mb);
        }
    }
    let all: Vec<VertexId> = out.ids().collect();
    out.connect_knn(grid, params.k, &all);
    out
}
