use std::collections::{BTreeMap, BTreeSet};

use super::{knn_los_for, line_of_sight, GraphParams, HierGraph, Layer, VertexId};
use crate::geometry::CellCoord;
use crate::grid::OccupancyGrid;

/// Union of `mine` with an incoming global graph, before sparsification.
///
/// Incoming vertices are inserted in ascending id order (a vertex on a cell
/// `mine` already uses is identified with it), incoming edges are kept when
/// they have line of sight on `grid`, and each newly inserted vertex is
/// attached to its `k` nearest visible vertices of `mine`. Returns the union
/// and the ids of the newly inserted vertices.
pub fn union_with_attachments(
    mine: &HierGraph,
    incoming: &HierGraph,
    grid: &OccupancyGrid,
    k: usize,
) -> (HierGraph, Vec<VertexId>) {
    let mut out = mine.clone();
    let mine_cells: Vec<(VertexId, CellCoord)> = mine.vertices().map(|v| (v.id, v.cell)).collect();
    let mut map = BTreeMap::new();
    let mut fresh = Vec::new();
    for v in incoming.vertices() {
        if !grid.is_free(v.cell) {
            continue;
        }
        let existed = out.vertex_at(v.cell).is_some();
        let id = out.add_vertex(v.cell, Layer::Global);
        if !existed {
            fresh.push(id);
        }
        map.insert(v.id, id);
    }
    for (a, b) in incoming.edges() {
        if let (Some(&ma), Some(&mb)) = (map.get(&a), map.get(&b)) {
            if line_of_sight(grid, out.cell(ma), out.cell(mb)) {
                out.add_edge(ma, mb);
            }
        }
    }
    for &id in &fresh {
        let cell = out.cell(id);
        for n in knn_los_for(id, cell, &mine_cells, grid, k) {
            out.add_edge(id, n);
        }
    }
    (out, fresh)
}

/// Merges an incoming global graph into `mine` and sparsifies the result.
/// Vertices on `exempt` cells (robot positions) are never removed.
pub fn merge_global_graphs(
    mine: &HierGraph,
    incoming: &HierGraph,
    grid: &OccupancyGrid,
    params: &GraphParams,
    exempt: &BTreeSet<CellCoord>,
) -> HierGraph {
    let (mut union, _) = union_with_attachments(mine, incoming, grid, params.k);
    sparsify(&mut union, grid, params.r_m, exempt);
    union
}

/// Removes vertices that have another vertex within `r_m` meters, newest
/// first, as long as removal keeps the same-component relation of the
/// remaining vertices. Each neighbor of a removed vertex is re-wired to the
/// closest visible vertex of the same component inside the merge radius.
/// Repeats until a pass removes nothing. Returns the number removed.
pub fn sparsify(graph: &mut HierGraph, grid: &OccupancyGrid, r_m: f64, exempt: &BTreeSet<CellCoord>) -> usize {
    let r = r_m / graph.resolution();
    let r2 = r * r;
    let mut removed = 0;
    loop {
        let mut changed = false;
        let mut ids: Vec<VertexId> = graph.ids().collect();
        ids.reverse();
        for v in ids {
            let Some(vertex) = graph.vertex(v) else { continue };
            let cell = vertex.cell;
            if exempt.contains(&cell) {
                continue;
            }
            let mut close: Vec<(i64, VertexId)> = graph
                .vertices()
                .filter(|w| w.id != v && cell.dist2(w.cell) as f64 <= r2)
                .map(|w| (cell.dist2(w.cell), w.id))
                .collect();
            if close.is_empty() {
                continue;
            }
            close.sort_unstable();
            if try_remove(graph, grid, v, &close) {
                removed += 1;
                changed = true;
            }
        }
        if !changed {
            return removed;
        }
    }
}

fn try_remove(graph: &mut HierGraph, grid: &OccupancyGrid, v: VertexId, close: &[(i64, VertexId)]) -> bool {
    let labels = graph.component_labels();
    let before = labels.values().max().map_or(0, |m| m + 1);
    let own = labels[&v];
    let targets: Vec<VertexId> = close.iter().map(|&(_, w)| w).filter(|w| labels[w] == own).collect();

    let (vertex, nbrs) = graph.remove_vertex(v).expect("vertex exists");
    let mut added = Vec::new();
    for &n in &nbrs {
        for &w in &targets {
            if w == n {
                continue;
            }
            if graph.has_edge(n, w) {
                break;
            }
            if line_of_sight(grid, graph.cell(n), graph.cell(w)) {
                graph.add_edge(n, w);
                added.push((n, w));
                break;
            }
        }
    }
    let expected = if nbrs.is_empty() { before - 1 } else { before };
    let ok = graph.component_count() == expected;
    if !ok {
        for (n, w) in added {
            graph.remove_edge(n, w);
        }
        graph.insert_with_id(vertex);
        for n in nbrs {
            graph.add_edge(v, n);
        }
    }
    ok
}
