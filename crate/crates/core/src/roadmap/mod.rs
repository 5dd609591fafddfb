//! Hierarchical roadmap: a dense local graph around the robot and a sparse,
//! persistent global graph, plus the primitives shared by both.
//!
//! Vertices always sit on cell centers, so line-of-sight and distances are
//! evaluated exactly on the belief grid.

mod global;
mod local;
mod merge;
mod planning;
mod prune;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::Write;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::geometry::{cell_line, CellCoord, Point};
use crate::grid::OccupancyGrid;

pub use global::{astar_cells, extend_global_graph, ExtendReport};
pub use local::{
    build_local_graph, frontier_centers, lattice_step, refresh_utilities, vertex_utility, FrontierCenter,
    FrontierIndex,
};
pub use merge::{merge_global_graphs, sparsify, union_with_attachments};
pub use planning::planning_graph;
pub use prune::prune_global_graph;

pub type VertexId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphVertex {
    pub id: VertexId,
    pub cell: CellCoord,
    pub layer: Layer,
    /// Number of frontier cells observable from this vertex.
    pub utility: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    /// Spacing of candidate viewpoints, meters.
    pub lattice_spacing: f64,
    /// Nearest line-of-sight neighbors per vertex.
    pub k: usize,
    /// Half-width of the local box in meters; `None` means twice the sensor range.
    pub box_half_width: Option<f64>,
    /// Frontier-center cluster radius, meters.
    pub r_g: f64,
    /// Merge radius, meters.
    pub r_m: f64,
    /// Global pruning period in decision steps.
    pub prune_period: u32,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { lattice_spacing: 2.0, k: 8, box_half_width: None, r_g: 10.0, r_m: 3.0, prune_period: 5 }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lattice_spacing, self.r_g, self.r_m, self.box_half_width.unwrap_or(1.0)];
        if positive.iter().any(|v| !(*v > 0.0)) || self.k == 0 || self.prune_period == 0 {
            return Err(Error::Config("graph parameters must be positive".into()));
        }
        Ok(())
    }

    /// Local box half-width `d_r` in meters.
    pub fn d_r(&self, sensor_range: f64) -> f64 {
        self.box_half_width.unwrap_or(2.0 * sensor_range)
    }
}

/// Undirected graph over cell-centered vertices with Euclidean edge lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierGraph {
    resolution: f64,
    vertices: BTreeMap<VertexId, GraphVertex>,
    adj: BTreeMap<VertexId, BTreeSet<VertexId>>,
    #[serde(skip)]
    by_cell: HashMap<CellCoord, VertexId>,
    next_id: VertexId,
}

impl HierGraph {
    pub fn new(resolution: f64) -> Self {
        Self { resolution, vertices: BTreeMap::new(), adj: BTreeMap::new(), by_cell: HashMap::new(), next_id: 0 }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn next_id(&self) -> VertexId {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Inserts a vertex at `cell`, or returns the id already there.
    pub fn add_vertex(&mut self, cell: CellCoord, layer: Layer) -> VertexId {
        if let Some(&id) = self.by_cell.get(&cell) {
            return id;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.insert_with_id(GraphVertex { id, cell, layer, utility: 0 });
        id
    }

    fn insert_with_id(&mut self, v: GraphVertex) {
        self.next_id = self.next_id.max(v.id + 1);
        self.by_cell.insert(v.cell, v.id);
        self.adj.entry(v.id).or_default();
        self.vertices.insert(v.id, v);
    }

    pub fn remove_vertex(&mut self, id: VertexId) -> Option<(GraphVertex, BTreeSet<VertexId>)> {
        let v = self.vertices.remove(&id)?;
        self.by_cell.remove(&v.cell);
        let nbrs = self.adj.remove(&id).unwrap_or_default();
        for n in &nbrs {
            if let Some(s) = self.adj.get_mut(n) {
                s.remove(&id);
            }
        }
        Some((v, nbrs))
    }

    pub fn add_edge(&mut self, a: VertexId, b: VertexId) -> bool {
        if a == b || !self.vertices.contains_key(&a) || !self.vertices.contains_key(&b) {
            return false;
        }
        let fresh = self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
        fresh
    }

    pub fn remove_edge(&mut self, a: VertexId, b: VertexId) {
        if let Some(s) = self.adj.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.adj.get_mut(&b) {
            s.remove(&a);
        }
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn vertex(&self, id: VertexId) -> Option<&GraphVertex> {
        self.vertices.get(&id)
    }

    pub fn vertex_mut(&mut self, id: VertexId) -> Option<&mut GraphVertex> {
        self.vertices.get_mut(&id)
    }

    pub fn vertex_at(&self, cell: CellCoord) -> Option<VertexId> {
        self.by_cell.get(&cell).copied()
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    /// Vertices in ascending id order.
    pub fn vertices(&self) -> impl Iterator<Item = &GraphVertex> + '_ {
        self.vertices.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn neighbors(&self, id: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.adj.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, id: VertexId) -> usize {
        self.adj.get(&id).map_or(0, |s| s.len())
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj.iter().flat_map(|(&a, s)| s.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    pub fn cell(&self, id: VertexId) -> CellCoord {
        self.vertices[&id].cell
    }

    pub fn position(&self, id: VertexId) -> Point {
        let c = self.cell(id);
        Point::new((c.x as f64 + 0.5) * self.resolution, (c.y as f64 + 0.5) * self.resolution)
    }

    /// Euclidean distance between two vertices in meters.
    pub fn distance(&self, a: VertexId, b: VertexId) -> f64 {
        self.cell(a).dist(self.cell(b)) * self.resolution
    }

    /// Closest vertex to `cell` by Euclidean distance, ties to the lower id.
    pub fn nearest(&self, cell: CellCoord) -> Option<VertexId> {
        self.vertices.values().min_by_key(|v| (v.cell.dist2(cell), v.id)).map(|v| v.id)
    }

    /// Component label per vertex id (labels are dense, ordered by smallest id).
    pub fn component_labels(&self) -> BTreeMap<VertexId, usize> {
        let ids: Vec<VertexId> = self.ids().collect();
        let index: HashMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut dsu = DisjointSet::new(ids.len());
        for (a, b) in self.edges() {
            dsu.union(index[&a], index[&b]);
        }
        let mut labels = BTreeMap::new();
        for (label, group) in dsu.groups().into_iter().enumerate() {
            for i in group {
                labels.insert(ids[i], label);
            }
        }
        labels
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().values().max().map_or(0, |m| m + 1)
    }

    /// Single-source shortest paths over edge lengths.
    pub fn dijkstra(&self, source: VertexId) -> ShortestPaths {
        let mut dist: BTreeMap<VertexId, f64> = BTreeMap::new();
        let mut pred: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        if !self.contains(source) {
            return ShortestPaths { source, dist, pred };
        }
        let mut heap = BinaryHeap::new();
        dist.insert(source, 0.0);
        heap.push(HeapEntry { dist: OrderedFloat(0.0), id: source });
        while let Some(HeapEntry { dist: OrderedFloat(d), id }) = heap.pop() {
            if d > dist[&id] {
                continue;
            }
            for n in self.neighbors(id) {
                let nd = d + self.distance(id, n);
                if dist.get(&n).map_or(true, |&old| nd < old) {
                    dist.insert(n, nd);
                    pred.insert(n, id);
                    heap.push(HeapEntry { dist: OrderedFloat(nd), id: n });
                }
            }
        }
        ShortestPaths { source, dist, pred }
    }

    /// Rebuilds the cell index after deserialization.
    pub fn reindex(&mut self) {
        self.by_cell = self.vertices.values().map(|v| (v.cell, v.id)).collect();
    }

    /// Checks that every edge has line of sight on `grid` and every vertex
    /// lies on a free cell.
    pub fn edges_have_los(&self, grid: &OccupancyGrid) -> bool {
        self.vertices().all(|v| grid.is_free(v.cell))
            && self.edges().all(|(a, b)| line_of_sight(grid, self.cell(a), self.cell(b)))
    }

    /// Writes the graph as JSON lines: one vertex record per line, then one
    /// edge record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in self.vertices() {
            let p = self.position(v.id);
            let rec = serde_json::json!({
                "id": v.id, "x": p.x, "y": p.y, "layer": v.layer, "u": v.utility,
            });
            writeln!(out, "{rec}")?;
        }
        for (a, b) in self.edges() {
            let rec = serde_json::json!({ "a": a, "b": b, "length": self.distance(a, b) });
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeapEntry {
    dist: OrderedFloat<f64>,
    id: VertexId,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.cmp(&self.dist).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub source: VertexId,
    pub dist: BTreeMap<VertexId, f64>,
    pub pred: BTreeMap<VertexId, VertexId>,
}

impl ShortestPaths {
    pub fn distance(&self, target: VertexId) -> Option<f64> {
        self.dist.get(&target).copied()
    }

    /// Vertex sequence from the source to `target`, inclusive.
    pub fn path_to(&self, target: VertexId) -> Option<Vec<VertexId>> {
        if !self.dist.contains_key(&target) {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while cur != self.source {
            cur = self.pred[&cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

/// True iff every cell crossed by the center segment `a → b` is free.
pub fn line_of_sight(grid: &OccupancyGrid, a: CellCoord, b: CellCoord) -> bool {
    cell_line(a, b).all(|c| grid.is_free(c))
}

/// Edges joining each vertex to its `k` nearest neighbors that are in line of
/// sight, symmetrized. Returned as sorted `(a, b)` pairs with `a < b`.
pub fn knn_los_edges(
    vertices: &[(VertexId, CellCoord)],
    grid: &OccupancyGrid,
    k: usize,
) -> BTreeSet<(VertexId, VertexId)> {
    let mut edges = BTreeSet::new();
    for &(id, cell) in vertices {
        for n in knn_los_for(id, cell, vertices, grid, k) {
            edges.insert((id.min(n), id.max(n)));
        }
    }
    edges
}

fn knn_los_for(
    id: VertexId,
    cell: CellCoord,
    candidates: &[(VertexId, CellCoord)],
    grid: &OccupancyGrid,
    k: usize,
) -> Vec<VertexId> {
    let mut order: Vec<(i64, VertexId, CellCoord)> = candidates
        .iter()
        .filter(|&&(other, _)| other != id)
        .map(|&(other, c)| (cell.dist2(c), other, c))
        .collect();
    order.sort_unstable_by_key(|&(d, other, _)| (d, other));
    order
        .into_iter()
        .filter(|&(_, _, c)| line_of_sight(grid, cell, c))
        .take(k)
        .map(|(_, other, _)| other)
        .collect()
}

impl HierGraph {
    /// Adds kNN line-of-sight edges from each vertex in `from` to the
    /// vertices of the whole graph.
    pub fn connect_knn(&mut self, grid: &OccupancyGrid, k: usize, from: &[VertexId]) {
        let all: Vec<(VertexId, CellCoord)> = self.vertices().map(|v| (v.id, v.cell)).collect();
        for &id in from {
            let Some(cell) = self.vertex(id).map(|v| v.cell) else { continue };
            for n in knn_los_for(id, cell, &all, grid, k) {
                self.add_edge(id, n);
            }
        }
    }
}
