use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use ordered_float::OrderedFloat;

use super::surplus::{map_surplus_field, SurplusField, SurplusParams, SurplusTarget};
use super::RobotState;
use crate::geometry::CellCoord;
use crate::roadmap::{lattice_step, GraphParams, HierGraph, VertexId};

/// Utilities above this many frontier cells saturate.
pub const UTILITY_CAP: f64 = 50.0;

/// Number of scalar features per node: x, y, u, g, p, s.
pub const NODE_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedNode {
    /// Robot-centric position divided by the map diagonal.
    pub position: [f64; 2],
    pub utility: f64,
    pub guidepost: f64,
    pub indicator: f64,
    pub surplus: f64,
}

impl AugmentedNode {
    pub fn features(&self) -> [f64; NODE_FEATURES] {
        [self.position[0], self.position[1], self.utility, self.guidepost, self.indicator, self.surplus]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeammateView {
    pub id: usize,
    /// Node index of the teammate's last-known vertex.
    pub node: usize,
    pub delta_m: f64,
    pub last_seen: u32,
}

/// One robot's view of the world at a decision step: the planning graph as
/// node-indexed arrays, with the raw utility and surplus values kept next to
/// the normalized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub robot: usize,
    pub step: u32,
    pub resolution: f64,
    pub vertices: Vec<VertexId>,
    pub cells: Vec<CellCoord>,
    pub nodes: Vec<AugmentedNode>,
    pub utility: Vec<u32>,
    /// Surplus values before normalization.
    pub surplus: Vec<f64>,
    /// Index pairs `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    pub current: usize,
    /// Candidate node indices, nearest first; `None` is a masked slot.
    pub candidates: Vec<Option<usize>>,
    /// Set when the current vertex has no neighbors and the only action is to stay.
    pub fallback: bool,
    pub teammates: Vec<TeammateView>,
    pub unreachable_teammates: Vec<usize>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn features(&self) -> Vec<[f64; NODE_FEATURES]> {
        self.nodes.iter().map(AugmentedNode::features).collect()
    }

    /// Euclidean distance between two nodes in meters.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.cells[a].dist(self.cells[b]) * self.resolution
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Graph distances and predecessors from node `src`.
    pub fn shortest_from(&self, src: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let adj = self.adjacency();
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut pred = vec![None; self.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((OrderedFloat(0.0), src)));
        while let Some(Reverse((OrderedFloat(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &v in &adj[u] {
                let nd = d + self.distance(u, v);
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(u);
                    heap.push(Reverse((OrderedFloat(nd), v)));
                }
            }
        }
        (dist, pred)
    }

    /// First node after `src` on the tree path to `target`.
    pub fn first_hop(pred: &[Option<usize>], src: usize, target: usize) -> Option<usize> {
        let mut v = target;
        while let Some(p) = pred[v] {
            if p == src {
                return Some(v);
            }
            v = p;
        }
        None
    }

    /// Candidate slot whose node lies on the shortest route to `target` that
    /// starts with a candidate move: the slot minimizing edge length plus
    /// remaining graph distance (ties: lowest slot). `None` when `target` is
    /// the current node or no candidate reaches it.
    pub fn step_toward(&self, target: usize) -> Option<usize> {
        if target == self.current {
            return None;
        }
        let (to_target, _) = self.shortest_from(target);
        let mut best: Option<(f64, usize)> = None;
        for (slot, c) in self.candidates.iter().enumerate() {
            let Some(n) = *c else { continue };
            if n == self.current || !to_target[n].is_finite() {
                continue;
            }
            let cost = self.distance(self.current, n) + to_target[n];
            if best.map_or(true, |(b, _)| cost < b) {
                best = Some((cost, slot));
            }
        }
        best.map(|(_, slot)| slot)
    }

    /// Candidate slot holding node `node`, if any.
    pub fn slot_of(&self, node: usize) -> Option<usize> {
        self.candidates.iter().position(|&c| c == Some(node))
    }
}

/// Up to `k` graph neighbors of `current`, ascending distance (ties by vertex
/// id), padded with masked slots to length `k`. A vertex without neighbors
/// yields the stay-in-place action and `fallback = true`.
pub fn action_candidates(
    graph: &HierGraph,
    current: VertexId,
    index: &BTreeMap<VertexId, usize>,
    k: usize,
) -> (Vec<Option<usize>>, bool) {
    let mut nbrs: Vec<(OrderedFloat<f64>, VertexId)> =
        graph.neighbors(current).map(|n| (OrderedFloat(graph.distance(current, n)), n)).collect();
    nbrs.sort_unstable();
    let mut out: Vec<Option<usize>> = nbrs.iter().take(k).map(|&(_, n)| Some(index[&n])).collect();
    let fallback = out.is_empty();
    if fallback {
        out.push(Some(index[&current]));
    }
    out.resize(k.max(1), None);
    (out, fallback)
}

pub(crate) struct ObservationInputs<'a> {
    pub graph_params: &'a GraphParams,
    pub surplus: &'a SurplusParams,
    pub surplus_enabled: bool,
    pub diagonal: f64,
    pub k: usize,
    pub step: u32,
}

/// Decorates the robot's planning graph with `(u, g, p, s)`.
pub(crate) fn build_observation(robot: &RobotState, inputs: &ObservationInputs<'_>) -> Observation {
    let graph = &robot.planning;
    let res = graph.resolution();
    let own = graph.vertex_at(robot.cell).or_else(|| graph.nearest(robot.cell)).expect("planning graph has the robot vertex");
    let vertices: Vec<VertexId> = graph.ids().collect();
    let index: BTreeMap<VertexId, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let cells: Vec<CellCoord> = vertices.iter().map(|&v| graph.cell(v)).collect();

    let mut teammates = Vec::new();
    let mut targets = Vec::new();
    let own_known = robot.belief.known_count() as f64;
    for (k, info) in robot.teammates.iter().enumerate() {
        let Some(info) = info else { continue };
        let Some(v) = graph.nearest(info.cell) else { continue };
        let delta_m = own_known - info.known_area as f64;
        teammates.push(TeammateView { id: k, node: index[&v], delta_m, last_seen: info.step });
        targets.push(SurplusTarget { teammate: k, vertex: v, delta_m });
    }
    let field = if inputs.surplus_enabled {
        map_surplus_field(graph, own, &targets, inputs.surplus)
    } else {
        SurplusField::default()
    };
    let scale = field.scale();

    let half = lattice_step(inputs.graph_params, res) as f64 / 2.0;
    let origin = cells[index[&own]];
    let utility: Vec<u32> = vertices.iter().map(|&v| graph.vertex(v).map_or(0, |x| x.utility)).collect();
    let surplus: Vec<f64> = vertices.iter().map(|&v| field.value(v)).collect();
    let nodes = (0..vertices.len())
        .map(|i| {
            let c = cells[i];
            let indicator = if vertices[i] == own {
                -1.0
            } else if teammates.iter().any(|t| t.node == i) {
                1.0
            } else {
                0.0
            };
            AugmentedNode {
                position: [
                    (c.x - origin.x) as f64 * res / inputs.diagonal,
                    (c.y - origin.y) as f64 * res / inputs.diagonal,
                ],
                utility: (utility[i] as f64).min(UTILITY_CAP) / UTILITY_CAP,
                guidepost: if robot.passed_near(c, half) { 1.0 } else { 0.0 },
                indicator,
                surplus: if scale > 0.0 { surplus[i] / scale } else { 0.0 },
            }
        })
        .collect();
    let edges = graph.edges().map(|(a, b)| (index[&a], index[&b])).map(|(a, b)| (a.min(b), a.max(b))).collect();
    let (candidates, fallback) = action_candidates(graph, own, &index, inputs.k);
    Observation {
        robot: robot.id,
        step: inputs.step,
        resolution: res,
        vertices,
        cells,
        nodes,
        utility,
        surplus,
        edges,
        current: index[&own],
        candidates,
        fallback,
        teammates,
        unreachable_teammates: field.unreachable,
    }
}
