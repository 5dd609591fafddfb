use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roadmap::{HierGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurplusParams {
    /// Smallest believed map advantage (cells) that produces a field.
    pub delta_min: f64,
    /// Field value at the robot's own vertex.
    pub s_min: f64,
}

impl Default for SurplusParams {
    fn default() -> Self {
        Self { delta_min: 100.0, s_min: 1.0 }
    }
}

impl SurplusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min >= 0.0) || !(self.s_min > 0.0) {
            return Err(Error::Config("surplus: delta_min must be >= 0 and s_min > 0".into()));
        }
        Ok(())
    }
}

/// A teammate as seen by the observing robot: its last-known vertex and the
/// believed map advantage `ΔM = M_own − M_teammate_at_last_contact`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusTarget {
    pub teammate: usize,
    pub vertex: VertexId,
    pub delta_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurplusPath {
    pub teammate: usize,
    pub delta_m: f64,
    /// Graph distance to the teammate's vertex, meters.
    pub length: f64,
    pub vertices: Vec<VertexId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurplusField {
    /// Nonzero field values; every other vertex is 0.
    pub values: BTreeMap<VertexId, f64>,
    pub paths: Vec<SurplusPath>,
    /// Teammates above the threshold whose vertex could not be reached.
    pub unreachable: Vec<usize>,
}

impl SurplusField {
    pub fn value(&self, v: VertexId) -> f64 {
        self.values.get(&v).copied().unwrap_or(0.0)
    }

    /// Largest ΔM among the teammates that laid a path; the normalizer for
    /// observations.
    pub fn scale(&self) -> f64 {
        self.paths.iter().map(|p| p.delta_m).fold(0.0, f64::max)
    }
}

/// Linear surplus profile along the shortest graph path to each teammate:
/// `s = d·(ΔM − s_min)/d_k + s_min` where `d` is the along-path distance from
/// the robot and `d_k` the full path length. Teammates with `ΔM < delta_min`
/// contribute nothing; overlapping paths keep the maximum.
pub fn map_surplus_field(
    graph: &HierGraph,
    own: VertexId,
    targets: &[SurplusTarget],
    params: &SurplusParams,
) -> SurplusField {
    let mut field = SurplusField::default();
    let active: Vec<&SurplusTarget> = targets.iter().filter(|t| t.delta_m >= params.delta_min).collect();
    if active.is_empty() {
        return field;
    }
    let tree = graph.dijkstra(own);
    for t in active {
        let Some(path) = tree.path_to(t.vertex) else {
            field.unreachable.push(t.teammate);
            continue;
        };
        let length = tree.dist[&t.vertex];
        for &v in &path {
            let s = if v == t.vertex {
                t.delta_m.max(if v == own { params.s_min } else { f64::MIN })
            } else if v == own {
                params.s_min
            } else {
                tree.dist[&v] * (t.delta_m - params.s_min) / length + params.s_min
            };
            let slot = field.values.entry(v).or_insert(0.0);
            *slot = slot.max(s);
        }
        field.paths.push(SurplusPath { teammate: t.teammate, delta_m: t.delta_m, length, vertices: path });
    }
    field
}
