//! Connectivity between robots and the information-exchange transaction.
//!
//! Two link models are supported: plain proximity, and a log-distance path
//! loss model with a fixed attenuation per occupied cell on the line between
//! the robots.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::env::{RobotState, TeammateInfo};
use crate::error::{Error, Result};
use crate::geometry::{cell_line, CellCoord, Point};
use crate::grid::OccupancyGrid;
use crate::roadmap::{merge_global_graphs, GraphParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommsMode {
    Proximity,
    Signal,
    /// No links at all.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommsParams {
    pub mode: CommsMode,
    /// Proximity range, meters.
    pub d_comm: f64,
    pub p_t_dbm: f64,
    pub p_thresh_dbm: f64,
    /// Path loss at the reference distance, dB.
    pub pl0_db: f64,
    /// Reference distance, meters.
    pub d0: f64,
    pub exponent: f64,
    /// Extra loss per occupied cell crossed, dB.
    pub wall_db: f64,
}

impl Default for CommsParams {
    fn default() -> Self {
        // Free-space radius 100 m; about 29 m through one occupied cell.
        Self {
            mode: CommsMode::Proximity,
            d_comm: 30.0,
            p_t_dbm: 20.0,
            p_thresh_dbm: -80.0,
            pl0_db: 40.0,
            d0: 1.0,
            exponent: 3.0,
            wall_db: 16.0,
        }
    }
}

impl CommsParams {
    pub fn proximity(d_comm: f64) -> Self {
        Self { mode: CommsMode::Proximity, d_comm, ..Self::default() }
    }

    pub fn disabled() -> Self {
        Self { mode: CommsMode::Disabled, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_comm > 0.0) || !(self.exponent > 0.0) || !(self.d0 > 0.0) || !(self.wall_db >= 0.0) {
            return Err(Error::Config("comms: d_comm, exponent, d0 must be positive and wall_db non-negative".into()));
        }
        Ok(())
    }

    /// Distance at which received power drops to the threshold with no walls.
    pub fn free_space_radius(&self) -> f64 {
        self.d0 * 10f64.powf((self.p_t_dbm - self.p_thresh_dbm - self.pl0_db) / (10.0 * self.exponent))
    }
}

/// Distinct occupied cells crossed by the segment between the cells of `a` and `b`.
pub fn wall_count(a: Point, b: Point, truth: &OccupancyGrid) -> usize {
    cell_line(truth.cell_of(a), truth.cell_of(b)).filter(|&c| truth.is_occupied(c)).count()
}

/// `PL0 + 10·n·log10(max(d, d0)/d0) + wall_db · walls`.
pub fn path_loss(a: Point, b: Point, truth: &OccupancyGrid, params: &CommsParams) -> f64 {
    let d = a.dist(b).max(params.d0);
    params.pl0_db + 10.0 * params.exponent * (d / params.d0).log10() + params.wall_db * wall_count(a, b, truth) as f64
}

pub fn received_power(a: Point, b: Point, truth: &OccupancyGrid, params: &CommsParams) -> f64 {
    params.p_t_dbm - path_loss(a, b, truth, params)
}

/// Link test. Both thresholds are closed: `d ≤ d_comm`, `P_R ≥ P_thresh`.
pub fn is_connected(a: Point, b: Point, truth: &OccupancyGrid, params: &CommsParams) -> bool {
    match params.mode {
        CommsMode::Proximity => a.dist(b) <= params.d_comm,
        CommsMode::Signal => received_power(a, b, truth, params) >= params.p_thresh_dbm,
        CommsMode::Disabled => false,
    }
}

/// Partition of robot indices into multi-hop connected groups, each sorted,
/// ordered by smallest member.
pub fn connectivity_components(positions: &[Point], truth: &OccupancyGrid, params: &CommsParams) -> Vec<Vec<usize>> {
    let mut dsu = DisjointSet::new(positions.len());
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if is_connected(positions[i], positions[j], truth, params) {
                dsu.union(i, j);
            }
        }
    }
    dsu.groups()
}

/// Telemetry for one information exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub step: u32,
    pub members: Vec<usize>,
    /// Cells each member learned, aligned with `members`.
    pub cells_merged: Vec<usize>,
    /// Global-graph vertices handed from teammates, summed over members.
    pub graph_nodes: usize,
}

impl CommEvent {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", serde_json::to_string(self).map_err(std::io::Error::other)?)
    }
}

pub struct SyncContext<'a> {
    pub truth: &'a OccupancyGrid,
    pub comms: &'a CommsParams,
    pub graph: &'a GraphParams,
    pub step: u32,
}

/// Exchanges maps, positions and global graphs among `members`, which must
/// form one connected group. Beliefs become the cell-wise join of all members'
/// beliefs; each member records every other member's pose and known area; and
/// each member merges the others' pre-exchange global graphs in id order.
/// A single-member group is a no-op and yields no event.
pub fn sync_component(robots: &mut [RobotState], members: &[usize], ctx: &SyncContext<'_>) -> Result<Option<CommEvent>> {
    let mut members: Vec<usize> = members.to_vec();
    members.sort_unstable();
    members.dedup();
    if let Some(&bad) = members.iter().find(|&&m| m >= robots.len()) {
        return Err(Error::Contract(format!("robot {bad} does not exist")));
    }
    if members.len() < 2 {
        return Ok(None);
    }
    let positions: Vec<Point> = members.iter().map(|&m| ctx.truth.cell_center(robots[m].cell)).collect();
    if connectivity_components(&positions, ctx.truth, ctx.comms).len() != 1 {
        return Err(Error::Contract(format!("robots {members:?} are not one connected component")));
    }

    let mut union = robots[members[0]].belief.clone();
    for &m in &members[1..] {
        union.merge_from(&robots[m].belief)?;
    }
    let known = union.known_count();
    let poses: Vec<(usize, CellCoord)> = members.iter().map(|&m| (m, robots[m].cell)).collect();
    let snapshots: Vec<_> = members.iter().map(|&m| robots[m].global.clone()).collect();

    let mut cells_merged = Vec::with_capacity(members.len());
    let mut graph_nodes = 0;
    for (slot, &i) in members.iter().enumerate() {
        let robot = &mut robots[i];
        cells_merged.push(known - robot.belief.known_count());
        robot.belief = union.clone();
        for &(k, cell) in &poses {
            if k != i {
                robot.teammates[k] = Some(TeammateInfo { cell, step: ctx.step, known_area: known });
            }
        }
        let exempt: BTreeSet<CellCoord> = robot.robot_cells().collect();
        let mut global = robot.global.clone();
        for (other, snapshot) in snapshots.iter().enumerate() {
            if other == slot {
                continue;
            }
            graph_nodes += snapshot.len();
            global = merge_global_graphs(&global, snapshot, union.grid(), ctx.graph, &exempt);
        }
        robot.global = global;
    }
    Ok(Some(CommEvent { step: ctx.step, members, cells_merged, graph_nodes }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn open() -> OccupancyGrid {
        OccupancyGrid::filled(40, 40, 1.0, Cell::Free)
    }

    #[test]
    fn reference_distance_gives_pl0() {
        let p = CommsParams::default();
        let g = open();
        let a = Point::new(5.5, 5.5);
        assert_eq!(path_loss(a, Point::new(6.5, 5.5), &g, &p), p.pl0_db);
        // Closer than d0 is clamped.
        assert_eq!(path_loss(a, Point::new(5.7, 5.5), &g, &p), p.pl0_db);
    }

    #[test]
    fn proximity_threshold_is_closed() {
        let p = CommsParams::proximity(10.0);
        let g = open();
        assert!(is_connected(Point::new(0.5, 0.5), Point::new(10.5, 0.5), &g, &p));
        assert!(!is_connected(Point::new(0.5, 0.5), Point::new(10.6, 0.5), &g, &p));
    }

    #[test]
    fn walls_disconnect() {
        let mut g = open();
        for x in [10, 12, 14] {
            for y in 0..40 {
                g.set(CellCoord::new(x, y), Cell::Occupied);
            }
        }
        let p = CommsParams { mode: CommsMode::Signal, wall_db: 40.0, ..Default::default() };
        let (a, b) = (Point::new(8.5, 5.5), Point::new(16.5, 5.5));
        assert_eq!(wall_count(a, b, &g), 3);
        assert!(!is_connected(a, b, &g, &p));
        let p0 = CommsParams { wall_db: 0.0, ..p };
        assert!(is_connected(a, b, &g, &p0));
    }

    #[test]
    fn free_space_radius_default() {
        let r = CommsParams::default().free_space_radius();
        assert!((r - 100.0).abs() < 1e-9);
    }

    #[test]
    fn chain_is_one_component() {
        let p = CommsParams::proximity(5.0);
        let g = open();
        let pts = [Point::new(1.0, 1.0), Point::new(5.0, 1.0), Point::new(9.0, 1.0), Point::new(30.0, 30.0)];
        assert_eq!(connectivity_components(&pts, &g, &p), vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(connectivity_components(&pts, &g, &CommsParams::disabled()).len(), 4);
    }
}
