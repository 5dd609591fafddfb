//! Occupancy grids for ground truth and robot beliefs, lidar sensing,
//! frontier extraction, coverage accounting and the ASCII map format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cell_line, CellCoord, Point};

/// Default meters per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.5;

/// Coverage fraction at which a belief counts as fully explored.
pub const COMPLETION_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Unknown,
    Free,
    Occupied,
}

impl Cell {
    pub fn is_known(self) -> bool {
        self != Cell::Unknown
    }

    fn to_char(self) -> char {
        match self {
            Cell::Unknown => '?',
            Cell::Free => '.',
            Cell::Occupied => '#',
        }
    }

    fn from_char(c: char) -> Option<Cell> {
        match c {
            '?' => Some(Cell::Unknown),
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn filled(width: usize, height: usize, resolution: f64, state: Cell) -> Self {
        Self { width, height, resolution, cells: vec![state; width * height] }
    }

    pub fn unknown(width: usize, height: usize, resolution: f64) -> Self {
        Self::filled(width, height, resolution, Cell::Unknown)
    }

    /// Builds a grid from rows of `#`, `.` and `?`, first row at the top.
    pub fn from_rows(rows: &[&str], resolution: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut grid = Self::unknown(width, height, resolution);
        for (line, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::MapParse { line: line + 1, msg: "ragged row".into() });
            }
            let y = (height - 1 - line) as i32;
            for (x, ch) in row.chars().enumerate() {
                let cell = Cell::from_char(ch).ok_or_else(|| Error::MapParse {
                    line: line + 1,
                    msg: format!("unexpected character {ch:?}"),
                })?;
                grid.set(CellCoord::new(x as i32, y), cell);
            }
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_bounds(&self, c: CellCoord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn index(&self, c: CellCoord) -> Option<usize> {
        self.in_bounds(c).then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn coord(&self, index: usize) -> CellCoord {
        CellCoord::new((index % self.width) as i32, (index / self.width) as i32)
    }

    pub fn get(&self, c: CellCoord) -> Option<Cell> {
        self.index(c).map(|i| self.cells[i])
    }

    /// Out-of-bounds writes are ignored.
    pub fn set(&mut self, c: CellCoord, state: Cell) {
        if let Some(i) = self.index(c) {
            self.cells[i] = state;
        }
    }

    pub fn is_free(&self, c: CellCoord) -> bool {
        self.get(c) == Some(Cell::Free)
    }

    pub fn is_occupied(&self, c: CellCoord) -> bool {
        self.get(c) == Some(Cell::Occupied)
    }

    pub fn count(&self, state: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_known()).count()
    }

    pub fn cell_center(&self, c: CellCoord) -> Point {
        Point::new((c.x as f64 + 0.5) * self.resolution, (c.y as f64 + 0.5) * self.resolution)
    }

    pub fn cell_of(&self, p: Point) -> CellCoord {
        CellCoord::new((p.x / self.resolution).floor() as i32, (p.y / self.resolution).floor() as i32)
    }

    /// Physical diagonal of the grid in meters.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64 * self.resolution).hypot(self.height as f64 * self.resolution)
    }

    pub fn same_geometry(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width && self.height == other.height && self.resolution == other.resolution
    }

    fn check_geometry(&self, other: &OccupancyGrid) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{}x{}@{} vs {}x{}@{}",
                self.width, self.height, self.resolution, other.width, other.height, other.resolution
            )))
        }
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Cell::Free)
            .map(|(i, _)| self.coord(i))
    }

    /// Writes every sensed state. Unknown cells become known; known cells take
    /// the newer observation.
    pub fn integrate_scan(&mut self, updates: &CellUpdates) -> Result<()> {
        updates.check_geometry(self)?;
        for &(c, state) in &updates.cells {
            if state.is_known() {
                self.set(c, state);
            }
        }
        Ok(())
    }

    /// Serializes to the ASCII map format: a `W H RES` header, then `H` rows
    /// of `#`/`.`/`?`, top row (highest `y`) first.
    pub fn to_map_string(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1));
        let _ = writeln!(out, "{} {} {}", self.width, self.height, self.resolution);
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                out.push(self.cells[y * self.width + x].to_char());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_map(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::MapParse { line: 1, msg: "missing header".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MapParse { line: 1, msg: "header must be `W H RES`".into() });
        }
        let bad = |msg: &str| Error::MapParse { line: 1, msg: msg.into() };
        let width: usize = fields[0].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[1].parse().map_err(|_| bad("bad height"))?;
        let resolution: f64 = fields[2].parse().map_err(|_| bad("bad resolution"))?;
        if !(resolution > 0.0) {
            return Err(bad("resolution must be positive"));
        }
        let rows: Vec<&str> = lines.take(height).collect();
        if rows.len() != height {
            return Err(Error::MapParse { line: rows.len() + 2, msg: "too few rows".into() });
        }
        let grid = Self::from_rows(&rows, resolution).map_err(|e| match e {
            Error::MapParse { line, msg } => Error::MapParse { line: line + 1, msg },
            other => other,
        })?;
        if grid.width != width {
            return Err(Error::MapParse { line: 2, msg: format!("expected {width} columns") });
        }
        Ok(grid)
    }
}

/// 360° lidar model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Sensing range in meters.
    pub range: f64,
    pub ray_count: u32,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { range: 8.0, ray_count: 360 }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0) {
            return Err(Error::Config("sensor range must be positive".into()));
        }
        if self.ray_count < 4 {
            return Err(Error::Config("sensor needs at least 4 rays".into()));
        }
        Ok(())
    }

    /// Range in cells for a grid of the given resolution.
    pub fn range_cells(&self, resolution: f64) -> f64 {
        self.range / resolution
    }
}

/// Observed `(cell, state)` pairs, sorted by row then column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellUpdates {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub cells: Vec<(CellCoord, Cell)>,
}

impl CellUpdates {
    pub fn empty_for(grid: &OccupancyGrid) -> Self {
        Self { width: grid.width, height: grid.height, resolution: grid.resolution, cells: Vec::new() }
    }

    fn check_geometry(&self, grid: &OccupancyGrid) -> Result<()> {
        if self.width == grid.width && self.height == grid.height && self.resolution == grid.resolution {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "updates {}x{}@{} vs grid {}x{}@{}",
                self.width, self.height, self.resolution, grid.width, grid.height, grid.resolution
            )))
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Cells visible from `origin` within `range_cells`: every cell whose center
/// lies within range and whose center segment from the origin crosses no
/// occupied cell before reaching it. Occupied cells are reported when the
/// segment enters them.
pub fn visible_cells(truth: &OccupancyGrid, origin: CellCoord, range_cells: f64) -> Vec<CellCoord> {
    let r2 = range_cells * range_cells;
    let reach = range_cells.floor() as i32;
    let mut out = Vec::new();
    for y in (origin.y - reach).max(0)..=(origin.y + reach).min(truth.height as i32 - 1) {
        for x in (origin.x - reach).max(0)..=(origin.x + reach).min(truth.width as i32 - 1) {
            let target = CellCoord::new(x, y);
            if origin.dist2(target) as f64 > r2 {
                continue;
            }
            let blocked = cell_line(origin, target)
                .filter(|&c| c != target)
                .any(|c| truth.is_occupied(c));
            if !blocked {
                out.push(target);
            }
        }
    }
    out
}

/// Lidar observation from `pose`. The sensor origin is the center of the
/// cell containing `pose`.
pub fn lidar_scan(truth: &OccupancyGrid, pose: Point, spec: &SensorSpec) -> Result<CellUpdates> {
    spec.validate()?;
    let origin = truth.cell_of(pose);
    if !truth.is_free(origin) {
        return Err(Error::InvalidPose(origin));
    }
    let cells = visible_cells(truth, origin, spec.range_cells(truth.resolution))
        .into_iter()
        .map(|c| (c, truth.get(c).expect("in bounds")))
        .collect();
    Ok(CellUpdates { width: truth.width, height: truth.height, resolution: truth.resolution, cells })
}

/// A robot's map belief: an occupancy grid plus, for each known cell, the
/// decision step at which it was last observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    grid: OccupancyGrid,
    stamps: Vec<u32>,
}

impl Belief {
    pub fn unknown_like(truth: &OccupancyGrid) -> Self {
        let grid = OccupancyGrid::unknown(truth.width, truth.height, truth.resolution);
        let stamps = vec![0; grid.len()];
        Self { grid, stamps }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn stamp(&self, c: CellCoord) -> Option<u32> {
        self.grid.index(c).filter(|&i| self.grid.cells[i].is_known()).map(|i| self.stamps[i])
    }

    pub fn known_count(&self) -> usize {
        self.grid.known_count()
    }

    /// Integrates a scan taken at decision step `stamp`. Returns the number of
    /// previously unknown cells that became known.
    pub fn integrate_scan(&mut self, updates: &CellUpdates, stamp: u32) -> Result<usize> {
        updates.check_geometry(&self.grid)?;
        let mut gained = 0;
        for &(c, state) in &updates.cells {
            let Some(i) = self.grid.index(c) else { continue };
            if !state.is_known() {
                continue;
            }
            let old = self.grid.cells[i];
            if !old.is_known() {
                gained += 1;
            } else if self.stamps[i] > stamp {
                continue;
            }
            self.grid.cells[i] = state;
            self.stamps[i] = stamp;
        }
        Ok(gained)
    }

    /// Cell-wise join: known beats unknown, the newer stamp wins, and on equal
    /// stamps `Occupied` beats `Free`. The join is commutative, associative
    /// and idempotent. Returns the number of cells that became known.
    pub fn merge_from(&mut self, other: &Belief) -> Result<usize> {
        self.grid.check_geometry(&other.grid)?;
        let mut gained = 0;
        for i in 0..self.grid.cells.len() {
            let theirs = other.grid.cells[i];
            if !theirs.is_known() {
                continue;
            }
            let mine = self.grid.cells[i];
            let take = if !mine.is_known() {
                gained += 1;
                true
            } else {
                (other.stamps[i], rank(theirs)) > (self.stamps[i], rank(mine))
            };
            if take {
                self.grid.cells[i] = theirs;
                self.stamps[i] = other.stamps[i];
            }
        }
        Ok(gained)
    }
}

fn rank(c: Cell) -> u8 {
    match c {
        Cell::Unknown => 0,
        Cell::Free => 1,
        Cell::Occupied => 2,
    }
}

/// Free cells that are 4-adjacent to at least one unknown cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrontierSet {
    pub cells: Vec<CellCoord>,
}

impl FrontierSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn is_frontier(belief: &OccupancyGrid, c: CellCoord) -> bool {
    belief.is_free(c) && c.neighbors4().iter().any(|&n| belief.get(n) == Some(Cell::Unknown))
}

pub fn extract_frontiers(belief: &OccupancyGrid) -> FrontierSet {
    let cells = belief.free_cells().filter(|&c| is_frontier(belief, c)).collect();
    FrontierSet { cells }
}

/// |Free(belief) ∩ Free(truth)| / |Free(truth)|.
pub fn coverage_fraction(belief: &OccupancyGrid, truth: &OccupancyGrid) -> Result<f64> {
    truth.check_geometry(belief)?;
    let mut truth_free = 0usize;
    let mut hit = 0usize;
    for (b, t) in belief.cells.iter().zip(&truth.cells) {
        if *t == Cell::Free {
            truth_free += 1;
            if *b == Cell::Free {
                hit += 1;
            }
        }
    }
    if truth_free == 0 {
        return Err(Error::NoFreeSpace);
    }
    Ok(hit as f64 / truth_free as f64)
}
