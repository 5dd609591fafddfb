//! Procedural ground-truth maps.
//!
//! Every generator finishes with the same pass: the border is walled off and
//! only the largest 4-connected free component is kept, so generated maps
//! are always a single free region.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellCoord;
use crate::grid::{Cell, OccupancyGrid, DEFAULT_RESOLUTION};

pub const MIN_DIMENSION: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Empty,
    Simple,
    Corridor,
    Hybrid,
    Complex,
}

impl MapKind {
    pub const ALL: [MapKind; 5] =
        [MapKind::Empty, MapKind::Simple, MapKind::Corridor, MapKind::Hybrid, MapKind::Complex];

    /// Default physical extent in meters.
    pub fn default_extent(self) -> (f64, f64) {
        match self {
            MapKind::Empty => (10.0, 10.0),
            MapKind::Simple => (15.0, 15.0),
            MapKind::Corridor => (160.0, 120.0),
            MapKind::Hybrid => (125.0, 125.0),
            MapKind::Complex => (250.0, 250.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Empty => "empty",
            MapKind::Simple => "simple",
            MapKind::Corridor => "corridor",
            MapKind::Hybrid => "hybrid",
            MapKind::Complex => "complex",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown map kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub kind: MapKind,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl MapSpec {
    /// Map of `kind` at its default physical extent and 0.5 m cells.
    pub fn with_default_size(kind: MapKind, seed: u64) -> Self {
        let (w, h) = kind.default_extent();
        Self::from_extent(kind, seed, w, h, DEFAULT_RESOLUTION)
    }

    pub fn from_extent(kind: MapKind, seed: u64, width_m: f64, height_m: f64, resolution: f64) -> Self {
        Self {
            kind,
            seed,
            width: (width_m / resolution).round() as usize,
            height: (height_m / resolution).round() as usize,
            resolution,
        }
    }

    pub fn cells(kind: MapKind, seed: u64, width: usize, height: usize) -> Self {
        Self { kind, seed, width, height, resolution: DEFAULT_RESOLUTION }
    }
}

pub fn generate_map(spec: &MapSpec) -> Result<OccupancyGrid> {
    if spec.width < MIN_DIMENSION || spec.height < MIN_DIMENSION {
        return Err(Error::Config(format!(
            "map must be at least {MIN_DIMENSION}x{MIN_DIMENSION} cells, got {}x{}",
            spec.width, spec.height
        )));
    }
    if !(spec.resolution > 0.0) {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let min_dim = w.min(h);
    let mut grid = match spec.kind {
        MapKind::Empty => OccupancyGrid::filled(w, h, spec.resolution, Cell::Free),
        MapKind::Simple => simple(spec, &mut rng),
        MapKind::Corridor => {
            let hall = (min_dim / 16).clamp(5, 16);
            maze(spec, hall, 0.05, &mut rng)
        }
        MapKind::Hybrid => {
            let hall = (min_dim / 20).clamp(4, 12);
            let mut g = maze(spec, hall, 0.10, &mut rng);
            let (cw, ch) = ((w * 2 / 5).max(3), (h * 2 / 5).max(3));
            clear_rect(&mut g, (w - cw) / 2, (h - ch) / 2, cw, ch);
            g
        }
        MapKind::Complex => {
            let hall = (min_dim / 32).clamp(4, 12);
            let mut g = maze(spec, hall, 0.15, &mut rng);
            let rooms = 3 + rng.gen_range(0..3);
            for _ in 0..rooms {
                let rw = rng.gen_range((w / 8).max(3)..=(w / 4).max(3));
                let rh = rng.gen_range((h / 8).max(3)..=(h / 4).max(3));
                let x0 = rng.gen_range(1..=(w - 1 - rw).max(1));
                let y0 = rng.gen_range(1..=(h - 1 - rh).max(1));
                clear_rect(&mut g, x0, y0, rw, rh);
            }
            g
        }
    };
    finalize(&mut grid);
    Ok(grid)
}

fn simple(spec: &MapSpec, rng: &mut ChaCha8Rng) -> OccupancyGrid {
    let (w, h) = (spec.width, spec.height);
    let mut g = OccupancyGrid::filled(w, h, spec.resolution, Cell::Free);
    let count = (w * h / 150).max(3);
    let max_side = (w.min(h) / 5).max(3);
    for _ in 0..count {
        let rw = rng.gen_range(2..=max_side);
        let rh = rng.gen_range(2..=max_side);
        let x0 = rng.gen_range(2..w.saturating_sub(rw + 2).max(3));
        let y0 = rng.gen_range(2..h.saturating_sub(rh + 2).max(3));
        fill_rect(&mut g, x0, y0, rw, rh, Cell::Occupied);
    }
    g
}

/// Recursive-division maze on a coarse lattice of `hall`-wide rooms separated
/// by one-cell walls; `loops` is the fraction of remaining walls re-opened.
fn maze(spec: &MapSpec, hall: usize, loops: f64, rng: &mut ChaCha8Rng) -> OccupancyGrid {
    let (w, h) = (spec.width, spec.height);
    let pitch = hall + 1;
    let cols = ((w - 1) / pitch).max(1);
    let rows = ((h - 1) / pitch).max(1);
    // open_east[j][i]: passage between (i,j) and (i+1,j); open_north likewise.
    let mut open_east = vec![vec![true; cols]; rows];
    let mut open_north = vec![vec![true; cols]; rows];
    for j in 0..rows {
        open_east[j][cols - 1] = false;
    }
    for i in 0..cols {
        open_north[rows - 1][i] = false;
    }

    let mut stack = vec![(0usize, 0usize, cols, rows)];
    while let Some((x0, y0, cw, ch)) = stack.pop() {
        if cw < 2 && ch < 2 {
            continue;
        }
        let horizontal = if cw < 2 {
            true
        } else if ch < 2 {
            false
        } else if ch != cw {
            ch > cw
        } else {
            rng.gen_bool(0.5)
        };
        if horizontal {
            let r = y0 + rng.gen_range(0..ch - 1);
            let gap = x0 + rng.gen_range(0..cw);
            for i in x0..x0 + cw {
                open_north[r][i] = i == gap;
            }
            stack.push((x0, y0, cw, r - y0 + 1));
            stack.push((x0, r + 1, cw, y0 + ch - r - 1));
        } else {
            let c = x0 + rng.gen_range(0..cw - 1);
            let gap = y0 + rng.gen_range(0..ch);
            for j in y0..y0 + ch {
                open_east[j][c] = j == gap;
            }
            stack.push((x0, y0, c - x0 + 1, ch));
            stack.push((c + 1, y0, x0 + cw - c - 1, ch));
        }
    }
    for j in 0..rows {
        for i in 0..cols {
            if i + 1 < cols && !open_east[j][i] && rng.gen_bool(loops) {
                open_east[j][i] = true;
            }
            if j + 1 < rows && !open_north[j][i] && rng.gen_bool(loops) {
                open_north[j][i] = true;
            }
        }
    }

    let mut g = OccupancyGrid::filled(w, h, spec.resolution, Cell::Occupied);
    for j in 0..rows {
        for i in 0..cols {
            let (x0, y0) = (1 + i * pitch, 1 + j * pitch);
            fill_rect(&mut g, x0, y0, hall, hall, Cell::Free);
            if open_east[j][i] {
                fill_rect(&mut g, x0 + hall, y0, 1, hall, Cell::Free);
            }
            if open_north[j][i] {
                fill_rect(&mut g, x0, y0 + hall, hall, 1, Cell::Free);
            }
        }
    }
    g
}

fn fill_rect(g: &mut OccupancyGrid, x0: usize, y0: usize, w: usize, h: usize, state: Cell) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            g.set(CellCoord::new(x as i32, y as i32), state);
        }
    }
}

fn clear_rect(g: &mut OccupancyGrid, x0: usize, y0: usize, w: usize, h: usize) {
    fill_rect(g, x0, y0, w, h, Cell::Free);
}

fn finalize(g: &mut OccupancyGrid) {
    let (w, h) = (g.width() as i32, g.height() as i32);
    for x in 0..w {
        g.set(CellCoord::new(x, 0), Cell::Occupied);
        g.set(CellCoord::new(x, h - 1), Cell::Occupied);
    }
    for y in 0..h {
        g.set(CellCoord::new(0, y), Cell::Occupied);
        g.set(CellCoord::new(w - 1, y), Cell::Occupied);
    }
    let labels = free_components(g);
    let Some(largest) = largest_label(&labels) else { return };
    for (i, label) in labels.iter().enumerate() {
        if matches!(label, Some(l) if *l != largest) {
            let c = g.coord(i);
            g.set(c, Cell::Occupied);
        }
    }
}

/// Labels each free cell with its 4-connected component index (scan order).
pub fn free_components(g: &OccupancyGrid) -> Vec<Option<usize>> {
    let mut labels = vec![None; g.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if labels[start].is_some() || g.cells()[start] != Cell::Free {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for n in g.coord(i).neighbors4() {
                if let Some(j) = g.index(n) {
                    if labels[j].is_none() && g.cells()[j] == Cell::Free {
                        labels[j] = Some(next);
                        queue.push_back(j);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

fn largest_label(labels: &[Option<usize>]) -> Option<usize> {
    let n = labels.iter().flatten().max()? + 1;
    let mut sizes = vec![0usize; n];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    // Ties go to the lowest label.
    (0..n).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l)))
}
