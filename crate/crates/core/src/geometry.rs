//! Cell coordinates, world points and the exact cell traversal shared by
//! lidar, line-of-sight and wall counting.

use serde::{Deserialize, Serialize};

/// Integer cell index on a grid. `x` grows to the right, `y` grows upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub x: i32,
    pub y: i32,
}

impl CellCoord {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Squared distance between cell centers, in cells².
    pub fn dist2(self, other: CellCoord) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    /// Distance between cell centers, in cells.
    pub fn dist(self, other: CellCoord) -> f64 {
        (self.dist2(other) as f64).sqrt()
    }

    pub fn neighbors4(self) -> [CellCoord; 4] {
        [
            CellCoord::new(self.x + 1, self.y),
            CellCoord::new(self.x - 1, self.y),
            CellCoord::new(self.x, self.y + 1),
            CellCoord::new(self.x, self.y - 1),
        ]
    }
}

/// A position in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Iterator over the cells whose open interior is crossed by the segment
/// joining the centers of two cells, endpoints included.
///
/// The traversal works in exact integer arithmetic: a crossing at
/// `x = i + 1/2` (in units of the step) happens at parameter `(2i+1)/(2dx)`,
/// so comparing `(2i+1)·dy` with `(2j+1)·dx` orders the crossings without
/// rounding. When the segment passes exactly through a cell corner both
/// coordinates advance together and neither side cell is visited.
#[derive(Debug, Clone)]
pub struct CellLine {
    cur: CellCoord,
    sx: i32,
    sy: i32,
    dx: i64,
    dy: i64,
    i: i64,
    j: i64,
    started: bool,
}

impl CellLine {
    pub fn new(from: CellCoord, to: CellCoord) -> Self {
        let dx = (to.x - from.x) as i64;
        let dy = (to.y - from.y) as i64;
        Self {
            cur: from,
            sx: dx.signum() as i32,
            sy: dy.signum() as i32,
            dx: dx.abs(),
            dy: dy.abs(),
            i: 0,
            j: 0,
            started: false,
        }
    }
}

impl Iterator for CellLine {
    type Item = CellCoord;

    fn next(&mut self) -> Option<CellCoord> {
        if !self.started {
            self.started = true;
            return Some(self.cur);
        }
        if self.i >= self.dx && self.j >= self.dy {
            return None;
        }
        let lhs = (2 * self.i + 1) * self.dy;
        let rhs = (2 * self.j + 1) * self.dx;
        if self.i < self.dx && (self.j >= self.dy || lhs < rhs) {
            self.cur.x += self.sx;
            self.i += 1;
        } else if self.j < self.dy && (self.i >= self.dx || lhs > rhs) {
            self.cur.y += self.sy;
            self.j += 1;
        } else {
            self.cur.x += self.sx;
            self.cur.y += self.sy;
            self.i += 1;
            self.j += 1;
        }
        Some(self.cur)
    }
}

/// Cells crossed by the center-to-center segment `from → to`, endpoints included.
pub fn cell_line(from: CellCoord, to: CellCoord) -> CellLine {
    CellLine::new(from, to)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: (i32, i32), b: (i32, i32)) -> Vec<(i32, i32)> {
        cell_line(CellCoord::new(a.0, a.1), CellCoord::new(b.0, b.1))
            .map(|c| (c.x, c.y))
            .collect()
    }

    #[test]
    fn degenerate_segment_is_single_cell() {
        assert_eq!(line((3, 4), (3, 4)), vec![(3, 4)]);
    }

    #[test]
    fn axis_aligned() {
        assert_eq!(line((0, 0), (3, 0)), vec![(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(line((0, 2), (0, -1)), vec![(0, 2), (0, 1), (0, 0), (0, -1)]);
    }

    #[test]
    fn exact_diagonal_skips_side_cells() {
        assert_eq!(line((0, 0), (2, 2)), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(line((0, 2), (2, 0)), vec![(0, 2), (1, 1), (2, 0)]);
    }

    #[test]
    fn shallow_line() {
        // Crossings at x=0.5 (t=1/4) precede y=0.5 (t=1/2) and x=1.5 (t=3/4).
        assert_eq!(line((0, 0), (2, 1)), vec![(0, 0), (1, 0), (1, 1), (2, 1)]);
    }

    #[test]
    fn reversal_visits_same_cells() {
        for &(a, b) in &[((0, 0), (7, 3)), ((2, 9), (-4, 1)), ((0, 0), (5, 5)), ((1, 1), (1, 8))] {
            let mut fwd = line(a, b);
            let mut rev = line(b, a);
            fwd.sort();
            rev.sort();
            assert_eq!(fwd, rev);
        }
    }
}
