use petgraph::unionfind::UnionFind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrx::comms::{
    connectivity_components, is_connected, received_power, sync_component, CommsMode, CommsParams, SyncContext,
};
use mrx::env::RobotState;
use mrx::geometry::{CellCoord, Point};
use mrx::grid::{lidar_scan, Cell, OccupancyGrid, SensorSpec};
use mrx::mapgen::{generate_map, MapKind, MapSpec};
use mrx::roadmap::GraphParams;

fn signal() -> CommsParams {
    CommsParams { mode: CommsMode::Signal, ..CommsParams::default() }
}

#[test]
fn radius_matches_bisection_on_the_link_test() {
    let p = CommsParams { wall_db: 0.0, ..signal() };
    let truth = OccupancyGrid::filled(600, 10, 0.5, Cell::Free);
    let a = Point::new(0.25, 2.25);
    let (mut lo, mut hi) = (1.0, 290.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if is_connected(a, Point::new(a.x + mid, a.y), &truth, &p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let radius = p.free_space_radius();
    assert!((lo - radius).abs() < 1e-9, "bisection {lo} vs closed form {radius}");
    assert!((radius - 100.0).abs() < 1e-9);
}

#[test]
fn partitions_match_union_find() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for layout in 0..50 {
        let truth = generate_map(&MapSpec::cells(MapKind::Corridor, layout, 120, 90)).unwrap();
        let free: Vec<CellCoord> = truth.free_cells().collect();
        let n = rng.gen_range(2..9);
        let pts: Vec<Point> = (0..n).map(|_| truth.cell_center(free[rng.gen_range(0..free.len())])).collect();
        for params in [CommsParams::proximity(12.0), signal()] {
            let mut uf = UnionFind::<usize>::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if is_connected(pts[i], pts[j], &truth, &params) {
                        uf.union(i, j);
                    }
                }
            }
            let groups = connectivity_components(&pts, &truth, &params);
            assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), n);
            for g in &groups {
                for &i in g {
                    for j in 0..n {
                        assert_eq!(uf.equiv(i, j), g.contains(&j), "layout {layout}");
                    }
                }
            }
        }
    }
}

fn scanned_robots(truth: &OccupancyGrid, cells: &[CellCoord]) -> Vec<RobotState> {
    let spec = SensorSpec::default();
    cells
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut r = RobotState::new(i, c, truth, cells.len());
            r.belief.integrate_scan(&lidar_scan(truth, truth.cell_center(c), &spec).unwrap(), 1).unwrap();
            r
        })
        .collect()
}

#[test]
fn sync_order_does_not_matter() {
    let truth = generate_map(&MapSpec::cells(MapKind::Simple, 8, 60, 40)).unwrap();
    let free: Vec<CellCoord> = truth.free_cells().collect();
    let cells = [free[10], free[free.len() / 2], free[free.len() - 10]];
    let comms = CommsParams::proximity(200.0);
    let graph = GraphParams::default();
    let ctx = SyncContext { truth: &truth, comms: &comms, graph: &graph, step: 4 };

    let mut oracle = scanned_robots(&truth, &cells)[0].belief.clone();
    for r in &scanned_robots(&truth, &cells)[1..] {
        oracle.merge_from(&r.belief).unwrap();
    }
    for order in [[0, 1, 2], [2, 1, 0], [1, 0, 2], [2, 0, 1]] {
        let mut robots = scanned_robots(&truth, &cells);
        let event = sync_component(&mut robots, &order, &ctx).unwrap().unwrap();
        assert_eq!(event.members, vec![0, 1, 2]);
        for r in &robots {
            assert_eq!(r.belief, oracle);
        }
    }
    // Pairwise syncs in any order reach the same grids.
    for pairs in [[[0, 1], [1, 2], [0, 2]], [[1, 2], [0, 2], [0, 1]], [[0, 2], [0, 1], [1, 2]]] {
        let mut robots = scanned_robots(&truth, &cells);
        for p in pairs {
            sync_component(&mut robots, &p, &ctx).unwrap();
        }
        for r in &robots {
            assert_eq!(r.belief.grid(), oracle.grid());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn links_are_symmetric(seed in 0u64..500, ax in 0.0f64..40.0, ay in 0.0f64..30.0, bx in 0.0f64..40.0, by in 0.0f64..30.0) {
        let truth = generate_map(&MapSpec::cells(MapKind::Hybrid, seed % 7, 80, 60)).unwrap();
        let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
        for p in [signal(), CommsParams::proximity(15.0), CommsParams::disabled()] {
            prop_assert_eq!(is_connected(a, b, &truth, &p), is_connected(b, a, &truth, &p));
        }
    }

    #[test]
    fn power_falls_with_distance_in_free_space(d1 in 0.01f64..300.0, d2 in 0.01f64..300.0) {
        let truth = OccupancyGrid::filled(700, 4, 0.5, Cell::Free);
        let a = Point::new(0.25, 1.0);
        let p = signal();
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let pn = received_power(a, Point::new(a.x + near, 1.0), &truth, &p);
        let pf = received_power(a, Point::new(a.x + far, 1.0), &truth, &p);
        prop_assert!(pn >= pf);
    }
}
