use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::dijkstra;
use petgraph::graph::UnGraph;
use petgraph::unionfind::UnionFind;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrx::geometry::CellCoord;
use mrx::grid::{extract_frontiers, lidar_scan, Belief, Cell, OccupancyGrid, SensorSpec};
use mrx::mapgen::{generate_map, MapKind, MapSpec};
use mrx::roadmap::{
    astar_cells, build_local_graph, extend_global_graph, frontier_centers, knn_los_edges, line_of_sight,
    merge_global_graphs, planning_graph, prune_global_graph, union_with_attachments, FrontierIndex, GraphParams,
    HierGraph, Layer, VertexId,
};

/// Does the center segment `a → b` pass through the open interior of `c`?
/// Exact: coordinates are doubled so cell centers are odd integers.
fn crosses(a: CellCoord, b: CellCoord, c: CellCoord) -> bool {
    let (ax, ay) = (2 * a.x as i128 + 1, 2 * a.y as i128 + 1);
    let (dx, dy) = (2 * (b.x - a.x) as i128, 2 * (b.y - a.y) as i128);
    // Parameter interval (num/den pairs) where the segment is strictly inside a slab.
    let slab = |p: i128, d: i128, lo: i128| -> Option<((i128, i128), (i128, i128))> {
        if d == 0 {
            return (lo < p && p < lo + 2).then_some(((-1, 1), (2, 1)));
        }
        let (t0, t1) = if d > 0 { ((lo - p, d), (lo + 2 - p, d)) } else { ((lo + 2 - p, d), (lo - p, d)) };
        let fix = |(n, d): (i128, i128)| if d < 0 { (-n, -d) } else { (n, d) };
        Some((fix(t0), fix(t1)))
    };
    let lt = |a: (i128, i128), b: (i128, i128)| a.0 * b.1 < b.0 * a.1;
    let (Some((x0, x1)), Some((y0, y1))) = (slab(ax, dx, 2 * c.x as i128), slab(ay, dy, 2 * c.y as i128)) else {
        return false;
    };
    let lo = if lt(x0, y0) { y0 } else { x0 };
    let hi = if lt(x1, y1) { x1 } else { y1 };
    lt(lo, hi) && lt(lo, (1, 1)) && lt((0, 1), hi)
}

fn oracle_los(g: &OccupancyGrid, a: CellCoord, b: CellCoord) -> bool {
    let (lx, hx) = (a.x.min(b.x), a.x.max(b.x));
    let (ly, hy) = (a.y.min(b.y), a.y.max(b.y));
    (ly..=hy).all(|y| {
        (lx..=hx).all(|x| {
            let c = CellCoord::new(x, y);
            g.is_free(c) || !(c == a || c == b || crosses(a, b, c))
        })
    })
}

fn cluttered(seed: u64, w: usize, h: usize, density: f64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = OccupancyGrid::filled(w, h, 0.5, Cell::Free);
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if rng.gen_bool(density) {
                g.set(CellCoord::new(x, y), Cell::Occupied);
            }
        }
    }
    g
}

fn random_cells(rng: &mut ChaCha8Rng, g: &OccupancyGrid, n: usize) -> Vec<CellCoord> {
    let mut free: Vec<CellCoord> = g.free_cells().collect();
    free.shuffle(rng);
    free.truncate(n);
    free
}

#[test]
fn line_of_sight_matches_exact_segment_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut blocked = 0;
    for pair in 0..500u64 {
        let g = cluttered(pair / 10, 40, 40, 0.15);
        let a = CellCoord::new(rng.gen_range(0..40), rng.gen_range(0..40));
        let b = CellCoord::new((a.x + rng.gen_range(-10..=10)).clamp(0, 39), (a.y + rng.gen_range(-10..=10)).clamp(0, 39));
        let want = oracle_los(&g, a, b);
        assert_eq!(line_of_sight(&g, a, b), want, "pair {pair}: {a:?} -> {b:?}");
        blocked += !want as usize;
    }
    assert!(blocked > 50 && blocked < 450);
}

#[test]
fn knn_edges_match_all_pairs_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..20 {
        let g = cluttered(100 + trial, 50, 50, 0.1);
        let cells = random_cells(&mut rng, &g, 40);
        let verts: Vec<(VertexId, CellCoord)> = cells.iter().enumerate().map(|(i, &c)| (i as VertexId * 3 + 1, c)).collect();
        let k = 1 + trial as usize % 8;
        let mut want = BTreeSet::new();
        for &(id, c) in &verts {
            let mut others: Vec<(i64, VertexId, CellCoord)> =
                verts.iter().filter(|v| v.0 != id).map(|&(o, oc)| (c.dist2(oc), o, oc)).collect();
            others.sort();
            for (_, o, _) in others.into_iter().filter(|&(_, _, oc)| oracle_los(&g, c, oc)).take(k) {
                want.insert((id.min(o), id.max(o)));
            }
        }
        assert_eq!(knn_los_edges(&verts, &g, k), want, "trial {trial}");
    }
}

fn scanned_belief(truth: &OccupancyGrid, rng: &mut ChaCha8Rng, scans: usize) -> (Belief, CellCoord) {
    let spec = SensorSpec::default();
    let mut belief = Belief::unknown_like(truth);
    let free: Vec<CellCoord> = truth.free_cells().collect();
    let robot = free[rng.gen_range(0..free.len())];
    let mut at = robot;
    for i in 0..scans {
        belief.integrate_scan(&lidar_scan(truth, truth.cell_center(at), &spec).unwrap(), i as u32).unwrap();
        let known: Vec<CellCoord> = belief.grid().free_cells().collect();
        at = known[rng.gen_range(0..known.len())];
    }
    (belief, robot)
}

#[test]
fn frontier_centers_cover_and_separate() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let params = GraphParams::default();
    for seed in 0..20 {
        let truth = generate_map(&MapSpec::cells(MapKind::Hybrid, seed, 100, 80)).unwrap();
        let (belief, robot) = scanned_belief(&truth, &mut rng, 4);
        let grid = belief.grid();
        let fi = FrontierIndex::new(grid, &extract_frontiers(grid));
        let local = build_local_graph(grid, robot, &params, 8.0, &fi);
        let centers = frontier_centers(&local, params.r_g);
        let r = params.r_g / grid.resolution();
        for (i, a) in centers.iter().enumerate() {
            for b in &centers[i + 1..] {
                assert!(a.cell.dist(b.cell) >= r, "centers {:?} {:?}", a.cell, b.cell);
            }
        }
        for v in local.vertices().filter(|v| v.utility > 0) {
            assert!(centers.iter().any(|c| c.cell.dist(v.cell) <= r), "vertex {:?} uncovered", v.cell);
        }
    }
}

#[test]
fn corridor_offshoot_follows_the_axis() {
    let mut g = OccupancyGrid::filled(80, 9, 0.5, Cell::Occupied);
    for x in 1..79 {
        for y in 1..8 {
            g.set(CellCoord::new(x, y), Cell::Free);
        }
    }
    let params = GraphParams::default();
    let (robot, center) = (CellCoord::new(2, 4), CellCoord::new(76, 4));
    let mut global = HierGraph::new(0.5);
    let report = extend_global_graph(&mut global, robot, &[center], &g, &params);
    assert!(report.unreachable.is_empty());
    for v in global.vertices() {
        assert_eq!(v.cell.y, 4, "{:?} off axis", v.cell);
    }
    let d = global.dijkstra(report.robot_vertex).distance(global.vertex_at(center).unwrap()).unwrap();
    let (_, astar) = astar_cells(&g, robot, center).unwrap();
    let straight = robot.dist(center) * 0.5;
    assert!(d - straight <= params.lattice_spacing && d <= astar * 0.5 + params.lattice_spacing);
}

#[test]
fn planning_graph_reaches_every_reachable_center() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let params = GraphParams::default();
    let mut checked = 0;
    for seed in 0..50 {
        let kind = [MapKind::Simple, MapKind::Corridor][seed as usize % 2];
        let truth = generate_map(&MapSpec::cells(kind, seed, 90, 70)).unwrap();
        let (belief, robot) = scanned_belief(&truth, &mut rng, 3);
        let grid = belief.grid();
        let fi = FrontierIndex::new(grid, &extract_frontiers(grid));
        let local = build_local_graph(grid, robot, &params, 8.0, &fi);
        let centers: Vec<CellCoord> = frontier_centers(&local, params.r_g).iter().map(|c| c.cell).collect();
        let mut global = HierGraph::new(grid.resolution());
        extend_global_graph(&mut global, robot, &centers, grid, &params);
        let plan = planning_graph(&global, &local, grid, &params);
        assert!(plan.edges().all(|(a, b)| line_of_sight(grid, plan.cell(a), plan.cell(b))));
        let from = plan.vertex_at(robot).expect("robot vertex");
        let tree = plan.dijkstra(from);
        for &c in &centers {
            if astar_cells(grid, robot, c).is_some() {
                let v = plan.vertex_at(c).expect("center vertex");
                assert!(tree.distance(v).is_some(), "map {seed}: center {c:?} unreachable");
                checked += 1;
            }
        }
    }
    assert!(checked > 50);
}

fn graph_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (0u64..100_000, 5usize..=200, 1usize..4)
}

fn random_graph(seed: u64, n: usize, degree: usize) -> HierGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = HierGraph::new(0.5);
    while g.len() < n {
        g.add_vertex(CellCoord::new(rng.gen_range(0..100), rng.gen_range(0..100)), Layer::Global);
    }
    let ids: Vec<VertexId> = g.ids().collect();
    for _ in 0..n * degree {
        let (a, b) = (*ids.choose(&mut rng).unwrap(), *ids.choose(&mut rng).unwrap());
        if a != b {
            g.add_edge(a, b);
        }
    }
    g
}

fn distances(g: &HierGraph, src: VertexId) -> BTreeMap<VertexId, f64> {
    let mut pg = UnGraph::<VertexId, f64>::new_undirected();
    let ix: BTreeMap<VertexId, _> = g.ids().map(|id| (id, pg.add_node(id))).collect();
    for (a, b) in g.edges() {
        pg.add_edge(ix[&a], ix[&b], g.distance(a, b));
    }
    dijkstra(&pg, ix[&src], None, |e| *e.weight()).into_iter().map(|(n, d)| (pg[n], d)).collect()
}

fn roadmap(seed: u64, grid: &OccupancyGrid, n: usize) -> HierGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = HierGraph::new(grid.resolution());
    let ids: Vec<VertexId> = random_cells(&mut rng, grid, n).into_iter().map(|c| g.add_vertex(c, Layer::Global)).collect();
    g.connect_knn(grid, 3, &ids);
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruning_keeps_robot_to_center_distances((seed, n, degree) in graph_strategy()) {
        let g = random_graph(seed, n, degree);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let ids: Vec<VertexId> = g.ids().collect();
        let robots: Vec<VertexId> = ids.choose_multiple(&mut rng, 3).copied().collect();
        let centers: Vec<VertexId> = ids.choose_multiple(&mut rng, 5).copied().collect();
        let pruned = prune_global_graph(&g, &robots, &centers);
        prop_assert!(pruned.len() <= g.len());
        for &r in &robots {
            prop_assert!(pruned.contains(r));
            let (full, kept) = (distances(&g, r), distances(&pruned, r));
            for c in &centers {
                prop_assert_eq!(full.get(c), kept.get(c));
            }
        }
    }

    #[test]
    fn merge_keeps_connectivity_and_sight(seed in 0u64..100_000, n1 in 2usize..30, n2 in 0usize..30) {
        let grid = generate_map(&MapSpec::cells(MapKind::Corridor, seed % 13, 60, 60)).unwrap();
        let mine = roadmap(seed, &grid, n1);
        let incoming = roadmap(seed + 7, &grid, n2);
        let exempt: BTreeSet<CellCoord> = mine.vertices().take(1).map(|v| v.cell).collect();
        let params = GraphParams::default();
        let (raw, _) = union_with_attachments(&mine, &incoming, &grid, params.k);
        let merged = merge_global_graphs(&mine, &incoming, &grid, &params, &exempt);
        prop_assert!(merged.len() <= raw.len());
        prop_assert!(merged.edges_have_los(&grid));
        for c in &exempt {
            prop_assert!(merged.vertex_at(*c).is_some());
        }
        let ids: Vec<VertexId> = raw.ids().collect();
        let pos: BTreeMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut uf = UnionFind::<usize>::new(ids.len());
        for (a, b) in raw.edges() {
            uf.union(pos[&a], pos[&b]);
        }
        let labels = merged.component_labels();
        let kept: Vec<VertexId> = merged.ids().collect();
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert_eq!(uf.equiv(pos[a], pos[b]), labels[a] == labels[b]);
            }
        }
    }
}
