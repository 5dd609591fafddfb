use std::collections::BTreeMap;

use petgraph::algo::astar;
use petgraph::graph::UnGraph;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrx::comms::CommsParams;
use mrx::env::{map_surplus_field, Episode, EpisodeConfig, SurplusParams, SurplusTarget};
use mrx::geometry::CellCoord;
use mrx::grid::Cell;
use mrx::mapgen::{MapKind, MapSpec};
use mrx::roadmap::{line_of_sight, HierGraph, Layer, VertexId};

/// Random tree, so every path is unique, plus the tree's vertex list.
fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> (HierGraph, Vec<VertexId>) {
    let mut g = HierGraph::new(0.5);
    let mut ids = Vec::new();
    while ids.len() < n {
        let c = CellCoord::new(rng.gen_range(0..60), rng.gen_range(0..60));
        if g.vertex_at(c).is_none() {
            let id = g.add_vertex(c, Layer::Global);
            if let Some(&parent) = ids.choose(rng) {
                g.add_edge(parent, id);
            }
            ids.push(id);
        }
    }
    (g, ids)
}

/// Linear profile along one path, from an independent shortest-path search.
fn profile(g: &HierGraph, own: VertexId, t: &SurplusTarget, s_min: f64) -> BTreeMap<VertexId, f64> {
    let mut pg = UnGraph::<VertexId, f64>::new_undirected();
    let ix: BTreeMap<VertexId, _> = g.ids().map(|id| (id, pg.add_node(id))).collect();
    for (a, b) in g.edges() {
        pg.add_edge(ix[&a], ix[&b], g.distance(a, b));
    }
    let goal = ix[&t.vertex];
    let (total, path) = astar(&pg, ix[&own], |n| n == goal, |e| *e.weight(), |_| 0.0).expect("tree is connected");
    let mut out = BTreeMap::new();
    let mut along = 0.0;
    for (i, &n) in path.iter().enumerate() {
        if i > 0 {
            along += g.distance(pg[path[i - 1]], pg[n]);
        }
        out.insert(pg[n], along * (t.delta_m - s_min) / total + s_min);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlapping_paths_take_the_larger_profile(seed in 0u64..100_000, n in 4usize..40, d1 in 20.0f64..400.0, d2 in 20.0f64..400.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, ids) = random_tree(&mut rng, n);
        let pick: Vec<VertexId> = ids.choose_multiple(&mut rng, 3).copied().collect();
        let params = SurplusParams { delta_min: 10.0, s_min: 1.0 };
        let targets = [
            SurplusTarget { teammate: 1, vertex: pick[1], delta_m: d1 },
            SurplusTarget { teammate: 2, vertex: pick[2], delta_m: d2 },
        ];
        let field = map_surplus_field(&g, pick[0], &targets, &params);
        let a = profile(&g, pick[0], &targets[0], params.s_min);
        let b = profile(&g, pick[0], &targets[1], params.s_min);
        for &v in &ids {
            let want = a.get(&v).copied().unwrap_or(0.0).max(b.get(&v).copied().unwrap_or(0.0));
            prop_assert!((field.value(v) - want).abs() <= 1e-9, "vertex {}: {} vs {}", v, field.value(v), want);
        }
    }
}

fn known_mask(grid: &mrx::grid::OccupancyGrid) -> Vec<bool> {
    grid.cells().iter().map(|c| c.is_known()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn episode_invariants_hold_every_step(seed in 0u64..10_000, n in 1usize..4, range in 6.0f64..30.0) {
        let kind = [MapKind::Simple, MapKind::Corridor][seed as usize % 2];
        let mut cfg = EpisodeConfig::new(MapSpec::cells(kind, seed, 50, 40), n, 40);
        cfg.comms = CommsParams::proximity(range);
        let weights = cfg.reward;
        let mut ep = Episode::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut before: Vec<(Vec<bool>, f64)> =
            (0..n).map(|i| (known_mask(ep.robots()[i].belief.grid()), ep.coverage(i).unwrap())).collect();
        while !ep.is_done() {
            let actions: Vec<usize> = ep
                .observations()
                .iter()
                .map(|o| {
                    let live: Vec<usize> = (0..o.candidates.len()).filter(|&s| o.candidates[s].is_some()).collect();
                    *live.choose(&mut rng).unwrap()
                })
                .collect();
            let out = ep.step(&actions).unwrap();

            for r in &out.rewards {
                let a = weights.alpha;
                let sum = a[0] * r.observable + a[1] * r.distance + a[2] * r.frontier + a[3] * r.surplus + r.completion;
                prop_assert!((r.total - sum).abs() <= 1e-9);
            }
            let union: Vec<bool> = (0..ep.truth().len())
                .map(|i| ep.robots().iter().any(|r| r.belief.grid().cells()[i].is_known()))
                .collect();
            prop_assert_eq!(known_mask(ep.privileged().grid()), union);
            for (i, robot) in ep.robots().iter().enumerate() {
                let mask = known_mask(robot.belief.grid());
                prop_assert!(before[i].0.iter().zip(&mask).all(|(was, is)| !was || *is), "robot {} forgot cells", i);
                let cov = ep.coverage(i).unwrap();
                prop_assert!(cov >= before[i].1);
                before[i] = (mask, cov);
                for (c, state) in robot.belief.grid().cells().iter().enumerate() {
                    prop_assert!(!state.is_known() || *state == ep.truth().cells()[c]);
                }
                let grid = robot.belief.grid();
                prop_assert!(robot.planning.edges().all(|(a, b)| line_of_sight(grid, robot.planning.cell(a), robot.planning.cell(b))));
            }
            for e in &out.events {
                let first = known_mask(ep.robots()[e.members[0]].belief.grid());
                for &m in &e.members[1..] {
                    prop_assert_eq!(&known_mask(ep.robots()[m].belief.grid()), &first);
                }
            }
            for o in ep.observations() {
                prop_assert_eq!(o.nodes.iter().filter(|x| x.indicator == -1.0).count(), 1);
                prop_assert_eq!(o.nodes[o.current].indicator, -1.0);
                for (i, x) in o.nodes.iter().enumerate() {
                    if x.indicator == 1.0 {
                        prop_assert!(o.teammates.iter().any(|t| t.node == i));
                    }
                }
            }
        }
        prop_assert!(ep.robots().iter().all(|r| ep.truth().get(r.cell) == Some(Cell::Free)));
    }
}
