use super::*;
use crate::comms::CommsMode;
use crate::grid::{Cell, CellUpdates};

fn open_map(n: usize) -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(n, n, 0.5, Cell::Free);
    for i in 0..n as i32 {
        for c in [CellCoord::new(i, 0), CellCoord::new(i, n as i32 - 1), CellCoord::new(0, i), CellCoord::new(n as i32 - 1, i)] {
            g.set(c, Cell::Occupied);
        }
    }
    g
}

fn config(n: usize, budget: u32) -> EpisodeConfig {
    let mut c = EpisodeConfig::new(MapSpec::cells(MapKind::Empty, 1, 40, 40), n, budget);
    c.sensor.range = 4.0;
    c
}

fn greedy(o: &Observation) -> usize {
    let best = (0..o.candidates.len())
        .filter_map(|s| o.candidates[s].map(|n| (o.utility[n], std::cmp::Reverse(s))))
        .max()
        .unwrap();
    if best.0 > 0 {
        return best.1 .0;
    }
    let (dist, _) = o.shortest_from(o.current);
    let target = (0..o.len())
        .filter(|&n| o.utility[n] > 0 && dist[n].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    target.and_then(|t| o.step_toward(t)).unwrap_or(0)
}

#[test]
fn initial_observation_single_robot() {
    let truth = open_map(40);
    let ep = Episode::with_starts(config(1, 10), truth, &[CellCoord::new(18, 18)]).unwrap();
    let o = ep.observation(0);
    assert_eq!(o.nodes.iter().filter(|n| n.indicator == -1.0).count(), 1);
    assert_eq!(o.nodes[o.current].indicator, -1.0);
    assert!(o.nodes.iter().all(|n| n.indicator <= 0.0));
    assert!(o.surplus.iter().all(|&s| s == 0.0));
    assert_eq!(o.nodes[o.current].guidepost, 1.0);
    let visited: Vec<_> = (0..o.len()).filter(|&i| o.nodes[i].guidepost == 1.0).collect();
    assert_eq!(visited, vec![o.current]);
}

#[test]
fn candidates_are_sorted_neighbors() {
    let truth = open_map(40);
    let ep = Episode::with_starts(config(1, 10), truth, &[CellCoord::new(18, 18)]).unwrap();
    let o = ep.observation(0);
    let adj = o.adjacency();
    let real: Vec<usize> = o.candidates.iter().flatten().copied().collect();
    assert!(!real.is_empty());
    for &c in &real {
        assert!(adj[o.current].contains(&c));
    }
    let mut brute: Vec<_> = adj[o.current].iter().map(|&n| (o.distance(o.current, n), o.vertices[n], n)).collect();
    brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let want: Vec<usize> = brute.iter().take(o.candidates.len()).map(|t| t.2).collect();
    assert_eq!(real, want);
}

#[test]
fn few_neighbors_are_padded() {
    let mut g = HierGraph::new(1.0);
    let a = g.add_vertex(CellCoord::new(0, 0), crate::roadmap::Layer::Global);
    let b = g.add_vertex(CellCoord::new(3, 0), crate::roadmap::Layer::Global);
    let c = g.add_vertex(CellCoord::new(0, 2), crate::roadmap::Layer::Global);
    g.add_edge(a, b);
    g.add_edge(a, c);
    let index = [(a, 0), (b, 1), (c, 2)].into_iter().collect();
    let (cand, fallback) = action_candidates(&g, a, &index, 5);
    assert_eq!(cand, vec![Some(2), Some(1), None, None, None]);
    assert!(!fallback);
    let lone = g.add_vertex(CellCoord::new(9, 9), crate::roadmap::Layer::Global);
    let index = [(a, 0), (b, 1), (c, 2), (lone, 3)].into_iter().collect();
    let (cand, fallback) = action_candidates(&g, lone, &index, 3);
    assert_eq!(cand, vec![Some(3), None, None]);
    assert!(fallback);
}

use crate::roadmap::HierGraph;

#[test]
fn invalid_slot_is_contract_error() {
    let truth = open_map(40);
    let mut ep = Episode::with_starts(config(1, 10), truth, &[CellCoord::new(18, 18)]).unwrap();
    let k = ep.config().k_actions;
    assert!(matches!(ep.step(&[k]), Err(Error::Contract(_))));
    assert!(matches!(ep.step(&[0, 0]), Err(Error::Contract(_))));
}

#[test]
fn reward_is_weighted_sum_and_single_robot_finishes() {
    let truth = open_map(40);
    let mut ep = Episode::with_starts(config(1, 200), truth, &[CellCoord::new(5, 5)]).unwrap();
    let w = ep.config().reward;
    let mut prev_cov = ep.coverage(0).unwrap();
    while !ep.is_done() {
        let a = greedy(ep.observation(0));
        let out = ep.step(&[a]).unwrap();
        let r = out.rewards[0];
        let sum = w.alpha[0] * r.observable + w.alpha[1] * r.distance + w.alpha[2] * r.frontier + w.alpha[3] * r.surplus + r.completion;
        assert_eq!(r.total, sum);
        assert!(r.distance <= 0.0);
        let cov = ep.coverage(0).unwrap();
        assert!(cov >= prev_cov);
        prev_cov = cov;
    }
    assert!(ep.success(), "coverage {prev_cov} after {} steps", ep.step_count());
    let last = ep.trajectory().last().unwrap();
    assert_eq!(last.reward.completion, w.completion);
}

#[test]
fn privileged_is_union_of_beliefs() {
    let truth = open_map(40);
    let mut c = config(3, 30);
    c.comms = CommsParams::disabled();
    let mut ep = Episode::with_starts(c, truth, &[CellCoord::new(5, 5), CellCoord::new(30, 30), CellCoord::new(5, 30)]).unwrap();
    for _ in 0..8 {
        let acts: Vec<usize> = ep.observations().iter().map(greedy).collect();
        ep.step(&acts).unwrap();
        let g = ep.privileged().grid();
        for idx in 0..g.len() {
            let cell = g.coord(idx);
            let any = ep.robots().iter().any(|r| r.belief.grid().get(cell).unwrap().is_known());
            assert_eq!(g.get(cell).unwrap().is_known(), any);
        }
    }
}

#[test]
fn frontier_reward_matches_sequential_union() {
    let truth = open_map(40);
    let mut c = config(2, 30);
    c.comms = CommsParams::disabled();
    let starts = [CellCoord::new(10, 10), CellCoord::new(14, 10)];
    let mut ep = Episode::with_starts(c, truth.clone(), &starts).unwrap();
    for _ in 0..5 {
        let acts: Vec<usize> = ep.observations().iter().map(greedy).collect();
        let mut oracle = ep.privileged().clone();
        let targets: Vec<CellCoord> =
            (0..2).map(|i| ep.observation(i).cells[ep.observation(i).candidates[acts[i]].unwrap()]).collect();
        let stamp = ep.step_count() + 1;
        let out = ep.step(&acts).unwrap();
        for i in 0..2 {
            let before = extract_frontiers(oracle.grid()).len() as f64;
            let scan = lidar_scan(&truth, truth.cell_center(targets[i]), &ep.config().sensor).unwrap();
            oracle.integrate_scan(&scan, stamp).unwrap();
            let after = extract_frontiers(oracle.grid()).len() as f64;
            assert_eq!(out.rewards[i].frontier, after - before);
        }
    }
}

#[test]
fn teammate_indicator_stays_at_last_contact() {
    let truth = open_map(40);
    let mut c = config(2, 30);
    c.comms = CommsParams { mode: CommsMode::Proximity, d_comm: 2.5, ..CommsParams::default() };
    let starts = [CellCoord::new(10, 10), CellCoord::new(13, 10)];
    let mut ep = Episode::with_starts(c, truth, &starts).unwrap();
    assert_eq!(ep.robots()[0].teammates[1].unwrap().cell, starts[1]);
    // Robot 0 waits while robot 1 walks away along its first candidates.
    let mut lost_at = None;
    for t in 0..10 {
        let o1 = ep.observation(1);
        let far = (0..o1.candidates.len())
            .filter_map(|s| o1.candidates[s].map(|n| (s, o1.cells[n])))
            .max_by_key(|&(_, c)| (c.x, c.y))
            .unwrap()
            .0;
        let o0 = ep.observation(0);
        let stay = o0.slot_of(o0.current).unwrap_or(0);
        ep.step(&[stay, far]).unwrap();
        let info = ep.robots()[0].teammates[1].unwrap();
        if info.cell != ep.robots()[1].cell {
            lost_at.get_or_insert((t, info));
        }
        if let Some((_, seen)) = lost_at {
            assert_eq!(info, seen);
            let o = ep.observation(0);
            let v = o.teammates.iter().find(|tm| tm.id == 1).unwrap();
            assert_eq!(o.cells[v.node], ep.robots()[0].planning.cell(ep.robots()[0].planning.nearest(seen.cell).unwrap()));
            assert_eq!(o.nodes[v.node].indicator, if v.node == o.current { -1.0 } else { 1.0 });
        }
    }
    assert!(lost_at.is_some());
}

#[test]
fn same_config_same_episode() {
    let run = || {
        let mut c = EpisodeConfig::new(MapSpec::cells(MapKind::Simple, 9, 40, 40), 2, 15);
        c.comms = CommsParams::proximity(4.0);
        let mut ep = Episode::new(c).unwrap();
        while !ep.is_done() {
            let acts: Vec<usize> = ep.observations().iter().map(greedy).collect();
            ep.step(&acts).unwrap();
        }
        let mut buf = Vec::new();
        ep.write_trajectory(&mut buf).unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn is_done_threshold_is_closed() {
    let mut truth = OccupancyGrid::filled(10, 10, 1.0, Cell::Free);
    let _ = &mut truth;
    let mut r = RobotState::new(0, CellCoord::new(0, 0), &truth, 1);
    let mut up = CellUpdates::empty_for(&truth);
    up.cells = truth.free_cells().take(99).map(|c| (c, Cell::Free)).collect();
    r.belief.integrate_scan(&up, 0).unwrap();
    assert!(is_done(std::slice::from_ref(&r), &truth).unwrap());
    let mut r2 = RobotState::new(0, CellCoord::new(0, 0), &truth, 1);
    up.cells.truncate(98);
    r2.belief.integrate_scan(&up, 0).unwrap();
    assert!(!is_done(&[r, r2], &truth).unwrap());
}

#[test]
fn stagger_holds_robots_back() {
    let truth = open_map(40);
    let mut c = config(2, 30);
    c.stagger = 3;
    let mut ep = Episode::with_starts(c, truth, &[CellCoord::new(10, 10), CellCoord::new(20, 20)]).unwrap();
    for _ in 0..3 {
        assert!(!ep.is_active(1));
        let start = ep.robots()[1].cell;
        let acts: Vec<usize> = ep.observations().iter().map(greedy).collect();
        let out = ep.step(&acts).unwrap();
        assert_eq!(ep.robots()[1].cell, start);
        assert_eq!(out.rewards[1], RewardBreakdown::default());
    }
    assert!(ep.is_active(1));
}

