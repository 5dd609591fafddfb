use super::{HierGraph, VertexId};

/// Keeps only the vertices and edges on shortest paths from each robot
/// vertex to each frontier-center vertex. One Dijkstra tree per robot; robot
/// vertices are always kept. Distances from every robot to every reachable
/// center are preserved exactly because each kept path is the tree path the
/// unpruned search found.
pub fn prune_global_graph(graph: &HierGraph, robots: &[VertexId], centers: &[VertexId]) -> HierGraph {
    let mut out = HierGraph::new(graph.resolution());
    out.next_id = graph.next_id();
    for &r in robots {
        if let Some(v) = graph.vertex(r) {
            out.insert_with_id(v.clone());
        }
    }
    for &r in robots {
        if !graph.contains(r) {
            continue;
        }
        let tree = graph.dijkstra(r);
        for &c in centers {
            let Some(path) = tree.path_to(c) else { continue };
            for &id in &path {
                if !out.contains(id) {
                    out.insert_with_id(graph.vertex(id).expect("path vertex").clone());
                }
            }
            for pair in path.windows(2) {
                out.add_edge(pair[0], pair[1]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CellCoord;
    use crate::roadmap::Layer;

    #[test]
    fn no_centers_keeps_robots_only() {
        let mut g = HierGraph::new(1.0);
        let a = g.add_vertex(CellCoord::new(0, 0), Layer::Global);
        let b = g.add_vertex(CellCoord::new(1, 0), Layer::Global);
        g.add_edge(a, b);
        let p = prune_global_graph(&g, &[a], &[]);
        assert_eq!(p.ids().collect::<Vec<_>>(), vec![a]);
        assert_eq!(p.edge_count(), 0);
    }

    #[test]
    fn single_pair_is_one_path() {
        let mut g = HierGraph::new(1.0);
        let ids: Vec<_> = (0..5).map(|x| g.add_vertex(CellCoord::new(x * 2, 0), Layer::Global)).collect();
        let side = g.add_vertex(CellCoord::new(4, 5), Layer::Global);
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]);
        }
        g.add_edge(ids[2], side);
        let p = prune_global_graph(&g, &[ids[0]], &[ids[4]]);
        assert_eq!(p.len(), 5);
        assert!(!p.contains(side));
        assert_eq!(p.edge_count(), 4);
    }
}
