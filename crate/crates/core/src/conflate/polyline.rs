use serde::Serialize;

use crate::map::Id;

use super::collapse::CenterlineGraph;
use super::geometry::{self as g, Polyline};

/// Chain of centerlines used as one matching query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferencePolyline {
    pub id: usize,
    /// Member centerlines in chain order, with `true` when traversed reversed.
    pub centerlines: Vec<(usize, bool)>,
    pub geometry: Polyline,
    pub length: f64,
    pub lanelets: Vec<Id>,
}

/// Flow of a traversed centerline: both ways, or one way along / against
/// the traversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flow {
    Both,
    Along,
    Against,
}

fn flow(graph: &CenterlineGraph, c: usize, reversed: bool) -> Flow {
    let cl = &graph.centerlines[c];
    let (along, against) = if reversed {
        (cl.backward.len(), cl.forward.len())
    } else {
        (cl.forward.len(), cl.backward.len())
    };
    match (along > 0, against > 0) {
        (true, true) => Flow::Both,
        (false, true) => Flow::Against,
        _ => Flow::Along,
    }
}

/// The other centerline slot at `node`, when the node joins exactly two slots
/// belonging to different centerlines. Returns the centerline and whether it
/// leaves the node reversed.
fn continuation(slots_at: &[Vec<(usize, usize)>], node: usize, from: usize) -> Option<(usize, bool)> {
    let slots = &slots_at[node];
    if slots.len() != 2 {
        return None;
    }
    let (c, k) = *slots.iter().find(|s| s.0 != from)?;
    // leaving through its start means forward traversal
    Some((c, k == 1))
}

/// Concatenate centerlines through nodes of degree two. Chains break at
/// junctions, dead ends and wherever the flow class changes.
pub fn build_reference_polylines(graph: &CenterlineGraph) -> Vec<ReferencePolyline> {
    let n = graph.centerlines.len();
    let mut used = vec![false; n];
    let mut slots_at: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph.nodes.len()];
    for (c, e) in graph.ends.iter().enumerate() {
        slots_at[e[0]].push((c, 0));
        slots_at[e[1]].push((c, 1));
    }
    let mut out = Vec::new();
    for seed in 0..n {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let mut chain: std::collections::VecDeque<(usize, bool)> = [(seed, false)].into();
        let tail_node = |(c, rev): (usize, bool)| graph.ends[c][if rev { 0 } else { 1 }];
        let head_node = |(c, rev): (usize, bool)| graph.ends[c][if rev { 1 } else { 0 }];
        loop {
            let last = *chain.back().unwrap();
            let Some(next) = continuation(&slots_at, tail_node(last), last.0) else { break };
            if used[next.0] || flow(graph, next.0, next.1) != flow(graph, last.0, last.1) {
                break;
            }
            used[next.0] = true;
            chain.push_back(next);
        }
        loop {
            let first = *chain.front().unwrap();
            let Some((c, leaves_reversed)) = continuation(&slots_at, head_node(first), first.0) else { break };
            // entering `first` from c: c is traversed towards the node
            let prev = (c, !leaves_reversed);
            if used[c] || flow(graph, prev.0, prev.1) != flow(graph, first.0, first.1) {
                break;
            }
            used[c] = true;
            chain.push_front(prev);
        }
        let mut geometry: Polyline = Vec::new();
        let mut lanelets = Vec::new();
        for &(c, rev) in &chain {
            let cl = &graph.centerlines[c];
            let part = if rev { g::reversed(&cl.geometry) } else { cl.geometry.clone() };
            let skip = usize::from(geometry.last().is_some_and(|&p| g::dist(p, part[0]) < 1e-9));
            geometry.extend_from_slice(&part[skip..]);
            lanelets.extend(cl.lanelets());
        }
        lanelets.sort_unstable();
        let length = g::length(&geometry);
        out.push(ReferencePolyline { id: out.len(), centerlines: chain.into(), geometry, length, lanelets });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflate::collapse::Centerline;
    use std::collections::{BTreeMap, BTreeSet};

    /// Graph straight from centerline end nodes, all two-way.
    fn graph(edges: &[(usize, usize)], pos: &[[f64; 2]]) -> CenterlineGraph {
        let centerlines = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Centerline {
                id: i,
                geometry: vec![pos[a], pos[b]],
                forward: vec![2 * i as Id],
                backward: vec![2 * i as Id + 1],
            })
            .collect();
        CenterlineGraph {
            centerlines,
            nodes: pos.to_vec(),
            ends: edges.iter().map(|&(a, b)| [a, b]).collect(),
            group_of: BTreeMap::new(),
            successors: BTreeMap::new(),
            predecessors: BTreeMap::new(),
        }
    }

    fn partition(polys: &[ReferencePolyline]) -> BTreeSet<BTreeSet<usize>> {
        polys.iter().map(|p| p.centerlines.iter().map(|c| c.0).collect()).collect()
    }

    #[test]
    fn linear_chain_is_one_polyline() {
        let pos = [[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]];
        // middle edge stored reversed
        let g = graph(&[(0, 1), (2, 1), (2, 3)], &pos);
        let p = build_reference_polylines(&g);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].geometry, pos.to_vec());
        assert_eq!(p[0].centerlines, vec![(0, false), (1, true), (2, false)]);
        assert_eq!(p[0].length, 30.0);
    }

    #[test]
    fn t_junction_breaks() {
        let pos = [[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [10.0, 10.0]];
        let g = graph(&[(0, 1), (1, 2), (1, 3)], &pos);
        assert_eq!(build_reference_polylines(&g).len(), 3);
    }

    #[test]
    fn flow_change_breaks() {
        let pos = [[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]];
        let mut g = graph(&[(0, 1), (1, 2)], &pos);
        g.centerlines[1].backward.clear();
        assert_eq!(build_reference_polylines(&g).len(), 2);
        // one-way both along the same traversal keeps the chain
        g.centerlines[0].backward.clear();
        assert_eq!(build_reference_polylines(&g).len(), 1);
        // one-way pointing head to head breaks it
        g.ends[1] = [2, 1];
        g.centerlines[1].geometry.reverse();
        assert_eq!(build_reference_polylines(&g).len(), 2);
    }

    #[test]
    fn cycle_becomes_single_polyline() {
        let pos = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        let g = graph(&[(0, 1), (1, 2), (2, 0)], &pos);
        let p = build_reference_polylines(&g);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].centerlines.len(), 3);
    }

    #[test]
    fn grid_matches_chain_decomposition_oracle() {
        // 4×3 lattice of nodes, some edges removed
        let w = 4;
        let pos: Vec<[f64; 2]> = (0..12).map(|i| [(i % w) as f64 * 10.0, (i / w) as f64 * 10.0]).collect();
        let mut edges = Vec::new();
        for i in 0..12 {
            if i % w + 1 < w && i != 5 {
                edges.push((i, i + 1));
            }
            if i + w < 12 && i != 2 {
                edges.push((i, i + w));
            }
        }
        let g = graph(&edges, &pos);
        let got = partition(&build_reference_polylines(&g));

        // oracle: merge edges pairwise through every node of degree two
        let mut label: Vec<usize> = (0..edges.len()).collect();
        for node in 0..pos.len() {
            let inc: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].0 == node || edges[e].1 == node).collect();
            if inc.len() == 2 {
                let (keep, drop) = (label[inc[0]].min(label[inc[1]]), label[inc[0]].max(label[inc[1]]));
                for l in label.iter_mut() {
                    if *l == drop {
                        *l = keep;
                    }
                }
            }
        }
        let mut expect: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (e, l) in label.iter().enumerate() {
            expect.entry(*l).or_default().insert(e);
        }
        assert_eq!(got, expect.into_values().collect());
        let covered: usize = got.iter().map(|s| s.len()).sum();
        assert_eq!(covered, edges.len());
    }
}
