use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::map::{Attributes, Id, LaneletMap};

use super::geometry::{self as g, Polyline};
use super::ConflateError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Boundaries of one lanelet, both oriented along its driving direction.
#[derive(Clone, Debug)]
pub(crate) struct LaneletShape {
    pub id: Id,
    pub left_id: Id,
    pub right_id: Id,
    pub left: Polyline,
    pub right: Polyline,
}

impl LaneletShape {
    fn midline(&self) -> Polyline {
        g::midline(&self.left, &self.right)
    }
}

fn shoelace(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

pub(crate) fn lanelet_shapes(map: &LaneletMap) -> Result<Vec<LaneletShape>, ConflateError> {
    let xy = |id: Id| -> Result<Polyline, ConflateError> {
        Ok(map.linestring_geometry(id)?.iter().map(|p| p.xy()).collect())
    };
    let mut out = Vec::with_capacity(map.lanelets.len());
    for (&id, ll) in &map.lanelets {
        let mut left = xy(ll.left)?;
        let mut right = xy(ll.right)?;
        if left.len() < 2 || right.len() < 2 {
            return Err(ConflateError::Argument(format!("lanelet {id}: boundary with fewer than two points")));
        }
        let (l0, ln) = (left[0], left[left.len() - 1]);
        let (r0, rn) = (right[0], right[right.len() - 1]);
        if g::dist(l0, rn) + g::dist(ln, r0) < g::dist(l0, r0) + g::dist(ln, rn) {
            right.reverse();
        }
        // the left boundary has to be on the left: the ring left→right⁻¹ runs clockwise
        let mut ring = left.clone();
        ring.extend(right.iter().rev());
        if shoelace(&ring) > 0.0 {
            left.reverse();
            right.reverse();
        }
        out.push(LaneletShape { id, left_id: ll.left, right_id: ll.right, left, right });
    }
    Ok(out)
}

/// Collapsed group of laterally adjacent lanelets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Centerline {
    pub id: usize,
    pub geometry: Polyline,
    /// Lanelets driving along `geometry`.
    pub forward: Vec<Id>,
    /// Lanelets driving against it.
    pub backward: Vec<Id>,
}

impl Centerline {
    pub fn lanelet_count(&self) -> usize {
        self.forward.len() + self.backward.len()
    }

    pub fn lanelets(&self) -> impl Iterator<Item = Id> + '_ {
        self.forward.iter().chain(&self.backward).copied()
    }

    /// Member ids as attributes, the way they are attached to the collapsed line.
    pub fn attributes(&self) -> Attributes {
        let join = |ids: &[Id]| ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let mut a = Attributes::new();
        a.insert("lanelets:forward".into(), join(&self.forward));
        a.insert("lanelets:backward".into(), join(&self.backward));
        a
    }
}

/// Centerlines plus their connectivity. Each centerline end is a slot; slots
/// joined by a lanelet predecessor/successor relation share a node.
#[derive(Clone, Debug, Serialize)]
pub struct CenterlineGraph {
    pub centerlines: Vec<Centerline>,
    pub nodes: Vec<[f64; 2]>,
    /// `(start node, end node)` per centerline.
    pub ends: Vec<[usize; 2]>,
    pub group_of: BTreeMap<Id, usize>,
    pub successors: BTreeMap<Id, Vec<Id>>,
    pub predecessors: BTreeMap<Id, Vec<Id>>,
}

impl CenterlineGraph {
    pub fn degree(&self, node: usize) -> usize {
        self.ends.iter().flatten().filter(|&&n| n == node).count()
    }

    pub fn has_predecessor(&self, lanelet: Id) -> bool {
        self.predecessors.get(&lanelet).is_some_and(|v| !v.is_empty())
    }

    pub fn has_successor(&self, lanelet: Id) -> bool {
        self.successors.get(&lanelet).is_some_and(|v| !v.is_empty())
    }

    /// Pairs of centerlines connected through a shared node.
    pub fn connections(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for a in 0..self.ends.len() {
            for b in a..self.ends.len() {
                let shared = self.ends[a].iter().any(|n| self.ends[b].contains(n));
                if shared && (a != b || self.ends[a][0] == self.ends[a][1]) {
                    out.insert((a, b));
                }
            }
        }
        out
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    /// Union keeping the smaller root, so roots are deterministic.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

fn bbox(lines: &[&Polyline]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in lines.iter().flat_map(|l| l.iter()) {
        b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
    }
    b
}

fn lateral_pairs(shapes: &[LaneletShape], tol: f64) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    let mut by_linestring: BTreeMap<Id, Vec<usize>> = BTreeMap::new();
    for (i, s) in shapes.iter().enumerate() {
        by_linestring.entry(s.left_id).or_default().push(i);
        if s.right_id != s.left_id {
            by_linestring.entry(s.right_id).or_default().push(i);
        }
    }
    for users in by_linestring.values() {
        for (k, &a) in users.iter().enumerate() {
            for &b in &users[k + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    // duplicated boundaries: same geometry under different linestring ids
    let boxes: Vec<[f64; 4]> = shapes.iter().map(|s| bbox(&[&s.left, &s.right])).collect();
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]).then(a.cmp(&b)));
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if boxes[b][0] > boxes[a][2] + tol {
                break;
            }
            if boxes[b][1] > boxes[a][3] + tol || boxes[a][1] > boxes[b][3] + tol {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if pairs.contains(&key) {
                continue;
            }
            let (sa, sb) = (&shapes[a], &shapes[b]);
            let close = [(&sa.left, &sb.left), (&sa.left, &sb.right), (&sa.right, &sb.left), (&sa.right, &sb.right)]
                .iter()
                .any(|(x, y)| g::hausdorff(x, y) < tol);
            if close {
                pairs.insert(key);
            }
        }
    }
    pairs
}

/// Successor pairs `(a, b)`: the end of `a`'s boundaries meets the start of `b`'s.
fn longitudinal_pairs(shapes: &[LaneletShape], tol: f64) -> Vec<(usize, usize)> {
    let cell = 1.0f64.max(4.0 * tol);
    let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut starts: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in shapes.iter().enumerate() {
        starts.entry(key(s.left[0])).or_default().push(i);
    }
    let mut out = Vec::new();
    for (a, s) in shapes.iter().enumerate() {
        let (le, re) = (s.left[s.left.len() - 1], s.right[s.right.len() - 1]);
        let (cx, cy) = key(le);
        let mut found = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &b in starts.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                    let t = &shapes[b];
                    if b != a && g::dist(le, t.left[0]) < tol && g::dist(re, t.right[0]) < tol {
                        found.push(b);
                    }
                }
            }
        }
        found.sort_unstable();
        out.extend(found.into_iter().map(|b| (a, b)));
    }
    out
}

/// Group laterally adjacent lanelets, collapse each group to the midline of
/// its outer boundaries, and connect the centerlines through the lanelets'
/// predecessor/successor relation. `tol` is the geometric tolerance for
/// adjacency of duplicated boundaries and for boundary end points meeting.
pub fn collapse_lanelets(map: &LaneletMap, tol: f64) -> Result<CenterlineGraph, ConflateError> {
    let shapes = lanelet_shapes(map)?;
    let n = shapes.len();
    let lateral = lateral_pairs(&shapes, tol);
    let mut uf = UnionFind::new(n);
    for &(a, b) in &lateral {
        uf.union(a, b);
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        members.entry(uf.find(i)).or_default().push(i);
    }

    let mut centerlines = Vec::with_capacity(members.len());
    let mut group_index = vec![0usize; n];
    let mut direction = vec![Direction::Forward; n];
    for (gid, idx) in members.values().enumerate() {
        let reference = g::chord(&shapes[idx[0]].midline());
        let mut cl = Centerline { id: gid, geometry: Vec::new(), forward: Vec::new(), backward: Vec::new() };
        // boundaries oriented along the reference lanelet: (id, line) on its left and right
        let mut lefts: Vec<(Id, Polyline, Id)> = Vec::new();
        let mut rights: Vec<(Id, Polyline, Id)> = Vec::new();
        for &i in idx {
            let s = &shapes[i];
            group_index[i] = gid;
            let c = g::chord(&s.midline());
            if c[0] * reference[0] + c[1] * reference[1] >= 0.0 {
                cl.forward.push(s.id);
                lefts.push((s.left_id, s.left.clone(), s.id));
                rights.push((s.right_id, s.right.clone(), s.id));
            } else {
                direction[i] = Direction::Backward;
                cl.backward.push(s.id);
                lefts.push((s.right_id, g::reversed(&s.right), s.id));
                rights.push((s.left_id, g::reversed(&s.left), s.id));
            }
        }
        let outer = |side: &[(Id, Polyline, Id)], other: &[(Id, Polyline, Id)]| -> Polyline {
            let mut best: Option<&(Id, Polyline, Id)> = None;
            let mut best_len = f64::NEG_INFINITY;
            for cand in side {
                let inner = other
                    .iter()
                    .any(|o| o.2 != cand.2 && (o.0 == cand.0 || g::hausdorff(&o.1, &cand.1) < tol));
                let len = g::length(&cand.1);
                if !inner && len > best_len {
                    best = Some(cand);
                    best_len = len;
                }
            }
            // a ring of lanelets has no outer boundary; use the first member's
            best.unwrap_or(&side[0]).1.clone()
        };
        let left = outer(&lefts, &rights);
        let right = outer(&rights, &lefts);
        cl.geometry = g::midline(&left, &right);
        centerlines.push(cl);
    }

    let mut successors: BTreeMap<Id, Vec<Id>> = shapes.iter().map(|s| (s.id, Vec::new())).collect();
    let mut predecessors = successors.clone();
    // slot 2g is the start of centerline g, slot 2g+1 its end
    let mut slots = UnionFind::new(2 * centerlines.len());
    for (a, b) in longitudinal_pairs(&shapes, tol) {
        successors.entry(shapes[a].id).or_default().push(shapes[b].id);
        predecessors.entry(shapes[b].id).or_default().push(shapes[a].id);
        let exit = 2 * group_index[a] + usize::from(direction[a] == Direction::Forward);
        let entry = 2 * group_index[b] + usize::from(direction[b] == Direction::Backward);
        slots.union(exit, entry);
    }

    let mut node_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sums: Vec<([f64; 2], usize)> = Vec::new();
    let mut ends = Vec::with_capacity(centerlines.len());
    for (gid, cl) in centerlines.iter().enumerate() {
        let mut e = [0usize; 2];
        for (k, p) in [cl.geometry[0], cl.geometry[cl.geometry.len() - 1]].into_iter().enumerate() {
            let root = slots.find(2 * gid + k);
            let next = node_of_root.len();
            let node = *node_of_root.entry(root).or_insert(next);
            if node == sums.len() {
                sums.push(([0.0, 0.0], 0));
            }
            sums[node].0[0] += p[0];
            sums[node].0[1] += p[1];
            sums[node].1 += 1;
            e[k] = node;
        }
        ends.push(e);
    }
    let nodes = sums.into_iter().map(|(s, c)| [s[0] / c as f64, s[1] / c as f64]).collect();
    let group_of = shapes.iter().enumerate().map(|(i, s)| (s.id, group_index[i])).collect();
    Ok(CenterlineGraph { centerlines, nodes, ends, group_of, successors, predecessors })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geo::LocalPoint;
    use crate::map::{Lanelet, LineString, Point};

    /// Map builder for hand-made fixtures.
    #[derive(Default)]
    pub(crate) struct Fixture {
        pub map: LaneletMap,
        next: Id,
    }

    impl Fixture {
        pub fn new() -> Self {
            Fixture { map: LaneletMap::new(), next: 1 }
        }

        fn id(&mut self) -> Id {
            self.next += 1;
            self.next
        }

        pub fn line(&mut self, pts: &[[f64; 2]]) -> Id {
            let ids: Vec<Id> = pts
                .iter()
                .map(|p| {
                    let id = self.id();
                    self.map.points.insert(id, Point::local(LocalPoint::new(p[0], p[1])));
                    id
                })
                .collect();
            let id = self.id();
            self.map.linestrings.insert(id, LineString::new(ids));
            id
        }

        /// Linestring through existing point ids.
        pub fn line_of(&mut self, pts: &[Id]) -> Id {
            let id = self.id();
            self.map.linestrings.insert(id, LineString::new(pts.to_vec()));
            id
        }

        pub fn lanelet(&mut self, left: Id, right: Id) -> Id {
            let id = self.id();
            self.map.lanelets.insert(id, Lanelet::new(left, right));
            id
        }
    }

    #[test]
    fn single_lanelet_midline() {
        let mut f = Fixture::new();
        let l = f.line(&[[0.0, 1.5], [10.0, 1.5]]);
        let r = f.line(&[[0.0, -1.5], [10.0, -1.5]]);
        let ll = f.lanelet(l, r);
        let gph = collapse_lanelets(&f.map, 0.2).unwrap();
        assert_eq!(gph.centerlines.len(), 1);
        assert_eq!(gph.centerlines[0].geometry, vec![[0.0, 0.0], [10.0, 0.0]]);
        assert_eq!(gph.centerlines[0].forward, vec![ll]);
    }

    #[test]
    fn same_direction_pair_collapses() {
        let mut f = Fixture::new();
        let a = f.line(&[[0.0, 3.0], [20.0, 3.0]]);
        let m = f.line(&[[0.0, 0.0], [20.0, 0.0]]);
        let b = f.line(&[[0.0, -3.0], [20.0, -3.0]]);
        let l1 = f.lanelet(a, m);
        let l2 = f.lanelet(m, b);
        let gph = collapse_lanelets(&f.map, 0.2).unwrap();
        assert_eq!(gph.centerlines.len(), 1);
        let c = &gph.centerlines[0];
        assert_eq!(c.forward, vec![l1, l2]);
        assert!(c.backward.is_empty());
        assert_eq!(c.geometry, vec![[0.0, 0.0], [20.0, 0.0]]);
        assert_eq!(c.attributes()["lanelets:forward"], format!("{l1},{l2}"));
    }

    #[test]
    fn four_lanelet_fixture_partitions_directions() {
        // two westbound lanes north of the centre line, two eastbound south
        // of it; the centre line is stored west→east and shared
        let mut f = Fixture::new();
        let n2 = f.line(&[[30.0, 7.0], [0.0, 7.0]]);
        let n1 = f.line(&[[0.0, 3.5], [30.0, 3.5]]);
        let c = f.line(&[[0.0, 0.0], [30.0, 0.0]]);
        let s1 = f.line(&[[30.0, -3.5], [0.0, -3.5]]);
        let s2 = f.line(&[[0.0, -7.0], [30.0, -7.0]]);
        let west_inner = f.lanelet(c, n1);
        let west_outer = f.lanelet(n1, n2);
        let east_outer = f.lanelet(s1, s2);
        let east_inner = f.lanelet(c, s1);
        let gph = collapse_lanelets(&f.map, 0.2).unwrap();
        assert_eq!(gph.centerlines.len(), 1);
        let cl = &gph.centerlines[0];
        // lowest id (west_inner) defines the forward direction
        assert_eq!(cl.forward, vec![west_inner, west_outer]);
        assert_eq!(cl.backward, vec![east_outer, east_inner]);
        assert_eq!(cl.lanelet_count(), 4);
        assert_eq!(cl.geometry.first().copied(), Some([30.0, 0.0]));
        assert_eq!(cl.geometry.last().copied(), Some([0.0, 0.0]));
    }

    #[test]
    fn duplicated_boundaries_use_geometric_fallback() {
        let mut f = Fixture::new();
        let a = f.line(&[[0.0, 3.0], [20.0, 3.0]]);
        let m1 = f.line(&[[0.0, 0.0], [20.0, 0.0]]);
        let m2 = f.line(&[[0.0, 0.05], [10.0, 0.05], [20.0, 0.05]]);
        let b = f.line(&[[0.0, -3.0], [20.0, -3.0]]);
        f.lanelet(a, m2);
        f.lanelet(m1, b);
        assert_eq!(collapse_lanelets(&f.map, 0.2).unwrap().centerlines.len(), 1);
        assert_eq!(collapse_lanelets(&f.map, 0.01).unwrap().centerlines.len(), 2);
    }

    #[test]
    fn successors_connect_centerlines() {
        let mut f = Fixture::new();
        let l1 = f.line(&[[0.0, 1.0], [10.0, 1.0]]);
        let r1 = f.line(&[[0.0, -1.0], [10.0, -1.0]]);
        let a = f.lanelet(l1, r1);
        let end_l = *f.map.linestrings[&l1].points.last().unwrap();
        let end_r = *f.map.linestrings[&r1].points.last().unwrap();
        let x = f.line(&[[20.0, 1.0]]);
        let xr = f.line(&[[20.0, -1.0]]);
        let pl = f.map.linestrings[&x].points[0];
        let pr = f.map.linestrings[&xr].points[0];
        f.map.linestrings.remove(&x);
        f.map.linestrings.remove(&xr);
        let l2 = f.line_of(&[end_l, pl]);
        let r2 = f.line_of(&[end_r, pr]);
        let b = f.lanelet(l2, r2);
        let gph = collapse_lanelets(&f.map, 0.2).unwrap();
        assert_eq!(gph.centerlines.len(), 2);
        assert_eq!(gph.successors[&a], vec![b]);
        assert_eq!(gph.predecessors[&b], vec![a]);
        assert!(!gph.has_predecessor(a) && gph.has_successor(a));
        assert_eq!(gph.ends[0][1], gph.ends[1][0]);
        assert_eq!(gph.degree(gph.ends[0][1]), 2);
        assert_eq!(gph.connections(), [(0, 1)].into_iter().collect());
    }
}
