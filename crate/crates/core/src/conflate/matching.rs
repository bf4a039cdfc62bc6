use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::align::SegmentIndex;
use crate::geo::UtmProjector;
use crate::map::{Id, OsmRoadNetwork, OsmWay};
use crate::par::{self, Exec};

use super::geometry::{self as g, Polyline};
use super::polyline::ReferencePolyline;
use super::similarity::{similarity_score, Similarity, SimilarityWeights};
use super::ConflateError;

/// One straight piece of an OSM way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub way: Id,
    pub index: usize,
    pub a: Id,
    pub b: Id,
}

/// OSM road network in the local frame with a segment graph and a uniform
/// spatial index over its segments.
#[derive(Clone, Debug)]
pub struct OsmGraph {
    pub positions: BTreeMap<Id, [f64; 2]>,
    pub ways: BTreeMap<Id, OsmWay>,
    pub segments: Vec<Segment>,
    key_nodes: BTreeSet<Id>,
    grid: SegmentGrid,
}

impl OsmGraph {
    /// Project every referenced node with `proj`.
    pub fn project(net: &OsmRoadNetwork, proj: &UtmProjector) -> Result<OsmGraph, ConflateError> {
        let mut positions = BTreeMap::new();
        for way in net.ways.values() {
            for id in &way.nodes {
                if !positions.contains_key(id) {
                    let p = proj.project(&net.nodes[id].position)?;
                    positions.insert(*id, p.xy());
                }
            }
        }
        OsmGraph::from_local(positions, net.ways.clone())
    }

    pub fn from_local(positions: BTreeMap<Id, [f64; 2]>, ways: BTreeMap<Id, OsmWay>) -> Result<OsmGraph, ConflateError> {
        if ways.is_empty() {
            return Err(ConflateError::EmptyOsm);
        }
        let mut segments = Vec::new();
        let mut incident: BTreeMap<Id, Vec<usize>> = BTreeMap::new();
        let mut key_nodes = BTreeSet::new();
        for (&wid, way) in &ways {
            for n in &way.nodes {
                if !positions.contains_key(n) {
                    return Err(ConflateError::Argument(format!("way {wid} references unknown node {n}")));
                }
            }
            if let (Some(a), Some(b)) = (way.nodes.first(), way.nodes.last()) {
                key_nodes.insert(*a);
                key_nodes.insert(*b);
            }
            for (index, w) in way.nodes.windows(2).enumerate() {
                if w[0] == w[1] {
                    continue;
                }
                let s = segments.len();
                segments.push(Segment { way: wid, index, a: w[0], b: w[1] });
                incident.entry(w[0]).or_default().push(s);
                incident.entry(w[1]).or_default().push(s);
            }
        }
        for (n, inc) in &incident {
            if inc.len() != 2 {
                key_nodes.insert(*n);
            }
        }
        let grid = SegmentGrid::new(&segments, &positions);
        Ok(OsmGraph { positions, ways, segments, key_nodes, grid })
    }

    fn pos(&self, n: Id) -> [f64; 2] {
        self.positions[&n]
    }

    pub fn segment_line(&self, s: usize) -> [[f64; 2]; 2] {
        let seg = &self.segments[s];
        [self.pos(seg.a), self.pos(seg.b)]
    }

    /// Way polylines in the local frame, for display.
    pub fn way_geometry(&self, way: Id) -> Polyline {
        self.ways[&way].nodes.iter().map(|n| self.pos(*n)).collect()
    }

    fn chain(&self, segments: Vec<usize>, nodes: Vec<Id>) -> OsmChain {
        let mut ways: Vec<Id> = Vec::new();
        for s in &segments {
            let w = self.segments[*s].way;
            if ways.last() != Some(&w) {
                ways.push(w);
            }
        }
        let geometry = nodes.iter().map(|n| self.pos(*n)).collect();
        OsmChain { segments, nodes, ways, geometry }
    }

    /// Segments lying entirely inside the buffer of half-width `w` around the
    /// polyline indexed by `index`, in ascending order.
    pub(crate) fn segments_in_buffer(&self, line: &[[f64; 2]], index: &SegmentIndex, w: f64) -> Vec<usize> {
        let bb = crate::geo::BoundingRect::from_points(line.iter()).expect("non-empty polyline");
        let mut found: Vec<usize> = self
            .grid
            .query([bb.min[0] - w, bb.min[1] - w], [bb.max[0] + w, bb.max[1] + w])
            .into_iter()
            .filter(|&s| segment_inside(self.segment_line(s), index, w))
            .collect();
        found.sort_unstable();
        found
    }
}

/// Whether a segment lies inside the buffer. The segment is sampled with
/// spacing at most `w / 8`; since distance is 1-Lipschitz, every sample must
/// clear the boundary by half the spacing.
pub(crate) fn segment_inside(seg: [[f64; 2]; 2], index: &SegmentIndex, w: f64) -> bool {
    let len = g::dist(seg[0], seg[1]);
    let steps = ((len / (w / 8.0)).ceil() as usize).max(1);
    let slack = 0.5 * len / steps as f64;
    (0..=steps).all(|k| {
        let f = k as f64 / steps as f64;
        let p = [seg[0][0] + f * (seg[1][0] - seg[0][0]), seg[0][1] + f * (seg[1][1] - seg[0][1])];
        index.distance(p) <= w - slack
    })
}

#[derive(Clone, Debug, Default)]
struct SegmentGrid {
    origin: [f64; 2],
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl SegmentGrid {
    fn new(segments: &[Segment], pos: &BTreeMap<Id, [f64; 2]>) -> SegmentGrid {
        let pts: Vec<[f64; 2]> = segments.iter().flat_map(|s| [pos[&s.a], pos[&s.b]]).collect();
        let Some(bb) = crate::geo::BoundingRect::from_points(pts.iter()) else {
            return SegmentGrid { cell: 1.0, nx: 1, ny: 1, cells: vec![Vec::new()], ..Default::default() };
        };
        let span = bb.width().max(bb.height()).max(1.0);
        let cell = (span / 256.0).max(10.0);
        let nx = (bb.width() / cell).floor() as i64 + 1;
        let ny = (bb.height() / cell).floor() as i64 + 1;
        let mut grid = SegmentGrid { origin: bb.min, cell, nx, ny, cells: vec![Vec::new(); (nx * ny) as usize] };
        for (i, s) in segments.iter().enumerate() {
            let (a, b) = (pos[&s.a], pos[&s.b]);
            let [i0, j0, i1, j1] = grid.range([a[0].min(b[0]), a[1].min(b[1])], [a[0].max(b[0]), a[1].max(b[1])]);
            for j in j0..=j1 {
                for k in i0..=i1 {
                    grid.cells[(j * nx + k) as usize].push(i as u32);
                }
            }
        }
        grid
    }

    fn range(&self, min: [f64; 2], max: [f64; 2]) -> [i64; 4] {
        let c = |v: f64, o: f64, n: i64| (((v - o) / self.cell).floor() as i64).clamp(0, n - 1);
        [
            c(min[0], self.origin[0], self.nx),
            c(min[1], self.origin[1], self.ny),
            c(max[0], self.origin[0], self.nx),
            c(max[1], self.origin[1], self.ny),
        ]
    }

    fn query(&self, min: [f64; 2], max: [f64; 2]) -> BTreeSet<usize> {
        let [i0, j0, i1, j1] = self.range(min, max);
        let mut out = BTreeSet::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend(self.cells[(j * self.nx + i) as usize].iter().map(|&s| s as usize));
            }
        }
        out
    }
}

/// A connected run of OSM segments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OsmChain {
    pub segments: Vec<usize>,
    pub nodes: Vec<Id>,
    /// Way ids in chain order, consecutive repeats collapsed.
    pub ways: Vec<Id>,
    pub geometry: Polyline,
}

impl OsmChain {
    fn sorted_ways(&self) -> Vec<Id> {
        let mut w = self.ways.clone();
        w.sort_unstable();
        w.dedup();
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferParams {
    /// Initial buffer half-width, meters.
    pub initial: f64,
    pub growth: f64,
    pub max_growths: u32,
}

impl Default for BufferParams {
    fn default() -> Self {
        BufferParams { initial: 5.0, growth: 1.5, max_growths: 3 }
    }
}

impl BufferParams {
    pub fn width(&self, attempt: u32) -> f64 {
        self.initial * self.growth.powi(attempt as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    pub weights: SimilarityWeights,
    /// A candidate is accepted when its score exceeds this.
    pub score_threshold: f64,
    pub buffer: BufferParams,
    /// Longest candidate chain, in links between key nodes.
    pub max_chain_links: usize,
    /// Candidate enumeration stops after this many chains.
    pub max_candidates: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            weights: SimilarityWeights::default(),
            score_threshold: 0.6,
            buffer: BufferParams::default(),
            max_chain_links: 16,
            max_candidates: 2000,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), ConflateError> {
        self.weights.validate()?;
        let b = &self.buffer;
        if !(b.initial > 0.0 && b.growth >= 1.0 && b.initial.is_finite() && b.growth.is_finite()) {
            return Err(ConflateError::Argument("buffer needs a positive width and growth ≥ 1".into()));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err(ConflateError::Argument("score threshold must lie in (0, 1)".into()));
        }
        if self.max_chain_links == 0 || self.max_candidates == 0 {
            return Err(ConflateError::Argument("candidate limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub chain: OsmChain,
    pub similarity: Similarity,
}

/// Outcome of matching one reference polyline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolylineMatch {
    pub reference: usize,
    pub best: Option<Candidate>,
    pub accepted: bool,
    /// Candidate searches performed, initial one included.
    pub searches: u32,
    pub buffer_width: f64,
    pub candidate_count: usize,
}

/// Maximal degree-two runs of in-buffer segments between key nodes.
#[derive(Clone, Debug)]
struct Link {
    from: Id,
    to: Id,
    segments: Vec<usize>,
    nodes: Vec<Id>,
}

fn build_links(osm: &OsmGraph, inside: &[usize]) -> Vec<Link> {
    let set: BTreeSet<usize> = inside.iter().copied().collect();
    let mut sub: BTreeMap<Id, Vec<usize>> = BTreeMap::new();
    for &s in inside {
        let seg = &osm.segments[s];
        sub.entry(seg.a).or_default().push(s);
        sub.entry(seg.b).or_default().push(s);
    }
    let is_key = |n: Id| osm.key_nodes.contains(&n) || sub.get(&n).map_or(0, Vec::len) != 2;
    let other = |s: usize, n: Id| {
        let seg = &osm.segments[s];
        if seg.a == n { seg.b } else { seg.a }
    };
    let mut used = BTreeSet::new();
    let mut links = Vec::new();
    for (&start, inc) in &sub {
        if !is_key(start) {
            continue;
        }
        for &s0 in inc {
            if used.contains(&s0) {
                continue;
            }
            let mut segments = vec![s0];
            let mut nodes = vec![start];
            used.insert(s0);
            let mut cur = other(s0, start);
            let mut last = s0;
            nodes.push(cur);
            while !is_key(cur) {
                let Some(&next) = sub[&cur].iter().find(|&&s| s != last && set.contains(&s)) else { break };
                used.insert(next);
                segments.push(next);
                last = next;
                cur = other(next, cur);
                nodes.push(cur);
            }
            links.push(Link { from: start, to: cur, segments, nodes });
        }
    }
    links
}

/// Every simple chain of links between two distinct key nodes, plus single
/// closed links, up to the configured limits.
fn enumerate_chains(osm: &OsmGraph, inside: &[usize], params: &MatchParams) -> Vec<OsmChain> {
    let links = build_links(osm, inside);
    let mut at: BTreeMap<Id, Vec<(usize, bool)>> = BTreeMap::new();
    for (i, l) in links.iter().enumerate() {
        at.entry(l.from).or_default().push((i, false));
        if l.to != l.from {
            at.entry(l.to).or_default().push((i, true));
        }
    }
    let mut out = Vec::new();
    for l in &links {
        if l.from == l.to {
            out.push(osm.chain(l.segments.clone(), l.nodes.clone()));
        }
    }
    struct Walk<'a> {
        osm: &'a OsmGraph,
        links: &'a [Link],
        at: &'a BTreeMap<Id, Vec<(usize, bool)>>,
        params: &'a MatchParams,
        out: &'a mut Vec<OsmChain>,
        truncated: bool,
    }
    impl Walk<'_> {
        fn step(&mut self, start: Id, node: Id, path: &mut Vec<(usize, bool)>, seen: &mut BTreeSet<Id>) {
            for &(li, rev) in self.at.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                if self.out.len() >= self.params.max_candidates {
                    self.truncated = true;
                    return;
                }
                let l = &self.links[li];
                if l.from == l.to {
                    continue;
                }
                let end = if rev { l.from } else { l.to };
                if seen.contains(&end) {
                    continue;
                }
                path.push((li, rev));
                if end > start {
                    self.out.push(self.assemble(path));
                }
                if path.len() < self.params.max_chain_links {
                    seen.insert(end);
                    self.step(start, end, path, seen);
                    seen.remove(&end);
                }
                path.pop();
            }
        }

        fn assemble(&self, path: &[(usize, bool)]) -> OsmChain {
            let mut segments = Vec::new();
            let mut nodes: Vec<Id> = Vec::new();
            for &(li, rev) in path {
                let l = &self.links[li];
                let (mut s, mut n) = (l.segments.clone(), l.nodes.clone());
                if rev {
                    s.reverse();
                    n.reverse();
                }
                if !nodes.is_empty() {
                    n.remove(0);
                }
                segments.extend(s);
                nodes.extend(n);
            }
            self.osm.chain(segments, nodes)
        }
    }
    let mut walk = Walk { osm, links: &links, at: &at, params, out: &mut out, truncated: false };
    for &start in at.keys() {
        let mut seen = BTreeSet::from([start]);
        walk.step(start, start, &mut Vec::new(), &mut seen);
    }
    if walk.truncated {
        log::warn!("candidate enumeration truncated at {} chains", params.max_candidates);
    }
    out
}

/// Order candidates: higher score, then smaller endpoint distance, then
/// lower way ids, then lower segment ids.
fn better(a: &Candidate, b: &Candidate) -> bool {
    let (sa, sb) = (&a.similarity, &b.similarity);
    if sa.score != sb.score {
        return sa.score > sb.score;
    }
    if sa.endpoint_distance != sb.endpoint_distance {
        return sa.endpoint_distance < sb.endpoint_distance;
    }
    let (wa, wb) = (a.chain.sorted_ways(), b.chain.sorted_ways());
    if wa != wb {
        return wa < wb;
    }
    a.chain.segments < b.chain.segments
}

pub(crate) fn best_candidate(
    reference: &[[f64; 2]],
    chains: Vec<OsmChain>,
    weights: &SimilarityWeights,
) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for chain in chains {
        let Ok(similarity) = similarity_score(reference, &chain.geometry, weights) else { continue };
        let cand = Candidate { chain, similarity };
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    best
}

/// Candidate chains for `reference` in a buffer of half-width `w`.
pub fn candidates_in_buffer(osm: &OsmGraph, reference: &[[f64; 2]], w: f64, params: &MatchParams) -> Vec<OsmChain> {
    let index = SegmentIndex::new(reference);
    let inside = osm.segments_in_buffer(reference, &index, w);
    if inside.is_empty() {
        return Vec::new();
    }
    enumerate_chains(osm, &inside, params)
}

fn match_one(osm: &OsmGraph, r: &ReferencePolyline, params: &MatchParams) -> PolylineMatch {
    let mut searches = 0;
    let mut width = params.buffer.width(0);
    for attempt in 0..=params.buffer.max_growths {
        width = params.buffer.width(attempt);
        searches += 1;
        let chains = candidates_in_buffer(osm, &r.geometry, width, params);
        if chains.is_empty() {
            continue;
        }
        let candidate_count = chains.len();
        let best = best_candidate(&r.geometry, chains, &params.weights);
        let accepted = best.as_ref().is_some_and(|b| b.similarity.score > params.score_threshold);
        return PolylineMatch { reference: r.id, best, accepted, searches, buffer_width: width, candidate_count };
    }
    PolylineMatch { reference: r.id, best: None, accepted: false, searches, buffer_width: width, candidate_count: 0 }
}

/// Buffer-growing match of every reference polyline. The buffer grows only
/// while no candidate lies inside it.
pub fn buffer_grow_match(
    refs: &[ReferencePolyline],
    osm: &OsmGraph,
    params: &MatchParams,
) -> Result<Vec<PolylineMatch>, ConflateError> {
    buffer_grow_match_with(refs, osm, params, Exec::default())
}

pub fn buffer_grow_match_with(
    refs: &[ReferencePolyline],
    osm: &OsmGraph,
    params: &MatchParams,
    exec: Exec,
) -> Result<Vec<PolylineMatch>, ConflateError> {
    params.validate()?;
    if osm.segments.is_empty() {
        return Err(ConflateError::EmptyOsm);
    }
    Ok(par::map(exec, refs, |r| match_one(osm, r, params)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::map::Attributes;

    pub(crate) fn osm(nodes: &[(Id, [f64; 2])], ways: &[(Id, &[Id])]) -> OsmGraph {
        let positions = nodes.iter().copied().collect();
        let ways = ways
            .iter()
            .map(|(id, n)| {
                let mut tags = Attributes::new();
                tags.insert("highway".into(), "residential".into());
                (*id, OsmWay { nodes: n.to_vec(), tags })
            })
            .collect();
        OsmGraph::from_local(positions, ways).unwrap()
    }

    fn reference(geometry: Polyline) -> ReferencePolyline {
        let length = g::length(&geometry);
        ReferencePolyline { id: 0, centerlines: vec![(0, false)], geometry, length, lanelets: vec![] }
    }

    #[test]
    fn coincident_way_is_matched_at_maximum() {
        let net = osm(&[(1, [0.0, 0.0]), (2, [50.0, 0.0]), (3, [100.0, 0.0])], &[(10, &[1, 2, 3])]);
        let m = buffer_grow_match(&[reference(vec![[0.0, 0.0], [100.0, 0.0]])], &net, &MatchParams::default()).unwrap();
        let best = m[0].best.as_ref().unwrap();
        assert!(m[0].accepted);
        assert_eq!(best.chain.ways, vec![10]);
        assert_eq!(best.similarity.score, 1.0);
        assert_eq!(m[0].searches, 1);
    }

    #[test]
    fn far_way_exhausts_four_searches() {
        let net = osm(&[(1, [0.0, 500.0]), (2, [100.0, 500.0])], &[(10, &[1, 2])]);
        let m = buffer_grow_match(&[reference(vec![[0.0, 0.0], [100.0, 0.0]])], &net, &MatchParams::default()).unwrap();
        assert_eq!(m[0].searches, 4);
        assert!(m[0].best.is_none() && !m[0].accepted);
        assert!((m[0].buffer_width - 5.0 * 1.5f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn growth_finds_offset_way() {
        // 9 m away: outside 5 and 7.5, inside 11.25
        let net = osm(&[(1, [0.0, 9.0]), (2, [100.0, 9.0])], &[(10, &[1, 2])]);
        let m = buffer_grow_match(&[reference(vec![[0.0, 0.0], [100.0, 0.0]])], &net, &MatchParams::default()).unwrap();
        assert_eq!(m[0].searches, 3);
        assert!(m[0].accepted);
    }

    #[test]
    fn empty_network_rejected() {
        assert!(matches!(OsmGraph::from_local(BTreeMap::new(), BTreeMap::new()), Err(ConflateError::EmptyOsm)));
    }

    /// Reference A–B, candidates through C–D–E and a stray F–G.
    #[test]
    fn junction_selection_matches_exhaustive_scoring() {
        let net = osm(
            &[
                (1, [0.0, 1.0]),   // C
                (2, [45.0, 1.5]),  // D
                (3, [100.0, 0.5]), // E
                (4, [45.0, 30.0]), // side street from D
                (5, [10.0, -2.5]), // F
                (6, [30.0, -2.0]), // G
            ],
            &[(20, &[1, 2]), (21, &[2, 3]), (22, &[2, 4]), (23, &[5, 6])],
        );
        let r = reference(vec![[0.0, 0.0], [50.0, 0.0], [100.0, 0.0]]);
        let params = MatchParams::default();
        let chains = candidates_in_buffer(&net, &r.geometry, 5.0, &params);
        let ways: BTreeSet<Vec<Id>> = chains.iter().map(|c| c.ways.clone()).collect();
        let expect: BTreeSet<Vec<Id>> = [vec![20], vec![21], vec![20, 21], vec![23]].into_iter().collect();
        assert_eq!(ways, expect);
        // exhaustive: score every chain independently and take the arg max
        let mut scored: Vec<(f64, Vec<Id>)> = chains
            .iter()
            .map(|c| (similarity_score(&r.geometry, &c.geometry, &params.weights).unwrap().score, c.ways.clone()))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let m = buffer_grow_match(&[r], &net, &params).unwrap();
        assert_eq!(m[0].best.as_ref().unwrap().chain.ways, scored[0].1);
        assert_eq!(scored[0].1, vec![20, 21]);
    }

    #[test]
    fn ties_prefer_lower_way_id() {
        // two identical ways over the same nodes
        let net = osm(&[(1, [0.0, 0.0]), (2, [100.0, 0.0])], &[(31, &[1, 2]), (30, &[1, 2])]);
        let m = buffer_grow_match(&[reference(vec![[0.0, 0.0], [100.0, 0.0]])], &net, &MatchParams::default()).unwrap();
        assert_eq!(m[0].best.as_ref().unwrap().chain.ways, vec![30]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let nodes: Vec<(Id, [f64; 2])> = (0..40).map(|i| (i, [(i % 8) as f64 * 30.0, (i / 8) as f64 * 30.0])).collect();
        let mut ways: Vec<(Id, Vec<Id>)> = Vec::new();
        for r in 0..5 {
            ways.push((100 + r, (0..8).map(|c| r * 8 + c).collect()));
        }
        for c in 0..8 {
            ways.push((200 + c, (0..5).map(|r| r * 8 + c).collect()));
        }
        let borrowed: Vec<(Id, &[Id])> = ways.iter().map(|(i, n)| (*i, n.as_slice())).collect();
        let net = osm(&nodes, &borrowed);
        let refs: Vec<ReferencePolyline> = (0..5)
            .map(|r| ReferencePolyline { id: r, ..reference(vec![[0.0, r as f64 * 30.0 + 1.0], [210.0, r as f64 * 30.0 - 1.0]]) })
            .collect();
        let p = MatchParams::default();
        assert_eq!(
            buffer_grow_match_with(&refs, &net, &p, Exec::Sequential).unwrap(),
            buffer_grow_match_with(&refs, &net, &p, Exec::Parallel).unwrap()
        );
    }
}
