//! Incremental triangulation of a rectangle: every inserted point splits its
//! containing triangle (1→3, or 1→2 on both sides of an edge it lands on),
//! then the new triangles are checked against their neighbours with the
//! quadrilateral test and diagonals are swapped until no test fails.

use serde::Serialize;

use crate::geo::BoundingRect;

use super::AlignError;

pub type TriangleId = usize;

/// Counter-clockwise triangle over the shared vertex table. `neighbors[i]`
/// is the triangle across the edge opposite `vertices[i]`; `None` on the
/// rectangle boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub neighbors: [Option<TriangleId>; 3],
}

impl Triangle {
    fn slot_of_vertex(&self, v: usize) -> Option<usize> {
        self.vertices.iter().position(|&x| x == v)
    }

    fn slot_of_neighbor(&self, t: TriangleId) -> Option<usize> {
        self.neighbors.iter().position(|&n| n == Some(t))
    }
}

/// Outcome of the quadrilateral test on two adjacent triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum QuadDecision {
    Keep,
    Swap,
}

/// Minimum-angle improvement required for a swap, radians. Ties (for
/// example the two diagonals of a square) keep the current diagonal.
const ANGLE_EPS: f64 = 1e-12;

pub(crate) fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    fn angle_at(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        (u[0] * v[1] - u[1] * v[0]).abs().atan2(u[0] * v[0] + u[1] * v[1])
    }
    angle_at(a, b, c).min(angle_at(b, c, a)).min(angle_at(c, a, b))
}

/// Quadrilateral test on the quad `p, q, s, r` (counter-clockwise), currently
/// split by diagonal `q–r`. Swapping to `p–s` is chosen when it strictly
/// raises the smallest interior angle of the pair; a non-convex quad always
/// keeps.
pub(crate) fn quad_decision(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> QuadDecision {
    // both candidate triangles must be properly counter-clockwise
    if orient(p, q, s) <= 0.0 || orient(p, s, r) <= 0.0 {
        return QuadDecision::Keep;
    }
    let current = min_angle(p, q, r).min(min_angle(s, r, q));
    let swapped = min_angle(p, q, s).min(min_angle(p, s, r));
    if swapped > current + ANGLE_EPS {
        QuadDecision::Swap
    } else {
        QuadDecision::Keep
    }
}

/// Quadrilateral test for two triangles given by coordinates. They must
/// share exactly one edge (two bitwise-equal vertices).
pub fn quadrilateral_test(a: [[f64; 2]; 3], b: [[f64; 2]; 3]) -> Result<QuadDecision, AlignError> {
    let shared: Vec<(usize, usize)> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| a[i] == b[j])
        .collect();
    if shared.len() != 2 {
        return Err(AlignError::NotAdjacent);
    }
    let apex_a = (0..3).find(|i| shared.iter().all(|s| s.0 != *i)).ok_or(AlignError::NotAdjacent)?;
    let apex_b = (0..3).find(|j| shared.iter().all(|s| s.1 != *j)).ok_or(AlignError::NotAdjacent)?;
    let p = a[apex_a];
    let s = b[apex_b];
    let (mut q, mut r) = (a[shared[0].0], a[shared[1].0]);
    // orient so that (p, q, r) is counter-clockwise
    if orient(p, q, r) < 0.0 {
        std::mem::swap(&mut q, &mut r);
    }
    if orient(p, q, r) == 0.0 || orient(s, r, q) <= 0.0 {
        // degenerate triangle or both apexes on the same side: no valid swap
        return Ok(QuadDecision::Keep);
    }
    Ok(quad_decision(p, q, r, s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Location {
    Inside(TriangleId),
    /// On the edge opposite `slot` of the triangle.
    OnEdge(TriangleId, usize),
    OnVertex(usize),
}

/// Triangulated rectangle with inserted points.
#[derive(Clone, Debug, Serialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub extent: BoundingRect,
    #[serde(skip)]
    tol: f64,
    #[serde(skip)]
    flips: usize,
}

impl Mesh {
    /// Rectangle split into two triangles along the `min`–`max` diagonal.
    /// Vertices 0..4 are the corners, counter-clockwise from `min`.
    pub fn new(extent: BoundingRect) -> Result<Mesh, AlignError> {
        if !(extent.width() > 0.0 && extent.height() > 0.0) {
            return Err(AlignError::Argument("extent must have positive width and height".into()));
        }
        let vertices = extent.corners().to_vec();
        let triangles = vec![
            Triangle { vertices: [0, 1, 2], neighbors: [None, Some(1), None] },
            Triangle { vertices: [0, 2, 3], neighbors: [None, None, Some(0)] },
        ];
        let tol = 1e-12 * extent.width().hypot(extent.height());
        Ok(Mesh { vertices, triangles, extent, tol, flips: 0 })
    }

    /// Diagonal swaps performed so far.
    pub fn flip_count(&self) -> usize {
        self.flips
    }

    pub fn triangle_points(&self, t: TriangleId) -> [[f64; 2]; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn signed_area(&self, t: TriangleId) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient(a, b, c)
    }

    /// Signed distances of `p` to the three edges, edge `i` opposite vertex `i`.
    fn edge_distances(&self, t: TriangleId, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let d = |u: [f64; 2], v: [f64; 2]| orient(u, v, p) / (v[0] - u[0]).hypot(v[1] - u[1]);
        [d(b, c), d(c, a), d(a, b)]
    }

    fn locate_for_insert(&self, p: [f64; 2]) -> Option<Location> {
        for t in 0..self.triangles.len() {
            let d = self.edge_distances(t, p);
            if d.iter().any(|&x| x < -self.tol) {
                continue;
            }
            let near: Vec<usize> = (0..3).filter(|&i| d[i] <= self.tol).collect();
            return Some(match near.as_slice() {
                [] => Location::Inside(t),
                [slot] => Location::OnEdge(t, *slot),
                _ => {
                    // on (or numerically at) a vertex: the one not on the near edges
                    let tri = &self.triangles[t];
                    let v = (0..3).find(|i| !near.contains(i)).map(|i| tri.vertices[i]);
                    let vid = v.unwrap_or(tri.vertices[0]);
                    let closest = tri
                        .vertices
                        .iter()
                        .copied()
                        .filter(|&x| Some(x) != v || near.len() == 3)
                        .min_by(|&x, &y| {
                            dist2(self.vertices[x], p).total_cmp(&dist2(self.vertices[y], p))
                        })
                        .unwrap_or(vid);
                    Location::OnVertex(closest)
                }
            });
        }
        None
    }

    /// Insert a point strictly inside the extent and restore the
    /// quadrilateral condition around it. Returns the new vertex index.
    pub fn insert(&mut self, p: [f64; 2]) -> Result<usize, AlignError> {
        if !self.extent.strictly_contains(p) {
            return Err(AlignError::Argument(format!(
                "point ({}, {}) not strictly inside the extent",
                p[0], p[1]
            )));
        }
        if let Some(v) = self.vertices.iter().position(|&v| dist2(v, p).sqrt() <= self.tol) {
            return Err(AlignError::DuplicateVertex { x: p[0], y: p[1], existing: v });
        }
        let location = self
            .locate_for_insert(p)
            .ok_or(AlignError::Argument(format!("point ({}, {}) not covered by mesh", p[0], p[1])))?;
        let vi = self.vertices.len();
        self.vertices.push(p);
        let mut stack = match location {
            Location::Inside(t) => self.split_three(t, vi),
            Location::OnEdge(t, slot) => self.split_edge(t, slot, vi)?,
            Location::OnVertex(v) => {
                self.vertices.pop();
                return Err(AlignError::DuplicateVertex { x: p[0], y: p[1], existing: v });
            }
        };
        // Lawson legalisation; each flip strictly improves the local minimum
        // angle, the budget only guards against floating-point cycling
        let budget = 3 * self.triangles.len() + 16;
        let mut steps = 0;
        while let Some(t) = stack.pop() {
            steps += 1;
            if steps > budget {
                log::warn!("edge-flip budget exhausted while inserting vertex {vi}");
                break;
            }
            if let Some((t1, t2)) = self.legalize(t, vi) {
                stack.push(t1);
                stack.push(t2);
            }
        }
        Ok(vi)
    }

    fn relink(&mut self, neighbor: Option<TriangleId>, old: TriangleId, new: TriangleId) {
        if let Some(n) = neighbor {
            if let Some(slot) = self.triangles[n].slot_of_neighbor(old) {
                self.triangles[n].neighbors[slot] = Some(new);
            }
        }
    }

    fn split_three(&mut self, t: TriangleId, p: usize) -> Vec<TriangleId> {
        let Triangle { vertices: [a, b, c], neighbors: [na, nb, nc] } = self.triangles[t];
        let t0 = t;
        let t1 = self.triangles.len();
        let t2 = t1 + 1;
        self.triangles[t0] = Triangle { vertices: [a, b, p], neighbors: [Some(t1), Some(t2), nc] };
        self.triangles.push(Triangle { vertices: [b, c, p], neighbors: [Some(t2), Some(t0), na] });
        self.triangles.push(Triangle { vertices: [c, a, p], neighbors: [Some(t0), Some(t1), nb] });
        self.relink(na, t, t1);
        self.relink(nb, t, t2);
        vec![t0, t1, t2]
    }

    fn split_edge(&mut self, t: TriangleId, slot: usize, p: usize) -> Result<Vec<TriangleId>, AlignError> {
        let tri = self.triangles[t];
        let a = tri.vertices[slot];
        let b = tri.vertices[(slot + 1) % 3];
        let c = tri.vertices[(slot + 2) % 3];
        let nb = tri.neighbors[(slot + 1) % 3];
        let nc = tri.neighbors[(slot + 2) % 3];
        let u = tri.neighbors[slot].ok_or_else(|| {
            AlignError::Argument("point on the extent boundary cannot be inserted".into())
        })?;
        let utri = self.triangles[u];
        let us = utri.slot_of_neighbor(t).expect("asymmetric neighbour link");
        let d = utri.vertices[us];
        // u = (d, c, b) in counter-clockwise order
        let m_c = utri.neighbors[(us + 1) % 3];
        let m_b = utri.neighbors[(us + 2) % 3];
        debug_assert_eq!(utri.vertices[(us + 1) % 3], c);

        let t0 = t;
        let u0 = u;
        let t1 = self.triangles.len();
        let u1 = t1 + 1;
        self.triangles[t0] = Triangle { vertices: [a, b, p], neighbors: [Some(u1), Some(t1), nc] };
        self.triangles[u0] = Triangle { vertices: [d, c, p], neighbors: [Some(t1), Some(u1), m_b] };
        self.triangles.push(Triangle { vertices: [a, p, c], neighbors: [Some(u0), nb, Some(t0)] });
        self.triangles.push(Triangle { vertices: [d, p, b], neighbors: [Some(t0), m_c, Some(u0)] });
        self.relink(nb, t, t1);
        self.relink(m_c, u, u1);
        Ok(vec![t0, t1, u0, u1])
    }

    /// Run the quadrilateral test across the edge of `t` opposite vertex `p`
    /// and swap the diagonal if it fails. Returns the two triangles to
    /// re-test after a swap.
    fn legalize(&mut self, t: TriangleId, p: usize) -> Option<(TriangleId, TriangleId)> {
        let tri = self.triangles[t];
        let sp = tri.slot_of_vertex(p)?;
        let u = tri.neighbors[sp]?;
        let q = tri.vertices[(sp + 1) % 3];
        let r = tri.vertices[(sp + 2) % 3];
        let nt_q = tri.neighbors[(sp + 1) % 3];
        let nt_r = tri.neighbors[(sp + 2) % 3];
        let utri = self.triangles[u];
        let us = utri.slot_of_neighbor(t)?;
        let s = utri.vertices[us];
        // u = (s, r, q)
        let nu_r = utri.neighbors[(us + 1) % 3];
        let nu_q = utri.neighbors[(us + 2) % 3];

        let pos = |v: usize| self.vertices[v];
        if quad_decision(pos(p), pos(q), pos(r), pos(s)) == QuadDecision::Keep {
            return None;
        }
        self.triangles[t] = Triangle { vertices: [p, q, s], neighbors: [nu_r, Some(u), nt_r] };
        self.triangles[u] = Triangle { vertices: [p, s, r], neighbors: [nu_q, nt_q, Some(t)] };
        self.relink(nu_r, u, t);
        self.relink(nt_q, t, u);
        self.flips += 1;
        Some((t, u))
    }

    /// Structural validity: positive areas, symmetric neighbour links with
    /// matching shared edges, boundary edges on the rectangle, and total area
    /// equal to the rectangle (no overlaps, no gaps).
    pub fn check(&self) -> Result<(), String> {
        let mut total = 0.0;
        for (ti, tri) in self.triangles.iter().enumerate() {
            let area = self.signed_area(ti);
            if !(area > 0.0) {
                return Err(format!("triangle {ti} has non-positive area {area}"));
            }
            total += area;
            for i in 0..3 {
                let e0 = tri.vertices[(i + 1) % 3];
                let e1 = tri.vertices[(i + 2) % 3];
                match tri.neighbors[i] {
                    Some(n) => {
                        let other = self.triangles.get(n).ok_or(format!("triangle {ti}: bad neighbour {n}"))?;
                        let j = other
                            .slot_of_neighbor(ti)
                            .ok_or(format!("link {ti}->{n} not reciprocated"))?;
                        let f0 = other.vertices[(j + 1) % 3];
                        let f1 = other.vertices[(j + 2) % 3];
                        if (f0, f1) != (e1, e0) {
                            return Err(format!("triangles {ti} and {n} disagree on their shared edge"));
                        }
                    }
                    None => {
                        let (a, b) = (self.vertices[e0], self.vertices[e1]);
                        let on_side = |k: usize, v: f64| a[k] == v && b[k] == v;
                        let r = &self.extent;
                        if !(on_side(0, r.min[0])
                            || on_side(0, r.max[0])
                            || on_side(1, r.min[1])
                            || on_side(1, r.max[1]))
                        {
                            return Err(format!("triangle {ti}: open edge inside the rectangle"));
                        }
                    }
                }
            }
        }
        let rect = self.extent.width() * self.extent.height();
        if (total - rect).abs() > 1e-9 * rect {
            return Err(format!("triangle areas sum to {total}, rectangle is {rect}"));
        }
        Ok(())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoundingRect {
        BoundingRect::new([0.0, 0.0], [1.0, 1.0])
    }

    fn tri_min_angle_deg(t: [[f64; 2]; 3]) -> f64 {
        min_angle(t[0], t[1], t[2]).to_degrees()
    }

    #[test]
    fn square_keeps_its_diagonal() {
        let a = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let b = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(quadrilateral_test(a, b).unwrap(), QuadDecision::Keep);
    }

    #[test]
    fn sliver_pair_swaps() {
        // p sits 2° below the diagonal q–r, so triangle (p, r, q) is a sliver.
        // Across p–s both triangles have 40° at s as their smallest angle.
        let q = [0.0, 0.0];
        let r = [2.0, 0.0];
        let p = [1.0, -(2f64).to_radians().tan()];
        let s = [1.0, 1.0 / (40f64).to_radians().tan()];
        let current = tri_min_angle_deg([p, r, q]).min(tri_min_angle_deg([s, q, r]));
        let swapped = tri_min_angle_deg([p, q, s]).min(tri_min_angle_deg([p, s, r]));
        assert!((current - 2.0).abs() < 1e-9, "{current}");
        assert!((swapped - 40.0).abs() < 1e-9, "{swapped}");
        assert_eq!(quadrilateral_test([p, r, q], [s, q, r]).unwrap(), QuadDecision::Swap);
    }

    #[test]
    fn concave_union_keeps() {
        // dart: apex s pulled inside the line q–r's far side
        let q = [0.0, 0.0];
        let r = [4.0, 0.0];
        let p = [3.9, -0.2];
        let s = [3.0, 3.0];
        assert_eq!(quadrilateral_test([p, r, q], [q, r, s]).unwrap(), QuadDecision::Keep);
    }

    #[test]
    fn non_adjacent_rejected() {
        let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = [[5.0, 5.0], [6.0, 5.0], [5.0, 6.0]];
        assert_eq!(quadrilateral_test(a, b), Err(AlignError::NotAdjacent));
        let c = [[0.0, 0.0], [3.0, 3.0], [0.0, 4.0]];
        assert_eq!(quadrilateral_test(a, c), Err(AlignError::NotAdjacent));
    }

    #[test]
    fn single_insert_gives_four_or_more_triangles() {
        let mut m = Mesh::new(unit()).unwrap();
        m.insert([0.3, 0.6]).unwrap();
        m.check().unwrap();
        assert_eq!(m.triangles.len(), 4);
    }

    #[test]
    fn insert_on_diagonal_splits_both_sides() {
        let mut m = Mesh::new(unit()).unwrap();
        m.insert([0.5, 0.5]).unwrap();
        m.check().unwrap();
        assert_eq!(m.triangles.len(), 4);
        assert!(m.triangles.iter().all(|t| t.vertices.contains(&4)));
    }

    #[test]
    fn boundary_and_duplicates_rejected() {
        let mut m = Mesh::new(unit()).unwrap();
        assert!(matches!(m.insert([0.0, 0.5]), Err(AlignError::Argument(_))));
        m.insert([0.25, 0.75]).unwrap();
        assert!(matches!(m.insert([0.25, 0.75]), Err(AlignError::DuplicateVertex { .. })));
        m.check().unwrap();
    }

    #[test]
    fn many_inserts_stay_valid() {
        let mut m = Mesh::new(BoundingRect::new([-50.0, -20.0], [150.0, 80.0])).unwrap();
        let mut x = 0.123_f64;
        for _ in 0..200 {
            x = (x * 9301.0 + 49297.0) % 233280.0;
            let a = x / 233280.0;
            x = (x * 9301.0 + 49297.0) % 233280.0;
            let b = x / 233280.0;
            m.insert([-50.0 + 200.0 * (0.01 + 0.98 * a), -20.0 + 100.0 * (0.01 + 0.98 * b)]).unwrap();
            m.check().unwrap();
        }
        assert_eq!(m.triangles.len(), 2 + 2 * 200);
        assert!(m.flip_count() > 0);
    }
}
