use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::geo::{BoundingRect, LocalPoint, OutsideCoverage, PlanarTransform};
use crate::par::{self, Exec};

use super::mesh::{orient, Mesh, TriangleId};
use super::{AlignError, ControlPointPair};

/// Fraction of the joint data extent added on every side of the rectangle.
pub const DEFAULT_EXTENT_FRACTION: f64 = 0.1;

pub type AffineMatrix = [[f64; 3]; 3];

/// Rubber-sheet warp: a triangulation of the source control points plus the
/// extent corners, with one homogeneous affine matrix per triangle. Corners
/// map to themselves.
#[derive(Clone, Debug, Serialize)]
pub struct PiecewiseAffineTransform {
    mesh: Mesh,
    targets: Vec<[f64; 2]>,
    matrices: Vec<AffineMatrix>,
    #[serde(skip)]
    grid: TriangleGrid,
}

pub fn build_rubber_sheet(
    cps: &[ControlPointPair],
    extent: BoundingRect,
) -> Result<PiecewiseAffineTransform, AlignError> {
    build_rubber_sheet_observed(cps, extent, |_| {})
}

/// As [`build_rubber_sheet`], calling `observe` with the mesh after every
/// insertion (and its edge swaps).
pub fn build_rubber_sheet_observed(
    cps: &[ControlPointPair],
    extent: BoundingRect,
    mut observe: impl FnMut(&Mesh),
) -> Result<PiecewiseAffineTransform, AlignError> {
    if cps.is_empty() {
        return Err(AlignError::Argument("rubber sheet needs at least one control point".into()));
    }
    let mut mesh = Mesh::new(extent)?;
    let mut targets: Vec<[f64; 2]> = extent.corners().to_vec();
    for (index, cp) in cps.iter().enumerate() {
        if !cp.is_finite() {
            return Err(AlignError::ControlPoint { index, message: "non-finite coordinate".into() });
        }
        mesh.insert(cp.source).map_err(|e| match e {
            AlignError::DuplicateVertex { existing, .. } if existing >= 4 => AlignError::ControlPoint {
                index,
                message: format!("duplicate source of control point {}", existing - 4),
            },
            AlignError::DuplicateVertex { .. } | AlignError::Argument(_) => AlignError::ControlPoint {
                index,
                message: "source must lie strictly inside the extent".into(),
            },
            other => other,
        })?;
        targets.push(cp.target);
        observe(&mesh);
    }
    let matrices = (0..mesh.triangles.len()).map(|t| solve_triangle(&mesh, &targets, t)).collect();
    let grid = TriangleGrid::new(&mesh);
    Ok(PiecewiseAffineTransform { mesh, targets, matrices, grid })
}

/// Solve the nine equations mapping the triangle's source vertices to its
/// targets with homogeneous third coordinate one. The system is block
/// diagonal in the matrix rows; each block is solved in coordinates centred
/// on the triangle and scaled by its size, then mapped back.
fn solve_triangle(mesh: &Mesh, targets: &[[f64; 2]], t: TriangleId) -> AffineMatrix {
    let ids = mesh.triangles[t].vertices;
    let src = ids.map(|v| mesh.vertices[v]);
    let dst = ids.map(|v| targets[v]);
    let c = [(src[0][0] + src[1][0] + src[2][0]) / 3.0, (src[0][1] + src[1][1] + src[2][1]) / 3.0];
    let s = src
        .iter()
        .map(|p| (p[0] - c[0]).abs().max((p[1] - c[1]).abs()))
        .fold(0.0, f64::max);
    let u = Matrix3::from_fn(|r, k| match k {
        0 => (src[r][0] - c[0]) / s,
        1 => (src[r][1] - c[1]) / s,
        _ => 1.0,
    });
    let lu = u.lu();
    let rhs = [
        Vector3::new(dst[0][0], dst[1][0], dst[2][0]),
        Vector3::new(dst[0][1], dst[1][1], dst[2][1]),
        Vector3::new(1.0, 1.0, 1.0),
    ];
    let mut m = [[0.0; 3]; 3];
    for (row, b) in rhs.iter().enumerate() {
        let a = lu.solve(b).expect("non-degenerate source triangle");
        m[row] = [a[0] / s, a[1] / s, a[2] - (a[0] * c[0] + a[1] * c[1]) / s];
    }
    m
}

impl PiecewiseAffineTransform {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn extent(&self) -> BoundingRect {
        self.mesh.extent
    }

    /// Target position of every mesh vertex; corners first.
    pub fn targets(&self) -> &[[f64; 2]] {
        &self.targets
    }

    pub fn matrices(&self) -> &[AffineMatrix] {
        &self.matrices
    }

    pub fn control_point_count(&self) -> usize {
        self.mesh.vertices.len() - 4
    }

    pub fn triangle_count(&self) -> usize {
        self.mesh.triangles.len()
    }

    /// Triangle containing `p`; on shared edges and vertices the lowest id.
    pub fn locate_triangle(&self, p: [f64; 2]) -> Result<TriangleId, OutsideCoverage> {
        let outside = OutsideCoverage { x: p[0], y: p[1] };
        if !p[0].is_finite() || !p[1].is_finite() || !self.mesh.extent.contains(p) {
            return Err(outside);
        }
        let tol = self.grid.tol;
        if let Some(t) = self.grid.candidates(p).iter().map(|&t| t as usize).find(|&t| self.contains(t, p, tol)) {
            return Ok(t);
        }
        // rounding at a cell border; fall back to a full scan, a bit looser
        (0..self.mesh.triangles.len()).find(|&t| self.contains(t, p, 1e3 * tol)).ok_or(outside)
    }

    fn contains(&self, t: TriangleId, p: [f64; 2], tol: f64) -> bool {
        let [a, b, c] = self.mesh.triangle_points(t);
        let d = |u: [f64; 2], v: [f64; 2]| orient(u, v, p) / (v[0] - u[0]).hypot(v[1] - u[1]);
        d(b, c) >= -tol && d(c, a) >= -tol && d(a, b) >= -tol
    }

    /// Apply triangle `t`'s matrix regardless of containment.
    pub fn apply_triangle(&self, t: TriangleId, p: [f64; 2]) -> [f64; 2] {
        let m = &self.matrices[t];
        [m[0][0] * p[0] + m[0][1] * p[1] + m[0][2], m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]]
    }

    pub fn apply_all(&self, pts: &[LocalPoint]) -> Result<Vec<LocalPoint>, OutsideCoverage> {
        self.apply_all_with(pts, Exec::default())
    }

    pub fn apply_all_with(&self, pts: &[LocalPoint], exec: Exec) -> Result<Vec<LocalPoint>, OutsideCoverage> {
        par::try_map(exec, pts, |p| self.transform_point(p))
    }
}

impl PlanarTransform for PiecewiseAffineTransform {
    fn transform_xy(&self, x: f64, y: f64) -> Result<[f64; 2], OutsideCoverage> {
        let t = self.locate_triangle([x, y])?;
        Ok(self.apply_triangle(t, [x, y]))
    }
}

/// Uniform grid of triangle-bbox overlap lists, each sorted by id.
#[derive(Clone, Debug, Default)]
struct TriangleGrid {
    origin: [f64; 2],
    cell: [f64; 2],
    n: usize,
    cells: Vec<Vec<u32>>,
    tol: f64,
}

impl TriangleGrid {
    fn new(mesh: &Mesh) -> TriangleGrid {
        let r = mesh.extent;
        let n = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = [r.width() / n as f64, r.height() / n as f64];
        let mut cells = vec![Vec::new(); n * n];
        let idx = |v: f64, o: f64, c: f64| (((v - o) / c).floor().max(0.0) as usize).min(n - 1);
        for t in 0..mesh.triangles.len() {
            let pts = mesh.triangle_points(t);
            let bb = BoundingRect::from_points(pts.iter()).expect("three points");
            for j in idx(bb.min[1], r.min[1], cell[1])..=idx(bb.max[1], r.min[1], cell[1]) {
                for i in idx(bb.min[0], r.min[0], cell[0])..=idx(bb.max[0], r.min[0], cell[0]) {
                    cells[j * n + i].push(t as u32);
                }
            }
        }
        let tol = 1e-12 * r.width().hypot(r.height());
        TriangleGrid { origin: r.min, cell, n, cells, tol }
    }

    fn candidates(&self, p: [f64; 2]) -> &[u32] {
        let idx = |v: f64, o: f64, c: f64| (((v - o) / c).floor().max(0.0) as usize).min(self.n - 1);
        let i = idx(p[0], self.origin[0], self.cell[0]);
        let j = idx(p[1], self.origin[1], self.cell[1]);
        &self.cells[j * self.n + i]
    }
}
