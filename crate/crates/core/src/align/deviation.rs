use serde::{Deserialize, Serialize};

use crate::geo::{LocalPoint, LocalTrajectory};
use crate::par::{self, Exec};

use super::AlignError;

/// Deviation of SLAM poses from the GNSS polyline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub mean_deviation: f64,
    /// Population standard deviation.
    pub std_deviation: f64,
    pub rmse: f64,
    pub residuals: Vec<f64>,
}

impl AlignmentReport {
    pub fn from_residuals(residuals: Vec<f64>) -> AlignmentReport {
        let n = residuals.len().max(1) as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let ms = residuals.iter().map(|r| r * r).sum::<f64>() / n;
        AlignmentReport { mean_deviation: mean, std_deviation: var.sqrt(), rmse: ms.sqrt(), residuals }
    }
}

pub fn deviation_stats(slam: &LocalTrajectory, gnss: &LocalTrajectory) -> AlignmentReport {
    deviation_stats_with(slam, gnss, Exec::default())
}

pub fn deviation_stats_with(slam: &LocalTrajectory, gnss: &LocalTrajectory, exec: Exec) -> AlignmentReport {
    deviation_stats_points(&slam.points(), &gnss.points(), exec).expect("trajectories hold at least two poses")
}

/// Residual of each `slam` point is its distance to the nearest segment of
/// the `gnss` polyline. A single-point polyline degenerates to distance to
/// that point.
pub fn deviation_stats_points(
    slam: &[LocalPoint],
    gnss: &[LocalPoint],
    exec: Exec,
) -> Result<AlignmentReport, AlignError> {
    if slam.is_empty() || gnss.is_empty() {
        return Err(AlignError::Argument("deviation needs non-empty trajectories".into()));
    }
    let line: Vec<[f64; 2]> = gnss.iter().map(LocalPoint::xy).collect();
    let index = SegmentIndex::new(&line);
    let residuals = par::map(exec, slam, |p| index.distance(p.xy()));
    Ok(AlignmentReport::from_residuals(residuals))
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Uniform grid over polyline segments, queried by expanding rings of cells.
pub(crate) struct SegmentIndex<'a> {
    line: &'a [[f64; 2]],
    origin: [f64; 2],
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl<'a> SegmentIndex<'a> {
    pub(crate) fn new(line: &'a [[f64; 2]]) -> SegmentIndex<'a> {
        let nseg = line.len().saturating_sub(1).max(1);
        let mut min = line[0];
        let mut max = line[0];
        let mut total = 0.0;
        for w in line.windows(2) {
            total += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        }
        for p in line {
            min = [min[0].min(p[0]), min[1].min(p[1])];
            max = [max[0].max(p[0]), max[1].max(p[1])];
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]);
        let area_cell = ((max[0] - min[0]) * (max[1] - min[1]) / nseg as f64).sqrt();
        let mut cell = area_cell.max(total / nseg as f64);
        if !(cell > 0.0) || !cell.is_finite() {
            cell = span.max(1.0);
        }
        // keep the table bounded for very elongated polylines
        const MAX_AXIS: f64 = 2048.0;
        cell = cell.max(span / MAX_AXIS);
        let nx = ((max[0] - min[0]) / cell).floor() as i64 + 1;
        let ny = ((max[1] - min[1]) / cell).floor() as i64 + 1;
        let mut cells = vec![Vec::new(); (nx * ny) as usize];
        let single = line.len() == 1;
        for s in 0..nseg {
            let (a, b) = if single { (line[0], line[0]) } else { (line[s], line[s + 1]) };
            let i0 = ((a[0].min(b[0]) - min[0]) / cell).floor() as i64;
            let i1 = ((a[0].max(b[0]) - min[0]) / cell).floor() as i64;
            let j0 = ((a[1].min(b[1]) - min[1]) / cell).floor() as i64;
            let j1 = ((a[1].max(b[1]) - min[1]) / cell).floor() as i64;
            for j in j0.max(0)..=j1.min(ny - 1) {
                for i in i0.max(0)..=i1.min(nx - 1) {
                    cells[(j * nx + i) as usize].push(s as u32);
                }
            }
        }
        SegmentIndex { line, origin: min, cell, nx, ny, cells }
    }

    fn segment_distance(&self, p: [f64; 2], s: usize) -> f64 {
        let b = self.line.get(s + 1).copied().unwrap_or(self.line[s]);
        point_segment_distance(p, self.line[s], b)
    }

    pub(crate) fn distance(&self, p: [f64; 2]) -> f64 {
        let ci = ((p[0] - self.origin[0]) / self.cell).floor() as i64;
        let cj = ((p[1] - self.origin[1]) / self.cell).floor() as i64;
        // Chebyshev distance from the query cell to the nearest grid cell
        let gap = |c: i64, n: i64| if c < 0 { -c } else if c >= n { c - n + 1 } else { 0 };
        let r0 = gap(ci, self.nx).max(gap(cj, self.ny));
        let r_max = (ci.max(self.nx - 1 - ci)).max(cj.max(self.ny - 1 - cj)).max(r0);
        let mut best = f64::INFINITY;
        for r in r0..=r_max {
            for j in (cj - r)..=(cj + r) {
                if j < 0 || j >= self.ny {
                    continue;
                }
                let ring_row = j == cj - r || j == cj + r;
                let mut i = ci - r;
                while i <= ci + r {
                    if i >= 0 && i < self.nx {
                        for &s in &self.cells[(j * self.nx + i) as usize] {
                            best = best.min(self.segment_distance(p, s as usize));
                        }
                    }
                    i += if ring_row || r == 0 { 1 } else { 2 * r };
                }
            }
            // anything in ring r+1 or beyond is at least r cells away
            if best <= r as f64 * self.cell {
                break;
            }
        }
        best
    }
}
