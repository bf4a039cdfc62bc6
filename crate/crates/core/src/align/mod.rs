//! Rigid (Umeyama) and rubber-sheet alignment of the SLAM frame to the
//! projected GNSS frame, plus the trajectory deviation metric.

mod correspondence;
mod deviation;
mod mesh;
mod rubber_sheet;
mod umeyama;

pub use correspondence::{resample_correspondences, Correspondences};
pub use deviation::{deviation_stats, deviation_stats_points, deviation_stats_with, AlignmentReport};
pub(crate) use deviation::{point_segment_distance, SegmentIndex};
pub use mesh::{quadrilateral_test, Mesh, QuadDecision, Triangle, TriangleId};
pub use rubber_sheet::{build_rubber_sheet, build_rubber_sheet_observed, AffineMatrix, PiecewiseAffineTransform, DEFAULT_EXTENT_FRACTION};
pub use umeyama::{umeyama_fit, UmeyamaFit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{LocalPoint, OutsideCoverage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate input: {0}")]
    Rank(String),
    #[error("triangles do not share exactly one edge")]
    NotAdjacent,
    #[error("point ({x}, {y}) coincides with mesh vertex {existing}")]
    DuplicateVertex { x: f64, y: f64, existing: usize },
    #[error("control point {index}: {message}")]
    ControlPoint { index: usize, message: String },
    #[error(transparent)]
    Coverage(#[from] OutsideCoverage),
}

/// Corresponding positions picked on the SLAM trajectory (`source`) and the
/// GNSS trajectory (`target`), both in the rigidly aligned local frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPointPair {
    pub source: [f64; 2],
    pub target: [f64; 2],
}

impl ControlPointPair {
    pub fn new(source: [f64; 2], target: [f64; 2]) -> Self {
        ControlPointPair { source, target }
    }

    pub fn is_finite(&self) -> bool {
        self.source.iter().chain(&self.target).all(|v| v.is_finite())
    }
}

pub fn read_control_points(bytes: &[u8]) -> Result<Vec<ControlPointPair>, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn write_control_points(cps: &[ControlPointPair]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(cps).expect("control points serialize");
    out.push(b'\n');
    out
}

pub(crate) fn xy_of(points: &[LocalPoint]) -> Vec<[f64; 2]> {
    points.iter().map(LocalPoint::xy).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_point_json_shape() {
        let cps = read_control_points(br#"[{"source": [1.5, 2], "target": [3, -4.25]}]"#).unwrap();
        assert_eq!(cps, vec![ControlPointPair::new([1.5, 2.0], [3.0, -4.25])]);
        assert_eq!(read_control_points(&write_control_points(&cps)).unwrap(), cps);
        assert!(read_control_points(br#"[{"source": [1], "target": [3, 4]}]"#).is_err());
    }
}
