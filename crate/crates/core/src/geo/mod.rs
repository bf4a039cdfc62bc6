//! Coordinate types, the UTM projection anchored at a session origin, and
//! elementary planar transforms.

mod rigid;
mod trajectory;
mod utm;

pub use rigid::RigidTransform2D;
pub use trajectory::{read_trajectory_csv, GeoTrajectory, LocalTrajectory, Stamped, Trajectory, TrajectoryFile};
pub use utm::{UtmProjector, UtmZone};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("latitude {0} outside the UTM band [-80, 84]")]
    OutsideUtmBand(f64),
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("projector origin is not available")]
    MissingOrigin,
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// WGS84 geodetic position in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<f64>,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, GeoError> {
        Self::with_elevation(latitude, longitude, None)
    }

    pub fn with_elevation(
        latitude: f64,
        longitude: f64,
        elevation: Option<f64>,
    ) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(GeoError::InvalidLatitude(latitude));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(GeoError::InvalidLongitude(longitude));
        }
        Ok(GeoPoint { latitude, longitude, elevation })
    }
}

/// Planar position in meters (east, north) in a local grid frame. `z` is
/// never touched by the planar transforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

impl LocalPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        LocalPoint { x, y, z: None }
    }

    pub const fn with_z(x: f64, y: f64, z: f64) -> Self {
        LocalPoint { x, y, z: Some(z) }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance(&self, other: &LocalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_none_or(f64::is_finite)
    }

    /// Same point with new planar coordinates; `z` carried over.
    pub fn moved_to(&self, x: f64, y: f64) -> LocalPoint {
        LocalPoint { x, y, z: self.z }
    }
}

/// A point fell outside the region a transform is defined on.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("point ({x}, {y}) lies outside the transform coverage")]
pub struct OutsideCoverage {
    pub x: f64,
    pub y: f64,
}

/// A map from the plane to the plane, possibly defined only on part of it.
pub trait PlanarTransform: Sync {
    fn transform_xy(&self, x: f64, y: f64) -> Result<[f64; 2], OutsideCoverage>;

    fn transform_point(&self, p: &LocalPoint) -> Result<LocalPoint, OutsideCoverage> {
        let [x, y] = self.transform_xy(p.x, p.y)?;
        Ok(p.moved_to(x, y))
    }
}

/// Axis-aligned rectangle in the local frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingRect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingRect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        BoundingRect { min, max }
    }

    /// Smallest rectangle containing all points, or `None` for an empty input.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut rect = BoundingRect { min: *first, max: *first };
        for p in it {
            rect.include(*p);
        }
        Some(rect)
    }

    pub fn include(&mut self, p: [f64; 2]) {
        self.min[0] = self.min[0].min(p[0]);
        self.min[1] = self.min[1].min(p[1]);
        self.max[0] = self.max[0].max(p[0]);
        self.max[1] = self.max[1].max(p[1]);
    }

    pub fn union(&self, other: &BoundingRect) -> BoundingRect {
        let mut r = *self;
        r.include(other.min);
        r.include(other.max);
        r
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    /// Grow each side by `fraction` of the respective extent, but never by
    /// less than `min_margin` meters.
    pub fn expanded(&self, fraction: f64, min_margin: f64) -> BoundingRect {
        let dx = (self.width() * fraction).max(min_margin);
        let dy = (self.height() * fraction).max(min_margin);
        BoundingRect {
            min: [self.min[0] - dx, self.min[1] - dy],
            max: [self.max[0] + dx, self.max[1] + dy],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn strictly_contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    /// Corners in counter-clockwise order starting at `min`.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            self.min,
            [self.max[0], self.min[1]],
            self.max,
            [self.min[0], self.max[1]],
        ]
    }
}
