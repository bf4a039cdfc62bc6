use serde::{Deserialize, Serialize};

use super::{LocalPoint, OutsideCoverage, PlanarTransform};

/// Proper rotation followed by a translation, in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    /// Row-major 2×2 rotation, determinant +1.
    pub rotation: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Default for RigidTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform2D {
    pub fn identity() -> Self {
        RigidTransform2D { rotation: [[1.0, 0.0], [0.0, 1.0]], translation: [0.0, 0.0] }
    }

    /// Counter-clockwise rotation by `angle` radians, then translation.
    pub fn from_angle(angle: f64, translation: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        RigidTransform2D { rotation: [[c, -s], [s, c]], translation }
    }

    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply_xy(&self, x: f64, y: f64) -> [f64; 2] {
        let r = &self.rotation;
        [
            r[0][0] * x + r[0][1] * y + self.translation[0],
            r[1][0] * x + r[1][1] * y + self.translation[1],
        ]
    }

    pub fn apply(&self, p: &LocalPoint) -> LocalPoint {
        let [x, y] = self.apply_xy(p.x, p.y);
        p.moved_to(x, y)
    }

    pub fn apply_all(&self, pts: &[LocalPoint]) -> Vec<LocalPoint> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let t = self.translation;
        RigidTransform2D {
            rotation: rt,
            translation: [
                -(rt[0][0] * t[0] + rt[0][1] * t[1]),
                -(rt[1][0] * t[0] + rt[1][1] * t[1]),
            ],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform2D) -> Self {
        let a = &self.rotation;
        let b = &other.rotation;
        let rotation = [
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ];
        let [tx, ty] = self.apply_xy(other.translation[0], other.translation[1]);
        RigidTransform2D { rotation, translation: [tx, ty] }
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * r[1][1] - r[0][1] * r[1][0]
    }
}

impl PlanarTransform for RigidTransform2D {
    fn transform_xy(&self, x: f64, y: f64) -> Result<[f64; 2], OutsideCoverage> {
        Ok(self.apply_xy(x, y))
    }
}
