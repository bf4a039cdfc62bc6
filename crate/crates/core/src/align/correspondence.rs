use crate::geo::{LocalPoint, LocalTrajectory};

use super::AlignError;

/// Index-paired positions: `source[i]` is a SLAM pose, `target[i]` the GNSS
/// position interpolated at the same timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondences {
    pub timestamps: Vec<f64>,
    pub source: Vec<LocalPoint>,
    pub target: Vec<LocalPoint>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Pair every SLAM pose whose timestamp lies within the GNSS time range with
/// the GNSS position linearly interpolated at that time. `z` is interpolated
/// when both neighbours carry it.
pub fn resample_correspondences(
    slam: &LocalTrajectory,
    gnss: &LocalTrajectory,
) -> Result<Correspondences, AlignError> {
    let g = gnss.poses();
    let mut out = Correspondences { timestamps: Vec::new(), source: Vec::new(), target: Vec::new() };
    for pose in slam.poses() {
        let t = pose.timestamp;
        if t < gnss.start_time() || t > gnss.end_time() {
            continue;
        }
        // first index with timestamp > t, so g[k-1].t <= t
        let k = g.partition_point(|s| s.timestamp <= t);
        let point = if k == 0 {
            g[0].point
        } else if k == g.len() || g[k - 1].timestamp == t {
            g[k - 1].point
        } else {
            let (a, b) = (&g[k - 1], &g[k]);
            let w = (t - a.timestamp) / (b.timestamp - a.timestamp);
            let lerp = |p: f64, q: f64| p + w * (q - p);
            LocalPoint {
                x: lerp(a.point.x, b.point.x),
                y: lerp(a.point.y, b.point.y),
                z: a.point.z.zip(b.point.z).map(|(p, q)| lerp(p, q)),
            }
        };
        out.timestamps.push(t);
        out.source.push(pose.point);
        out.target.push(point);
    }
    if out.is_empty() {
        return Err(AlignError::Argument(format!(
            "trajectories do not overlap in time (slam {}..{}, gnss {}..{})",
            slam.start_time(),
            slam.end_time(),
            gnss.start_time(),
            gnss.end_time()
        )));
    }
    Ok(out)
}
