//! ASCII point clouds in the PCD 0.7 layout with fields `x y z` or
//! `x y z intensity`. Binary data sections are rejected.

use std::fmt::Write;

use crate::geo::{GeoPoint, PlanarTransform};
use crate::par::{self, Exec};

use super::MapError;

/// Registered point cloud. Positions are meters; `intensity`, when present,
/// has one entry per point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloudMap {
    pub points: Vec<[f64; 3]>,
    pub intensity: Option<Vec<f64>>,
    /// Geodetic anchor of the local frame, stored as a `# geo_origin` comment.
    pub geo_origin: Option<GeoPoint>,
}

impl PointCloudMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transform(&mut self, t: &impl PlanarTransform) -> Result<(), MapError> {
        self.transform_with(t, Exec::default())
    }

    /// Transform x/y of every point; z and intensity unchanged. On a coverage
    /// failure nothing is modified.
    pub fn transform_with(&mut self, t: &impl PlanarTransform, exec: Exec) -> Result<(), MapError> {
        let indexed: Vec<(usize, [f64; 3])> = self.points.iter().copied().enumerate().collect();
        let moved = par::try_map(exec, &indexed, |(i, p)| {
            t.transform_xy(p[0], p[1])
                .map(|[x, y]| [x, y, p[2]])
                .map_err(|e| MapError::CloudCoverage { index: *i, x: e.x, y: e.y })
        })?;
        self.points = moved;
        Ok(())
    }
}

const KNOWN_HEADER: [&str; 10] =
    ["VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA"];

pub fn load_pcd(bytes: &[u8]) -> Result<PointCloudMap, MapError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MapError::Format(format!("invalid UTF-8: {e}")))?;
    let mut lines = text.lines().enumerate();
    let mut fields: Option<Vec<String>> = None;
    let mut declared: Option<usize> = None;
    let mut width_height: (Option<usize>, Option<usize>) = (None, None);
    let mut geo_origin = None;
    let mut saw_data = false;

    for (n, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            if it.next() == Some("geo_origin") {
                let vals: Vec<f64> = it
                    .map(|v| v.parse().map_err(|_| MapError::Format(format!("line {}: bad geo_origin", n + 1))))
                    .collect::<Result<_, _>>()?;
                if vals.len() < 2 {
                    return Err(MapError::Format(format!("line {}: geo_origin needs lat lon", n + 1)));
                }
                geo_origin = Some(GeoPoint::with_elevation(vals[0], vals[1], vals.get(2).copied())?);
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_uppercase();
        let values: Vec<&str> = parts.collect();
        if !KNOWN_HEADER.contains(&key.as_str()) {
            return Err(MapError::Format(format!("line {}: unknown header entry '{key}'", n + 1)));
        }
        let count = |v: &[&str]| -> Result<usize, MapError> {
            v.first()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| MapError::Format(format!("line {}: {key} needs an integer", n + 1)))
        };
        match key.as_str() {
            "FIELDS" => fields = Some(values.iter().map(|s| s.to_string()).collect()),
            "COUNT" => {
                if values.iter().any(|c| *c != "1") {
                    return Err(MapError::Format("only scalar fields (COUNT 1) are supported".into()));
                }
            }
            "WIDTH" => width_height.0 = Some(count(&values)?),
            "HEIGHT" => width_height.1 = Some(count(&values)?),
            "POINTS" => declared = Some(count(&values)?),
            "DATA" => {
                if values.first().map(|s| s.to_ascii_lowercase()) != Some("ascii".into()) {
                    return Err(MapError::Format(format!(
                        "DATA {} not supported; only ascii",
                        values.join(" ")
                    )));
                }
                saw_data = true;
                break;
            }
            _ => {}
        }
    }
    if !saw_data {
        return Err(MapError::Format("missing DATA line".into()));
    }
    let fields = fields.ok_or_else(|| MapError::Format("missing FIELDS line".into()))?;
    let has_intensity = match fields.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "intensity"] => true,
        other => {
            return Err(MapError::Format(format!("unsupported field layout '{}'", other.join(" "))))
        }
    };
    let expected = declared.or(match width_height {
        (Some(w), Some(h)) => Some(w * h),
        _ => None,
    });

    let mut points = Vec::with_capacity(expected.unwrap_or(0));
    let mut intensity = has_intensity.then(|| Vec::with_capacity(expected.unwrap_or(0)));
    let ncols = if has_intensity { 4 } else { 3 };
    for (n, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| MapError::Format(format!("line {}: non-numeric value", n + 1)))?;
        if vals.len() != ncols {
            return Err(MapError::Format(format!(
                "line {}: expected {ncols} values, found {}",
                n + 1,
                vals.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(MapError::Format(format!("line {}: non-finite coordinate", n + 1)));
        }
        points.push([vals[0], vals[1], vals[2]]);
        if let Some(i) = intensity.as_mut() {
            i.push(vals[3]);
        }
    }
    if let Some(e) = expected {
        if e != points.len() {
            return Err(MapError::Format(format!("header declares {e} points, data has {}", points.len())));
        }
    }
    Ok(PointCloudMap { points, intensity, geo_origin })
}

/// Write ASCII PCD. Values use the shortest representation that reads back
/// to the same `f64`, so `load_pcd(save_pcd(c)) == c`.
pub fn save_pcd(cloud: &PointCloudMap) -> Vec<u8> {
    let n = cloud.points.len();
    let with_i = cloud.intensity.is_some();
    let mut out = String::with_capacity(48 * n + 256);
    out.push_str("# .PCD v0.7 - Point Cloud Data file format\n");
    if let Some(o) = &cloud.geo_origin {
        let _ = write!(out, "# geo_origin {} {}", o.latitude, o.longitude);
        if let Some(e) = o.elevation {
            let _ = write!(out, " {e}");
        }
        out.push('\n');
    }
    out.push_str("VERSION 0.7\n");
    if with_i {
        out.push_str("FIELDS x y z intensity\nSIZE 8 8 8 8\nTYPE F F F F\nCOUNT 1 1 1 1\n");
    } else {
        out.push_str("FIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\n");
    }
    let _ = write!(out, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p[0], p[1], p[2]);
        if let Some(int) = &cloud.intensity {
            let _ = write!(out, " {}", int[i]);
        }
        out.push('\n');
    }
    out.into_bytes()
}
