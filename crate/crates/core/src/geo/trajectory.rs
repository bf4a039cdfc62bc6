use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint, LocalPoint};

/// A value tagged with a timestamp in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamped<P> {
    pub timestamp: f64,
    pub point: P,
}

/// Time-ordered poses. Construction enforces at least two poses and strictly
/// increasing timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<P> {
    poses: Vec<Stamped<P>>,
}

pub type LocalTrajectory = Trajectory<LocalPoint>;
pub type GeoTrajectory = Trajectory<GeoPoint>;

impl<P> Trajectory<P> {
    pub fn new(poses: Vec<Stamped<P>>) -> Result<Self, GeoError> {
        if poses.len() < 2 {
            return Err(GeoError::Trajectory(format!(
                "need at least 2 poses, got {}",
                poses.len()
            )));
        }
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(GeoError::Trajectory(format!(
                    "timestamps not strictly increasing at pose {}",
                    i + 1
                )));
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Stamped<P>] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.poses[0].timestamp
    }

    pub fn end_time(&self) -> f64 {
        self.poses[self.poses.len() - 1].timestamp
    }

    /// Same timestamps, points mapped by `f`.
    pub fn try_map<Q, E>(&self, mut f: impl FnMut(&P) -> Result<Q, E>) -> Result<Trajectory<Q>, E> {
        let poses = self
            .poses
            .iter()
            .map(|s| Ok(Stamped { timestamp: s.timestamp, point: f(&s.point)? }))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Trajectory { poses })
    }
}

impl LocalTrajectory {
    pub fn points(&self) -> Vec<LocalPoint> {
        self.poses.iter().map(|s| s.point).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GeoError> {
        let mut w = csv::Writer::from_writer(out);
        let has_z = self.poses.iter().any(|s| s.point.z.is_some());
        let header: &[&str] =
            if has_z { &["timestamp", "x", "y", "z"] } else { &["timestamp", "x", "y"] };
        w.write_record(header).map_err(csv_err)?;
        for s in &self.poses {
            let mut rec = vec![s.timestamp.to_string(), s.point.x.to_string(), s.point.y.to_string()];
            if has_z {
                rec.push(s.point.z.map(|z| z.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| GeoError::Csv(e.to_string()))
    }
}

impl GeoTrajectory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GeoError> {
        let mut w = csv::Writer::from_writer(out);
        let has_ele = self.poses.iter().any(|s| s.point.elevation.is_some());
        let header: &[&str] =
            if has_ele { &["timestamp", "lat", "lon", "ele"] } else { &["timestamp", "lat", "lon"] };
        w.write_record(header).map_err(csv_err)?;
        for s in &self.poses {
            let p = &s.point;
            let mut rec = vec![s.timestamp.to_string(), p.latitude.to_string(), p.longitude.to_string()];
            if has_ele {
                rec.push(p.elevation.map(|e| e.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| GeoError::Csv(e.to_string()))
    }
}

/// A trajectory as read from CSV; the header decides the frame.
#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryFile {
    Local(LocalTrajectory),
    Global(GeoTrajectory),
}

fn csv_err(e: csv::Error) -> GeoError {
    GeoError::Csv(e.to_string())
}

/// Read `timestamp,lat,lon[,ele]` (global) or `timestamp,x,y[,z]` (local).
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryFile, GeoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    let global = match cols.as_slice() {
        ["timestamp", "lat", "lon"] | ["timestamp", "lat", "lon", "ele"] => true,
        ["timestamp", "x", "y"] | ["timestamp", "x", "y", "z"] => false,
        _ => {
            return Err(GeoError::Csv(format!(
                "unrecognised header '{}'; expected timestamp,lat,lon[,ele] or timestamp,x,y[,z]",
                header.join(",")
            )))
        }
    };
    let with_third = cols.len() == 4;

    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut vals = [0.0, 0.0, 0.0, f64::NAN];
        for (i, v) in vals.iter_mut().enumerate().take(cols.len()) {
            let field = rec.get(i).unwrap_or("");
            if i == 3 && field.is_empty() {
                continue;
            }
            *v = field.parse().map_err(|_| {
                GeoError::Csv(format!("row {}: cannot parse '{}' as a number", line + 2, field))
            })?;
        }
        rows.push(vals);
    }
    let third = |v: f64| (with_third && !v.is_nan()).then_some(v);

    if global {
        let poses = rows
            .iter()
            .map(|r| {
                Ok(Stamped {
                    timestamp: r[0],
                    point: GeoPoint::with_elevation(r[1], r[2], third(r[3]))?,
                })
            })
            .collect::<Result<Vec<_>, GeoError>>()?;
        Ok(TrajectoryFile::Global(Trajectory::new(poses)?))
    } else {
        let poses = rows
            .iter()
            .map(|r| Stamped { timestamp: r[0], point: LocalPoint { x: r[1], y: r[2], z: third(r[3]) } })
            .collect();
        Ok(TrajectoryFile::Local(Trajectory::new(poses)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_global_and_local() {
        let g = "timestamp,lat,lon,ele\n0.0,48.1,11.6,500\n1.0,48.1001,11.6,\n";
        match read_trajectory_csv(g.as_bytes()).unwrap() {
            TrajectoryFile::Global(t) => {
                assert_eq!(t.len(), 2);
                assert_eq!(t.poses()[0].point.elevation, Some(500.0));
                assert_eq!(t.poses()[1].point.elevation, None);
            }
            other => panic!("{other:?}"),
        }
        let l = "timestamp, x, y\n0,0,0\n0.5,1,2\n1,2,4\n";
        match read_trajectory_csv(l.as_bytes()).unwrap() {
            TrajectoryFile::Local(t) => assert_eq!(t.poses()[2].point, LocalPoint::new(2.0, 4.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_trajectory_csv("t,a,b\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("timestamp,x,y\n0,0,0\n0,1,1\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("timestamp,x,y\n0,0,0\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("timestamp,lat,lon\n0,95,0\n1,0,0\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("timestamp,x,y\n0,zero,0\n1,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn local_csv_round_trip() {
        let t = Trajectory::new(vec![
            Stamped { timestamp: 0.1, point: LocalPoint::with_z(0.1 + 0.2, -7.25, 1.0) },
            Stamped { timestamp: 0.2, point: LocalPoint::with_z(1e-17, 3.0, 2.0) },
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), TrajectoryFile::Local(t));
    }

    #[test]
    fn global_csv_round_trip() {
        let t = Trajectory::new(vec![
            Stamped { timestamp: 0.0, point: GeoPoint::with_elevation(48.137154, 11.576124, Some(519.5)).unwrap() },
            Stamped { timestamp: 0.5, point: GeoPoint::new(48.1371600000001, 11.5761).unwrap() },
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), TrajectoryFile::Global(t));
    }
}
