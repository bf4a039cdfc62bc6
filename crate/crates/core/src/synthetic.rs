//! Deterministic synthetic inputs: a small grid town, an OSM extract derived
//! from its own centerlines, and a distorted SLAM recording of a drive around
//! it. Used by tests, benches and demos.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use crate::align::{write_control_points, ControlPointPair};
use crate::conflate::{collapse_lanelets, Centerline, ConflateError};
use crate::geo::{GeoPoint, GeoTrajectory, LocalPoint, LocalTrajectory, RigidTransform2D, Stamped, UtmProjector};
use crate::map::{
    save_pcd, write_lanelet2, write_osm_network, Attributes, Id, Lanelet, LaneletMap, LineString, OsmNode,
    OsmRoadNetwork, OsmWay, Point, PointCloudMap,
};

/// Geodetic anchor of the synthetic world frame.
pub const ORIGIN: (f64, f64) = (48.137, 11.575);
pub const BLOCK: f64 = 60.0;
/// Intersections per side.
pub const GRID: usize = 4;
pub const LANE_WIDTH: f64 = 3.5;
const STEP: f64 = 10.0;

pub fn origin() -> GeoPoint {
    GeoPoint::new(ORIGIN.0, ORIGIN.1).expect("valid origin")
}

struct Builder {
    map: LaneletMap,
    next: Id,
}

impl Builder {
    fn id(&mut self) -> Id {
        self.next += 1;
        self.next
    }

    fn point(&mut self, p: [f64; 2]) -> Id {
        let id = self.id();
        self.map.points.insert(id, Point::local(LocalPoint::new(p[0], p[1])));
        id
    }

    fn line(&mut self, pts: Vec<Id>) -> Id {
        let id = self.id();
        self.map.linestrings.insert(id, LineString::new(pts));
        id
    }

    fn lanelet(&mut self, left: Id, right: Id) -> Id {
        let id = self.id();
        let mut ll = Lanelet::new(left, right);
        ll.attributes.insert("subtype".into(), "road".into());
        self.map.lanelets.insert(id, ll);
        id
    }

    /// Straight street from `start` along unit `dir`, split into `blocks`
    /// pieces of `len`, with a boundary at each lateral `offsets` (left
    /// normal positive). `lanes` holds (left, right) offset indices per
    /// lane; which way a lane drives follows from which side its left bound
    /// lies on.
    fn street(&mut self, start: [f64; 2], dir: [f64; 2], blocks: usize, len: f64, offsets: &[f64], lanes: &[(usize, usize)]) {
        let n = [-dir[1], dir[0]];
        let per_block = (len / STEP).round().max(1.0) as usize;
        let at = |s: f64, o: f64| [start[0] + s * dir[0] + o * n[0], start[1] + s * dir[1] + o * n[1]];
        let mut ends: Vec<Id> = offsets.iter().map(|&o| self.point(at(0.0, o))).collect();
        for b in 0..blocks {
            let mut lines = Vec::with_capacity(offsets.len());
            let mut next_ends = Vec::with_capacity(offsets.len());
            for (k, &o) in offsets.iter().enumerate() {
                let mut pts = vec![ends[k]];
                for i in 1..=per_block {
                    let s = (b as f64 + i as f64 / per_block as f64) * len;
                    pts.push(self.point(at(s, o)));
                }
                next_ends.push(*pts.last().unwrap());
                lines.push(self.line(pts));
            }
            for &(l, r) in lanes {
                self.lanelet(lines[l], lines[r]);
            }
            ends = next_ends;
        }
    }
}

/// Grid town in the world frame: `GRID` east-west and `GRID` north-south
/// two-way streets one lane per direction, split per block, and a one-way
/// two-lane spur continuing the southern street eastwards. 50 lanelets.
pub fn town() -> LaneletMap {
    let mut b = Builder { map: LaneletMap::new(), next: 0 };
    let span = BLOCK * (GRID - 1) as f64;
    let two_way = [(1, 0), (1, 2)];
    let offsets = [-LANE_WIDTH, 0.0, LANE_WIDTH];
    for j in 0..GRID {
        b.street([0.0, j as f64 * BLOCK], [1.0, 0.0], GRID - 1, BLOCK, &offsets, &two_way);
    }
    for i in 0..GRID {
        b.street([i as f64 * BLOCK, 0.0], [0.0, 1.0], GRID - 1, BLOCK, &offsets, &two_way);
    }
    b.street([span, 0.0], [1.0, 0.0], 1, BLOCK, &offsets, &[(1, 0), (2, 1)]);
    b.map
}

/// [`town`] plus one isolated westbound lane north of the second block of
/// the second street, sharing that block's northern boundary. OSM says two
/// lanes there, so the extra lanelet is a removable fragment.
pub fn town_with_fragment() -> (LaneletMap, Id) {
    let map = town();
    let at = |m: &LaneletMap, id: &Id| m.points[id].as_local().unwrap().xy();
    let y = BLOCK + LANE_WIDTH;
    let shared = *map
        .linestrings
        .iter()
        .find(|(_, ls)| {
            let (a, z) = (at(&map, &ls.points[0]), at(&map, ls.points.last().unwrap()));
            a == [BLOCK, y] && z == [2.0 * BLOCK, y]
        })
        .map(|(id, _)| id)
        .expect("town has the block boundary");
    let next = map.element_count() as Id * 10;
    let mut b = Builder { map, next };
    let per_block = (BLOCK / STEP).round() as usize;
    let pts = (0..=per_block).map(|i| b.point([BLOCK * (1.0 + i as f64 / per_block as f64), y + LANE_WIDTH])).collect();
    let outer = b.line(pts);
    let frag = b.lanelet(shared, outer);
    (b.map, frag)
}

const ROW_NAMES: [&str; GRID] = ["Lindenstraße", "Gartenweg", "Schulstraße", "Am Anger"];
const COLUMN_NAMES: [&str; GRID] = ["Mühlbachstraße", "Kirchplatz", "Bahnhofstraße", "Feldweg"];

/// Tags of the derived OSM way for a town centerline, chosen by its position.
pub fn town_tags(c: &Centerline) -> Attributes {
    let g = &c.geometry;
    let (a, z) = (g[0], g[g.len() - 1]);
    let span = BLOCK * (GRID - 1) as f64;
    let mut t = Attributes::new();
    let mut put = |k: &str, v: &str| {
        t.insert(k.to_owned(), v.to_owned());
    };
    if a[0].min(z[0]) >= span - 1e-6 && (a[1] - z[1]).abs() < 1e-6 {
        for (k, v) in [("highway", "service"), ("oneway", "yes"), ("lanes", "2"), ("maxspeed", "20")] {
            put(k, v);
        }
    } else if (a[1] - z[1]).abs() < 1e-6 {
        let j = (a[1] / BLOCK).round() as usize;
        put("highway", "residential");
        put("name", ROW_NAMES[j]);
        put("maxspeed", "30");
        // one street with a wrong lane count, to exercise the red case
        put("lanes", if j == 2 { "3" } else { "2" });
        if j == 1 {
            put("surface", "paving_stones");
        }
    } else {
        let i = (a[0] / BLOCK).round() as usize;
        put("highway", if i == 0 { "secondary" } else { "tertiary" });
        put("name", COLUMN_NAMES[i]);
        put("maxspeed", "50");
        put("surface", "asphalt");
        put("lane_markings", "yes");
        // no lanes tag on one street: blue
        if i != 3 {
            put("lanes", "2");
        }
    }
    t
}

/// OSM network with one way per centerline of `map`, in global coordinates.
/// Way endpoints at the same position, or joined in the centerline graph,
/// share a node.
pub fn derived_osm(
    map: &LaneletMap,
    proj: &UtmProjector,
    tags: impl Fn(&Centerline) -> Attributes,
) -> Result<OsmRoadNetwork, ConflateError> {
    let graph = collapse_lanelets(map, 0.2)?;
    let key = |p: [f64; 2]| ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
    let mut net = OsmRoadNetwork::default();
    let mut shared: BTreeMap<(i64, i64), Id> = BTreeMap::new();
    let mut next: Id = 0;
    let mut node = |net: &mut OsmRoadNetwork, p: [f64; 2], share: bool| -> Result<Id, ConflateError> {
        if share {
            if let Some(id) = shared.get(&key(p)) {
                return Ok(*id);
            }
        }
        next += 1;
        let position = proj.unproject(&LocalPoint::new(p[0], p[1]))?;
        net.nodes.insert(next, OsmNode { position, tags: Attributes::new() });
        if share {
            shared.insert(key(p), next);
        }
        Ok(next)
    };
    for c in &graph.centerlines {
        let [s, e] = graph.ends[c.id];
        let n = c.geometry.len();
        let mut nodes = Vec::with_capacity(n);
        nodes.push(node(&mut net, graph.nodes[s], true)?);
        for p in &c.geometry[1..n - 1] {
            nodes.push(node(&mut net, *p, false)?);
        }
        nodes.push(node(&mut net, graph.nodes[e], true)?);
        net.ways.insert(1000 + c.id as Id, OsmWay { nodes, tags: tags(c) });
    }
    Ok(net)
}

/// Everything an end-to-end run needs, with the ground truth it was made from.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub origin: GeoPoint,
    /// Town in the world frame, the frame of the projected GNSS.
    pub truth: LaneletMap,
    /// Town as mapped by SLAM: rotated, shifted and smoothly warped.
    pub vector_map: LaneletMap,
    pub point_cloud: PointCloudMap,
    pub osm: OsmRoadNetwork,
    pub slam: LocalTrajectory,
    pub gnss: GeoTrajectory,
    /// Every SLAM pose after the rigid fit, paired with its GNSS position.
    pub control_points: Vec<ControlPointPair>,
    /// SLAM → world rigid part.
    pub rigid: RigidTransform2D,
}

/// Drive around the town perimeter on the street centerlines, every 2 m.
fn perimeter_drive() -> Vec<[f64; 2]> {
    let span = BLOCK * (GRID - 1) as f64;
    let corners = [[0.0, 0.0], [span, 0.0], [span, span], [0.0, span], [0.0, 0.0]];
    let mut out = Vec::new();
    for w in corners.windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let steps = (len / 2.0).round() as usize;
        for k in 0..steps {
            let f = k as f64 / steps as f64;
            out.push([w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])]);
        }
    }
    out
}

/// SLAM drift model: a smooth displacement field with zero mean and zero
/// rotational moment over the drive, so the rigid fit recovers the true
/// rotation and translation exactly.
struct Drift {
    inverse: RigidTransform2D,
    mean: [f64; 2],
    omega: f64,
    centroid: [f64; 2],
    amplitude: f64,
}

impl Drift {
    fn raw(&self, w: [f64; 2]) -> [f64; 2] {
        let tau = std::f64::consts::TAU;
        [self.amplitude * (tau * w[1] / 200.0).sin(), self.amplitude * (tau * w[0] / 260.0).cos()]
    }

    fn new(rigid: &RigidTransform2D, drive: &[[f64; 2]], amplitude: f64) -> Drift {
        let inverse = rigid.inverse();
        let mut d = Drift { inverse, mean: [0.0; 2], omega: 0.0, centroid: [0.0; 2], amplitude };
        let n = drive.len() as f64;
        let b: Vec<[f64; 2]> = drive.iter().map(|w| inverse.apply_xy(w[0], w[1])).collect();
        let raw: Vec<[f64; 2]> = drive.iter().map(|w| d.raw(*w)).collect();
        for k in 0..2 {
            d.centroid[k] = b.iter().map(|p| p[k]).sum::<f64>() / n;
            d.mean[k] = raw.iter().map(|p| p[k]).sum::<f64>() / n;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (p, r) in b.iter().zip(&raw) {
            let (x, y) = (p[0] - d.centroid[0], p[1] - d.centroid[1]);
            num += x * r[1] - y * r[0];
            den += x * x + y * y;
        }
        d.omega = num / den;
        d
    }

    /// Displacement at world position `w`, in the SLAM frame.
    fn at(&self, w: [f64; 2]) -> [f64; 2] {
        let r = self.raw(w);
        let b = self.inverse.apply_xy(w[0], w[1]);
        let (x, y) = (b[0] - self.centroid[0], b[1] - self.centroid[1]);
        [r[0] - self.mean[0] + self.omega * y, r[1] - self.mean[1] - self.omega * x]
    }

    fn to_slam(&self, w: [f64; 2]) -> [f64; 2] {
        let b = self.inverse.apply_xy(w[0], w[1]);
        let d = self.at(w);
        [b[0] - d[0], b[1] - d[1]]
    }
}

/// Sample points along every linestring of `map` at about 1 m spacing.
fn cloud_from(map: &LaneletMap) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    for ls in map.linestrings.values() {
        let xy: Vec<[f64; 2]> = ls.points.iter().map(|id| map.points[id].as_local().unwrap().xy()).collect();
        for w in xy.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            let steps = len.ceil().max(1.0) as usize;
            for k in 0..steps {
                let f = k as f64 / steps as f64;
                let (x, y) = (w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1]));
                pts.push([x, y, 0.05 * (x * 0.1).sin()]);
            }
        }
    }
    pts
}

/// Synthetic town recorded with a 30° rotated, shifted and drifting SLAM.
pub fn scenario() -> Scenario {
    scenario_of(town())
}

/// As [`scenario`] for any world-frame map near the town.
pub fn scenario_of(truth: LaneletMap) -> Scenario {
    let origin = origin();
    let proj = UtmProjector::new(origin).expect("origin inside the UTM band");
    let osm = derived_osm(&truth, &proj, town_tags).expect("town collapses");

    let rigid = RigidTransform2D::from_angle(30f64.to_radians(), [12.0, -7.5]);
    let drive = perimeter_drive();
    let drift = Drift::new(&rigid, &drive, 0.3);

    let mut vector_map = truth.clone();
    for p in vector_map.points.values_mut() {
        if let Some(l) = p.as_local() {
            let [x, y] = drift.to_slam(l.xy());
            *p = Point { position: crate::map::Position::Local(l.moved_to(x, y)), ..p.clone() };
        }
    }
    let world_cloud = cloud_from(&truth);
    let points: Vec<[f64; 3]> = world_cloud
        .iter()
        .map(|p| {
            let [x, y] = drift.to_slam([p[0], p[1]]);
            [x, y, p[2]]
        })
        .collect();
    let intensity = Some((0..points.len()).map(|i| (i % 97) as f64 / 96.0).collect());
    let point_cloud = PointCloudMap { points, intensity, geo_origin: None };

    let mut slam = Vec::with_capacity(drive.len());
    let mut gnss = Vec::with_capacity(drive.len());
    let mut control_points = Vec::with_capacity(drive.len());
    for (i, w) in drive.iter().enumerate() {
        let timestamp = i as f64 * 0.2;
        let u = drift.to_slam(*w);
        slam.push(Stamped { timestamp, point: LocalPoint::new(u[0], u[1]) });
        let g = if i == 0 { origin } else { proj.unproject(&LocalPoint::new(w[0], w[1])).expect("near origin") };
        gnss.push(Stamped { timestamp, point: g });
        control_points.push(ControlPointPair::new(rigid.apply_xy(u[0], u[1]), *w));
    }
    Scenario {
        origin,
        truth,
        vector_map,
        point_cloud,
        osm,
        slam: LocalTrajectory::new(slam).expect("increasing timestamps"),
        gnss: GeoTrajectory::new(gnss).expect("increasing timestamps"),
        control_points,
        rigid,
    }
}

pub const CONFIG_TOML: &str = r#"[inputs]
vector_map = "town.osm"
point_cloud = "town.pcd"
osm = "osm_extract.osm"
slam_trajectory = "slam.csv"
gnss_trajectory = "gnss.csv"
control_points = "control_points.json"

[output]
dir = "out"
"#;

impl Scenario {
    /// Write all inputs and a `config.toml` pointing at them into `dir`.
    pub fn write_inputs(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let map_bytes = write_lanelet2(&self.vector_map).map_err(io::Error::other)?;
        std::fs::write(dir.join("town.osm"), map_bytes)?;
        std::fs::write(dir.join("town.pcd"), save_pcd(&self.point_cloud))?;
        std::fs::write(dir.join("osm_extract.osm"), write_osm_network(&self.osm))?;
        let mut buf = Vec::new();
        self.slam.write_csv(&mut buf).map_err(io::Error::other)?;
        std::fs::write(dir.join("slam.csv"), &buf)?;
        buf.clear();
        self.gnss.write_csv(&mut buf).map_err(io::Error::other)?;
        std::fs::write(dir.join("gnss.csv"), &buf)?;
        std::fs::write(dir.join("control_points.json"), write_control_points(&self.control_points))?;
        std::fs::write(dir.join("config.toml"), CONFIG_TOML)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::umeyama_fit;
    use crate::conflate::build_reference_polylines;

    #[test]
    fn town_shape() {
        let t = town();
        assert_eq!(t.lanelets.len(), 50);
        t.validate().unwrap();
        let g = collapse_lanelets(&t, 0.2).unwrap();
        // 24 two-way blocks and the spur
        assert_eq!(g.centerlines.len(), 25);
        assert!(g.centerlines.iter().all(|c| c.lanelet_count() == 2));
        // four rows, four columns, the spur
        assert_eq!(build_reference_polylines(&g).len(), 9);
    }

    #[test]
    fn derived_osm_shares_intersection_nodes() {
        let t = town();
        let proj = UtmProjector::new(origin()).unwrap();
        let net = derived_osm(&t, &proj, town_tags).unwrap();
        assert_eq!(net.ways.len(), 25);
        let mut uses: BTreeMap<Id, usize> = BTreeMap::new();
        for w in net.ways.values() {
            for n in &w.nodes {
                *uses.entry(*n).or_default() += 1;
            }
        }
        // 16 intersections and the spur joint sit on more than one way
        assert_eq!(uses.values().filter(|&&c| c > 1).count(), 16);
        assert!(net.ways.values().all(|w| w.tags.contains_key("highway")));
    }

    #[test]
    fn rigid_fit_recovers_the_true_rotation() {
        let s = scenario();
        let u: Vec<[f64; 2]> = s.slam.poses().iter().map(|p| p.point.xy()).collect();
        let proj = UtmProjector::new(s.origin).unwrap();
        let g: Vec<[f64; 2]> = s.gnss.poses().iter().map(|p| proj.project(&p.point).unwrap().xy()).collect();
        let fit = umeyama_fit(&u, &g).unwrap();
        assert!((fit.transform.angle() - s.rigid.angle()).abs() < 1e-12);
        let t0 = fit.transform.apply_xy(0.0, 0.0);
        let t1 = s.rigid.apply_xy(0.0, 0.0);
        assert!((t0[0] - t1[0]).abs() < 1e-8 && (t0[1] - t1[1]).abs() < 1e-8, "{t0:?} vs {t1:?}");
        // the drift is real, not zero
        let worst = s
            .control_points
            .iter()
            .map(|c| (c.source[0] - c.target[0]).hypot(c.source[1] - c.target[1]))
            .fold(0.0, f64::max);
        assert!(worst > 0.1 && worst < 1.0, "{worst}");
    }

    #[test]
    fn fragment_town_proposes_only_the_extra_lane() {
        let (map, frag) = town_with_fragment();
        map.validate().unwrap();
        let proj = UtmProjector::new(origin()).unwrap();
        let net = derived_osm(&map, &proj, town_tags).unwrap();
        let graph = crate::conflate::OsmGraph::project(&net, &proj).unwrap();
        let params = crate::conflate::ConflationParams { remove_fragments: false, ..Default::default() };
        let c = crate::conflate::conflate(&map, &graph, &params, None, crate::par::Exec::Sequential).unwrap();
        assert_eq!(c.report.fragments.proposed, vec![frag]);
        assert_eq!(c.report.metrics.match_rate, Some(1.0));
    }

    #[test]
    fn gnss_starts_at_origin() {
        let s = scenario();
        assert_eq!(s.gnss.poses()[0].point, s.origin);
    }
}
