//! Geometry layers served to the review UI, decimated to a vertex budget.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use mapfusion_core::conflate::collapse_lanelets;
use mapfusion_core::geo::LocalTrajectory;
use mapfusion_core::map::{LaneletMap, PointCloudMap};

use crate::session::{Session, State};
use crate::ApiError;

pub const LAYERS: [&str; 8] = [
    "slam_trajectory",
    "gnss_trajectory",
    "vm_centerlines",
    "osm_ways",
    "matches",
    "validation",
    "triangulation",
    "point_cloud",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feature {
    pub id: Value,
    pub coordinates: Vec<[f64; 2]>,
    /// Second polyline of a link feature (the matched OSM chain).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<[f64; 2]>>,
    pub properties: Value,
}

impl Feature {
    fn new(id: impl Into<Value>, coordinates: Vec<[f64; 2]>, properties: Value) -> Feature {
        Feature { id: id.into(), coordinates, target: None, properties }
    }

    fn vertex_count(&self) -> usize {
        self.coordinates.len() + self.target.as_ref().map_or(0, Vec::len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Polyline,
    Polygon,
    Points,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Layer {
    pub layer: String,
    pub kind: Kind,
    pub features: Vec<Feature>,
    pub vertices: usize,
    pub total_vertices: usize,
    pub decimated: bool,
    pub meta: Value,
}

fn keep_stride(coords: &[[f64; 2]], k: usize, ends: bool) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = coords.iter().step_by(k).copied().collect();
    if ends && coords.len() > 1 && (coords.len() - 1) % k != 0 {
        out.push(*coords.last().expect("non-empty"));
    }
    out
}

/// Thin every feature by keeping each k-th vertex, with the smallest k that
/// fits `budget`. Polylines keep both end points and polygons are never
/// thinned, so a layer of many tiny features can stay above the budget.
pub fn decimate(features: Vec<Feature>, kind: Kind, budget: usize) -> (Vec<Feature>, bool) {
    let total: usize = features.iter().map(Feature::vertex_count).sum();
    if total <= budget || kind == Kind::Polygon {
        return (features, false);
    }
    let thin = |k: usize| -> Vec<Feature> {
        features
            .iter()
            .map(|f| Feature {
                id: f.id.clone(),
                coordinates: keep_stride(&f.coordinates, k, kind == Kind::Polyline),
                target: f.target.as_ref().map(|t| keep_stride(t, k, true)),
                properties: f.properties.clone(),
            })
            .collect()
    };
    let count = |fs: &[Feature]| fs.iter().map(Feature::vertex_count).sum::<usize>();
    let mut k = total.div_ceil(budget.max(1)).max(2);
    let mut best = thin(k);
    while count(&best) > budget {
        let longest = features.iter().map(Feature::vertex_count).max().unwrap_or(0);
        if k >= longest {
            break;
        }
        k = (k * 2).min(longest);
        best = thin(k);
    }
    (best, true)
}

fn trajectory(id: &str, t: &LocalTrajectory) -> Feature {
    let ts: Vec<f64> = t.poses().iter().map(|p| p.timestamp).collect();
    let coords = t.points().iter().map(|p| p.xy()).collect();
    Feature::new(id, coords, json!({ "poses": ts.len(), "start": ts.first(), "end": ts.last() }))
}

/// Points averaged per `grid` × `grid` cell, cells in row-major key order.
pub fn downsample(cloud: &PointCloudMap, grid: f64) -> Vec<[f64; 2]> {
    let mut cells: BTreeMap<(i64, i64), ([f64; 2], usize)> = BTreeMap::new();
    for p in &cloud.points {
        let key = ((p[0] / grid).floor() as i64, (p[1] / grid).floor() as i64);
        let e = cells.entry(key).or_insert(([0.0, 0.0], 0));
        e.0[0] += p[0];
        e.0[1] += p[1];
        e.1 += 1;
    }
    cells.values().map(|(s, n)| [s[0] / *n as f64, s[1] / *n as f64]).collect()
}

fn working_map<'a>(session: &'a Session, s: &'a State) -> Option<&'a LaneletMap> {
    if let Some(c) = &s.conflation {
        return Some(&c.refined.map);
    }
    if let Some(a) = &s.alignment {
        return a.alignment.vector_map.as_ref();
    }
    session.baseline.as_ref().and_then(|b| b.vector_map.as_ref())
}

fn centerlines(map: &LaneletMap, tol: f64) -> Result<Vec<Feature>, ApiError> {
    let g = collapse_lanelets(map, tol).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(g.centerlines
        .into_iter()
        .map(|c| {
            let props = json!({ "forward": c.forward, "backward": c.backward });
            Feature::new(c.id, c.geometry, props)
        })
        .collect())
}

fn build(session: &Session, s: &State, name: &str) -> Result<(Kind, Vec<Feature>, Value), ApiError> {
    let cfg = &session.inputs.config;
    let aligned = s.alignment.as_ref().map(|a| &*a.alignment).or(session.baseline.as_deref());
    let conflated = s.conflation.as_ref();
    let none = Value::Null;
    Ok(match name {
        "slam_trajectory" => {
            let mut fs = Vec::new();
            if let Some(a) = aligned {
                fs.push(trajectory("rigid", &a.slam_rigid));
                if a.rubber_sheet.is_some() {
                    fs.push(trajectory("aligned", &a.slam));
                }
            }
            (Kind::Polyline, fs, none)
        }
        "gnss_trajectory" => (Kind::Polyline, aligned.map(|a| vec![trajectory("gnss", &a.gnss)]).unwrap_or_default(), none),
        "vm_centerlines" => {
            let fs = match working_map(session, s) {
                Some(m) => centerlines(m, cfg.conflation.adjacency_tolerance)?,
                None => Vec::new(),
            };
            (Kind::Polyline, fs, none)
        }
        "osm_ways" => {
            let fs = match &session.graph {
                Some(g) => g
                    .ways
                    .iter()
                    .map(|(id, w)| Feature::new(*id, g.way_geometry(*id), json!({ "tags": w.tags })))
                    .collect(),
                None => Vec::new(),
            };
            (Kind::Polyline, fs, none)
        }
        "matches" => {
            let fs = match conflated {
                Some(c) => c
                    .refined
                    .report
                    .matches
                    .iter()
                    .map(|m| {
                        let reference = c.references.iter().find(|r| r.id == m.reference);
                        let mut f = Feature::new(
                            m.reference,
                            reference.map(|r| r.geometry.clone()).unwrap_or_default(),
                            json!({
                                "length": m.length,
                                "score": m.similarity.as_ref().map(|s| s.score),
                                "classification": m.classification,
                                "ways": m.matched.as_ref().map(|c| c.ways.clone()),
                                "lanelets": m.lanelets,
                                "searches": m.searches,
                            }),
                        );
                        f.target = m.matched.as_ref().map(|c| c.geometry.clone());
                        f
                    })
                    .collect(),
                None => Vec::new(),
            };
            (Kind::Polyline, fs, none)
        }
        "validation" => {
            let fs = match conflated {
                Some(c) => {
                    let r = &c.refined.report;
                    let g = &c.graph;
                    r.validation
                        .iter()
                        .map(|v| {
                            let frag = |ids: &[i64]| -> Vec<i64> {
                                v.lanelets.iter().copied().filter(|l| ids.contains(l)).collect()
                            };
                            let proposed = frag(&r.fragments.proposed);
                            let reviewed: Vec<i64> =
                                v.lanelets.iter().copied().filter(|l| c.refined.reviewed.contains(l)).collect();
                            Feature::new(
                                v.centerline,
                                g.centerlines[v.centerline].geometry.clone(),
                                json!({
                                    "color": v.color,
                                    "way": v.way,
                                    "lanelets": v.lanelets,
                                    "lanelet_count": v.lanelet_count,
                                    "osm_lanes": v.osm_lanes,
                                    "fragments": proposed,
                                    "deleted": frag(&r.fragments.deleted),
                                    "reviewed": reviewed,
                                }),
                            )
                        })
                        .collect()
                }
                None => Vec::new(),
            };
            (Kind::Polyline, fs, none)
        }
        "triangulation" => {
            let sheet = s.alignment.as_ref().and_then(|a| a.alignment.rubber_sheet.as_ref());
            match sheet {
                Some(t) => {
                    let mesh = t.mesh();
                    let fs = (0..mesh.triangles.len())
                        .map(|i| {
                            let src = mesh.triangle_points(i);
                            let dst = mesh.triangles[i].vertices.map(|v| t.targets()[v]);
                            Feature::new(i, src.to_vec(), json!({ "vertices": mesh.triangles[i].vertices, "targets": dst }))
                        })
                        .collect();
                    let meta = json!({
                        "control_points": t.control_point_count(),
                        "triangles": t.triangle_count(),
                        "extent": t.extent(),
                    });
                    (Kind::Polygon, fs, meta)
                }
                None => (Kind::Polygon, Vec::new(), json!({ "control_points": 0, "triangles": 0 })),
            }
        }
        "point_cloud" => {
            let grid = cfg.review.cloud_grid;
            match aligned.and_then(|a| a.point_cloud.as_ref()) {
                Some(c) => {
                    let pts = downsample(c, grid);
                    let meta = json!({ "grid": grid, "source_points": c.len() });
                    (Kind::Points, vec![Feature::new("cloud", pts, Value::Null)], meta)
                }
                None => (Kind::Points, Vec::new(), json!({ "grid": grid, "source_points": 0 })),
            }
        }
        other => return Err(ApiError::bad_request(format!("unknown layer '{other}'; expected one of {LAYERS:?}"))),
    })
}

pub fn geometry(session: &Session, name: &str) -> Result<Layer, ApiError> {
    let budget = session.inputs.config.review.vertex_budget;
    session.read(|s| {
        let (kind, features, meta) = build(session, s, name)?;
        let total_vertices = features.iter().map(Feature::vertex_count).sum();
        let (features, decimated) = decimate(features, kind, budget);
        Ok(Layer {
            layer: name.to_owned(),
            kind,
            vertices: features.iter().map(Feature::vertex_count).sum(),
            features,
            total_vertices,
            decimated,
            meta,
        })
    })
}
