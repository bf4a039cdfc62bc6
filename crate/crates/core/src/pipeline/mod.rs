//! Stage orchestration: align, conflate, georeference and evaluate, each
//! reading its inputs from the configuration or from the output directory of
//! the previous stage.

mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{
    build_rubber_sheet, deviation_stats_points, read_control_points, resample_correspondences, umeyama_fit,
    xy_of, AlignError, AlignmentReport, ControlPointPair, PiecewiseAffineTransform,
};
use crate::conflate::{
    conflate, precision_recall, read_labels, reclassify, ConflateError, Conflation, Labels,
    MatchMetrics, MatchResult, OsmGraph,
};
use crate::geo::{
    read_trajectory_csv, BoundingRect, GeoError, GeoPoint, GeoTrajectory, LocalTrajectory,
    PlanarTransform, RigidTransform2D, TrajectoryFile, UtmProjector, UtmZone,
};
use crate::map::{
    load_pcd, parse_lanelet2, parse_osm_network, save_pcd, write_lanelet2, LaneletMap, MapError, OsmRoadNetwork,
    PointCloudMap,
};
use crate::par::Exec;

pub use config::{AlignmentParams, Inputs, Output, Overrides, PipelineConfig, ReviewSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("coverage: {0}")]
    Coverage(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Coverage(_) => 4,
        }
    }

    fn context(self, what: &str) -> PipelineError {
        match self {
            PipelineError::Config(m) => PipelineError::Config(format!("{what}: {m}")),
            PipelineError::Data(m) => PipelineError::Data(format!("{what}: {m}")),
            PipelineError::Coverage(m) => PipelineError::Coverage(format!("{what}: {m}")),
        }
    }
}

impl From<MapError> for PipelineError {
    fn from(e: MapError) -> Self {
        match e {
            MapError::Coverage { .. } | MapError::CloudCoverage { .. } => PipelineError::Coverage(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<AlignError> for PipelineError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::Coverage(_) => PipelineError::Coverage(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<GeoError> for PipelineError {
    fn from(e: GeoError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ConflateError> for PipelineError {
    fn from(e: ConflateError) -> Self {
        match e {
            ConflateError::Map(m) => m.into(),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

fn with_file<T, E: Into<PipelineError>>(path: &Path, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| e.into().context(&path.display().to_string()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "map".into())
}

/// File names of the stage artifacts inside the output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    map_stem: String,
    cloud_stem: String,
}

impl Artifacts {
    pub fn new(cfg: &PipelineConfig) -> Artifacts {
        Artifacts {
            dir: cfg.output.dir.clone(),
            map_stem: cfg.inputs.vector_map.as_deref().map(stem).unwrap_or_else(|| "map".into()),
            cloud_stem: cfg.inputs.point_cloud.as_deref().map(stem).unwrap_or_else(|| "cloud".into()),
        }
    }

    fn file(&self, name: String) -> PathBuf {
        self.dir.join(name)
    }

    pub fn origin(&self) -> PathBuf {
        self.dir.join("origin.json")
    }
    pub fn aligned_map(&self) -> PathBuf {
        self.file(format!("{}_aligned.osm", self.map_stem))
    }
    pub fn aligned_cloud(&self) -> PathBuf {
        self.file(format!("{}_aligned.pcd", self.cloud_stem))
    }
    pub fn aligned_slam(&self) -> PathBuf {
        self.dir.join("slam_aligned.csv")
    }
    pub fn projected_gnss(&self) -> PathBuf {
        self.dir.join("gnss_projected.csv")
    }
    pub fn alignment_report(&self) -> PathBuf {
        self.dir.join("alignment_report.json")
    }
    pub fn conflated_map(&self) -> PathBuf {
        self.file(format!("{}_conflated.osm", self.map_stem))
    }
    pub fn conflation_report(&self) -> PathBuf {
        self.dir.join("conflation_report.json")
    }
    pub fn georef_map(&self) -> PathBuf {
        self.file(format!("{}_georef.osm", self.map_stem))
    }
    pub fn georef_cloud(&self) -> PathBuf {
        self.file(format!("{}_georef.pcd", self.cloud_stem))
    }
    pub fn georef_slam(&self) -> PathBuf {
        self.dir.join("slam_georef.csv")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.dir.join("evaluation.json")
    }
}

/// Projector origin, persisted next to the aligned outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginFile {
    pub origin: GeoPoint,
    pub zone: UtmZone,
}

impl OriginFile {
    pub fn projector(&self) -> Result<UtmProjector, PipelineError> {
        Ok(UtmProjector::new(self.origin)?)
    }
}

pub fn read_origin(path: &Path) -> Result<OriginFile, PipelineError> {
    let bytes = std::fs::read(path).map_err(|_| {
        PipelineError::Config(format!("{}: projector origin missing; run align first", path.display()))
    })?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub fn read_local_trajectory(path: &Path) -> Result<LocalTrajectory, PipelineError> {
    match with_file(path, read_trajectory_csv(read(path)?.as_slice()))? {
        TrajectoryFile::Local(t) => Ok(t),
        TrajectoryFile::Global(_) => {
            Err(PipelineError::Data(format!("{}: expected local timestamp,x,y columns", path.display())))
        }
    }
}

pub fn read_global_trajectory(path: &Path) -> Result<GeoTrajectory, PipelineError> {
    match with_file(path, read_trajectory_csv(read(path)?.as_slice()))? {
        TrajectoryFile::Global(t) => Ok(t),
        TrajectoryFile::Local(_) => {
            Err(PipelineError::Data(format!("{}: expected global timestamp,lat,lon columns", path.display())))
        }
    }
}

pub fn read_lanelet_map(path: &Path) -> Result<LaneletMap, PipelineError> {
    with_file(path, parse_lanelet2(&read(path)?))
}

pub fn read_cloud(path: &Path) -> Result<PointCloudMap, PipelineError> {
    with_file(path, load_pcd(&read(path)?))
}

pub fn read_osm(path: &Path) -> Result<OsmRoadNetwork, PipelineError> {
    with_file(path, parse_osm_network(&read(path)?))
}

pub fn read_control_point_file(path: &Path) -> Result<Vec<ControlPointPair>, PipelineError> {
    read_control_points(&read(path)?).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub fn read_label_file(path: &Path) -> Result<Labels, PipelineError> {
    with_file(path, read_labels(&read(path)?))
}

/// Inputs of the alignment stage, already parsed.
#[derive(Clone, Debug)]
pub struct AlignInputs {
    pub slam: LocalTrajectory,
    pub gnss: GeoTrajectory,
    pub vector_map: Option<LaneletMap>,
    pub point_cloud: Option<PointCloudMap>,
}

impl AlignInputs {
    pub fn load(cfg: &PipelineConfig) -> Result<AlignInputs, PipelineError> {
        let i = &cfg.inputs;
        let slam = read_local_trajectory(cfg.require("slam_trajectory", &i.slam_trajectory)?)?;
        let gnss = read_global_trajectory(cfg.require("gnss_trajectory", &i.gnss_trajectory)?)?;
        let vector_map = i.vector_map.as_deref().map(read_lanelet_map).transpose()?;
        let point_cloud = i.point_cloud.as_deref().map(read_cloud).transpose()?;
        Ok(AlignInputs { slam, gnss, vector_map, point_cloud })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidSummary {
    pub angle_deg: f64,
    pub translation: [f64; 2],
    /// Umeyama scale estimate; reported, never applied.
    pub discarded_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub mean: f64,
    pub std: f64,
    pub rmse: f64,
}

impl From<&AlignmentReport> for Deviation {
    fn from(r: &AlignmentReport) -> Self {
        Deviation { mean: r.mean_deviation, std: r.std_deviation, rmse: r.rmse }
    }
}

/// Persisted alignment outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub origin: OriginFile,
    pub correspondences: usize,
    pub rigid: RigidSummary,
    pub extent: BoundingRect,
    pub control_points: usize,
    pub triangles: usize,
    /// Deviation after the rigid step alone.
    pub rigid_deviation: Deviation,
    pub deviation: AlignmentReport,
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub summary: AlignmentSummary,
    pub projector: UtmProjector,
    pub rigid: RigidTransform2D,
    pub rubber_sheet: Option<PiecewiseAffineTransform>,
    /// SLAM after the rigid step, the frame control points live in.
    pub slam_rigid: LocalTrajectory,
    pub slam: LocalTrajectory,
    pub gnss: LocalTrajectory,
    pub vector_map: Option<LaneletMap>,
    pub point_cloud: Option<PointCloudMap>,
}

fn map_trajectory(t: &LocalTrajectory, f: &impl PlanarTransform) -> Result<LocalTrajectory, PipelineError> {
    t.try_map(|p| f.transform_point(p)).map_err(|e| PipelineError::Coverage(format!("trajectory: {e}")))
}

/// Rigid fit of SLAM to the projected GNSS, then the rubber sheet from
/// `control_points` (given after the rigid step). With no control points
/// the result is rigid only. A control point outside the extent is a
/// coverage error.
pub fn run_alignment(
    inputs: &AlignInputs,
    control_points: &[ControlPointPair],
    params: &AlignmentParams,
    exec: Exec,
) -> Result<Alignment, PipelineError> {
    let origin = inputs.gnss.poses()[0].point;
    let projector = UtmProjector::new(origin)?;
    let gnss = inputs.gnss.try_map(|p| projector.project(p))?;

    let pairs = resample_correspondences(&inputs.slam, &gnss)?;
    let fit = umeyama_fit(&xy_of(&pairs.source), &xy_of(&pairs.target))?;
    let rigid = fit.transform;

    let slam_rigid = map_trajectory(&inputs.slam, &rigid)?;
    let mut vector_map = inputs.vector_map.clone();
    let mut point_cloud = inputs.point_cloud.clone();
    if let Some(m) = vector_map.as_mut() {
        m.transform_with(&rigid, exec).map_err(|e| PipelineError::from(e).context("vector map"))?;
    }
    if let Some(c) = point_cloud.as_mut() {
        c.transform_with(&rigid, exec).map_err(|e| PipelineError::from(e).context("point cloud"))?;
    }

    let mut all: Vec<[f64; 2]> = xy_of(&slam_rigid.points());
    all.extend(xy_of(&gnss.points()));
    if let Some(m) = &vector_map {
        all.extend(m.local_coordinates());
    }
    if let Some(c) = &point_cloud {
        all.extend(c.points.iter().map(|p| [p[0], p[1]]));
    }
    let extent = BoundingRect::from_points(all.iter())
        .expect("trajectories are non-empty")
        .expanded(params.extent_fraction, params.extent_min_margin);

    let rigid_deviation = deviation_stats_points(&slam_rigid.points(), &gnss.points(), exec)?;
    let (slam, rubber_sheet) = if control_points.is_empty() {
        (slam_rigid.clone(), None)
    } else {
        if let Some((i, cp)) = control_points.iter().enumerate().find(|(_, c)| !extent.strictly_contains(c.source)) {
            return Err(PipelineError::Coverage(format!(
                "control point {i} source ({}, {}) lies outside the extent",
                cp.source[0], cp.source[1]
            )));
        }
        let sheet = build_rubber_sheet(control_points, extent)?;
        if let Some(m) = vector_map.as_mut() {
            m.transform_with(&sheet, exec).map_err(|e| PipelineError::from(e).context("vector map"))?;
        }
        if let Some(c) = point_cloud.as_mut() {
            c.transform_with(&sheet, exec).map_err(|e| PipelineError::from(e).context("point cloud"))?;
        }
        (map_trajectory(&slam_rigid, &sheet)?, Some(sheet))
    };
    let deviation = deviation_stats_points(&slam.points(), &gnss.points(), exec)?;
    let summary = AlignmentSummary {
        origin: OriginFile { origin, zone: projector.zone() },
        correspondences: pairs.len(),
        rigid: RigidSummary {
            angle_deg: rigid.angle().to_degrees(),
            translation: rigid.apply_xy(0.0, 0.0),
            discarded_scale: fit.scale,
        },
        extent,
        control_points: control_points.len(),
        triangles: rubber_sheet.as_ref().map_or(0, |s| s.triangle_count()),
        rigid_deviation: Deviation::from(&rigid_deviation),
        deviation,
    };
    Ok(Alignment {
        summary,
        projector,
        rigid,
        rubber_sheet,
        slam_rigid,
        slam,
        gnss,
        vector_map,
        point_cloud,
    })
}

pub fn write_alignment(a: &Alignment, art: &Artifacts) -> Result<(), PipelineError> {
    write(&art.origin(), &to_json(&a.summary.origin))?;
    write(&art.alignment_report(), &to_json(&a.summary))?;
    if let Some(m) = &a.vector_map {
        write(&art.aligned_map(), &write_lanelet2(m)?)?;
    }
    if let Some(c) = &a.point_cloud {
        write(&art.aligned_cloud(), &save_pcd(c))?;
    }
    let mut buf = Vec::new();
    a.slam.write_csv(&mut buf)?;
    write(&art.aligned_slam(), &buf)?;
    buf.clear();
    a.gnss.write_csv(&mut buf)?;
    write(&art.projected_gnss(), &buf)
}

pub fn cmd_align(cfg: &PipelineConfig) -> Result<Alignment, PipelineError> {
    let inputs = AlignInputs::load(cfg)?;
    let cps = read_control_point_file(cfg.require("control_points", &cfg.inputs.control_points)?)?;
    if cps.is_empty() {
        log::warn!("control-point list is empty; alignment is rigid only");
    }
    let a = run_alignment(&inputs, &cps, &cfg.alignment, Exec::default())?;
    write_alignment(&a, &Artifacts::new(cfg))?;
    Ok(a)
}

pub fn osm_graph(net: &OsmRoadNetwork, projector: &UtmProjector) -> Result<OsmGraph, PipelineError> {
    Ok(OsmGraph::project(net, projector)?)
}

pub fn cmd_conflate(cfg: &PipelineConfig) -> Result<Conflation, PipelineError> {
    let art = Artifacts::new(cfg);
    let origin = read_origin(&art.origin())?;
    let aligned = art.aligned_map();
    if !aligned.is_file() {
        return Err(PipelineError::Config(format!("{}: aligned map missing; run align first", aligned.display())));
    }
    let map = read_lanelet_map(&aligned)?;
    let osm_path = cfg.require("osm", &cfg.inputs.osm)?;
    let net = read_osm(osm_path)?;
    let graph = with_file(osm_path, osm_graph(&net, &origin.projector()?))?;
    let labels = cfg.inputs.labels.as_deref().map(read_label_file).transpose()?;
    let c = conflate(&map, &graph, &cfg.conflation, labels.as_ref(), Exec::default())?;
    write(&art.conflated_map(), &write_lanelet2(&c.map)?)?;
    write(&art.conflation_report(), &to_json(&c.report))?;
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct Georeferenced {
    pub vector_map: LaneletMap,
    pub point_cloud: Option<PointCloudMap>,
    pub slam: Option<GeoTrajectory>,
}

/// Inverse projection of the latest map (conflated if present, else
/// aligned). The point cloud keeps its local coordinates and records the
/// origin.
pub fn cmd_georeference(cfg: &PipelineConfig) -> Result<Georeferenced, PipelineError> {
    let art = Artifacts::new(cfg);
    let origin = read_origin(&art.origin())?;
    let proj = origin.projector()?;
    let source = [art.conflated_map(), art.aligned_map()].into_iter().find(|p| p.is_file()).ok_or_else(|| {
        PipelineError::Config(format!("no aligned map in {}; run align first", art.dir.display()))
    })?;
    let mut vector_map = read_lanelet_map(&source)?;
    with_file(&source, vector_map.georeference(&proj))?;
    write(&art.georef_map(), &write_lanelet2(&vector_map)?)?;

    let point_cloud = if art.aligned_cloud().is_file() {
        let mut c = read_cloud(&art.aligned_cloud())?;
        c.geo_origin = Some(origin.origin);
        write(&art.georef_cloud(), &save_pcd(&c))?;
        Some(c)
    } else {
        None
    };
    let slam = if art.aligned_slam().is_file() {
        let local = read_local_trajectory(&art.aligned_slam())?;
        let g = local.try_map(|p| proj.unproject(p))?;
        let mut buf = Vec::new();
        g.write_csv(&mut buf)?;
        write(&art.georef_slam(), &buf)?;
        Some(g)
    } else {
        None
    };
    Ok(Georeferenced { vector_map, point_cloud, slam })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub deviation: Option<Deviation>,
    pub poses: Option<usize>,
    pub matching: Option<MatchMetrics>,
}

#[derive(Deserialize)]
struct StoredConflation {
    matches: Vec<MatchResult>,
}

pub fn evaluate_reports(
    alignment: Option<&AlignmentSummary>,
    conflation: Option<&mut Vec<MatchResult>>,
    labels: Option<&Labels>,
    cfg: &PipelineConfig,
) -> Evaluation {
    let matching = conflation.map(|results| {
        reclassify(results, labels, cfg.conflation.true_positive_threshold);
        precision_recall(results, cfg.conflation.length_threshold, labels.is_some())
    });
    Evaluation {
        deviation: alignment.map(|a| Deviation::from(&a.deviation)),
        poses: alignment.map(|a| a.deviation.residuals.len()),
        matching,
    }
}

/// Metrics from the stored reports: deviation statistics and, over
/// polylines above the length threshold, match rate, precision and recall.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Evaluation, PipelineError> {
    let art = Artifacts::new(cfg);
    let load = |p: PathBuf| -> Result<Option<Vec<u8>>, PipelineError> {
        if p.is_file() { read(&p).map(Some) } else { Ok(None) }
    };
    let alignment: Option<AlignmentSummary> = load(art.alignment_report())?
        .map(|b| serde_json::from_slice(&b))
        .transpose()
        .map_err(|e| PipelineError::Data(format!("{}: {e}", art.alignment_report().display())))?;
    let conflation: Option<StoredConflation> = load(art.conflation_report())?
        .map(|b| serde_json::from_slice(&b))
        .transpose()
        .map_err(|e| PipelineError::Data(format!("{}: {e}", art.conflation_report().display())))?;
    if alignment.is_none() && conflation.is_none() {
        return Err(PipelineError::Config(format!("no reports in {}", art.dir.display())));
    }
    let labels = cfg.inputs.labels.as_deref().map(read_label_file).transpose()?;
    if conflation.is_some() && labels.is_none() {
        log::warn!("no labels file: true/false negatives unavailable, recall undefined");
    }
    let mut results = conflation.map(|c| c.matches);
    let e = evaluate_reports(alignment.as_ref(), results.as_mut(), labels.as_ref(), cfg);
    write(&art.evaluation(), &to_json(&e))?;
    Ok(e)
}

/// Conflation report re-read from disk, for consumers other than evaluate.
pub fn read_conflation_report(path: &Path) -> Result<serde_json::Value, PipelineError> {
    serde_json::from_slice(&read(path)?).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::write_osm_network;
    use crate::synthetic;

    fn staged(dir: &Path) -> PipelineConfig {
        synthetic::scenario().write_inputs(dir).unwrap();
        let mut cfg = PipelineConfig::load(&dir.join("config.toml")).unwrap();
        cfg.validate().unwrap();
        cfg
    }

    fn run_all(cfg: &PipelineConfig) -> Evaluation {
        cmd_align(cfg).unwrap();
        cmd_conflate(cfg).unwrap();
        cmd_georeference(cfg).unwrap();
        cmd_evaluate(cfg).unwrap()
    }

    #[test]
    fn town_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = staged(dir.path());
        let e = run_all(&cfg);
        let d = e.deviation.unwrap();
        assert!(d.rmse < 1e-6, "rmse {}", d.rmse);
        let m = e.matching.unwrap();
        assert_eq!(m.considered, 9);
        assert_eq!(m.match_rate, Some(1.0));
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.recall, None);

        let art = Artifacts::new(&cfg);
        for p in [art.aligned_map(), art.aligned_cloud(), art.conflated_map(), art.georef_map(), art.georef_cloud()] {
            assert!(p.is_file(), "{}", p.display());
        }
        let cloud = read_cloud(&art.georef_cloud()).unwrap();
        assert_eq!(cloud.geo_origin, Some(synthetic::origin()));
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ca, cb) = (staged(a.path()), staged(b.path()));
        run_all(&ca);
        run_all(&cb);
        let mut names: Vec<_> = std::fs::read_dir(&ca.output.dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 12);
        for n in names {
            let x = std::fs::read(ca.output.dir.join(&n)).unwrap();
            let y = std::fs::read(cb.output.dir.join(&n)).unwrap();
            assert!(x == y, "{n:?} differs");
        }
    }

    #[test]
    fn rigid_only_without_control_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = staged(dir.path());
        cfg.inputs.control_points = None;
        assert_eq!(cmd_align(&cfg).unwrap_err().exit_code(), 2);
        let empty = dir.path().join("none.json");
        std::fs::write(&empty, "[]").unwrap();
        cfg.inputs.control_points = Some(empty);
        let a = cmd_align(&cfg).unwrap();
        assert!(a.rubber_sheet.is_none());
        assert_eq!(a.summary.triangles, 0);
        assert_eq!(Deviation::from(&a.summary.deviation), a.summary.rigid_deviation);
        assert!(a.summary.deviation.rmse > 0.05);
        assert!((a.summary.rigid.angle_deg - 30.0).abs() < 1e-9);
    }

    #[test]
    fn identical_trajectories_have_zero_deviation() {
        let s = synthetic::scenario();
        let proj = UtmProjector::new(s.gnss.poses()[0].point).unwrap();
        let slam = s.gnss.try_map(|p| proj.project(p)).unwrap();
        let inputs = AlignInputs { slam, gnss: s.gnss.clone(), vector_map: None, point_cloud: None };
        let a = run_alignment(&inputs, &[], &AlignmentParams::default(), Exec::Sequential).unwrap();
        assert!(a.summary.deviation.mean_deviation < 1e-9);
        assert!(a.summary.rigid.angle_deg.abs() < 1e-9);
    }

    #[test]
    fn conflate_needs_align() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = staged(dir.path());
        assert_eq!(cmd_conflate(&cfg).unwrap_err().exit_code(), 2);
        assert_eq!(cmd_georeference(&cfg).unwrap_err().exit_code(), 2);
        assert_eq!(cmd_evaluate(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn empty_osm_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = staged(dir.path());
        std::fs::write(cfg.inputs.osm.as_ref().unwrap(), write_osm_network(&Default::default())).unwrap();
        cmd_align(&cfg).unwrap();
        assert_eq!(cmd_conflate(&cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn points_outside_the_sheet_are_coverage_errors() {
        let s = synthetic::scenario();
        let inputs = AlignInputs { slam: s.slam.clone(), gnss: s.gnss.clone(), vector_map: None, point_cloud: None };
        let a = run_alignment(&inputs, &s.control_points, &AlignmentParams::default(), Exec::Sequential).unwrap();
        let err = a.rubber_sheet.unwrap().transform_xy(a.summary.extent.max[0] + 100.0, 0.0).unwrap_err();
        assert_eq!(PipelineError::from(AlignError::Coverage(err)).exit_code(), 4);
    }

    #[test]
    fn control_point_outside_extent_is_a_coverage_error() {
        let s = synthetic::scenario();
        let inputs = AlignInputs { slam: s.slam.clone(), gnss: s.gnss.clone(), vector_map: None, point_cloud: None };
        let cps = [ControlPointPair::new([1e5, 0.0], [1e5, 0.0])];
        let e = run_alignment(&inputs, &cps, &AlignmentParams::default(), Exec::Sequential).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn georeferenced_origin_is_the_gnss_origin() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = staged(dir.path());
        let a = cmd_align(&cfg).unwrap();
        let proj = a.projector;
        let local = proj.project(&synthetic::origin()).unwrap();
        assert_eq!((local.x, local.y), (0.0, 0.0));
        assert_eq!(proj.unproject(&local).unwrap(), synthetic::origin());
        let g = cmd_georeference(&cfg).unwrap();
        let back = {
            let mut m = g.vector_map.clone();
            m.localize(&proj).unwrap();
            m
        };
        let aligned = read_lanelet_map(&Artifacts::new(&cfg).aligned_map()).unwrap();
        let worst = aligned
            .points
            .iter()
            .map(|(id, p)| {
                let (a, b) = (p.as_local().unwrap(), back.points[id].as_local().unwrap());
                a.distance(b)
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn labels_give_recall() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = staged(dir.path());
        let labels = dir.path().join("labels.json");
        std::fs::write(&labels, r#"{"0": "TN", "1": "FN"}"#).unwrap();
        cfg.inputs.labels = Some(labels);
        let m = run_all(&cfg).matching.unwrap();
        assert!(m.labels_available);
        assert_eq!(m.recall, Some(1.0));
    }
}
