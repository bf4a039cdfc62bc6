//! Review sessions: loaded inputs, the versioned control-point set, stage
//! results and refinement log.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mapfusion_core::align::{build_rubber_sheet, AlignError, ControlPointPair};
use mapfusion_core::conflate::{
    conflate, CenterlineGraph, ConflationReport, Labels, OsmGraph, ReferencePolyline,
};
use mapfusion_core::map::{write_lanelet2, Id, LaneletMap, MapError, OsmRoadNetwork};
use mapfusion_core::par::Exec;
use mapfusion_core::pipeline::{
    osm_graph, read_control_point_file, read_label_file, read_osm, run_alignment,
    write_alignment, AlignInputs, Alignment, Artifacts, PipelineConfig, PipelineError,
};

use crate::ApiError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Alignment,
    Conflation,
}

impl std::str::FromStr for Stage {
    type Err = ApiError;
    fn from_str(s: &str) -> Result<Stage, ApiError> {
        match s {
            "alignment" | "align" => Ok(Stage::Alignment),
            "conflation" | "conflate" => Ok(Stage::Conflation),
            other => Err(ApiError::bad_request(format!("unknown stage '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Missing,
    Running,
    Complete,
    /// An upstream stage was recomputed since.
    Stale,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Completed,
    Failed,
    Cancelled,
}

#[derive(Clone, Debug, Serialize)]
pub struct Job {
    pub handle: u64,
    pub stage: Stage,
    pub status: JobStatus,
    /// Control-point version the job ran against, once started.
    pub control_point_version: Option<u64>,
    pub report: Option<Value>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RefinementAction {
    ConfirmFragmentDeletion { ids: Vec<Id> },
    RejectFragmentDeletion { ids: Vec<Id> },
    OverrideAttribute { lanelet: Id, key: String, value: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: usize,
    /// Conflation job whose map the action applies to.
    pub conflation_job: u64,
    #[serde(flatten)]
    pub action: RefinementAction,
}

/// What refinement mutates: the working map plus the bookkeeping shown in
/// the conflation report.
#[derive(Clone, Debug)]
pub struct Refined {
    pub map: LaneletMap,
    pub report: ConflationReport,
    pub reviewed: BTreeSet<Id>,
}

impl Refined {
    pub fn new(map: LaneletMap, report: ConflationReport) -> Refined {
        Refined { map, report, reviewed: BTreeSet::new() }
    }

    fn pending(&self, ids: &[Id]) -> Result<(), ApiError> {
        if ids.is_empty() {
            return Err(ApiError::bad_request("no ids given"));
        }
        let f = &self.report.fragments;
        match ids.iter().find(|id| !f.proposed.contains(id) || f.deleted.contains(id)) {
            Some(id) => Err(ApiError::bad_request(format!("lanelet {id} is not a pending fragment"))),
            None => Ok(()),
        }
    }

    /// Check `action` against the current state without applying it.
    pub fn check(&self, action: &RefinementAction) -> Result<(), ApiError> {
        match action {
            RefinementAction::ConfirmFragmentDeletion { ids } | RefinementAction::RejectFragmentDeletion { ids } => {
                self.pending(ids)
            }
            RefinementAction::OverrideAttribute { lanelet, key, .. } => {
                if !self.map.lanelets.contains_key(lanelet) {
                    return Err(ApiError::bad_request(format!("unknown lanelet {lanelet}")));
                }
                if key.is_empty() {
                    return Err(ApiError::bad_request("empty attribute key"));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, action: &RefinementAction) -> Result<(), ApiError> {
        self.check(action)?;
        match action {
            RefinementAction::ConfirmFragmentDeletion { ids } => {
                for id in ids {
                    self.map.remove_lanelet(*id);
                    self.report.fragments.deleted.push(*id);
                    self.reviewed.insert(*id);
                }
            }
            RefinementAction::RejectFragmentDeletion { ids } => self.reviewed.extend(ids),
            RefinementAction::OverrideAttribute { lanelet, key, value } => {
                let ll = self.map.lanelets.get_mut(lanelet).expect("checked");
                ll.attributes.insert(key.clone(), value.clone());
                self.report.transfer.record_manual(*lanelet, key);
            }
        }
        Ok(())
    }
}

/// Apply logged actions, in order, to a conflation result.
pub fn replay<'a>(
    map: LaneletMap,
    report: ConflationReport,
    log: impl IntoIterator<Item = &'a RefinementAction>,
) -> Result<Refined, ApiError> {
    let mut r = Refined::new(map, report);
    for a in log {
        r.apply(a)?;
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct AlignedState {
    pub job: u64,
    pub control_point_version: u64,
    pub alignment: Arc<Alignment>,
}

#[derive(Clone, Debug)]
pub struct ConflatedState {
    pub job: u64,
    pub alignment_job: u64,
    pub control_point_version: u64,
    /// Conflation output before any refinement.
    pub base: Arc<(LaneletMap, ConflationReport)>,
    pub graph: Arc<CenterlineGraph>,
    pub references: Arc<Vec<ReferencePolyline>>,
    pub refined: Refined,
}

#[derive(Clone, Debug)]
pub struct SessionInputs {
    pub align: Option<AlignInputs>,
    pub osm: Option<OsmRoadNetwork>,
    pub labels: Option<Labels>,
    pub control_points: Vec<ControlPointPair>,
    pub config: PipelineConfig,
    /// Write stage artifacts and the refinement log to the output directory.
    pub persist: bool,
}

impl SessionInputs {
    pub fn empty() -> SessionInputs {
        SessionInputs {
            align: None,
            osm: None,
            labels: None,
            control_points: Vec::new(),
            config: PipelineConfig::default(),
            persist: false,
        }
    }

    /// Load everything the configuration names. Trajectories are optional
    /// here; without them only map layers are served.
    pub fn from_config(cfg: &PipelineConfig) -> Result<SessionInputs, PipelineError> {
        let i = &cfg.inputs;
        let align = match (&i.slam_trajectory, &i.gnss_trajectory) {
            (Some(_), Some(_)) => Some(AlignInputs::load(cfg)?),
            _ => None,
        };
        Ok(SessionInputs {
            align,
            osm: i.osm.as_deref().map(read_osm).transpose()?,
            labels: i.labels.as_deref().map(read_label_file).transpose()?,
            control_points: i.control_points.as_deref().map(read_control_point_file).transpose()?.unwrap_or_default(),
            config: cfg.clone(),
            persist: true,
        })
    }
}

#[derive(Debug)]
pub struct State {
    pub control_points: Arc<Vec<ControlPointPair>>,
    pub control_point_version: u64,
    pub alignment: Option<AlignedState>,
    pub conflation: Option<ConflatedState>,
    pub status: BTreeMap<Stage, StageStatus>,
    pub jobs: BTreeMap<u64, Job>,
    /// Newest job per stage; older ones are superseded.
    latest: BTreeMap<Stage, u64>,
    next_job: u64,
    pub log: Vec<LogEntry>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub inputs: Arc<SessionInputs>,
    /// Rigid-only alignment from load time. Its extent bounds control points
    /// and its rigid SLAM is the frame they are picked in.
    pub baseline: Option<Arc<Alignment>>,
    pub graph: Option<Arc<OsmGraph>>,
    state: RwLock<State>,
    mutations: tokio::sync::Mutex<()>,
    compute: tokio::sync::Mutex<()>,
}

fn pipeline(e: PipelineError) -> String {
    e.to_string()
}

impl Session {
    pub fn new(id: impl Into<String>, inputs: SessionInputs) -> Result<Session, PipelineError> {
        let baseline = match &inputs.align {
            Some(a) => Some(Arc::new(run_alignment(a, &[], &inputs.config.alignment, Exec::default())?)),
            None => None,
        };
        let graph = match (&inputs.osm, &baseline) {
            (Some(net), Some(b)) => Some(Arc::new(osm_graph(net, &b.projector)?)),
            _ => None,
        };
        if let Some(b) = &baseline {
            if !inputs.control_points.is_empty() {
                build_rubber_sheet(&inputs.control_points, b.summary.extent)
                    .map_err(|e| PipelineError::Data(format!("control points: {e}")))?;
            }
        }
        let status = [(Stage::Alignment, StageStatus::Missing), (Stage::Conflation, StageStatus::Missing)].into();
        let state = State {
            control_points: Arc::new(inputs.control_points.clone()),
            control_point_version: 0,
            alignment: None,
            conflation: None,
            status,
            jobs: BTreeMap::new(),
            latest: BTreeMap::new(),
            next_job: 1,
            log: Vec::new(),
        };
        Ok(Session {
            id: id.into(),
            inputs: Arc::new(inputs),
            baseline,
            graph,
            state: RwLock::new(state),
            mutations: tokio::sync::Mutex::new(()),
            compute: tokio::sync::Mutex::new(()),
        })
    }

    pub fn read<R>(&self, f: impl FnOnce(&State) -> R) -> R {
        f(&self.state.read().expect("session lock"))
    }

    fn write<R>(&self, f: impl FnOnce(&mut State) -> R) -> R {
        f(&mut self.state.write().expect("session lock"))
    }

    fn artifacts(&self) -> Option<Artifacts> {
        self.inputs.persist.then(|| Artifacts::new(&self.inputs.config))
    }

    /// Store a new control-point set. Nothing is recomputed.
    pub async fn put_control_points(&self, pairs: Vec<ControlPointPair>) -> Result<u64, ApiError> {
        let _m = self.mutations.lock().await;
        let baseline = self.baseline.as_ref().ok_or_else(|| ApiError::conflict("session has no trajectories"))?;
        if !pairs.is_empty() {
            build_rubber_sheet(&pairs, baseline.summary.extent).map_err(|e| match e {
                AlignError::ControlPoint { index, message } => ApiError::invalid(index, message),
                other => ApiError::bad_request(other.to_string()),
            })?;
        }
        Ok(self.write(|s| {
            s.control_points = Arc::new(pairs);
            s.control_point_version += 1;
            s.control_point_version
        }))
    }

    /// Queue a recompute of `stage` and return its job handle.
    pub async fn post_recompute(self: &Arc<Self>, stage: Stage) -> Result<u64, ApiError> {
        let _m = self.mutations.lock().await;
        let handle = self.write(|s| -> Result<u64, ApiError> {
            match stage {
                Stage::Alignment if self.baseline.is_none() => {
                    return Err(ApiError::conflict("alignment needs SLAM and GNSS trajectories"))
                }
                Stage::Conflation => {
                    if self.graph.is_none() {
                        return Err(ApiError::conflict("conflation needs an OSM extract"));
                    }
                    if s.status[&Stage::Alignment] != StageStatus::Complete
                        || s.alignment.as_ref().is_none_or(|a| a.alignment.vector_map.is_none())
                    {
                        return Err(ApiError::conflict("conflation needs a completed alignment with a vector map"));
                    }
                }
                _ => {}
            }
            let handle = s.next_job;
            s.next_job += 1;
            if let Some(old) = s.latest.insert(stage, handle) {
                if let Some(j) = s.jobs.get_mut(&old) {
                    if matches!(j.status, JobStatus::Queued | JobStatus::Running) {
                        j.status = JobStatus::Cancelled;
                    }
                }
            }
            s.jobs.insert(
                handle,
                Job { handle, stage, status: JobStatus::Queued, control_point_version: None, report: None, error: None },
            );
            s.status.insert(stage, StageStatus::Running);
            if stage == Stage::Alignment && s.conflation.is_some() {
                s.status.insert(Stage::Conflation, StageStatus::Stale);
            }
            Ok(handle)
        })?;
        let me = Arc::clone(self);
        tokio::spawn(async move { me.run_job(handle, stage).await });
        Ok(handle)
    }

    fn superseded(s: &State, handle: u64, stage: Stage) -> bool {
        s.latest.get(&stage) != Some(&handle)
    }

    async fn run_job(self: Arc<Self>, handle: u64, stage: Stage) {
        let _c = self.compute.lock().await;
        let snapshot = self.write(|s| {
            if Self::superseded(s, handle, stage) {
                return None;
            }
            let job = s.jobs.get_mut(&handle).expect("job exists");
            job.status = JobStatus::Running;
            job.control_point_version = Some(s.control_point_version);
            Some((s.control_point_version, Arc::clone(&s.control_points), s.alignment.clone()))
        });
        let Some((version, cps, aligned)) = snapshot else { return };
        let me = Arc::clone(&self);
        let outcome = tokio::task::spawn_blocking(move || match stage {
            Stage::Alignment => me.compute_alignment(handle, version, &cps).map(Outcome::Aligned),
            Stage::Conflation => {
                me.compute_conflation(handle, aligned.expect("checked on submit")).map(Outcome::Conflated)
            }
        })
        .await
        .unwrap_or_else(|e| Err(format!("job panicked: {e}")));
        self.commit(handle, stage, outcome);
    }

    fn compute_alignment(&self, job: u64, version: u64, cps: &[ControlPointPair]) -> Result<AlignedState, String> {
        let inputs = self.inputs.align.as_ref().expect("checked on submit");
        let a = run_alignment(inputs, cps, &self.inputs.config.alignment, Exec::default()).map_err(pipeline)?;
        Ok(AlignedState { job, control_point_version: version, alignment: Arc::new(a) })
    }

    fn compute_conflation(&self, job: u64, aligned: AlignedState) -> Result<ConflatedState, String> {
        let map = aligned.alignment.vector_map.as_ref().expect("checked on submit");
        let graph = self.graph.as_ref().expect("checked on submit");
        // fragments are proposed here and deleted only on confirmation
        let mut params = self.inputs.config.conflation.clone();
        params.remove_fragments = false;
        let c = conflate(map, graph, &params, self.inputs.labels.as_ref(), Exec::default())
            .map_err(|e| pipeline(e.into()))?;
        Ok(ConflatedState {
            job,
            alignment_job: aligned.job,
            control_point_version: aligned.control_point_version,
            base: Arc::new((c.map.clone(), c.report.clone())),
            graph: Arc::new(c.graph),
            references: Arc::new(c.references),
            refined: Refined::new(c.map, c.report),
        })
    }

    fn commit(&self, handle: u64, stage: Stage, outcome: Result<Outcome, String>) {
        let persisted = self.write(|s| {
            let stale_input = match &outcome {
                Ok(Outcome::Conflated(c)) => s.alignment.as_ref().map(|a| a.job) != Some(c.alignment_job),
                _ => false,
            };
            let job = s.jobs.get_mut(&handle).expect("job exists");
            if job.status == JobStatus::Cancelled || stale_input {
                job.status = JobStatus::Cancelled;
                return None;
            }
            match outcome {
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e);
                    s.status.insert(stage, StageStatus::Failed);
                    None
                }
                Ok(Outcome::Aligned(a)) => {
                    job.status = JobStatus::Completed;
                    job.report = Some(alignment_report(&a));
                    s.status.insert(Stage::Alignment, StageStatus::Complete);
                    if s.conflation.take().is_some() {
                        s.status.insert(Stage::Conflation, StageStatus::Stale);
                    }
                    let out = Arc::clone(&a.alignment);
                    s.alignment = Some(a);
                    Some(Persist::Alignment(out))
                }
                Ok(Outcome::Conflated(c)) => {
                    job.status = JobStatus::Completed;
                    job.report = Some(conflation_report(&c, 0));
                    s.status.insert(Stage::Conflation, StageStatus::Complete);
                    let out = Persist::Conflation(c.refined.map.clone(), c.refined.report.clone());
                    s.conflation = Some(c);
                    Some(out)
                }
            }
        });
        if let (Some(p), Some(art)) = (persisted, self.artifacts()) {
            if let Err(e) = p.write(&art) {
                log::error!("session {}: writing artifacts failed: {e}", self.id);
            }
        }
    }

    /// Apply a refinement action to the working map and log it.
    pub async fn post_refinement(&self, action: RefinementAction) -> Result<Value, ApiError> {
        let _m = self.mutations.lock().await;
        let (entry, map, report) = self.write(|s| -> Result<_, ApiError> {
            let c = match (&mut s.conflation, s.status[&Stage::Conflation]) {
                (Some(c), StageStatus::Complete) => c,
                _ => return Err(ApiError::conflict("refinement needs a completed conflation")),
            };
            c.refined.apply(&action)?;
            let entry = LogEntry { seq: s.log.len(), conflation_job: c.job, action };
            let out = (c.refined.map.clone(), c.refined.report.clone());
            s.log.push(entry.clone());
            Ok((entry, out.0, out.1))
        })?;
        if let Some(art) = self.artifacts() {
            if let Err(e) = persist_refinement(&art, &entry, &map, &report) {
                log::error!("session {}: writing refinement failed: {e}", self.id);
            }
        }
        Ok(self.read(|s| {
            let c = s.conflation.as_ref().expect("just refined");
            serde_json::json!({
                "seq": entry.seq,
                "conflation_job": c.job,
                "lanelets": c.refined.map.lanelets.len(),
                "fragments": &c.refined.report.fragments,
                "reviewed": &c.refined.reviewed,
            })
        }))
    }

    /// Log entries that apply to the current conflation result.
    pub fn current_log(&self) -> Vec<RefinementAction> {
        self.read(|s| match &s.conflation {
            Some(c) => s.log.iter().filter(|e| e.conflation_job == c.job).map(|e| e.action.clone()).collect(),
            None => Vec::new(),
        })
    }

    pub fn job(&self, handle: u64) -> Option<Job> {
        self.read(|s| s.jobs.get(&handle).cloned())
    }

    pub fn report(&self, stage: Stage) -> Result<Value, ApiError> {
        self.read(|s| {
            let status = s.status[&stage];
            let missing = || ApiError::not_found(format!("no {stage:?} result (status {status:?})").to_lowercase());
            let mut v = match stage {
                Stage::Alignment => alignment_report(s.alignment.as_ref().ok_or_else(missing)?),
                Stage::Conflation => {
                    let c = s.conflation.as_ref().ok_or_else(missing)?;
                    let n = s.log.iter().filter(|e| e.conflation_job == c.job).count();
                    conflation_report(c, n)
                }
            };
            v["status"] = serde_json::to_value(status).expect("status serializes");
            Ok(v)
        })
    }

    pub fn overview(&self) -> Value {
        self.read(|s| {
            serde_json::json!({
                "id": self.id,
                "control_point_version": s.control_point_version,
                "control_points": s.control_points.len(),
                "status": s.status,
                "refinements": s.log.len(),
            })
        })
    }
}

enum Outcome {
    Aligned(AlignedState),
    Conflated(ConflatedState),
}

enum Persist {
    Alignment(Arc<Alignment>),
    Conflation(LaneletMap, ConflationReport),
}

impl Persist {
    fn write(&self, art: &Artifacts) -> Result<(), String> {
        match self {
            Persist::Alignment(a) => write_alignment(a, art).map_err(pipeline),
            Persist::Conflation(map, report) => {
                write_file(&art.conflated_map(), &write_lanelet2(map).map_err(|e: MapError| e.to_string())?)?;
                write_file(&art.conflation_report(), &json_bytes(report))
            }
        }
    }
}

pub fn refinement_log_path(art: &Artifacts) -> PathBuf {
    art.dir.join("refinement_log.jsonl")
}

fn persist_refinement(art: &Artifacts, entry: &LogEntry, map: &LaneletMap, report: &ConflationReport) -> Result<(), String> {
    use std::io::Write;
    std::fs::create_dir_all(&art.dir).map_err(|e| e.to_string())?;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(refinement_log_path(art))
        .map_err(|e| e.to_string())?;
    let line = serde_json::to_string(entry).expect("log entry serializes");
    writeln!(f, "{line}").map_err(|e| e.to_string())?;
    write_file(&art.conflated_map(), &write_lanelet2(map).map_err(|e| e.to_string())?)?;
    write_file(&art.conflation_report(), &json_bytes(report))
}

fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("report serializes");
    b.push(b'\n');
    b
}

fn alignment_report(a: &AlignedState) -> Value {
    serde_json::json!({
        "stage": "alignment",
        "job": a.job,
        "control_point_version": a.control_point_version,
        "report": a.alignment.summary,
    })
}

fn conflation_report(c: &ConflatedState, refinements: usize) -> Value {
    serde_json::json!({
        "stage": "conflation",
        "job": c.job,
        "alignment_job": c.alignment_job,
        "control_point_version": c.control_point_version,
        "refinements": refinements,
        "reviewed": c.refined.reviewed,
        "report": c.refined.report,
    })
}
