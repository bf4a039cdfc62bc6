//! Map conflation: collapse lanelets to centerlines, chain them into
//! reference polylines, match those against OSM ways and carry OSM tags over
//! to the lanelets.

mod collapse;
mod geometry;
mod matching;
mod metrics;
mod polyline;
mod similarity;
mod transfer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoError;
use crate::map::{Id, LaneletMap, MapError};
use crate::par::Exec;

pub use collapse::{collapse_lanelets, Centerline, CenterlineGraph, Direction};
pub use geometry::Polyline;
pub use matching::{
    buffer_grow_match, buffer_grow_match_with, candidates_in_buffer, BufferParams, Candidate, MatchParams, OsmChain,
    OsmGraph, PolylineMatch, Segment,
};
pub use metrics::{
    classify, classify_score, match_results, precision_recall, read_labels, reclassify, Classification, Label, Labels, MatchMetrics, MatchResult,
    MatchedChain,
};
pub use polyline::{build_reference_polylines, ReferencePolyline};
pub use similarity::{enclosed_area, similarity_score, Components, Similarity, SimilarityWeights};
pub use transfer::{
    assign_ways, find_fragments, lane_color, remove_fragments, transfer_attributes, validate_lane_counts,
    GroupValidation, HighwayMapping, HighwayTable, LaneColor, TransferReport, UnmappedHighway, WayAssignment,
    COPIED_TAGS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConflateError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("OSM network has no usable highway ways")]
    EmptyOsm,
    #[error("{0}")]
    Argument(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflationParams {
    #[serde(flatten)]
    pub matching: MatchParams,
    /// Hausdorff tolerance for adjacency and connectivity between lanelets.
    pub adjacency_tolerance: f64,
    /// Accepted matches at or above this score count as true positives.
    pub true_positive_threshold: f64,
    pub length_threshold: f64,
    pub overwrite: bool,
    /// Delete detected fragments instead of only listing them.
    pub remove_fragments: bool,
    #[serde(skip)]
    pub highway_table: HighwayTable,
}

impl Default for ConflationParams {
    fn default() -> Self {
        ConflationParams {
            matching: MatchParams::default(),
            adjacency_tolerance: 0.2,
            true_positive_threshold: 0.8,
            length_threshold: 1.5,
            overwrite: false,
            remove_fragments: true,
            highway_table: HighwayTable::default(),
        }
    }
}

impl ConflationParams {
    pub fn validate(&self) -> Result<(), ConflateError> {
        self.matching.validate()?;
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConflateError::Argument(format!("{what} must be positive")))
            }
        };
        positive(self.adjacency_tolerance, "adjacency tolerance")?;
        positive(self.true_positive_threshold, "true-positive threshold")?;
        positive(self.length_threshold, "length threshold")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FragmentReport {
    pub proposed: Vec<Id>,
    pub deleted: Vec<Id>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConflationReport {
    pub centerlines: usize,
    pub reference_polylines: usize,
    pub matches: Vec<MatchResult>,
    pub assignments: Vec<WayAssignment>,
    pub transfer: TransferReport,
    pub validation: Vec<GroupValidation>,
    pub fragments: FragmentReport,
    pub metrics: MatchMetrics,
}

#[derive(Clone, Debug)]
pub struct Conflation {
    pub map: LaneletMap,
    pub graph: CenterlineGraph,
    pub references: Vec<ReferencePolyline>,
    pub report: ConflationReport,
}

/// Run the whole conflation on `map`, which must share the local frame of
/// `osm`. The input map is not modified.
pub fn conflate(
    map: &LaneletMap,
    osm: &OsmGraph,
    params: &ConflationParams,
    labels: Option<&Labels>,
    exec: Exec,
) -> Result<Conflation, ConflateError> {
    params.validate()?;
    let graph = collapse_lanelets(map, params.adjacency_tolerance)?;
    let references = build_reference_polylines(&graph);
    let matches = buffer_grow_match_with(&references, osm, &params.matching, exec)?;
    let assignments = assign_ways(&graph, &references, &matches, osm);

    let mut out = map.clone();
    let transfer =
        transfer_attributes(&mut out, &graph, &assignments, osm, &params.highway_table, params.overwrite);
    let validation = validate_lane_counts(&graph, &assignments, osm);
    let proposed = find_fragments(&graph, &validation);
    let deleted = if params.remove_fragments { remove_fragments(&mut out, &proposed) } else { Vec::new() };

    let results = match_results(&references, &matches, labels, params.true_positive_threshold);
    let metrics = precision_recall(&results, params.length_threshold, labels.is_some());
    let report = ConflationReport {
        centerlines: graph.centerlines.len(),
        reference_polylines: references.len(),
        matches: results,
        assignments,
        transfer,
        validation,
        fragments: FragmentReport { proposed, deleted },
        metrics,
    };
    Ok(Conflation { map: out, graph, references, report })
}

#[cfg(test)]
mod tests {
    use super::collapse::tests::Fixture;
    use super::matching::tests::osm;
    use super::*;

    fn tagged(mut net: OsmGraph, way: Id, tags: &[(&str, &str)]) -> OsmGraph {
        let w = net.ways.get_mut(&way).unwrap();
        for (k, v) in tags {
            w.tags.insert(k.to_string(), v.to_string());
        }
        net
    }

    /// Three eastbound lanelets side by side over 0..50, plus `extra`
    /// lanelets continuing the middle one, so its group connects onward.
    fn three_lane(connect_fragment: bool) -> (Fixture, Id) {
        let mut fx = Fixture::new();
        let ys = [4.5, 1.5, -1.5, -4.5];
        let b: Vec<Id> = ys.iter().map(|&y| fx.line(&[[0.0, y], [50.0, y]])).collect();
        fx.lanelet(b[0], b[1]);
        fx.lanelet(b[1], b[2]);
        let frag = fx.lanelet(b[2], b[3]);
        // rest of the road continues past x = 50 with two lanes
        let n: Vec<Id> = ys[..3].iter().map(|&y| fx.line(&[[50.0, y], [100.0, y]])).collect();
        fx.lanelet(n[0], n[1]);
        fx.lanelet(n[1], n[2]);
        let p: Vec<Id> = ys[..3].iter().map(|&y| fx.line(&[[-50.0, y], [0.0, y]])).collect();
        fx.lanelet(p[0], p[1]);
        fx.lanelet(p[1], p[2]);
        if connect_fragment {
            let s = fx.line(&[[50.0, -4.5], [100.0, -4.5]]);
            fx.lanelet(n[2], s);
        }
        (fx, frag)
    }

    fn road() -> OsmGraph {
        osm(&[(1, [-50.0, 1.5]), (2, [0.0, 1.5]), (3, [50.0, 1.5]), (4, [100.0, 1.5])], &[(9, &[1, 2, 3, 4])])
    }

    #[test]
    fn fragment_truth_table() {
        // (connected, lanes) → deleted?
        let cases = [(false, "2", true), (false, "3", false), (true, "2", false), (true, "3", false)];
        for (connected, lanes, deleted) in cases {
            let (fx, frag) = three_lane(connected);
            let net = tagged(road(), 9, &[("lanes", lanes), ("highway", "residential")]);
            let c = conflate(&fx.map, &net, &ConflationParams::default(), None, Exec::Sequential).unwrap();
            assert_eq!(
                c.report.fragments.deleted.contains(&frag),
                deleted,
                "connected={connected} lanes={lanes}: {:?}",
                c.report.fragments
            );
            assert_eq!(c.map.lanelets.contains_key(&frag), !deleted);
            for id in &c.report.fragments.deleted {
                assert!(!c.graph.has_predecessor(*id) && !c.graph.has_successor(*id));
            }
        }
    }

    #[test]
    fn conflation_keeps_geometry() {
        let (fx, _) = three_lane(false);
        let net = tagged(road(), 9, &[("lanes", "2"), ("maxspeed", "50")]);
        let p = ConflationParams { remove_fragments: false, ..Default::default() };
        let c = conflate(&fx.map, &net, &p, None, Exec::Sequential).unwrap();
        assert_eq!(c.map.points, fx.map.points);
        assert_eq!(c.map.linestrings, fx.map.linestrings);
        assert!(c.map.lanelets.values().all(|l| l.attributes.get("speed_limit").map(String::as_str) == Some("50")));
        assert_eq!(c.report.fragments.deleted, Vec::<Id>::new());
        assert_eq!(c.report.fragments.proposed.len(), 1);
    }

    #[test]
    fn every_reference_has_one_result() {
        let (fx, _) = three_lane(true);
        let c = conflate(&fx.map, &road(), &ConflationParams::default(), None, Exec::Sequential).unwrap();
        let ids: Vec<usize> = c.report.matches.iter().map(|m| m.reference).collect();
        let expect: Vec<usize> = c.references.iter().map(|r| r.id).collect();
        assert_eq!(ids, expect);
    }

    #[test]
    fn params_toml_round_trip() {
        let p = ConflationParams::default();
        let s = toml::to_string(&p).unwrap();
        let back: ConflationParams = toml::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(toml::from_str::<ConflationParams>("bogus = 1").is_err());
    }
}
