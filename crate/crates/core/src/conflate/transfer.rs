use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::map::{Attributes, Id, LaneletMap};

use super::collapse::CenterlineGraph;
use super::geometry as g;
use super::matching::{OsmGraph, PolylineMatch};
use super::polyline::ReferencePolyline;
use super::ConflateError;

/// OSM tags copied verbatim, as (osm key, lanelet key).
pub const COPIED_TAGS: [(&str, &str); 5] = [
    ("maxspeed", "speed_limit"),
    ("name", "road_name"),
    ("surface", "road_surface"),
    ("oneway", "one_way"),
    ("lane_markings", "lane_markings"),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwayMapping {
    pub subtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

/// Lookup from OSM `highway` values to lanelet `subtype` and `location`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HighwayTable(pub BTreeMap<String, HighwayMapping>);

impl Default for HighwayTable {
    fn default() -> Self {
        let mut t = BTreeMap::new();
        let mut put = |keys: &[&str], subtype: &str, location: Option<&str>| {
            for k in keys {
                t.insert(
                    k.to_string(),
                    HighwayMapping { subtype: subtype.into(), location: location.map(str::to_owned) },
                );
            }
        };
        put(&["motorway", "motorway_link", "trunk", "trunk_link"], "road", Some("nonurban"));
        put(
            &[
                "primary",
                "primary_link",
                "secondary",
                "secondary_link",
                "tertiary",
                "tertiary_link",
                "unclassified",
                "residential",
                "service",
            ],
            "road",
            Some("urban"),
        );
        put(&["living_street"], "play_street", Some("urban"));
        put(&["footway", "path", "pedestrian"], "walkway", None);
        put(&["cycleway"], "bicycle_lane", None);
        HighwayTable(t)
    }
}

impl HighwayTable {
    pub fn from_json(bytes: &[u8]) -> Result<HighwayTable, ConflateError> {
        serde_json::from_slice(bytes).map_err(|e| ConflateError::Argument(format!("highway table: {e}")))
    }

    pub fn get(&self, highway: &str) -> Option<&HighwayMapping> {
        self.0.get(highway)
    }
}

/// The OSM way whose attributes a centerline receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WayAssignment {
    pub centerline: usize,
    pub reference: usize,
    pub way: Id,
}

/// For every centerline of an accepted match, the chain way lying closest
/// to the centerline's mid-arc point. Ties go to the lowest way id.
pub fn assign_ways(
    graph: &CenterlineGraph,
    refs: &[ReferencePolyline],
    matches: &[PolylineMatch],
    osm: &OsmGraph,
) -> Vec<WayAssignment> {
    let by_id: BTreeMap<usize, &ReferencePolyline> = refs.iter().map(|r| (r.id, r)).collect();
    let mut out = Vec::new();
    for m in matches.iter().filter(|m| m.accepted) {
        let Some(best) = &m.best else { continue };
        let Some(r) = by_id.get(&m.reference) else { continue };
        for &(c, _) in &r.centerlines {
            let line = &graph.centerlines[c].geometry;
            let mid = g::point_at(line, &g::stations(line), 0.5);
            let mut near: Option<(f64, Id)> = None;
            for &s in &best.chain.segments {
                let [a, b] = osm.segment_line(s);
                let d = crate::align::point_segment_distance(mid, a, b);
                let w = osm.segments[s].way;
                if near.is_none_or(|(bd, bw)| d < bd || (d == bd && w < bw)) {
                    near = Some((d, w));
                }
            }
            if let Some((_, way)) = near {
                out.push(WayAssignment { centerline: c, reference: r.id, way });
            }
        }
    }
    out.sort_by_key(|a| a.centerline);
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnmappedHighway {
    pub way: Id,
    pub highway: String,
    pub lanelets: Vec<Id>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TransferReport {
    /// Lanelet attributes written, per lanelet key.
    pub counts: BTreeMap<String, usize>,
    /// Existing values left in place because overwriting was off.
    pub kept_existing: usize,
    pub unmapped: Vec<UnmappedHighway>,
    /// Origin of each written value: `osm:way/<id>` or `manual`.
    pub provenance: BTreeMap<Id, BTreeMap<String, String>>,
}

impl TransferReport {
    pub fn record_manual(&mut self, lanelet: Id, key: &str) {
        self.provenance.entry(lanelet).or_default().insert(key.to_owned(), "manual".into());
    }
}

fn planned_tags(tags: &Attributes, table: &HighwayTable) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    if let Some(hw) = tags.get("highway") {
        let Some(m) = table.get(hw) else { return Err(hw.clone()) };
        out.push(("subtype".to_owned(), m.subtype.clone()));
        if let Some(loc) = &m.location {
            out.push(("location".to_owned(), loc.clone()));
        }
    }
    for (from, to) in COPIED_TAGS {
        if let Some(v) = tags.get(from) {
            out.push((to.to_owned(), v.clone()));
        }
    }
    Ok(out)
}

/// Copy tags from each assigned way onto the lanelets its centerline
/// represents.
pub fn transfer_attributes(
    map: &mut LaneletMap,
    graph: &CenterlineGraph,
    assignments: &[WayAssignment],
    osm: &OsmGraph,
    table: &HighwayTable,
    overwrite: bool,
) -> TransferReport {
    let mut report = TransferReport::default();
    for a in assignments {
        let way = &osm.ways[&a.way];
        let lanelets: Vec<Id> = graph.centerlines[a.centerline].lanelets().collect();
        let planned = match planned_tags(&way.tags, table) {
            Ok(p) => p,
            Err(highway) => {
                log::warn!("way {}: highway={highway} has no mapping", a.way);
                report.unmapped.push(UnmappedHighway { way: a.way, highway, lanelets });
                continue;
            }
        };
        let source = format!("osm:way/{}", a.way);
        for id in lanelets {
            let Some(ll) = map.lanelets.get_mut(&id) else { continue };
            for (k, v) in &planned {
                match ll.attributes.get(k) {
                    Some(old) if old == v => {}
                    Some(_) if !overwrite => {
                        report.kept_existing += 1;
                        continue;
                    }
                    _ => {
                        ll.attributes.insert(k.clone(), v.clone());
                        *report.counts.entry(k.clone()).or_default() += 1;
                    }
                }
                report.provenance.entry(id).or_default().insert(k.clone(), source.clone());
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneColor {
    Green,
    Red,
    Blue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupValidation {
    pub centerline: usize,
    pub way: Id,
    pub lanelets: Vec<Id>,
    pub lanelet_count: usize,
    pub osm_lanes: Option<u32>,
    pub color: LaneColor,
}

pub fn lane_color(count: usize, lanes: Option<u32>) -> LaneColor {
    match lanes {
        None => LaneColor::Blue,
        Some(n) if n as usize == count => LaneColor::Green,
        Some(_) => LaneColor::Red,
    }
}

/// Compare every matched group's lanelet count with the `lanes` tag of the
/// way assigned to it.
pub fn validate_lane_counts(
    graph: &CenterlineGraph,
    assignments: &[WayAssignment],
    osm: &OsmGraph,
) -> Vec<GroupValidation> {
    assignments
        .iter()
        .map(|a| {
            let c = &graph.centerlines[a.centerline];
            let raw = osm.ways[&a.way].tag("lanes");
            let osm_lanes = raw.and_then(|v| v.trim().parse::<u32>().ok());
            if let (Some(v), None) = (raw, osm_lanes) {
                log::warn!("way {}: lanes={v} is not an integer", a.way);
            }
            let lanelet_count = c.lanelet_count();
            GroupValidation {
                centerline: a.centerline,
                way: a.way,
                lanelets: c.lanelets().collect(),
                lanelet_count,
                osm_lanes,
                color: lane_color(lanelet_count, osm_lanes),
            }
        })
        .collect()
}

/// Lanelets with neither predecessor nor successor in groups with more
/// lanelets than OSM `lanes`.
pub fn find_fragments(graph: &CenterlineGraph, validation: &[GroupValidation]) -> Vec<Id> {
    let mut out: Vec<Id> = validation
        .iter()
        .filter(|v| v.osm_lanes.is_some_and(|n| v.lanelet_count > n as usize))
        .flat_map(|v| v.lanelets.iter().copied())
        .filter(|&id| !graph.has_predecessor(id) && !graph.has_successor(id))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Delete the listed lanelets with their orphaned boundaries. Returns the
/// ids actually removed.
pub fn remove_fragments(map: &mut LaneletMap, ids: &[Id]) -> Vec<Id> {
    ids.iter().copied().filter(|&id| map.remove_lanelet(id).is_some()).collect()
}
