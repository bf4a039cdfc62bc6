use std::collections::BTreeMap;
use std::fmt::Write;

use log::warn;

use crate::geo::GeoPoint;

use super::xml::{self, push_tags};
use super::{Attributes, Id, MapError};

#[derive(Clone, Debug, PartialEq)]
pub struct OsmNode {
    pub position: GeoPoint,
    pub tags: Attributes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmWay {
    pub nodes: Vec<Id>,
    pub tags: Attributes,
}

impl OsmWay {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

/// Road graph from an OSM extract: every node of the extract, and the ways
/// carrying a `highway` tag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OsmRoadNetwork {
    pub nodes: BTreeMap<Id, OsmNode>,
    pub ways: BTreeMap<Id, OsmWay>,
}

impl OsmRoadNetwork {
    pub fn is_empty(&self) -> bool {
        self.ways.is_empty()
    }
}

/// Parse an OSM XML extract, keeping only `highway` ways. Node references
/// that the extract does not contain are dropped (clipped extracts), and a
/// way left with fewer than two nodes is discarded.
pub fn parse_osm_network(bytes: &[u8]) -> Result<OsmRoadNetwork, MapError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| MapError::Parse { line: 1, message: format!("invalid UTF-8: {e}") })?;
    let doc = roxmltree::Document::parse(text).map_err(MapError::from_xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("osm") {
        return Err(MapError::Parse {
            line: xml::line_of(root),
            message: format!("root element is <{}>, expected <osm>", root.tag_name().name()),
        });
    }
    let mut net = OsmRoadNetwork::default();
    let mut raw_ways = Vec::new();
    for el in root.children().filter(|c| c.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id = xml::id_of(el)?;
                let lat = xml::parse_num(el, "lat", xml::required(el, "lat")?)?;
                let lon = xml::parse_num(el, "lon", xml::required(el, "lon")?)?;
                let position = GeoPoint::new(lat, lon).map_err(|e| MapError::Parse {
                    line: xml::line_of(el),
                    message: e.to_string(),
                })?;
                let node = OsmNode { position, tags: xml::tags_of(el)? };
                if net.nodes.insert(id, node).is_some() {
                    return Err(MapError::DuplicateId { kind: "node", id });
                }
            }
            "way" => {
                let tags = xml::tags_of(el)?;
                if !tags.contains_key("highway") {
                    continue;
                }
                let id = xml::id_of(el)?;
                let refs = el
                    .children()
                    .filter(|c| c.has_tag_name("nd"))
                    .map(|nd| xml::parse_num(nd, "ref", xml::required(nd, "ref")?))
                    .collect::<Result<Vec<Id>, _>>()?;
                raw_ways.push((id, refs, tags));
            }
            _ => {}
        }
    }
    for (id, refs, tags) in raw_ways {
        let total = refs.len();
        let nodes: Vec<Id> = refs.into_iter().filter(|r| net.nodes.contains_key(r)).collect();
        if nodes.len() < total {
            warn!("way {id}: dropped {} node references missing from the extract", total - nodes.len());
        }
        if nodes.len() < 2 {
            warn!("way {id}: fewer than two resolvable nodes, skipped");
            continue;
        }
        if net.ways.insert(id, OsmWay { nodes, tags }).is_some() {
            return Err(MapError::DuplicateId { kind: "way", id });
        }
    }
    Ok(net)
}

pub fn write_osm_network(net: &OsmRoadNetwork) -> Vec<u8> {
    let mut out = String::with_capacity(96 * (net.nodes.len() + net.ways.len()) + 128);
    xml::write_header(
        &mut out,
        &vec![("version".into(), "0.6".into()), ("generator".into(), "mapfusion".into())],
    );
    for (id, n) in &net.nodes {
        let _ = write!(out, "  <node id=\"{id}\" lat=\"{}\" lon=\"{}\"", n.position.latitude, n.position.longitude);
        if n.tags.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            push_tags(&mut out, &n.tags);
            out.push_str("  </node>\n");
        }
    }
    for (id, w) in &net.ways {
        let _ = writeln!(out, "  <way id=\"{id}\">");
        for n in &w.nodes {
            let _ = writeln!(out, "    <nd ref=\"{n}\"/>");
        }
        push_tags(&mut out, &w.tags);
        out.push_str("  </way>\n");
    }
    out.push_str("</osm>\n");
    out.into_bytes()
}
