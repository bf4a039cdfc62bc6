use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::geo::{GeoPoint, LocalPoint, PlanarTransform, UtmProjector};
use crate::par::{self, Exec};

use super::xml::{self, escape, push_attr, push_tags};
use super::{Attributes, Id, MapError, XmlAttrs};

/// Where a point lives. Local points carry their coordinates in the
/// `local_x`/`local_y`/`ele` tags; geodetic points in `lat`/`lon` plus `ele`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Position {
    Local(LocalPoint),
    Geo(GeoPoint),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub position: Position,
    pub attributes: Attributes,
    pub xml: XmlAttrs,
}

impl Point {
    pub fn local(p: LocalPoint) -> Point {
        Point { position: Position::Local(p), attributes: Attributes::new(), xml: XmlAttrs::new() }
    }

    pub fn as_local(&self) -> Option<&LocalPoint> {
        match &self.position {
            Position::Local(p) => Some(p),
            Position::Geo(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineString {
    pub points: Vec<Id>,
    pub attributes: Attributes,
    pub xml: XmlAttrs,
}

impl LineString {
    pub fn new(points: Vec<Id>) -> LineString {
        LineString { points, attributes: Attributes::new(), xml: XmlAttrs::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MemberKind {
    Node,
    Way,
    Relation,
}

impl MemberKind {
    fn as_str(self) -> &'static str {
        match self {
            MemberKind::Node => "node",
            MemberKind::Way => "way",
            MemberKind::Relation => "relation",
        }
    }

    fn parse(s: &str) -> Option<MemberKind> {
        match s {
            "node" => Some(MemberKind::Node),
            "way" => Some(MemberKind::Way),
            "relation" => Some(MemberKind::Relation),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub kind: MemberKind,
    pub id: Id,
    pub role: String,
}

/// Directed lane section between two boundary linestrings.
#[derive(Clone, Debug, PartialEq)]
pub struct Lanelet {
    pub left: Id,
    pub right: Id,
    /// Members besides the two bounds (regulatory element links, centerline, ...).
    pub other_members: Vec<Member>,
    pub attributes: Attributes,
    pub xml: XmlAttrs,
}

impl Lanelet {
    pub fn new(left: Id, right: Id) -> Lanelet {
        let mut attributes = Attributes::new();
        attributes.insert("type".into(), "lanelet".into());
        Lanelet { left, right, other_members: Vec::new(), attributes, xml: XmlAttrs::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Area {
    pub members: Vec<Member>,
    pub attributes: Attributes,
    pub xml: XmlAttrs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegulatoryElement {
    pub members: Vec<Member>,
    pub attributes: Attributes,
    pub xml: XmlAttrs,
}

/// Lanelet2 vector map. Each element class has its own id space; lanelets,
/// areas and regulatory elements share the relation id space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaneletMap {
    pub root: XmlAttrs,
    pub points: BTreeMap<Id, Point>,
    pub linestrings: BTreeMap<Id, LineString>,
    pub lanelets: BTreeMap<Id, Lanelet>,
    pub areas: BTreeMap<Id, Area>,
    pub regulatory_elements: BTreeMap<Id, RegulatoryElement>,
}

impl LaneletMap {
    pub fn new() -> LaneletMap {
        LaneletMap {
            root: vec![("version".into(), "0.6".into()), ("generator".into(), "mapfusion".into())],
            ..Default::default()
        }
    }

    pub fn element_count(&self) -> usize {
        self.points.len()
            + self.linestrings.len()
            + self.lanelets.len()
            + self.areas.len()
            + self.regulatory_elements.len()
    }

    fn relation_exists(&self, id: Id) -> bool {
        self.lanelets.contains_key(&id)
            || self.areas.contains_key(&id)
            || self.regulatory_elements.contains_key(&id)
    }

    fn member_exists(&self, m: &Member) -> bool {
        match m.kind {
            MemberKind::Node => self.points.contains_key(&m.id),
            MemberKind::Way => self.linestrings.contains_key(&m.id),
            MemberKind::Relation => self.relation_exists(m.id),
        }
    }

    /// Check referential integrity and relation id uniqueness.
    pub fn validate(&self) -> Result<(), MapError> {
        let mut missing = BTreeSet::new();
        for (id, ls) in &self.linestrings {
            for p in &ls.points {
                if !self.points.contains_key(p) {
                    missing.insert(format!("node {p} (in way {id})"));
                }
            }
        }
        for (id, ll) in &self.lanelets {
            for b in [ll.left, ll.right] {
                if !self.linestrings.contains_key(&b) {
                    missing.insert(format!("way {b} (in relation {id})"));
                }
            }
        }
        let members = self
            .lanelets
            .iter()
            .flat_map(|(id, l)| l.other_members.iter().map(move |m| (id, m)))
            .chain(self.areas.iter().flat_map(|(id, a)| a.members.iter().map(move |m| (id, m))))
            .chain(
                self.regulatory_elements
                    .iter()
                    .flat_map(|(id, r)| r.members.iter().map(move |m| (id, m))),
            );
        for (id, m) in members {
            if !self.member_exists(m) {
                missing.insert(format!("{} {} (in relation {id})", m.kind.as_str(), m.id));
            }
        }
        if !missing.is_empty() {
            return Err(MapError::Integrity { missing: missing.into_iter().collect() });
        }
        for id in self.lanelets.keys() {
            if self.areas.contains_key(id) || self.regulatory_elements.contains_key(id) {
                return Err(MapError::DuplicateId { kind: "relation", id: *id });
            }
        }
        for id in self.areas.keys() {
            if self.regulatory_elements.contains_key(id) {
                return Err(MapError::DuplicateId { kind: "relation", id: *id });
            }
        }
        Ok(())
    }

    pub fn local_point(&self, id: Id) -> Result<LocalPoint, MapError> {
        let p = self.points.get(&id).ok_or_else(|| MapError::Integrity {
            missing: vec![format!("node {id}")],
        })?;
        p.as_local().copied().ok_or(MapError::NotLocal { id })
    }

    /// Coordinates of a linestring's points in order.
    pub fn linestring_geometry(&self, id: Id) -> Result<Vec<LocalPoint>, MapError> {
        let ls = self.linestrings.get(&id).ok_or_else(|| MapError::Integrity {
            missing: vec![format!("way {id}")],
        })?;
        ls.points.iter().map(|p| self.local_point(*p)).collect()
    }

    /// Apply a planar transform to every point. Either all points move or,
    /// on the first point outside coverage, none do.
    pub fn transform(&mut self, t: &impl PlanarTransform) -> Result<(), MapError> {
        self.transform_with(t, Exec::default())
    }

    pub fn transform_with(&mut self, t: &impl PlanarTransform, exec: Exec) -> Result<(), MapError> {
        let entries: Vec<(Id, LocalPoint)> = self
            .points
            .iter()
            .map(|(id, p)| p.as_local().map(|l| (*id, *l)).ok_or(MapError::NotLocal { id: *id }))
            .collect::<Result<_, _>>()?;
        let moved = par::try_map(exec, &entries, |(id, p)| {
            t.transform_point(p).map_err(|e| MapError::Coverage { id: *id, x: e.x, y: e.y })
        })?;
        for ((id, _), np) in entries.iter().zip(moved) {
            if let Some(pt) = self.points.get_mut(id) {
                pt.position = Position::Local(np);
            }
        }
        Ok(())
    }

    /// Convert every local point to WGS84 through the inverse projection.
    /// Placeholder `lat`/`lon` XML attributes of local points are dropped.
    pub fn georeference(&mut self, proj: &UtmProjector) -> Result<(), MapError> {
        let mut converted = Vec::with_capacity(self.points.len());
        for (id, p) in &self.points {
            if let Position::Local(l) = &p.position {
                converted.push((*id, proj.unproject(l)?));
            }
        }
        for (id, g) in converted {
            if let Some(p) = self.points.get_mut(&id) {
                p.position = Position::Geo(g);
                p.xml.retain(|(k, _)| k != "lat" && k != "lon");
            }
        }
        Ok(())
    }

    /// Project every geodetic point into the local frame of `proj`.
    pub fn localize(&mut self, proj: &UtmProjector) -> Result<(), MapError> {
        let mut converted = Vec::with_capacity(self.points.len());
        for (id, p) in &self.points {
            if let Position::Geo(g) = &p.position {
                converted.push((*id, proj.project(g)?));
            }
        }
        for (id, l) in converted {
            if let Some(p) = self.points.get_mut(&id) {
                p.position = Position::Local(l);
            }
        }
        Ok(())
    }

    /// Planar coordinates of all local points, for extents and previews.
    pub fn local_coordinates(&self) -> Vec<[f64; 2]> {
        self.points.values().filter_map(|p| p.as_local().map(LocalPoint::xy)).collect()
    }

    /// Remove a lanelet plus the linestrings and points that nothing else
    /// references afterwards. Regulatory-element and area members pointing
    /// at the removed relation are dropped with it.
    pub fn remove_lanelet(&mut self, id: Id) -> Option<Lanelet> {
        let ll = self.lanelets.remove(&id)?;
        let is_ref = |m: &Member| m.kind == MemberKind::Relation && m.id == id;
        for r in self.regulatory_elements.values_mut() {
            r.members.retain(|m| !is_ref(m));
        }
        for a in self.areas.values_mut() {
            a.members.retain(|m| !is_ref(m));
        }
        for l in self.lanelets.values_mut() {
            l.other_members.retain(|m| !is_ref(m));
        }

        let mut candidates: BTreeSet<Id> = [ll.left, ll.right].into_iter().collect();
        candidates.extend(ll.other_members.iter().filter(|m| m.kind == MemberKind::Way).map(|m| m.id));
        let used_ways = self.referenced_ways();
        let mut freed_points = BTreeSet::new();
        for w in candidates {
            if !used_ways.contains(&w) {
                if let Some(ls) = self.linestrings.remove(&w) {
                    freed_points.extend(ls.points);
                }
            }
        }
        if !freed_points.is_empty() {
            let used_points = self.referenced_points();
            for p in freed_points {
                if !used_points.contains(&p) {
                    self.points.remove(&p);
                }
            }
        }
        Some(ll)
    }

    fn referenced_ways(&self) -> BTreeSet<Id> {
        let mut used = BTreeSet::new();
        for l in self.lanelets.values() {
            used.insert(l.left);
            used.insert(l.right);
        }
        let members = self
            .lanelets
            .values()
            .flat_map(|l| &l.other_members)
            .chain(self.areas.values().flat_map(|a| &a.members))
            .chain(self.regulatory_elements.values().flat_map(|r| &r.members));
        used.extend(members.filter(|m| m.kind == MemberKind::Way).map(|m| m.id));
        used
    }

    fn referenced_points(&self) -> BTreeSet<Id> {
        let mut used: BTreeSet<Id> =
            self.linestrings.values().flat_map(|l| l.points.iter().copied()).collect();
        let members = self
            .lanelets
            .values()
            .flat_map(|l| &l.other_members)
            .chain(self.areas.values().flat_map(|a| &a.members))
            .chain(self.regulatory_elements.values().flat_map(|r| &r.members));
        used.extend(members.filter(|m| m.kind == MemberKind::Node).map(|m| m.id));
        used
    }
}

fn parse_members(rel: roxmltree::Node) -> Result<Vec<Member>, MapError> {
    rel.children()
        .filter(|c| c.has_tag_name("member"))
        .map(|m| {
            let kind_raw = xml::required(m, "type")?;
            let kind = MemberKind::parse(kind_raw).ok_or_else(|| MapError::Parse {
                line: xml::line_of(m),
                message: format!("unknown member type '{kind_raw}'"),
            })?;
            let id = xml::parse_num(m, "ref", xml::required(m, "ref")?)?;
            let role = m.attribute("role").unwrap_or_default().to_owned();
            Ok(Member { kind, id, role })
        })
        .collect()
}

fn parse_point(node: roxmltree::Node) -> Result<Point, MapError> {
    let mut attributes = xml::tags_of(node)?;
    let ele = match attributes.get("ele") {
        Some(v) => Some(xml::parse_num::<f64>(node, "ele", v)?),
        None => None,
    };
    let local = match (attributes.get("local_x"), attributes.get("local_y")) {
        (Some(x), Some(y)) => Some((xml::parse_num::<f64>(node, "local_x", x)?, xml::parse_num::<f64>(node, "local_y", y)?)),
        _ => None,
    };
    if let Some((x, y)) = local {
        for k in ["local_x", "local_y", "ele"] {
            attributes.remove(k);
        }
        let xml = xml::extra_attrs(node, &["id"]);
        return Ok(Point { position: Position::Local(LocalPoint { x, y, z: ele }), attributes, xml });
    }
    attributes.remove("ele");
    let lat: f64 = xml::parse_num(node, "lat", xml::required(node, "lat")?)?;
    let lon: f64 = xml::parse_num(node, "lon", xml::required(node, "lon")?)?;
    let geo = GeoPoint::with_elevation(lat, lon, ele).map_err(|e| MapError::Parse {
        line: xml::line_of(node),
        message: e.to_string(),
    })?;
    Ok(Point { position: Position::Geo(geo), attributes, xml: xml::extra_attrs(node, &["id", "lat", "lon"]) })
}

/// Parse a Lanelet2 `.osm` document.
pub fn parse_lanelet2(bytes: &[u8]) -> Result<LaneletMap, MapError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MapError::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() as u32,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(MapError::from_xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("osm") {
        return Err(MapError::Parse {
            line: xml::line_of(root),
            message: format!("root element is <{}>, expected <osm>", root.tag_name().name()),
        });
    }
    let mut map = LaneletMap { root: xml::extra_attrs(root, &[]), ..Default::default() };

    for el in root.children().filter(|c| c.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id = xml::id_of(el)?;
                if map.points.insert(id, parse_point(el)?).is_some() {
                    return Err(MapError::DuplicateId { kind: "node", id });
                }
            }
            "way" => {
                let id = xml::id_of(el)?;
                let points = el
                    .children()
                    .filter(|c| c.has_tag_name("nd"))
                    .map(|nd| xml::parse_num(nd, "ref", xml::required(nd, "ref")?))
                    .collect::<Result<Vec<Id>, _>>()?;
                let ls = LineString {
                    points,
                    attributes: xml::tags_of(el)?,
                    xml: xml::extra_attrs(el, &["id"]),
                };
                if map.linestrings.insert(id, ls).is_some() {
                    return Err(MapError::DuplicateId { kind: "way", id });
                }
            }
            "relation" => {
                let id = xml::id_of(el)?;
                if map.relation_exists(id) {
                    return Err(MapError::DuplicateId { kind: "relation", id });
                }
                let members = parse_members(el)?;
                let attributes = xml::tags_of(el)?;
                let xml_attrs = xml::extra_attrs(el, &["id"]);
                match attributes.get("type").map(String::as_str) {
                    Some("lanelet") => {
                        map.lanelets.insert(id, lanelet_from_members(id, members, attributes, xml_attrs)?);
                    }
                    Some("multipolygon") => {
                        map.areas.insert(id, Area { members, attributes, xml: xml_attrs });
                    }
                    _ => {
                        map.regulatory_elements
                            .insert(id, RegulatoryElement { members, attributes, xml: xml_attrs });
                    }
                }
            }
            _ => {}
        }
    }
    map.validate()?;
    Ok(map)
}

fn lanelet_from_members(
    id: Id,
    members: Vec<Member>,
    attributes: Attributes,
    xml: XmlAttrs,
) -> Result<Lanelet, MapError> {
    let mut left = None;
    let mut right = None;
    let mut other_members = Vec::new();
    for m in members {
        let slot = match (m.kind, m.role.as_str()) {
            (MemberKind::Way, "left") => &mut left,
            (MemberKind::Way, "right") => &mut right,
            _ => {
                other_members.push(m);
                continue;
            }
        };
        if slot.replace(m.id).is_some() {
            return Err(MapError::Invalid {
                kind: "lanelet",
                id,
                message: format!("more than one '{}' boundary", m.role),
            });
        }
    }
    match (left, right) {
        (Some(left), Some(right)) => Ok(Lanelet { left, right, other_members, attributes, xml }),
        _ => Err(MapError::Invalid {
            kind: "lanelet",
            id,
            message: "needs exactly one left and one right way member".into(),
        }),
    }
}

fn push_member(out: &mut String, m: &Member) {
    let _ = writeln!(
        out,
        "    <member type=\"{}\" ref=\"{}\" role=\"{}\"/>",
        m.kind.as_str(),
        m.id,
        escape(&m.role)
    );
}

fn push_relation(out: &mut String, id: Id, xml_attrs: &XmlAttrs, members: &[Member], tags: &Attributes) {
    let _ = write!(out, "  <relation id=\"{id}\"");
    for (k, v) in xml_attrs {
        push_attr(out, k, v);
    }
    out.push_str(">\n");
    for m in members {
        push_member(out, m);
    }
    push_tags(out, tags);
    out.push_str("  </relation>\n");
}

/// Serialize to Lanelet2 XML. Elements are written per class in id order,
/// so equal maps produce identical bytes.
pub fn write_lanelet2(map: &LaneletMap) -> Result<Vec<u8>, MapError> {
    map.validate()?;
    let mut out = String::with_capacity(64 * map.element_count() + 128);
    xml::write_header(&mut out, &map.root);

    for (id, p) in &map.points {
        let mut tags = p.attributes.clone();
        let _ = write!(out, "  <node id=\"{id}\"");
        match &p.position {
            Position::Local(l) => {
                tags.insert("local_x".into(), l.x.to_string());
                tags.insert("local_y".into(), l.y.to_string());
                if let Some(z) = l.z {
                    tags.insert("ele".into(), z.to_string());
                }
            }
            Position::Geo(g) => {
                let _ = write!(out, " lat=\"{}\" lon=\"{}\"", g.latitude, g.longitude);
                if let Some(z) = g.elevation {
                    tags.insert("ele".into(), z.to_string());
                }
            }
        }
        for (k, v) in &p.xml {
            push_attr(&mut out, k, v);
        }
        if tags.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            push_tags(&mut out, &tags);
            out.push_str("  </node>\n");
        }
    }

    for (id, ls) in &map.linestrings {
        let _ = write!(out, "  <way id=\"{id}\"");
        for (k, v) in &ls.xml {
            push_attr(&mut out, k, v);
        }
        out.push_str(">\n");
        for p in &ls.points {
            let _ = writeln!(out, "    <nd ref=\"{p}\"/>");
        }
        push_tags(&mut out, &ls.attributes);
        out.push_str("  </way>\n");
    }

    enum Rel<'a> {
        Lanelet(&'a Lanelet),
        Area(&'a Area),
        Reg(&'a RegulatoryElement),
    }
    let mut rels: Vec<(Id, Rel)> = map.lanelets.iter().map(|(i, l)| (*i, Rel::Lanelet(l))).collect();
    rels.extend(map.areas.iter().map(|(i, a)| (*i, Rel::Area(a))));
    rels.extend(map.regulatory_elements.iter().map(|(i, r)| (*i, Rel::Reg(r))));
    rels.sort_by_key(|(i, _)| *i);
    for (id, rel) in rels {
        match rel {
            Rel::Lanelet(l) => {
                let mut members = vec![
                    Member { kind: MemberKind::Way, id: l.left, role: "left".into() },
                    Member { kind: MemberKind::Way, id: l.right, role: "right".into() },
                ];
                members.extend(l.other_members.iter().cloned());
                push_relation(&mut out, id, &l.xml, &members, &l.attributes);
            }
            Rel::Area(a) => push_relation(&mut out, id, &a.xml, &a.members, &a.attributes),
            Rel::Reg(r) => push_relation(&mut out, id, &r.xml, &r.members, &r.attributes),
        }
    }
    out.push_str("</osm>\n");
    Ok(out.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::RigidTransform2D;

    const SMALL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6" generator="VectorMapBuilder">
  <node id="1" lat="0" lon="0"><tag k="local_x" v="0"/><tag k="local_y" v="0"/><tag k="ele" v="1.5"/></node>
  <node id="2" lat="0" lon="0"><tag k="local_x" v="10"/><tag k="local_y" v="0"/></node>
  <node id="3" lat="0" lon="0"><tag k="local_x" v="0"/><tag k="local_y" v="3.5"/></node>
  <node id="4" lat="0" lon="0"><tag k="local_x" v="10"/><tag k="local_y" v="3.5"/><tag k="mgrs_code" v="32UPU"/></node>
  <way id="10"><nd ref="3"/><nd ref="4"/><tag k="type" v="line_thin"/><tag k="subtype" v="solid"/></way>
  <way id="11"><nd ref="1"/><nd ref="2"/><tag k="type" v="line_thin"/></way>
  <relation id="100">
    <member type="way" role="left" ref="10"/>
    <member type="way" role="right" ref="11"/>
    <tag k="type" v="lanelet"/><tag k="subtype" v="road"/>
  </relation>
</osm>"#;

    #[test]
    fn small_fixture_counts() {
        let m = parse_lanelet2(SMALL.as_bytes()).unwrap();
        assert_eq!((m.points.len(), m.linestrings.len(), m.lanelets.len()), (4, 2, 1));
        assert_eq!(m.lanelets[&100].left, 10);
        assert_eq!(m.points[&1].as_local(), Some(&LocalPoint::with_z(0.0, 0.0, 1.5)));
        assert_eq!(m.points[&4].attributes["mgrs_code"], "32UPU");
        assert_eq!(m.points[&4].xml, vec![("lat".into(), "0".into()), ("lon".into(), "0".into())]);
    }

    #[test]
    fn empty_document() {
        let m = parse_lanelet2(b"<osm/>").unwrap();
        assert_eq!(m.element_count(), 0);
        let bytes = write_lanelet2(&m).unwrap();
        assert_eq!(parse_lanelet2(&bytes).unwrap(), m);
    }

    #[test]
    fn dangling_way_named_in_error() {
        let doc = SMALL.replace(r#"role="right" ref="11""#, r#"role="right" ref="77""#);
        match parse_lanelet2(doc.as_bytes()) {
            Err(MapError::Integrity { missing }) => {
                assert!(missing.iter().any(|m| m.starts_with("way 77")), "{missing:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_xml_reports_line() {
        let doc = "<osm>\n<node id=\"1\" lat=\"0\" lon=\"0\">\n</way>\n</osm>";
        match parse_lanelet2(doc.as_bytes()) {
            Err(MapError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lanelet_needs_both_bounds() {
        let doc = SMALL.replace(r#"<member type="way" role="right" ref="11"/>"#, "");
        assert!(matches!(parse_lanelet2(doc.as_bytes()), Err(MapError::Invalid { .. })));
    }

    #[test]
    fn non_ascii_and_markup_values_survive() {
        let mut m = parse_lanelet2(SMALL.as_bytes()).unwrap();
        let ll = m.lanelets.get_mut(&100).unwrap();
        ll.attributes.insert("road_name".into(), "Boltzmannstraße \"Süd\" <B471> & Co\n".into());
        ll.attributes.insert("name:ja".into(), "ガルヒング".into());
        let back = parse_lanelet2(&write_lanelet2(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn transform_moves_geometry_only() {
        let mut m = parse_lanelet2(SMALL.as_bytes()).unwrap();
        let before = m.clone();
        m.transform(&RigidTransform2D::from_angle(0.0, [10.0, -5.0])).unwrap();
        for (id, p) in &m.points {
            let a = before.points[id].as_local().unwrap();
            let b = p.as_local().unwrap();
            assert_eq!((b.x, b.y, b.z), (a.x + 10.0, a.y - 5.0, a.z));
            assert_eq!(p.attributes, before.points[id].attributes);
        }
        assert_eq!(m.linestrings, before.linestrings);
        assert_eq!(m.lanelets, before.lanelets);
    }

    #[test]
    fn georeference_round_trip() {
        let proj = UtmProjector::new(GeoPoint::new(48.26, 11.66).unwrap()).unwrap();
        let mut m = parse_lanelet2(SMALL.as_bytes()).unwrap();
        let original = m.clone();
        m.georeference(&proj).unwrap();
        assert!(m.points.values().all(|p| matches!(p.position, Position::Geo(_)) && p.xml.is_empty()));
        let mut back = parse_lanelet2(&write_lanelet2(&m).unwrap()).unwrap();
        back.localize(&proj).unwrap();
        for (id, p) in &back.points {
            let a = original.points[id].as_local().unwrap();
            let b = p.as_local().unwrap();
            assert!(a.distance(b) < 1e-6);
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn removing_a_lanelet_drops_orphans_only() {
        let mut m = parse_lanelet2(SMALL.as_bytes()).unwrap();
        // a second lanelet sharing way 11
        m.points.insert(5, Point::local(LocalPoint::new(0.0, -3.5)));
        m.points.insert(6, Point::local(LocalPoint::new(10.0, -3.5)));
        m.linestrings.insert(12, LineString::new(vec![5, 6]));
        m.lanelets.insert(101, Lanelet::new(11, 12));
        m.regulatory_elements.insert(
            200,
            RegulatoryElement {
                members: vec![Member { kind: MemberKind::Relation, id: 101, role: "refers".into() }],
                attributes: Attributes::new(),
                xml: XmlAttrs::new(),
            },
        );
        m.remove_lanelet(101).unwrap();
        assert!(m.linestrings.contains_key(&11));
        assert!(!m.linestrings.contains_key(&12));
        assert!(!m.points.contains_key(&5) && !m.points.contains_key(&6));
        assert!(m.regulatory_elements[&200].members.is_empty());
        m.validate().unwrap();
    }
}
