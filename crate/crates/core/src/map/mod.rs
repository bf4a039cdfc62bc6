//! In-memory models of the three map artifacts and their file formats:
//! Lanelet2 vector maps (`.osm` XML), OpenStreetMap road extracts and ASCII
//! point clouds.

mod lanelet;
mod osm;
mod pcd;
mod xml;

pub use lanelet::{
    parse_lanelet2, write_lanelet2, Area, Lanelet, LaneletMap, LineString, Member, MemberKind,
    Point, Position, RegulatoryElement,
};
pub use osm::{parse_osm_network, write_osm_network, OsmNode, OsmRoadNetwork, OsmWay};
pub use pcd::{load_pcd, save_pcd, PointCloudMap};

use std::collections::BTreeMap;

use thiserror::Error;

/// Element identifier as found in the XML (`id` attribute). Negative ids are
/// legal; editors use them for unsaved elements.
pub type Id = i64;

/// Tag dictionary (`<tag k= v=/>`). Ordered so serialization is deterministic.
pub type Attributes = BTreeMap<String, String>;

/// XML attributes other than the ones the model interprets, kept verbatim
/// and in document order.
pub type XmlAttrs = Vec<(String, String)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("XML parse error at line {line}: {message}")]
    Parse { line: u32, message: String },
    #[error("dangling references: {}", .missing.join(", "))]
    Integrity { missing: Vec<String> },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: Id },
    #[error("invalid {kind} {id}: {message}")]
    Invalid { kind: &'static str, id: Id, message: String },
    #[error("point-cloud format: {0}")]
    Format(String),
    #[error("point {id} is not in the local frame")]
    NotLocal { id: Id },
    #[error("point {id} at ({x}, {y}) lies outside the transform coverage")]
    Coverage { id: Id, x: f64, y: f64 },
    #[error("cloud point #{index} at ({x}, {y}) lies outside the transform coverage")]
    CloudCoverage { index: usize, x: f64, y: f64 },
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
}

impl MapError {
    pub(crate) fn from_xml(err: roxmltree::Error) -> MapError {
        MapError::Parse { line: err.pos().row, message: err.to_string() }
    }
}
