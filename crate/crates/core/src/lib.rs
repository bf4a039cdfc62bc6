//! Georeferencing and semantic conflation for Lanelet2 HD maps.
//!
//! The pipeline aligns a local-frame vector map and point cloud to an
//! RTK-GNSS trajectory (UTM projection, rigid fit, rubber-sheet warp),
//! transfers OpenStreetMap road attributes onto the lanelets through
//! buffer-growing polyline matching, and finally expresses the result in
//! WGS84 again.

pub mod geo;
pub mod par;
pub mod map;
pub mod align;
pub mod conflate;
pub mod pipeline;
pub mod synthetic;
