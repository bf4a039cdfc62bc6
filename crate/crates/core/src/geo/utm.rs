//! UTM on WGS84 using the 6th-order Krüger series (Karney 2011 form). Errors
//! stay in the nanometre range across a zone and well beyond it, which is
//! what keeps the fixed-zone-per-session choice safe for maps that spill over
//! a zone boundary.

use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint, LocalPoint};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

/// UTM zone number plus hemisphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtmZone {
    pub number: u8,
    pub north: bool,
}

impl UtmZone {
    /// Standard zone for a position, including the Norway and Svalbard
    /// exceptions.
    pub fn for_point(p: &GeoPoint) -> UtmZone {
        let lat = p.latitude;
        let lon = p.longitude;
        let mut number = (((lon + 180.0) / 6.0).floor() as i32 + 1).clamp(1, 60) as u8;
        if (56.0..64.0).contains(&lat) && (3.0..12.0).contains(&lon) {
            number = 32;
        }
        if (72.0..=84.0).contains(&lat) {
            number = match lon {
                l if (0.0..9.0).contains(&l) => 31,
                l if (9.0..21.0).contains(&l) => 33,
                l if (21.0..33.0).contains(&l) => 35,
                l if (33.0..42.0).contains(&l) => 37,
                _ => number,
            };
        }
        UtmZone { number, north: lat >= 0.0 }
    }

    pub fn central_meridian(&self) -> f64 {
        f64::from(self.number) * 6.0 - 183.0
    }
}

/// Series coefficients derived once from the ellipsoid.
#[derive(Clone, Debug)]
struct Series {
    e: f64,
    e2m: f64,
    rectifying_radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

impl Series {
    fn wgs84() -> Series {
        let f = WGS84_F;
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let e2 = f * (2.0 - f);
        let rectifying_radius = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        Series { e: e2.sqrt(), e2m: 1.0 - e2, rectifying_radius, alpha, beta }
    }

    /// tan(conformal latitude) from tan(geodetic latitude).
    fn taup(&self, tau: f64) -> f64 {
        let tau1 = tau.hypot(1.0);
        let sig = (self.e * (self.e * tau / tau1).atanh()).sinh();
        sig.hypot(1.0) * tau - sig * tau1
    }

    /// Inverse of [`Series::taup`] by Newton iteration.
    fn tau_from_taup(&self, taup: f64) -> f64 {
        let mut tau = taup / self.e2m;
        for _ in 0..8 {
            let tau_i = self.taup(tau);
            let dtau = (taup - tau_i) * (1.0 + self.e2m * tau * tau)
                / (self.e2m * tau.hypot(1.0) * tau_i.hypot(1.0));
            tau += dtau;
            if dtau.abs() <= 1e-15 * tau.abs().max(1.0) {
                break;
            }
        }
        tau
    }

    /// Geodetic (lat, lon relative to central meridian) in radians to
    /// unscaled-by-false-origin grid (x, y) in meters.
    fn forward(&self, phi: f64, lam: f64) -> (f64, f64) {
        let taup = self.taup(phi.tan());
        let xip = taup.atan2(lam.cos());
        let etap = (lam.sin() / taup.hypot(lam.cos())).asinh();
        let mut xi = xip;
        let mut eta = etap;
        for (j, a) in self.alpha.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xi += a * (k * xip).sin() * (k * etap).cosh();
            eta += a * (k * xip).cos() * (k * etap).sinh();
        }
        (K0 * self.rectifying_radius * eta, K0 * self.rectifying_radius * xi)
    }

    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let xi = y / (K0 * self.rectifying_radius);
        let eta = x / (K0 * self.rectifying_radius);
        let mut xip = xi;
        let mut etap = eta;
        for (j, b) in self.beta.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xip -= b * (k * xi).sin() * (k * eta).cosh();
            etap -= b * (k * xi).cos() * (k * eta).sinh();
        }
        let taup = xip.sin() / etap.sinh().hypot(xip.cos());
        let lam = etap.sinh().atan2(xip.cos());
        let phi = self.tau_from_taup(taup).atan();
        (phi, lam)
    }
}

/// UTM projection whose local frame is anchored so that `origin` maps to
/// (0, 0). The zone is fixed by the origin and used for every point, even
/// past a zone boundary.
#[derive(Clone, Debug)]
pub struct UtmProjector {
    origin: GeoPoint,
    zone: UtmZone,
    series: Series,
    origin_grid: (f64, f64),
}

impl UtmProjector {
    pub fn new(origin: GeoPoint) -> Result<Self, GeoError> {
        check_band(origin.latitude)?;
        let zone = UtmZone::for_point(&origin);
        let mut proj = UtmProjector { origin, zone, series: Series::wgs84(), origin_grid: (0.0, 0.0) };
        proj.origin_grid = proj.to_grid(&origin);
        Ok(proj)
    }

    pub fn origin(&self) -> &GeoPoint {
        &self.origin
    }

    pub fn zone(&self) -> UtmZone {
        self.zone
    }

    /// Absolute UTM easting/northing in the projector's zone.
    pub fn to_grid(&self, p: &GeoPoint) -> (f64, f64) {
        let phi = p.latitude.to_radians();
        let lam = (p.longitude - self.zone.central_meridian()).to_radians();
        let (x, y) = self.series.forward(phi, lam);
        let northing = if self.zone.north { y } else { y + FALSE_NORTHING_SOUTH };
        (x + FALSE_EASTING, northing)
    }

    pub fn from_grid(&self, easting: f64, northing: f64) -> (f64, f64) {
        let y = if self.zone.north { northing } else { northing - FALSE_NORTHING_SOUTH };
        let (phi, lam) = self.series.inverse(easting - FALSE_EASTING, y);
        let mut lon = lam.to_degrees() + self.zone.central_meridian();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        (phi.to_degrees(), lon)
    }

    /// Geodetic to local grid meters; elevation becomes `z`.
    pub fn project(&self, p: &GeoPoint) -> Result<LocalPoint, GeoError> {
        check_band(p.latitude)?;
        let (e, n) = self.to_grid(p);
        Ok(LocalPoint { x: e - self.origin_grid.0, y: n - self.origin_grid.1, z: p.elevation })
    }

    pub fn unproject(&self, p: &LocalPoint) -> Result<GeoPoint, GeoError> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(GeoError::NonFinite(p.x, p.y));
        }
        if p.x == 0.0 && p.y == 0.0 {
            return GeoPoint::with_elevation(self.origin.latitude, self.origin.longitude, p.z);
        }
        let (lat, lon) = self.from_grid(p.x + self.origin_grid.0, p.y + self.origin_grid.1);
        GeoPoint::with_elevation(lat, lon, p.z)
    }
}

fn check_band(lat: f64) -> Result<(), GeoError> {
    if (-80.0..=84.0).contains(&lat) {
        Ok(())
    } else {
        Err(GeoError::OutsideUtmBand(lat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn munich() -> UtmProjector {
        UtmProjector::new(GeoPoint::new(48.0, 11.6).unwrap()).unwrap()
    }

    #[test]
    fn zero_unprojects_to_the_origin_exactly() {
        let proj = UtmProjector::new(GeoPoint::new(48.137, 11.575).unwrap()).unwrap();
        let g = proj.unproject(&LocalPoint::new(0.0, 0.0)).unwrap();
        assert_eq!((g.latitude, g.longitude), (48.137, 11.575));
    }

    #[test]
    fn origin_projects_to_zero() {
        let proj = munich();
        let p = proj.project(proj.origin()).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let back = proj.unproject(&LocalPoint::new(0.0, 0.0)).unwrap();
        assert!((back.latitude - 48.0).abs() < 1e-12);
        assert!((back.longitude - 11.6).abs() < 1e-12);
    }

    // Expected values from PROJ 9.5 (EPSG:4326 -> EPSG:32632), differenced
    // against the projected origin; see tests/oracle/utm_oracle.py.
    #[test]
    fn one_arcsecond_north() {
        let proj = munich();
        let p = proj.project(&GeoPoint::new(48.0 + 1.0 / 3600.0, 11.6).unwrap()).unwrap();
        assert!((p.x - -1.041763).abs() < 1e-5, "{}", p.x);
        assert!((p.y - 30.870550).abs() < 1e-5, "{}", p.y);
    }

    #[test]
    fn unproject_one_km_east() {
        let g = munich().unproject(&LocalPoint::new(1000.0, 0.0)).unwrap();
        assert!((g.latitude - 47.999695913105).abs() < 1e-10);
        assert!((g.longitude - 11.613391704375).abs() < 1e-10);
    }

    #[test]
    fn out_of_band_is_a_domain_error() {
        let proj = munich();
        let polar = GeoPoint::new(85.0, 11.6).unwrap();
        assert_eq!(proj.project(&polar), Err(GeoError::OutsideUtmBand(85.0)));
        assert!(UtmProjector::new(GeoPoint::new(-81.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn zone_selection() {
        let z = |lat, lon| UtmZone::for_point(&GeoPoint::new(lat, lon).unwrap());
        assert_eq!(z(48.0, 11.6), UtmZone { number: 32, north: true });
        assert_eq!(z(60.0, 5.0).number, 32);
        assert_eq!(z(78.0, 15.0).number, 33);
        assert_eq!(z(-33.9, 151.2), UtmZone { number: 56, north: false });
        assert_eq!(z(10.0, 180.0).number, 60);
    }

    #[test]
    fn elevation_passes_through() {
        let proj = munich();
        let p = proj.project(&GeoPoint::with_elevation(48.01, 11.61, Some(512.5)).unwrap()).unwrap();
        assert_eq!(p.z, Some(512.5));
        assert_eq!(proj.unproject(&p).unwrap().elevation, Some(512.5));
    }
}
