//! WGS-84 geodetic <-> UTM conversion (Krüger series to sixth order in the
//! third flattening) and the UTM <-> map-frame transform used by GPS-based
//! navigation.

use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    /// Degrees, positive north.
    pub lat: f64,
    /// Degrees, positive east.
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hemisphere {
    North,
    South,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtmCoord {
    pub easting: f64,
    pub northing: f64,
    pub zone: u8,
    pub hemisphere: Hemisphere,
}

/// Series coefficients derived from the ellipsoid's third flattening.
struct TmSeries {
    /// Rectifying radius.
    a_rect: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
    e: f64,
}

impl TmSeries {
    fn wgs84() -> Self {
        let f = WGS84_F;
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let a_rect = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
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
        Self {
            a_rect,
            alpha,
            beta,
            e: (f * (2.0 - f)).sqrt(),
        }
    }
}

pub fn zone_for_lon(lon: f64) -> u8 {
    let z = ((lon + 180.0) / 6.0).floor() as i64 + 1;
    z.clamp(1, 60) as u8
}

pub fn central_meridian(zone: u8) -> f64 {
    zone as f64 * 6.0 - 183.0
}

/// Projects into the standard zone for the point's longitude.
pub fn gps_to_utm(p: GeoPoint) -> Result<UtmCoord> {
    gps_to_utm_in_zone(p, zone_for_lon(p.lon))
}

/// Projects into an explicit zone.
pub fn gps_to_utm_in_zone(p: GeoPoint, zone: u8) -> Result<UtmCoord> {
    if !(p.lat.abs() <= 84.0) {
        return Err(Error::UnsupportedRegion(p.lat));
    }
    if !(1..=60).contains(&zone) {
        return Err(Error::UtmRange(format!("zone {zone}")));
    }
    let s = TmSeries::wgs84();
    let phi = p.lat.to_radians();
    let lam = (p.lon - central_meridian(zone)).to_radians();
    let sin_phi = phi.sin();
    // conformal latitude via its tangent
    let t = (sin_phi.atanh() - s.e * (s.e * sin_phi).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (1.0 + t * t).sqrt()).atanh();
    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let hemisphere = if p.lat >= 0.0 {
        Hemisphere::North
    } else {
        Hemisphere::South
    };
    let mut northing = K0 * s.a_rect * xi;
    if hemisphere == Hemisphere::South {
        northing += FALSE_NORTHING_SOUTH;
    }
    Ok(UtmCoord {
        easting: FALSE_EASTING + K0 * s.a_rect * eta,
        northing,
        zone,
        hemisphere,
    })
}

pub fn utm_to_gps(u: UtmCoord) -> Result<GeoPoint> {
    if !(1..=60).contains(&u.zone) {
        return Err(Error::UtmRange(format!("zone {}", u.zone)));
    }
    if !(u.easting > 100_000.0 && u.easting < 900_000.0) {
        return Err(Error::UtmRange(format!("easting {} outside the zone", u.easting)));
    }
    let s = TmSeries::wgs84();
    let north = match u.hemisphere {
        Hemisphere::North => u.northing,
        Hemisphere::South => u.northing - FALSE_NORTHING_SOUTH,
    };
    let xi = north / (K0 * s.a_rect);
    let eta = (u.easting - FALSE_EASTING) / (K0 * s.a_rect);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let tau_p = xi_p.sin() / (eta_p.sinh().powi(2) + xi_p.cos().powi(2)).sqrt();
    let lam = eta_p.sinh().atan2(xi_p.cos());
    let tau = conformal_to_geodetic_tan(tau_p, s.e);
    Ok(GeoPoint {
        lat: tau.atan().to_degrees(),
        lon: central_meridian(u.zone) + lam.to_degrees(),
    })
}

/// Newton iteration for tan(φ) from the tangent of the conformal latitude.
fn conformal_to_geodetic_tan(tau_p: f64, e: f64) -> f64 {
    let e2m = 1.0 - e * e;
    let mut tau = tau_p;
    for _ in 0..6 {
        let sigma = (e * (e * tau / (1.0 + tau * tau).sqrt()).atanh()).sinh();
        let tp = tau * (1.0 + sigma * sigma).sqrt() - sigma * (1.0 + tau * tau).sqrt();
        let dtau = (tau_p - tp) / (1.0 + tp * tp).sqrt() * (1.0 + e2m * tau * tau)
            / (e2m * (1.0 + tau * tau).sqrt());
        tau += dtau;
        if dtau.abs() < 1e-15 * tau.abs().max(1.0) {
            break;
        }
    }
    tau
}

/// Ties the local map frame to a geodetic location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoAnchor {
    pub anchor_geo: GeoPoint,
    pub anchor_utm: UtmCoord,
    /// Rotation from UTM east to map +x, radians.
    pub map_heading: f64,
}

impl GeoAnchor {
    pub fn new(anchor_geo: GeoPoint, map_heading: f64) -> Result<Self> {
        Ok(Self {
            anchor_geo,
            anchor_utm: gps_to_utm(anchor_geo)?,
            map_heading,
        })
    }
}

pub fn utm_to_map(u: UtmCoord, a: &GeoAnchor) -> Result<(f64, f64)> {
    if u.zone != a.anchor_utm.zone || u.hemisphere != a.anchor_utm.hemisphere {
        return Err(Error::ZoneMismatch {
            point: u.zone,
            anchor: a.anchor_utm.zone,
        });
    }
    let de = u.easting - a.anchor_utm.easting;
    let dn = u.northing - a.anchor_utm.northing;
    let (s, c) = a.map_heading.sin_cos();
    Ok((c * de + s * dn, -s * de + c * dn))
}

pub fn map_to_utm(x: f64, y: f64, a: &GeoAnchor) -> UtmCoord {
    let (s, c) = a.map_heading.sin_cos();
    UtmCoord {
        easting: a.anchor_utm.easting + c * x - s * y,
        northing: a.anchor_utm.northing + s * x + c * y,
        zone: a.anchor_utm.zone,
        hemisphere: a.anchor_utm.hemisphere,
    }
}

pub fn map_to_gps(x: f64, y: f64, a: &GeoAnchor) -> Result<GeoPoint> {
    utm_to_gps(map_to_utm(x, y, a))
}

/// Full GPS -> UTM -> map chain.
pub fn gps_to_map(p: GeoPoint, a: &GeoAnchor) -> Result<(f64, f64)> {
    utm_to_map(gps_to_utm(p)?, a)
}

/// Euclidean norm over (Δlat, Δlon) in degrees.
pub fn degree_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lat - b.lat).hypot(a.lon - b.lon)
}
