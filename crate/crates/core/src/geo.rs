//! Spherical geometry on a mean-radius Earth.
//!
//! Coordinates stay in decimal degrees at the API; trigonometry happens in
//! radians internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, rejecting non-finite or out-of-range coordinates.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon)
        {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    /// Builds a point by clamping latitude and wrapping longitude into range.
    pub fn wrapped(lat: f64, lon: f64) -> Self {
        Self { lat: lat.clamp(-90.0, 90.0), lon: wrap_lon(lon) }
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.lat, self.lon).is_ok()
    }
}

/// Wraps a longitude into `[-180, 180]`.
pub fn wrap_lon(lon: f64) -> f64 {
    if (-180.0..=180.0).contains(&lon) {
        return lon;
    }
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped == -180.0 && lon > 0.0 {
        180.0
    } else {
        wrapped
    }
}

/// Sphere used for every distance in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel {
    pub radius_m: f64,
}

impl EarthModel {
    /// IUGG mean Earth radius.
    pub const MEAN: EarthModel = EarthModel { radius_m: 6_371_008.8 };

    pub fn haversine(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
        let half_dlat = (phi2 - phi1) / 2.0;
        let half_dlon = (b.lon - a.lon).to_radians() / 2.0;
        let h = half_dlat.sin().powi(2) + phi1.cos() * phi2.cos() * half_dlon.sin().powi(2);
        // Rounding can push h a hair past 1 for antipodal points.
        2.0 * self.radius_m * h.sqrt().min(1.0).asin()
    }
}

impl Default for EarthModel {
    fn default() -> Self {
        Self::MEAN
    }
}

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in metres.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    EarthModel::MEAN.haversine(a, b)
}

/// Speed in km/h needed to cover the great-circle distance from `a` to `b`
/// in `dt_s` seconds.
pub fn implied_speed(a: GeoPoint, b: GeoPoint, dt_s: f64) -> Result<f64> {
    if !(dt_s > 0.0) {
        return Err(Error::InvalidInterval(dt_s));
    }
    Ok(haversine(a, b) / dt_s * 3.6)
}

/// Planar mean of the coordinates.
///
/// When the longitudes straddle the antimeridian they are first shifted into
/// a contiguous window so the mean does not land on the far side of the globe.
pub fn centroid(points: &[GeoPoint]) -> Result<GeoPoint> {
    if points.is_empty() {
        return Err(Error::EmptyInput("centroid of no points"));
    }
    let n = points.len() as f64;
    let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;

    let (min_lon, max_lon) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.lon), hi.max(p.lon)));
    let lon = if max_lon - min_lon > 180.0 {
        let shifted = points.iter().map(|p| if p.lon < 0.0 { p.lon + 360.0 } else { p.lon }).sum::<f64>() / n;
        wrap_lon(shifted)
    } else {
        points.iter().map(|p| p.lon).sum::<f64>() / n
    };
    Ok(GeoPoint { lat, lon })
}

/// Initial bearing from `a` to `b` in degrees, `[0, 360)`.
pub fn bearing(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlon.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Absolute difference between two bearings, folded into `[0, 180]`.
pub fn heading_change(from_deg: f64, to_deg: f64) -> f64 {
    let d = (to_deg - from_deg).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Displaces `p` by `north_m` / `east_m` metres in the local tangent plane.
pub fn offset_m(p: GeoPoint, north_m: f64, east_m: f64) -> GeoPoint {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * p.lat.to_radians().cos())).to_degrees();
    GeoPoint::wrapped(p.lat + dlat, p.lon + dlon)
}

/// Point at fraction `f` along the great circle from `a` to `b`.
pub fn interpolate_great_circle(a: GeoPoint, b: GeoPoint, f: f64) -> GeoPoint {
    let delta = haversine(a, b) / EARTH_RADIUS_M;
    if delta < 1e-15 {
        return a;
    }
    let (phi1, lam1) = (a.lat.to_radians(), a.lon.to_radians());
    let (phi2, lam2) = (b.lat.to_radians(), b.lon.to_radians());
    let wa = ((1.0 - f) * delta).sin() / delta.sin();
    let wb = (f * delta).sin() / delta.sin();
    let x = wa * phi1.cos() * lam1.cos() + wb * phi2.cos() * lam2.cos();
    let y = wa * phi1.cos() * lam1.sin() + wb * phi2.cos() * lam2.sin();
    let z = wa * phi1.sin() + wb * phi2.sin();
    let lat = z.atan2((x * x + y * y).sqrt()).to_degrees();
    let lon = y.atan2(x).to_degrees();
    GeoPoint::wrapped(lat, lon)
}
