//! Individual cleaning stages. Each works on one vessel's time-ordered points.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{centroid, haversine, implied_speed, GeoPoint};

/// A position with its report time in UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub t: i64,
    pub p: GeoPoint,
}

/// Splits wherever consecutive reports are more than `gap_split_s` apart.
pub fn split_on_time_gap(points: &[TimedPoint], gap_split_s: i64) -> Vec<Vec<TimedPoint>> {
    let mut groups: Vec<Vec<TimedPoint>> = Vec::new();
    for (i, &pt) in points.iter().enumerate() {
        if i == 0 || pt.t - points[i - 1].t > gap_split_s {
            groups.push(Vec::new());
        }
        if let Some(g) = groups.last_mut() {
            g.push(pt);
        }
    }
    groups
}

/// Mean distance from each point to the cluster centroid, in metres.
pub fn mean_centroid_distance(cluster: &[GeoPoint]) -> Result<f64> {
    let c = centroid(cluster)?;
    Ok(cluster.iter().map(|&p| haversine(p, c)).sum::<f64>() / cluster.len() as f64)
}

/// `true` keeps the cluster; clusters tighter than `radius_m` on average are
/// stationary GNSS jitter and get dropped.
pub fn stationary_cluster_filter(cluster: &[GeoPoint], radius_m: f64) -> Result<bool> {
    Ok(mean_centroid_distance(cluster)? >= radius_m)
}

/// Largest implied speed between consecutive points, km/h.
pub fn max_consecutive_speed(points: &[TimedPoint]) -> f64 {
    points
        .windows(2)
        .filter_map(|w| implied_speed(w[0].p, w[1].p, (w[1].t - w[0].t) as f64).ok())
        .fold(0.0, f64::max)
}

/// `true` if any consecutive pair implies more than `limit_kmh`.
pub fn has_teleport(points: &[TimedPoint], limit_kmh: f64) -> bool {
    points.windows(2).any(|w| {
        let dt = (w[1].t - w[0].t) as f64;
        // Two positions at the same instant are an infinite-speed jump unless identical.
        implied_speed(w[0].p, w[1].p, dt).map_or(w[0].p != w[1].p, |v| v > limit_kmh)
    })
}

/// Mean consecutive implied speed over the last `window` points.
pub fn tail_speed(points: &[TimedPoint], window: usize) -> Option<f64> {
    let tail = &points[points.len().saturating_sub(window)..];
    if tail.len() < 2 {
        return None;
    }
    let speeds: Vec<f64> =
        tail.windows(2).filter_map(|w| implied_speed(w[0].p, w[1].p, (w[1].t - w[0].t) as f64).ok()).collect();
    if speeds.is_empty() {
        return None;
    }
    Some(speeds.iter().sum::<f64>() / speeds.len() as f64)
}

/// Whether cluster `b` plausibly continues cluster `a`: the jump from the
/// end of `a` to the start of `b` must imply a speed within `tolerance` of
/// the mean speed over `a`'s last `window` points.
pub fn merge_consecutive_clusters(a: &[TimedPoint], b: &[TimedPoint], tolerance: f64, window: usize) -> bool {
    let (Some(last), Some(first)) = (a.last(), b.first()) else {
        return false;
    };
    if first.t <= last.t {
        return false;
    }
    let Some(reference) = tail_speed(a, window) else {
        return false;
    };
    let Ok(transition) = implied_speed(last.p, first.p, (first.t - last.t) as f64) else {
        return false;
    };
    transition >= reference * (1.0 - tolerance) && transition <= reference * (1.0 + tolerance)
}

fn lerp_lon(a: f64, b: f64, f: f64) -> f64 {
    let mut d = b - a;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    crate::geo::wrap_lon(a + d * f)
}

/// Linear interpolation onto `t0, t0 + step, ...` within the observed span.
pub fn resample(points: &[TimedPoint], step_s: i64) -> Result<Vec<TimedPoint>> {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return Err(Error::TooShort("no points to resample".into()));
    };
    if step_s <= 0 {
        return Err(Error::Config(format!("resample step must be positive, got {step_s}")));
    }
    if last.t - first.t < step_s {
        return Err(Error::TooShort(format!("span {} s is below one {step_s} s step", last.t - first.t)));
    }
    let mut out = Vec::with_capacity(((last.t - first.t) / step_s + 1) as usize);
    let mut seg = 0;
    let mut t = first.t;
    while t <= last.t {
        while points[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (points[seg], points[seg + 1]);
        let p = if t == a.t {
            a.p
        } else if t == b.t {
            b.p
        } else {
            let f = (t - a.t) as f64 / (b.t - a.t) as f64;
            GeoPoint { lat: a.p.lat + (b.p.lat - a.p.lat) * f, lon: lerp_lon(a.p.lon, b.p.lon, f) }
        };
        out.push(TimedPoint { t, p });
        t += step_s;
    }
    Ok(out)
}

fn digest(parts: &[&str]) -> String {
    let hash = Sha256::digest(parts.join("|").as_bytes());
    hash[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash shared by every point of one cluster/time-gap group.
pub fn point_hash(mmsi: u32, cluster: usize, group: usize) -> String {
    digest(&[&mmsi.to_string(), &cluster.to_string(), &group.to_string()])
}

/// 128-bit digest of `mmsi|trajectory_number|cluster_hash`, as 32 hex chars.
pub fn trajectory_hash(mmsi: u32, trajectory_number: usize, cluster_hash: &str) -> String {
    digest(&[&mmsi.to_string(), &trajectory_number.to_string(), cluster_hash])
}
