//! Raw AIS reports to cleaned, one-minute trajectories.
//!
//! Per vessel (MMSI) the pipeline runs, in order: de-duplication, removal of
//! zero-SOG reports, a coarse DBSCAN noise pass, a fine DBSCAN clustering
//! pass, removal of stationary clusters, splitting on long silences, point
//! hashing, discarding of trajectories with impossible jumps, merging of
//! clusters that continue each other, consolidated hashing, a minimum-length
//! filter and resampling onto a 60 s grid.

pub mod dbscan;
pub mod ingest;
pub mod stages;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{implied_speed, GeoPoint};
use dbscan::{dbscan, noise_mask, Metric};
use stages::TimedPoint;

pub use ingest::{ingest, Format, Ingested};

/// One raw position report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisRecord {
    pub mmsi: u32,
    /// UTC seconds.
    pub timestamp: i64,
    pub position: GeoPoint,
    /// Speed over ground in knots.
    pub sog: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleaningConfig {
    pub eps_global: f64,
    pub eps_local: f64,
    pub min_pts: usize,
    pub metric: Metric,
    pub stationary_radius_m: f64,
    pub gap_split_s: i64,
    pub teleport_kmh: f64,
    pub merge_tolerance: f64,
    pub merge_window: usize,
    pub min_points: usize,
    pub resample_s: i64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            eps_global: 10.0,
            eps_local: 0.1,
            min_pts: 4,
            metric: Metric::Degrees,
            stationary_radius_m: 15.0,
            gap_split_s: 5 * 3600,
            teleport_kmh: 100.0,
            merge_tolerance: 0.05,
            merge_window: 10,
            min_points: 10,
            resample_s: 60,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.eps_global > 0.0
            && self.eps_local > 0.0
            && self.min_pts > 0
            && self.stationary_radius_m > 0.0
            && self.gap_split_s > 0
            && self.teleport_kmh > 0.0
            && self.merge_window > 0
            && self.min_points > 0
            && self.resample_s > 0;
        if !positive {
            return Err(Error::Config(format!("cleaning parameters must be positive: {self:?}")));
        }
        if !(self.merge_tolerance > 0.0 && self.merge_tolerance < 1.0) {
            return Err(Error::Config(format!("merge tolerance {} outside (0, 1)", self.merge_tolerance)));
        }
        Ok(())
    }
}

/// A cleaned trajectory with positions exactly `resample_s` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanTrajectory {
    pub id: String,
    pub mmsi: u32,
    /// UTC seconds of the first point.
    pub start: i64,
    pub points: Vec<GeoPoint>,
    /// First and last raw report times that fed the trajectory.
    pub source_span: (i64, i64),
}

impl CleanTrajectory {
    pub fn end(&self, step_s: i64) -> i64 {
        self.start + step_s * (self.points.len() as i64 - 1)
    }

    /// Re-expresses the trajectory as raw reports, one per point.
    pub fn to_records(&self, step_s: i64) -> Vec<AisRecord> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let neighbour = if i + 1 < self.points.len() { self.points[i + 1] } else { self.points[i.saturating_sub(1)] };
                let knots = implied_speed(p, neighbour, step_s as f64).unwrap_or(0.0) / 1.852;
                AisRecord { mmsi: self.mmsi, timestamp: self.start + step_s * i as i64, position: p, sog: knots.max(0.1) }
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryLine {
    id: String,
    mmsi: u32,
    start: String,
    points: Vec<[f64; 2]>,
}

pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[CleanTrajectory]) -> Result<()> {
    for t in trajectories {
        let line = TrajectoryLine {
            id: t.id.clone(),
            mmsi: t.mmsi,
            start: ingest::format_timestamp(t.start),
            points: t.points.iter().map(|p| [p.lat, p.lon]).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads trajectories written by [`write_trajectories`]; point spacing is
/// taken to be `step_s`.
pub fn read_trajectories<R: BufRead>(r: R, step_s: i64) -> Result<Vec<CleanTrajectory>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TrajectoryLine =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("trajectory line {}: {e}", i + 1)))?;
        let start = ingest::parse_timestamp(&row.start)
            .ok_or_else(|| Error::Parse(format!("trajectory line {}: bad start {:?}", i + 1, row.start)))?;
        let points = row.points.iter().map(|&[lat, lon]| GeoPoint::new(lat, lon)).collect::<Result<Vec<_>>>()?;
        if points.is_empty() {
            return Err(Error::Parse(format!("trajectory line {}: no points", i + 1)));
        }
        let end = start + step_s * (points.len() as i64 - 1);
        out.push(CleanTrajectory { id: row.id, mmsi: row.mmsi, start, points, source_span: (start, end) });
    }
    Ok(out)
}

/// Runs the full cleaning procedure. Vessels are processed independently and
/// in parallel; the output is sorted by trajectory id.
pub fn clean(records: &[AisRecord], cfg: &CleaningConfig) -> Result<Vec<CleanTrajectory>> {
    cfg.validate()?;
    let mut by_vessel: BTreeMap<u32, Vec<AisRecord>> = BTreeMap::new();
    for r in records {
        by_vessel.entry(r.mmsi).or_default().push(*r);
    }
    let mut out: Vec<CleanTrajectory> =
        by_vessel.into_par_iter().flat_map_iter(|(mmsi, recs)| clean_vessel(mmsi, recs, cfg)).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

struct Segment {
    hash: String,
    points: Vec<TimedPoint>,
}

fn dedupe(mut recs: Vec<AisRecord>) -> Vec<AisRecord> {
    recs.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then(a.position.lat.total_cmp(&b.position.lat))
            .then(a.position.lon.total_cmp(&b.position.lon))
            .then(a.sog.total_cmp(&b.sog))
    });
    let mut seen = HashSet::new();
    recs.retain(|r| seen.insert((r.timestamp, r.position.lat.to_bits(), r.position.lon.to_bits())));
    recs
}

fn clean_vessel(mmsi: u32, recs: Vec<AisRecord>, cfg: &CleaningConfig) -> Vec<CleanTrajectory> {
    let mut recs = dedupe(recs);
    recs.retain(|r| r.sog != 0.0);

    let coords: Vec<(f64, f64)> = recs.iter().map(|r| (r.position.lat, r.position.lon)).collect();
    let noise = noise_mask(&coords, cfg.eps_global, cfg.min_pts, cfg.metric);
    let points: Vec<TimedPoint> =
        recs.iter().zip(&noise).filter(|(_, &n)| !n).map(|(r, _)| TimedPoint { t: r.timestamp, p: r.position }).collect();

    let coords: Vec<(f64, f64)> = points.iter().map(|tp| (tp.p.lat, tp.p.lon)).collect();
    let labels = dbscan(&coords, cfg.eps_local, cfg.min_pts, cfg.metric);
    let mut clusters: BTreeMap<usize, Vec<TimedPoint>> = BTreeMap::new();
    for (tp, label) in points.iter().zip(&labels) {
        if let Some(c) = label.cluster() {
            clusters.entry(c).or_default().push(*tp);
        }
    }

    let mut kept: Vec<Vec<TimedPoint>> = clusters
        .into_values()
        .filter(|c| {
            let geo: Vec<GeoPoint> = c.iter().map(|tp| tp.p).collect();
            stages::stationary_cluster_filter(&geo, cfg.stationary_radius_m).unwrap_or(false)
        })
        .collect();
    kept.sort_by_key(|c| c[0].t);

    let mut segments: Vec<Segment> = Vec::new();
    for (cluster_no, cluster) in kept.iter().enumerate() {
        for (group_no, group) in stages::split_on_time_gap(cluster, cfg.gap_split_s).into_iter().enumerate() {
            if stages::has_teleport(&group, cfg.teleport_kmh) {
                log::debug!("mmsi {mmsi}: dropping cluster {cluster_no} group {group_no} for an implied jump");
                continue;
            }
            segments.push(Segment { hash: stages::point_hash(mmsi, cluster_no, group_no), points: group });
        }
    }
    segments.sort_by_key(|s| (s.points[0].t, s.points[s.points.len() - 1].t));

    let mut merged: Vec<Segment> = Vec::new();
    for seg in segments {
        match merged.last_mut() {
            Some(prev) if stages::merge_consecutive_clusters(&prev.points, &seg.points, cfg.merge_tolerance, cfg.merge_window) => {
                prev.points.extend(seg.points);
            }
            _ => merged.push(seg),
        }
    }

    merged
        .into_iter()
        .enumerate()
        .filter_map(|(number, seg)| {
            if seg.points.len() < cfg.min_points {
                return None;
            }
            let id = stages::trajectory_hash(mmsi, number, &seg.hash);
            let resampled = stages::resample(&seg.points, cfg.resample_s).ok()?;
            if resampled.len() < cfg.min_points || stages::max_consecutive_speed(&resampled) > cfg.teleport_kmh {
                return None;
            }
            Some(CleanTrajectory {
                id,
                mmsi,
                start: resampled[0].t,
                points: resampled.iter().map(|tp| tp.p).collect(),
                source_span: (seg.points[0].t, seg.points[seg.points.len() - 1].t),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{haversine, offset_m};

    const T0: i64 = 1_690_848_000;

    fn straight(mmsi: u32, n: usize, dt: i64, kmh: f64, origin: GeoPoint) -> Vec<AisRecord> {
        (0..n)
            .map(|i| {
                let t = i as i64 * dt;
                AisRecord {
                    mmsi,
                    timestamp: T0 + t,
                    position: offset_m(origin, kmh / 3.6 * t as f64 * 0.6, kmh / 3.6 * t as f64 * 0.8),
                    sog: kmh / 1.852,
                }
            })
            .collect()
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(47.0, -4.0).unwrap()
    }

    fn check_invariants(t: &CleanTrajectory, cfg: &CleaningConfig) {
        assert!(t.points.len() >= cfg.min_points);
        for w in t.points.windows(2) {
            assert!(implied_speed(w[0], w[1], cfg.resample_s as f64).unwrap() <= cfg.teleport_kmh);
        }
    }

    #[test]
    fn clean_run_survives() {
        let cfg = CleaningConfig::default();
        let recs = straight(227_000_001, 241, 30, 20.0, origin());
        let out = clean(&recs, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 121);
        assert_eq!(out[0].start, T0);
        check_invariants(&out[0], &cfg);
    }

    #[test]
    fn teleport_discards_the_trajectory() {
        let cfg = CleaningConfig::default();
        let mut recs = straight(227_000_001, 241, 30, 20.0, origin());
        // 10 km off track for one report (two 30 s legs at ~1200 km/h); the
        // offset stays inside the fine clustering radius.
        recs[120].position = offset_m(recs[120].position, 5000.0, 0.0);
        assert!(clean(&recs, &cfg).unwrap().is_empty());
    }

    #[test]
    fn docked_vessel_is_dropped() {
        let cfg = CleaningConfig::default();
        let c = origin();
        let recs: Vec<_> = (0..180)
            .map(|i| AisRecord {
                mmsi: 227_000_009,
                timestamp: T0 + 60 * i,
                position: offset_m(c, 4.0 * (i as f64 * 0.37).sin(), 4.0 * (i as f64 * 0.91).cos()),
                sog: 0.2,
            })
            .collect();
        assert!(clean(&recs, &cfg).unwrap().is_empty());
    }

    #[test]
    fn sog_zero_and_duplicates_are_removed() {
        let cfg = CleaningConfig::default();
        let mut recs = straight(227_000_001, 60, 60, 20.0, origin());
        let dup = recs[10];
        recs.push(dup);
        recs[20].sog = 0.0;
        let out = clean(&recs, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 60);
        // the zero-SOG slot was re-filled by interpolation
        let expected = straight(227_000_001, 60, 60, 20.0, origin())[20].position;
        assert!(haversine(out[0].points[20], expected) < 1.0);
    }

    #[test]
    fn long_silence_splits() {
        let cfg = CleaningConfig::default();
        let mut recs = straight(227_000_001, 60, 60, 20.0, origin());
        for r in &mut recs[30..] {
            r.timestamp += 6 * 3600;
        }
        let out = clean(&recs, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|t| t.points.len() == 30));
    }

    #[test]
    fn short_runs_are_excluded() {
        let cfg = CleaningConfig::default();
        assert!(clean(&straight(227_000_001, 9, 60, 20.0, origin()), &cfg).unwrap().is_empty());
        assert_eq!(clean(&straight(227_000_001, 10, 60, 20.0, origin()), &cfg).unwrap().len(), 1);
    }

    #[test]
    fn separated_clusters_that_continue_each_other_merge() {
        let cfg = CleaningConfig::default();
        // 30 min of reports, 40 min silence (~13 km, beyond the fine radius),
        // then reports resume exactly where a 20 km/h vessel would be.
        let all = straight(227_000_001, 130, 60, 20.0, origin());
        let recs: Vec<_> = all[..30].iter().chain(&all[70..]).copied().collect();
        let out = clean(&recs, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 130);
    }

    #[test]
    fn shared_mmsi_yields_two_trajectories() {
        let cfg = CleaningConfig::default();
        let mut recs = straight(227_000_001, 90, 60, 20.0, origin());
        recs.extend(straight(227_000_001, 90, 60, 25.0, GeoPoint::new(48.0, -6.0).unwrap()));
        let out = clean(&recs, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_ne!(out[0].id, out[1].id);
    }

    #[test]
    fn vessel_order_does_not_matter() {
        let cfg = CleaningConfig::default();
        let mut recs = Vec::new();
        for k in 0..6u32 {
            recs.extend(straight(227_000_100 + k, 40 + k as usize, 60, 15.0 + f64::from(k), offset_m(origin(), 20_000.0 * f64::from(k), 0.0)));
        }
        let forward = clean(&recs, &cfg).unwrap();
        recs.reverse();
        assert_eq!(clean(&recs, &cfg).unwrap(), forward);
        assert_eq!(forward.len(), 6);
    }

    #[test]
    fn cleaning_is_idempotent() {
        let cfg = CleaningConfig::default();
        let mut recs = straight(227_000_001, 241, 30, 20.0, origin());
        recs.extend(straight(227_000_002, 100, 45, 12.0, offset_m(origin(), -30_000.0, 0.0)));
        let once = clean(&recs, &cfg).unwrap();
        let again_in: Vec<_> = once.iter().flat_map(|t| t.to_records(cfg.resample_s)).collect();
        let twice = clean(&again_in, &cfg).unwrap();
        assert_eq!(once.len(), twice.len());
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!((&a.id, a.mmsi, a.start, &a.points), (&b.id, b.mmsi, b.start, &b.points));
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let cfg = CleaningConfig::default();
        let out = clean(&straight(227_000_001, 30, 60, 20.0, origin()), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"id\":"));
        assert!(text.contains("\"start\":\"2023-08-01T00:00:00Z\""));
        let back = read_trajectories(&buf[..], 60).unwrap();
        assert_eq!(back[0].points, out[0].points);
        assert_eq!(back[0].id, out[0].id);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = CleaningConfig { merge_tolerance: 1.5, ..Default::default() };
        assert!(matches!(clean(&[], &cfg), Err(Error::Config(_))));
        let cfg = CleaningConfig { eps_local: 0.0, ..Default::default() };
        assert!(clean(&[], &cfg).is_err());
    }
}
