//! Synthetic AIS traffic with labelled defects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{bearing, haversine, interpolate_great_circle, offset_m, GeoPoint};
use crate::pipeline::AisRecord;

/// 2023-08-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_690_848_000;
const KNOT_KMH: f64 = 1.852;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub waypoints: Vec<GeoPoint>,
    pub speed_kmh: f64,
    pub report_interval_s: i64,
    pub gps_noise_sigma_m: f64,
    pub seed: u64,
    /// UTC seconds of the first report.
    pub start: i64,
}

impl RouteSpec {
    pub fn new(waypoints: Vec<GeoPoint>, speed_kmh: f64, seed: u64) -> Self {
        Self { waypoints, speed_kmh, report_interval_s: 60, gps_noise_sigma_m: 0.0, seed, start: DEFAULT_START }
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config(format!("route needs 2 waypoints, got {}", self.waypoints.len())));
        }
        if self.waypoints.windows(2).any(|w| haversine(w[0], w[1]) < 1e-6) {
            return Err(Error::Config("route has coincident consecutive waypoints".into()));
        }
        if !(self.speed_kmh > 0.0 && self.report_interval_s > 0 && self.gps_noise_sigma_m >= 0.0) {
            return Err(Error::Config("route speed and interval must be positive, noise non-negative".into()));
        }
        Ok(())
    }

    pub fn length_m(&self) -> f64 {
        self.waypoints.windows(2).map(|w| haversine(w[0], w[1])).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.length_m() / (self.speed_kmh / 3.6)
    }
}

/// Point `s` metres along the piecewise great-circle path.
fn along(waypoints: &[GeoPoint], legs: &[f64], mut s: f64) -> GeoPoint {
    for (w, &len) in waypoints.windows(2).zip(legs) {
        if s <= len {
            return interpolate_great_circle(w[0], w[1], s / len);
        }
        s -= len;
    }
    waypoints[waypoints.len() - 1]
}

/// Constant-speed reports along the route, with isotropic Gaussian position noise.
pub fn gen_route(spec: &RouteSpec, mmsi: u32) -> Result<Vec<AisRecord>> {
    spec.validate()?;
    let legs: Vec<f64> = spec.waypoints.windows(2).map(|w| haversine(w[0], w[1])).collect();
    let speed_ms = spec.speed_kmh / 3.6;
    // Tolerate sub-metre shortfalls so a route of exactly k intervals gets k + 1 reports.
    let n = (spec.duration_s() / spec.report_interval_s as f64 + 1e-3).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.gps_noise_sigma_m).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..n)
        .map(|i| {
            let t = i as i64 * spec.report_interval_s;
            let mut p = along(&spec.waypoints, &legs, speed_ms * t as f64);
            if spec.gps_noise_sigma_m > 0.0 {
                p = offset_m(p, noise.sample(&mut rng), noise.sample(&mut rng));
            }
            AisRecord { mmsi, timestamp: spec.start + t, position: p, sog: spec.speed_kmh / KNOT_KMH }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defect {
    /// Moves one report `offset_m` metres north.
    Teleport { offset_m: f64, at_index: usize },
    /// A docked period at a berth away from the route, ending before it starts.
    StationaryCluster { duration_s: i64 },
    /// A second, unrelated route broadcast under the same MMSI.
    DuplicateMmsi { route: RouteSpec },
    SogZero { indices: Vec<usize> },
    /// Delays every report from `at_index` on by `seconds`.
    TimeGap { seconds: i64, at_index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub defects: Vec<Defect>,
}

/// Ground truth for one injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub mmsi: u32,
    #[serde(flatten)]
    pub defect: Defect,
    /// Where a stationary cluster was placed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub berth: Option<GeoPoint>,
}

/// Berth distance from the route start; beyond the fine clustering radius.
const BERTH_DISTANCE_M: f64 = 30_000.0;
const BERTH_JITTER_M: f64 = 3.0;
const BERTH_SOG_KNOTS: f64 = 0.1;

/// Applies `defects` to one vessel's route. Index-based defects refer to the
/// route as generated.
pub fn inject(records: Vec<AisRecord>, defects: &DefectSpec, seed: u64) -> Result<(Vec<AisRecord>, Vec<Injection>)> {
    let mut records = records;
    let Some(&first) = records.first() else {
        if defects.defects.is_empty() {
            return Ok((records, Vec::new()));
        }
        return Err(Error::Config("cannot inject defects into an empty route".into()));
    };
    let mmsi = first.mmsi;
    let n = records.len();
    let check = |i: usize| {
        if i < n {
            Ok(())
        } else {
            Err(Error::Config(format!("defect index {i} outside route of {n} reports")))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = Vec::new();
    let mut manifest = Vec::new();
    for d in &defects.defects {
        let mut berth = None;
        match d {
            Defect::Teleport { offset_m: m, at_index } => {
                check(*at_index)?;
                records[*at_index].position = offset_m(records[*at_index].position, *m, 0.0);
            }
            Defect::SogZero { indices } => {
                for &i in indices {
                    check(i)?;
                    records[i].sog = 0.0;
                }
            }
            Defect::TimeGap { seconds, at_index } => {
                check(*at_index)?;
                for r in &mut records[*at_index..] {
                    r.timestamp += seconds;
                }
            }
            Defect::StationaryCluster { duration_s } => {
                let heading = if n > 1 { bearing(records[0].position, records[n - 1].position) } else { 0.0 };
                let back = (heading + 180.0).to_radians();
                let centre =
                    offset_m(first.position, BERTH_DISTANCE_M * back.cos(), BERTH_DISTANCE_M * back.sin());
                let interval = if n > 1 { records[1].timestamp - records[0].timestamp } else { 60 }.max(1);
                let jitter = Normal::new(0.0, BERTH_JITTER_M).map_err(|e| Error::Config(e.to_string()))?;
                let reports = (*duration_s / interval).max(1);
                let end = first.timestamp - 3600;
                for k in 0..reports {
                    extra.push(AisRecord {
                        mmsi,
                        timestamp: end - (reports - k) * interval,
                        position: offset_m(centre, jitter.sample(&mut rng), jitter.sample(&mut rng)),
                        sog: BERTH_SOG_KNOTS,
                    });
                }
                berth = Some(centre);
            }
            Defect::DuplicateMmsi { route } => extra.extend(gen_route(route, mmsi)?),
        }
        manifest.push(Injection { mmsi, defect: d.clone(), berth });
    }
    records.extend(extra);
    Ok((records, manifest))
}

/// What cleaning must do with one vessel of a labelled corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Control,
    Teleport,
    Stationary,
    TimeGap,
    SogZero,
    DuplicateMmsi,
    Short,
}

impl Class {
    pub const ALL: [Class; 7] =
        [Class::Control, Class::Teleport, Class::Stationary, Class::TimeGap, Class::SogZero, Class::DuplicateMmsi, Class::Short];

    /// Trajectories cleaning should produce for this vessel.
    pub fn expected_trajectories(self) -> usize {
        match self {
            Class::Teleport | Class::Short => 0,
            Class::TimeGap | Class::DuplicateMmsi => 2,
            Class::Control | Class::Stationary | Class::SogZero => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTruth {
    pub mmsi: u32,
    pub class: Class,
    pub route: RouteSpec,
    pub injections: Vec<Injection>,
    pub expected_trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub vessels: Vec<VesselTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<AisRecord>,
    pub manifest: Manifest,
}

const MMSI_BASE: u32 = 227_000_000;

fn straight_route(rng: &mut ChaCha8Rng, slot: usize, minutes: f64, seed: u64) -> RouteSpec {
    // Vessels sit on a lattice 0.5 degrees apart so fine clusters never touch.
    let origin = GeoPoint::new(40.0 + 0.5 * (slot / 40) as f64, -30.0 + 0.5 * (slot % 40) as f64).expect("lattice");
    let speed = rng.random_range(12.0..30.0);
    let heading: f64 = rng.random_range(0.0f64..360.0).to_radians();
    let len = speed / 3.6 * minutes * 60.0;
    let end = offset_m(origin, len * heading.cos(), len * heading.sin());
    let mut route = RouteSpec::new(vec![origin, end], speed, seed);
    route.gps_noise_sigma_m = 5.0;
    route.start = DEFAULT_START + rng.random_range(0..86_400);
    route
}

/// `n` vessels cycling through every [`Class`], each with one labelled defect.
pub fn labelled_corpus(n: usize, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut vessels = Vec::with_capacity(n);
    for v in 0..n {
        let class = Class::ALL[v % Class::ALL.len()];
        let mmsi = MMSI_BASE + v as u32;
        let vessel_seed = seed.wrapping_mul(1_000_003).wrapping_add(v as u64);
        let minutes = if class == Class::Short { 8.0 } else { rng.random_range(40.0..120.0) };
        let route = straight_route(&mut rng, v, minutes, vessel_seed);
        let base = gen_route(&route, mmsi)?;
        let len = base.len();
        let mid = len / 2;
        let defects = match class {
            Class::Control | Class::Short => vec![],
            Class::Teleport => vec![Defect::Teleport { offset_m: rng.random_range(3_000.0..8_000.0), at_index: rng.random_range(2..len - 2) }],
            Class::Stationary => vec![Defect::StationaryCluster { duration_s: rng.random_range(2..6) * 3600 }],
            Class::TimeGap => vec![Defect::TimeGap { seconds: rng.random_range(6..12) * 3600, at_index: mid }],
            Class::SogZero => {
                let mut idx: Vec<usize> = (0..3).map(|_| rng.random_range(1..len - 1)).collect();
                idx.sort_unstable();
                idx.dedup();
                vec![Defect::SogZero { indices: idx }]
            }
            Class::DuplicateMmsi => {
                // A parallel lane 30 km to the side, so the two tracks never share a cluster.
                let mut twin = route.clone();
                let h = bearing(route.waypoints[0], route.waypoints[1]).to_radians();
                twin.waypoints.iter_mut().for_each(|p| *p = offset_m(*p, -30_000.0 * h.sin(), 30_000.0 * h.cos()));
                twin.speed_kmh = rng.random_range(12.0..30.0);
                twin.seed ^= 0x5eed;
                vec![Defect::DuplicateMmsi { route: twin }]
            }
        };
        let (recs, injections) = inject(base, &DefectSpec { defects }, vessel_seed)?;
        records.extend(recs);
        vessels.push(VesselTruth { mmsi, class, route, injections, expected_trajectories: class.expected_trajectories() });
    }
    Ok(Corpus { records, manifest: Manifest { seed, vessels } })
}

/// Centreline of a bending shipping lane: east, a 90 degree turn north, then
/// a 60 degree turn back east-north-east. Headings are integrated over 1 km
/// steps.
pub fn corridor_centreline() -> Vec<GeoPoint> {
    let heading_at = |km: f64| -> f64 {
        match km {
            k if k < 25.0 => 90.0,
            k if k < 55.0 => 90.0 - 90.0 * (k - 25.0) / 30.0,
            k if k < 75.0 => 0.0,
            k if k < 100.0 => 60.0 * (k - 75.0) / 25.0,
            _ => 60.0,
        }
    };
    let mut p = GeoPoint::new(44.0, -8.0).expect("fixed origin");
    let mut out = vec![p];
    for km in 0..130 {
        let h = heading_at(km as f64 + 0.5).to_radians();
        p = offset_m(p, 1000.0 * h.cos(), 1000.0 * h.sin());
        out.push(p);
    }
    out
}

/// Vessels following the corridor with a fixed lateral offset, joining at a
/// random distance along it.
pub fn corridor_corpus(n: usize, seed: u64) -> Result<Corpus> {
    let centre = corridor_centreline();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut vessels = Vec::with_capacity(n);
    for v in 0..n {
        let mmsi = MMSI_BASE + 500_000 + v as u32;
        let lateral = rng.random_range(-400.0..400.0);
        let join = rng.random_range(0..50);
        let waypoints: Vec<GeoPoint> = centre[join..]
            .windows(2)
            .map(|w| {
                let h = bearing(w[0], w[1]).to_radians();
                offset_m(w[0], -lateral * h.sin(), lateral * h.cos())
            })
            .collect();
        let mut route = RouteSpec::new(waypoints, rng.random_range(18.0..22.0), seed.wrapping_mul(7_919).wrapping_add(v as u64));
        route.gps_noise_sigma_m = 10.0;
        route.start = DEFAULT_START + v as i64 * 3_600;
        records.extend(gen_route(&route, mmsi)?);
        vessels.push(VesselTruth { mmsi, class: Class::Control, route, injections: Vec::new(), expected_trajectories: 1 });
    }
    Ok(Corpus { records, manifest: Manifest { seed, vessels } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::implied_speed;
    use crate::pipeline::{clean, CleaningConfig};
    use crate::predictor::{hallucination_filter, HallucinationConfig};

    fn two_point(km: f64) -> RouteSpec {
        let a = GeoPoint::new(43.0, 5.0).unwrap();
        RouteSpec::new(vec![a, offset_m(a, 0.0, km * 1000.0)], 20.0, 1)
    }

    #[test]
    fn twenty_km_at_twenty_kmh() {
        let recs = gen_route(&two_point(20.0), 1).unwrap();
        assert_eq!(recs.len(), 61);
        for w in recs.windows(2) {
            assert!((haversine(w[0].position, w[1].position) - 333.33).abs() < 0.5);
            assert_eq!(w[1].timestamp - w[0].timestamp, 60);
        }
        assert!((recs[0].sog - 20.0 / 1.852).abs() < 1e-12);
    }

    #[test]
    fn noiseless_route_passes_filter() {
        let pts: Vec<_> = gen_route(&two_point(20.0), 1).unwrap().iter().map(|r| r.position).collect();
        assert!(hallucination_filter(&pts, &HallucinationConfig::default()).unwrap().passed());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let mut spec = two_point(5.0);
        spec.gps_noise_sigma_m = 20.0;
        assert_eq!(gen_route(&spec, 1).unwrap(), gen_route(&spec, 1).unwrap());
        let mut other = spec.clone();
        other.seed = 2;
        assert_ne!(gen_route(&spec, 1).unwrap(), gen_route(&other, 1).unwrap());
    }

    #[test]
    fn degenerate_routes() {
        let a = GeoPoint::new(43.0, 5.0).unwrap();
        assert!(matches!(gen_route(&RouteSpec::new(vec![a, a], 20.0, 0), 1), Err(Error::Config(_))));
        assert!(gen_route(&RouteSpec::new(vec![a], 20.0, 0), 1).is_err());
        let mut s = two_point(5.0);
        s.speed_kmh = 0.0;
        assert!(gen_route(&s, 1).is_err());
    }

    #[test]
    fn teleport_breaks_the_speed_limit() {
        let recs = gen_route(&two_point(20.0), 1).unwrap();
        let spec = DefectSpec { defects: vec![Defect::Teleport { offset_m: 10_000.0, at_index: 30 }] };
        let (out, manifest) = inject(recs, &spec, 0).unwrap();
        assert!(implied_speed(out[29].position, out[30].position, 60.0).unwrap() > 100.0);
        assert_eq!(manifest.len(), 1);
    }

    #[test]
    fn six_hour_gap_splits() {
        let recs = gen_route(&two_point(20.0), 1).unwrap();
        let spec = DefectSpec { defects: vec![Defect::TimeGap { seconds: 6 * 3600, at_index: 30 }] };
        let (out, _) = inject(recs, &spec, 0).unwrap();
        let cleaned = clean(&out, &CleaningConfig::default()).unwrap();
        assert_eq!(cleaned.len(), 2);
        let mut starts: Vec<_> = cleaned.iter().map(|t| t.start).collect();
        starts.sort_unstable();
        assert_eq!(starts[1], out[30].timestamp);
    }

    #[test]
    fn empty_spec_is_identity() {
        let recs = gen_route(&two_point(5.0), 1).unwrap();
        let (out, manifest) = inject(recs.clone(), &DefectSpec::default(), 0).unwrap();
        assert_eq!(out, recs);
        assert!(manifest.is_empty());
    }

    #[test]
    fn bad_index_is_rejected() {
        let recs = gen_route(&two_point(5.0), 1).unwrap();
        let n = recs.len();
        let spec = DefectSpec { defects: vec![Defect::SogZero { indices: vec![n] }] };
        assert!(matches!(inject(recs, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn stationary_berth_is_tight_and_separate() {
        let recs = gen_route(&two_point(20.0), 1).unwrap();
        let spec = DefectSpec { defects: vec![Defect::StationaryCluster { duration_s: 3 * 3600 }] };
        let (out, manifest) = inject(recs.clone(), &spec, 3).unwrap();
        let berth = manifest[0].berth.unwrap();
        let docked: Vec<_> = out[recs.len()..].iter().map(|r| r.position).collect();
        assert_eq!(docked.len(), 180);
        assert!(crate::pipeline::stages::mean_centroid_distance(&docked).unwrap() < 15.0);
        assert!(haversine(berth, recs[0].position) > 25_000.0);
        let cleaned = clean(&out, &CleaningConfig::default()).unwrap();
        assert_eq!(cleaned.len(), 1);
        assert!(cleaned[0].points.iter().all(|&p| haversine(p, berth) > 20_000.0));
    }

    #[test]
    fn manifest_serialises_with_kind_tags() {
        let c = labelled_corpus(14, 9).unwrap();
        let json = serde_json::to_string(&c.manifest).unwrap();
        assert!(json.contains("\"kind\":\"teleport\""));
        assert!(json.contains("\"class\":\"duplicate_mmsi\""));
        let back: Manifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c.manifest);
    }

    #[test]
    fn corridor_bends() {
        let c = corridor_centreline();
        let first = bearing(c[0], c[1]);
        let middle = bearing(c[60], c[61]);
        assert!((first - 90.0).abs() < 1.0 && (middle.min(360.0 - middle)) < 1.0);
        let corpus = corridor_corpus(3, 1).unwrap();
        assert_eq!(corpus.manifest.vessels.len(), 3);
        assert!(corpus.records.len() > 3 * 120);
    }
}
