//! DBSCAN over latitude/longitude pairs.
//!
//! Neighbourhoods are closed balls (`distance <= eps`) and include the point
//! itself. Cluster ids are handed out in the order their first core point
//! appears in the input, so labels are a pure function of the point order.

use std::collections::{HashMap, VecDeque};

use crate::geo::{haversine, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Noise,
    Cluster(usize),
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(c) => Some(c),
            Label::Noise => None,
        }
    }
}

/// Distance used to compare against `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Euclidean distance in decimal degrees.
    #[default]
    Degrees,
    /// Great-circle distance in kilometres.
    HaversineKm,
}

impl Metric {
    pub fn distance(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self {
            Metric::Degrees => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            Metric::HaversineKm => {
                haversine(GeoPoint { lat: a.0, lon: a.1 }, GeoPoint { lat: b.0, lon: b.1 }) / 1000.0
            }
        }
    }
}

/// Uniform grid bucketing points by `eps`-sized cells in degree space.
struct Grid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[(f64, f64)], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(p: (f64, f64), cell: f64) -> (i64, i64) {
        ((p.0 / cell).floor() as i64, (p.1 / cell).floor() as i64)
    }

    fn candidates(&self, p: (f64, f64)) -> impl Iterator<Item = usize> + '_ {
        let (ki, kj) = Self::key(p, self.cell);
        (-1..=1).flat_map(move |di| (-1..=1).map(move |dj| (ki + di, kj + dj))).flat_map(move |k| {
            self.buckets.get(&k).into_iter().flatten().copied()
        })
    }
}

struct Index<'a> {
    points: &'a [(f64, f64)],
    eps: f64,
    metric: Metric,
    grid: Option<Grid>,
}

impl<'a> Index<'a> {
    fn new(points: &'a [(f64, f64)], eps: f64, metric: Metric) -> Self {
        let grid = (metric == Metric::Degrees && eps > 0.0).then(|| Grid::new(points, eps));
        Self { points, eps, metric, grid }
    }

    fn neighbours(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.points[i];
        let near = |j: &usize| self.metric.distance(p, self.points[*j]) <= self.eps;
        match &self.grid {
            Some(g) => out.extend(g.candidates(p).filter(near)),
            None => out.extend((0..self.points.len()).filter(near)),
        }
        out.sort_unstable();
    }

    fn count_at_least(&self, i: usize, k: usize) -> bool {
        let p = self.points[i];
        let near = |j: &usize| self.metric.distance(p, self.points[*j]) <= self.eps;
        match &self.grid {
            Some(g) => g.candidates(p).filter(near).nth(k.saturating_sub(1)).is_some(),
            None => (0..self.points.len()).filter(near).nth(k.saturating_sub(1)).is_some(),
        }
    }
}

/// Points are `(lat, lon)`.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize, metric: Metric) -> Vec<Label> {
    let n = points.len();
    let index = Index::new(points, eps, metric);
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut next_cluster = 0;
    let mut neighbours = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        index.neighbours(i, &mut neighbours);
        if neighbours.len() < min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        let cluster = Label::Cluster(next_cluster);
        next_cluster += 1;
        labels[i] = Some(cluster);
        queue.extend(neighbours.iter().copied().filter(|&j| j != i));
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(Label::Noise) => labels[j] = Some(cluster),
                None => {
                    labels[j] = Some(cluster);
                    index.neighbours(j, &mut neighbours);
                    if neighbours.len() >= min_pts {
                        queue.extend(neighbours.iter().copied().filter(|&k| !matches!(labels[k], Some(Label::Cluster(_)))));
                    }
                }
                Some(Label::Cluster(_)) => {}
            }
        }
    }
    labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect()
}

/// Which points DBSCAN would call noise, without building clusters.
///
/// Noise membership does not depend on visiting order, so this only needs
/// the core test (with early exit) plus a core-neighbour search for the rest.
pub fn noise_mask(points: &[(f64, f64)], eps: f64, min_pts: usize, metric: Metric) -> Vec<bool> {
    let index = Index::new(points, eps, metric);
    let core: Vec<bool> = (0..points.len()).map(|i| index.count_at_least(i, min_pts)).collect();
    let mut neighbours = Vec::new();
    (0..points.len())
        .map(|i| {
            if core[i] {
                return false;
            }
            index.neighbours(i, &mut neighbours);
            !neighbours.iter().any(|&j| core[j])
        })
        .collect()
}
