//! Trajectory similarity and evaluation statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine, GeoPoint};

/// Minutes subtracted from the median prediction length to get the
/// completion threshold.
pub const COMPLETION_SLACK_MIN: f64 = 5.0;
pub const KDE_GRID: usize = 512;

fn non_empty<'a>(c: &'a [GeoPoint], what: &'static str) -> Result<&'a [GeoPoint]> {
    if c.is_empty() {
        Err(Error::EmptyInput(what))
    } else {
        Ok(c)
    }
}

/// Discrete Fréchet distance in metres under the Haversine metric.
///
/// Standard O(nm) recurrence kept to two rows:
/// `D(i,j) = max(d(a_i, b_j), min(D(i-1,j), D(i,j-1), D(i-1,j-1)))`.
pub fn discrete_frechet(a: &[GeoPoint], b: &[GeoPoint]) -> Result<f64> {
    let a = non_empty(a, "first curve")?;
    let b = non_empty(b, "second curve")?;
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut curr = vec![0.0f64; m];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            let d = haversine(pa, pb);
            curr[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => curr[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(curr[j - 1]).min(prev[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

/// Mean Haversine distance over index-aligned pairs.
pub fn point_mae(a: &[GeoPoint], b: &[GeoPoint]) -> Result<f64> {
    let (a, b) = (non_empty(a, "first curve")?, non_empty(b, "second curve")?);
    let n = a.len().min(b.len());
    Ok(a.iter().zip(b).map(|(&p, &q)| haversine(p, q)).sum::<f64>() / n as f64)
}

/// Mean squared Haversine distance over index-aligned pairs, in m².
pub fn point_mse(a: &[GeoPoint], b: &[GeoPoint]) -> Result<f64> {
    let (a, b) = (non_empty(a, "first curve")?, non_empty(b, "second curve")?);
    let n = a.len().min(b.len());
    Ok(a.iter().zip(b).map(|(&p, &q)| haversine(p, q).powi(2)).sum::<f64>() / n as f64)
}

/// Straight-line distance from the last context point to the last predicted
/// point.
pub fn prediction_distance(context: &[GeoPoint], prediction: &[GeoPoint]) -> Result<f64> {
    let c = non_empty(context, "context")?;
    let p = non_empty(prediction, "prediction")?;
    Ok(haversine(c[c.len() - 1], p[p.len() - 1]))
}

/// Fréchet error as a percentage of the prediction distance.
pub fn relative_deviation(frechet_m: f64, prediction_distance_m: f64) -> Result<f64> {
    if !(prediction_distance_m > 0.0) {
        return Err(Error::DegeneratePrediction);
    }
    Ok(100.0 * frechet_m / prediction_distance_m)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Lower median: the `(n-1)/2`-th order statistic.
pub fn lower_median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("median of no samples"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule-of-thumb bandwidth, `0.9 min(sd, IQR/1.34) n^-1/5`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mu = mean(samples);
    let sd = (samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Mode of a Gaussian kernel density estimate evaluated on a 512-point grid
/// spanning the sample range.
pub fn density_peak(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("density peak needs 2 samples, got {}", samples.len())));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let h = silverman_bandwidth(samples);
    if hi == lo || !(h > 0.0) {
        return Ok(lo);
    }
    let step = (hi - lo) / (KDE_GRID - 1) as f64;
    let inv = 1.0 / (2.0 * h * h);
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..KDE_GRID {
        let x = lo + step * k as f64;
        let density: f64 = samples.iter().map(|&s| (-(x - s) * (x - s) * inv).exp()).sum();
        if density > best.1 {
            best = (x, density);
        }
    }
    Ok(best.0)
}

/// Indices of predictions whose length exceeds `median - 5` minutes.
pub fn completed_filter(predicted_minutes: &[f64]) -> Result<Vec<usize>> {
    let eta = lower_median(predicted_minutes)? - COMPLETION_SLACK_MIN;
    Ok(predicted_minutes.iter().enumerate().filter(|(_, &x)| x > eta).map(|(i, _)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    pub density_peak: f64,
    pub count: usize,
}

/// Mean, lower median and density peak of one sample set. A single sample is
/// its own peak.
pub fn summarize(samples: &[f64]) -> Result<MetricSummary> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("summary of no samples"));
    }
    let density_peak = if samples.len() == 1 { samples[0] } else { density_peak(samples)? };
    Ok(MetricSummary { mean: mean(samples), median: lower_median(samples)?, density_peak, count: samples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::EARTH_RADIUS_M;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Minimum over every monotone coupling of the maximum pair distance.
    fn brute_force_frechet(a: &[GeoPoint], b: &[GeoPoint]) -> f64 {
        fn walk(a: &[GeoPoint], b: &[GeoPoint], i: usize, j: usize, worst: f64, best: &mut f64) {
            let worst = worst.max(haversine(a[i], b[j]));
            if i + 1 == a.len() && j + 1 == b.len() {
                *best = best.min(worst);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, worst, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, worst, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, worst, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    fn random_curve(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<GeoPoint> {
        let n = rng.random_range(1..=max_len);
        (0..n).map(|_| p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn frechet_examples() {
        let a = [p(0.0, 0.0), p(0.0, 1.0)];
        assert_eq!(discrete_frechet(&a, &a).unwrap(), 0.0);
        assert_eq!(discrete_frechet(&[p(1.0, 2.0)], &[p(3.0, 4.0)]).unwrap(), haversine(p(1.0, 2.0), p(3.0, 4.0)));
        let b = [p(0.0, 0.0), p(0.0, 1.0), p(0.0, 2.0)];
        let f = discrete_frechet(&a, &b).unwrap();
        assert_eq!(f, brute_force_frechet(&a, &b));
        assert!((f - haversine(p(0.0, 1.0), p(0.0, 2.0))).abs() < 1e-9);
        assert!((f - 111_195.0).abs() < 1.0);
        assert!(matches!(discrete_frechet(&[], &a), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn frechet_matches_exhaustive_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let a = random_curve(&mut rng, 6);
            let b = random_curve(&mut rng, 6);
            let dp = discrete_frechet(&a, &b).unwrap();
            assert!((dp - brute_force_frechet(&a, &b)).abs() <= 1e-9);
            assert_eq!(dp, discrete_frechet(&b, &a).unwrap());
        }
    }

    #[test]
    fn mae_and_mse() {
        let a: Vec<_> = (0..10).map(|i| p(10.0, f64::from(i) * 0.01)).collect();
        let b: Vec<_> = a.iter().map(|q| p(q.lat + 0.001, q.lon)).collect();
        assert_eq!(point_mae(&a, &a).unwrap(), 0.0);
        let offset = EARTH_RADIUS_M * 0.001_f64.to_radians();
        assert!((point_mae(&a, &b).unwrap() - offset).abs() < 1e-6);
        assert!((point_mae(&a, &b).unwrap() - 111.2).abs() < 0.05);
        assert!((point_mse(&a, &b).unwrap() - offset * offset).abs() < 1e-3);
        assert!(point_mae(&[], &a).is_err());
        assert!(point_mse(&a, &[]).is_err());
    }

    #[test]
    fn mae_understates_a_shortcut_through_a_bend() {
        // Truth goes north then east; the prediction cuts the corner with the
        // same number of points.
        let truth: Vec<_> = (0..=10)
            .map(|i| p(0.01 * f64::from(i), 0.0))
            .chain((1..=10).map(|i| p(0.1, 0.01 * f64::from(i))))
            .collect();
        let shortcut: Vec<_> = (0..truth.len())
            .map(|i| {
                let f = i as f64 / (truth.len() - 1) as f64;
                p(0.1 * f, 0.1 * f)
            })
            .collect();
        let mae = point_mae(&shortcut, &truth).unwrap();
        let frechet = discrete_frechet(&shortcut, &truth).unwrap();
        assert!(mae < frechet, "mae {mae} frechet {frechet}");
    }

    #[test]
    fn prediction_distance_examples() {
        let ctx = [p(1.0, 1.0), p(0.0, 0.0)];
        assert_eq!(prediction_distance(&ctx, &[p(0.0, 0.0)]).unwrap(), 0.0);
        let d = prediction_distance(&ctx, &[p(5.0, 5.0), p(0.0, 0.3)]).unwrap();
        let arc = EARTH_RADIUS_M * 0.3_f64.to_radians();
        assert!((d - arc).abs() < 1e-6);
        assert!((d - 33_358.0).abs() < 1.0);
        assert!(prediction_distance(&ctx, &[]).is_err());
    }

    #[test]
    fn relative_deviation_examples() {
        let r = relative_deviation(1061.0, 32_401.0).unwrap();
        assert!((r - 3.27).abs() < 0.01, "{r}");
        assert_eq!(relative_deviation(0.0, 17.0).unwrap(), 0.0);
        assert_eq!(relative_deviation(5.0, 5.0).unwrap(), 100.0);
        assert!(matches!(relative_deviation(1.0, 0.0), Err(Error::DegeneratePrediction)));
        for k in [0.5, 2.0, 1e3] {
            let scaled = relative_deviation(1061.0 * k, 32_401.0 * k).unwrap();
            assert!((scaled - r).abs() < 1e-12);
        }
    }

    /// Same estimator on a grid ten times finer.
    fn fine_grid_peak(samples: &[f64]) -> f64 {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let h = silverman_bandwidth(samples);
        let n = KDE_GRID * 10;
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .map(|x| (x, samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn density_peak_examples() {
        assert_eq!(density_peak(&[4.0, 4.0, 4.0]).unwrap(), 4.0);
        assert!(matches!(density_peak(&[1.0]), Err(Error::InsufficientData(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = Normal::new(10.0, 1.0).unwrap().sample_iter(&mut rng).take(1000).collect();
        xs.extend(Normal::new(50.0, 1.0).unwrap().sample_iter(&mut rng).take(200));
        let peak = density_peak(&xs).unwrap();
        assert!((9.0..=11.0).contains(&peak), "{peak}");
        let oracle = fine_grid_peak(&xs);
        let grid_step = (xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().copied().fold(f64::INFINITY, f64::min))
            / (KDE_GRID - 1) as f64;
        assert!((peak - oracle).abs() <= grid_step, "{peak} vs {oracle}");

        let uniform: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        assert!((0.0..=1.0).contains(&density_peak(&uniform).unwrap()));
    }

    #[test]
    fn completed_filter_examples() {
        assert_eq!(completed_filter(&[90.0, 90.0, 90.0]).unwrap(), vec![0, 1, 2]);
        assert_eq!(completed_filter(&[10.0, 90.0, 90.0, 90.0, 90.0]).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(completed_filter(&[3.0]).unwrap(), vec![0]);
        assert!(matches!(completed_filter(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median, s.count), (2.0, 2.0, 3));
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.median), (2.5, 2.0));
        assert_eq!(s.density_peak, density_peak(&[4.0, 1.0, 3.0, 2.0]).unwrap());
        assert_eq!(summarize(&[7.5]).unwrap().density_peak, 7.5);
        assert!(summarize(&[]).is_err());
    }
}
