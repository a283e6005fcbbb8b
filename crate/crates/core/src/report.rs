//! Pairing predictions with ground truth and Table-2-style summaries.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::kalman::{kf_fit, kf_forecast, KalmanConfig};
use crate::metrics::{completed_filter, discrete_frechet, prediction_distance, relative_deviation, summarize};
use crate::pipeline::CleanTrajectory;
use crate::predictor::{context_tokens, ensemble_predict, EnsembleConfig, PredictionBundle, Sample, SequenceModel};
use crate::tokenizer::FRAME_LEN;

pub const DEFAULT_CONTEXTS_MIN: [usize; 3] = [30, 60, 100];
pub const DEFAULT_HORIZONS_TOKENS: [usize; 3] = [2560, 5120, 7680];

/// Whole one-minute positions covered by a token budget.
pub fn horizon_frames(pred_tokens: usize) -> usize {
    pred_tokens / FRAME_LEN
}

/// One prediction as written by `predict` and `kalman`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub trajectory_id: String,
    pub context_min: usize,
    pub pred_tokens: usize,
    /// `[lat, lon]` per minute.
    pub prediction: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Sample>>,
}

impl PredictionRecord {
    fn bare(trajectory_id: &str, context_min: usize, pred_tokens: usize, points: &[GeoPoint]) -> Self {
        Self {
            trajectory_id: trajectory_id.to_owned(),
            context_min,
            pred_tokens,
            prediction: points.iter().map(|p| [p.lat, p.lon]).collect(),
            agreement: None,
            centroid: None,
            representative: None,
            rejected: None,
            samples: None,
        }
    }

    fn from_bundle(trajectory_id: &str, context_min: usize, pred_tokens: usize, b: PredictionBundle) -> Self {
        let mut r = Self::bare(trajectory_id, context_min, pred_tokens, b.representative_points());
        r.agreement = Some(b.agreement);
        r.centroid = Some(b.centroid);
        r.representative = Some(b.representative);
        r.rejected = Some(b.rejected);
        r.samples = Some(b.samples);
        r
    }

    pub fn points(&self) -> Result<Vec<GeoPoint>> {
        self.prediction.iter().map(|&[lat, lon]| GeoPoint::new(lat, lon)).collect()
    }
}

fn split_context(traj: &CleanTrajectory, context_min: usize) -> Result<&[GeoPoint]> {
    if context_min == 0 {
        return Err(Error::Config("context must cover at least one minute".into()));
    }
    if traj.points.len() <= context_min {
        return Err(Error::InsufficientContext { needed: context_min + 1, got: traj.points.len() });
    }
    Ok(&traj.points[..context_min])
}

/// Ensemble prediction from the first `context_min` positions; the
/// representative sample becomes the prediction.
pub fn predict_trajectory(
    model: &dyn SequenceModel,
    traj: &CleanTrajectory,
    context_min: usize,
    pred_tokens: usize,
    cfg: &EnsembleConfig,
) -> Result<PredictionRecord> {
    let context = split_context(traj, context_min)?;
    let frames = horizon_frames(pred_tokens);
    if frames == 0 {
        return Err(Error::Config(format!("{pred_tokens} tokens do not cover one position")));
    }
    let cfg = EnsembleConfig { n_frames: frames, ..*cfg };
    let bundle = ensemble_predict(model, &context_tokens(context)?, &cfg)?;
    Ok(PredictionRecord::from_bundle(&traj.id, context_min, pred_tokens, bundle))
}

/// Constant-velocity forecast from the raw (undiscretised) context.
pub fn kalman_trajectory(
    traj: &CleanTrajectory,
    context_min: usize,
    pred_tokens: usize,
    cfg: &KalmanConfig,
) -> Result<PredictionRecord> {
    let context = split_context(traj, context_min)?;
    let state = kf_fit(context, cfg)?;
    let forecast = kf_forecast(&state, horizon_frames(pred_tokens), cfg)?;
    Ok(PredictionRecord::bare(&traj.id, context_min, pred_tokens, &forecast))
}

/// Per-pair scores, the violin-plot sample dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub trajectory_id: String,
    pub context_min: usize,
    pub pred_tokens: usize,
    /// Minutes of prediction that overlap the truth.
    pub pred_min: usize,
    pub prediction_distance_m: f64,
    pub frechet_m: f64,
    /// `None` when the prediction never leaves the last context point.
    pub relative_pct: Option<f64>,
}

/// Scores a prediction against the trajectory it continues, over the minutes
/// both cover.
pub fn score_pair(truth: &CleanTrajectory, pred: &PredictionRecord) -> Result<PairSample> {
    if truth.id != pred.trajectory_id {
        return Err(Error::Pairing(format!("prediction for {} scored against {}", pred.trajectory_id, truth.id)));
    }
    let context = split_context(truth, pred.context_min)
        .map_err(|e| Error::Pairing(format!("trajectory {}: {e}", truth.id)))?;
    let frames = horizon_frames(pred.pred_tokens);
    let end = (pred.context_min + frames).min(truth.points.len());
    let future = &truth.points[pred.context_min..end];
    let predicted = pred.points()?;
    let overlap = predicted.len().min(future.len());
    if overlap == 0 {
        return Err(Error::Pairing(format!("trajectory {}: prediction is empty", truth.id)));
    }
    let frechet_m = discrete_frechet(&predicted[..overlap], &future[..overlap])?;
    let prediction_distance_m = prediction_distance(context, &predicted[..overlap])?;
    Ok(PairSample {
        trajectory_id: truth.id.clone(),
        context_min: pred.context_min,
        pred_tokens: pred.pred_tokens,
        pred_min: overlap,
        prediction_distance_m,
        frechet_m,
        relative_pct: relative_deviation(frechet_m, prediction_distance_m).ok(),
    })
}

/// Matches every prediction to its truth trajectory by id.
pub fn score_all(truth: &[CleanTrajectory], preds: &[PredictionRecord]) -> Result<Vec<PairSample>> {
    if preds.is_empty() {
        return Err(Error::Pairing("no predictions to evaluate".into()));
    }
    let by_id: BTreeMap<&str, &CleanTrajectory> = truth.iter().map(|t| (t.id.as_str(), t)).collect();
    preds
        .iter()
        .map(|p| {
            let t = by_id
                .get(p.trajectory_id.as_str())
                .ok_or_else(|| Error::Pairing(format!("no trajectory {} in the truth file", p.trajectory_id)))?;
            score_pair(t, p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub context_min: usize,
    pub pred_tokens: usize,
    pub mean_pct: f64,
    pub median_pct: f64,
    pub peak_pct: f64,
    /// Horizon in minutes, `pred_tokens / 18`.
    pub pred_min: usize,
    pub count: usize,
}

/// One row per (context, horizon) cell, after dropping unfinished predictions.
pub fn eval_report(samples: &[PairSample]) -> Result<Vec<ReportRow>> {
    let mut cells: BTreeMap<(usize, usize), Vec<&PairSample>> = BTreeMap::new();
    for s in samples {
        cells.entry((s.context_min, s.pred_tokens)).or_default().push(s);
    }
    let mut rows = Vec::new();
    for ((context_min, pred_tokens), cell) in cells {
        let minutes: Vec<f64> = cell.iter().map(|s| s.pred_min as f64).collect();
        let pct: Vec<f64> = completed_filter(&minutes)?.into_iter().filter_map(|i| cell[i].relative_pct).collect();
        if pct.is_empty() {
            log::warn!("context {context_min} min, {pred_tokens} tokens: no scorable pairs");
            continue;
        }
        let s = summarize(&pct)?;
        rows.push(ReportRow {
            context_min,
            pred_tokens,
            mean_pct: s.mean,
            median_pct: s.median,
            peak_pct: s.density_peak,
            pred_min: horizon_frames(pred_tokens),
            count: s.count,
        });
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("no evaluated pairs survive filtering".into()));
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(ReportCsvRow {
            context_min: r.context_min,
            pred_tokens: r.pred_tokens,
            mean_pct: format!("{:.2}", r.mean_pct),
            median_pct: format!("{:.2}", r.median_pct),
            peak_pct: format!("{:.2}", r.peak_pct),
            pred_min: r.pred_min,
            count: r.count,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportCsvRow {
    context_min: usize,
    pred_tokens: usize,
    mean_pct: String,
    median_pct: String,
    peak_pct: String,
    pred_min: usize,
    count: usize,
}

pub fn write_samples_csv<W: Write>(w: W, samples: &[PairSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trajectory_id", "context_min", "pred_tokens", "pred_min", "prediction_distance_m", "frechet_m", "relative_pct"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for s in samples {
        out.write_record([
            s.trajectory_id.clone(),
            s.context_min.to_string(),
            s.pred_tokens.to_string(),
            s.pred_min.to_string(),
            format!("{:.3}", s.prediction_distance_m),
            format!("{:.3}", s.frechet_m),
            s.relative_pct.map(|p| format!("{p:.4}")).unwrap_or_default(),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_predictions<W: Write>(mut w: W, preds: &[PredictionRecord]) -> Result<()> {
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("prediction line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
