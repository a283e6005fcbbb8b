//! Autoregressive prediction over the trajectory token grammar.

pub mod ngram;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{bearing, centroid, haversine, heading_change, implied_speed, GeoPoint};
use crate::h3codec::{point_to_pseudo_octal, pseudo_octal_to_point, MAX_BASE_CELL};
use crate::tokenizer::{
    classify, decode, decode_frame, encode_trajectory, Slot, TokenClass, TokenId, TokenSequence, BOS,
    FRAME_LEN, PADDING_DIGIT_OFFSETS,
};

pub use ngram::{NGramConfig, NGramModel, Unit};

/// Next-token distributions over the 270-token vocabulary.
pub trait SequenceModel: Send + Sync {
    /// Probabilities for every token id given `prefix`; non-negative, summing to 1.
    fn next_token_dist(&self, prefix: &[TokenId]) -> Vec<f64>;
}

/// Trajectory speed ceiling, km/h.
pub const MAX_SPEED_KMH: f64 = 188.904;
pub const MAX_TURN_DEG: f64 = 150.0;
/// One resolution-10 cell diameter.
pub const AGREEMENT_RADIUS_M: f64 = 244.0;
pub const DEFAULT_ENSEMBLE: usize = 30;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
const STEP_S: f64 = 60.0;

/// Whether the grammar allows `id` at frame offset `o`. Base cells are limited
/// to those H3 defines and resolution digits 1-10 to `0..=6`.
fn allowed(o: usize, id: TokenId) -> bool {
    if !Slot::at(o).accepts(id) {
        return false;
    }
    match classify(id) {
        Some(TokenClass::BaseCell(b)) => b <= MAX_BASE_CELL,
        Some(TokenClass::Digit(d)) if PADDING_DIGIT_OFFSETS.contains(&o) => d == 7,
        Some(TokenClass::Digit(d)) => d < 7,
        _ => true,
    }
}

fn pick(dist: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> Option<TokenId> {
    if temperature == 0.0 {
        let mut best: Option<usize> = None;
        for (i, &p) in dist.iter().enumerate() {
            if p > 0.0 && best.is_none_or(|b| p > dist[b]) {
                best = Some(i);
            }
        }
        return best.map(|i| i as TokenId);
    }
    // Relative to the top probability so small temperatures cannot underflow every weight.
    let top = dist.iter().copied().fold(0.0, f64::max);
    let weights: Vec<f64> =
        dist.iter().map(|&p| if p > 0.0 { (p / top).powf(1.0 / temperature) } else { 0.0 }).collect();
    let index = WeightedIndex::new(&weights).ok()?;
    Some(index.sample(rng) as TokenId)
}

/// Emits exactly `18 * n_frames` tokens continuing `context`, masking every
/// step to what the frame grammar allows. Temperature 0 is greedy decoding
/// with ties going to the lowest id.
pub fn generate(
    model: &dyn SequenceModel,
    context: &[TokenId],
    n_frames: usize,
    temperature: f64,
    seed: u64,
) -> Result<TokenSequence> {
    if n_frames == 0 {
        return Err(Error::Config("n_frames must be at least 1".into()));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature must be finite and non-negative, got {temperature}")));
    }
    let lead = usize::from(context.first() == Some(&BOS));
    if !(context.len() - lead).is_multiple_of(FRAME_LEN) {
        return Err(Error::FrameGrammar {
            offset: context.len(),
            detail: "context does not end on a frame boundary".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefix = context.to_vec();
    let total = n_frames * FRAME_LEN;
    for step in 0..total {
        let o = step % FRAME_LEN;
        let mut dist = model.next_token_dist(&prefix);
        dist.resize(crate::tokenizer::VOCAB_SIZE, 0.0);
        for (id, p) in dist.iter_mut().enumerate() {
            if !allowed(o, id as TokenId) || !p.is_finite() {
                *p = 0.0;
            }
        }
        let mass: f64 = dist.iter().sum();
        if mass <= 0.0 {
            return Err(Error::GenerationStall { position: step });
        }
        dist.iter_mut().for_each(|p| *p /= mass);
        let next = pick(&dist, temperature, &mut rng).ok_or(Error::GenerationStall { position: step })?;
        prefix.push(next);
    }
    Ok(TokenSequence::from_ids(prefix.split_off(context.len())))
}

/// Encodes one-minute positions as a `[BOS]`-led context.
pub fn context_tokens(points: &[GeoPoint]) -> Result<Vec<TokenId>> {
    let cells = points.iter().map(|&p| point_to_pseudo_octal(p)).collect::<Result<Vec<_>>>()?;
    let mut ids = encode_trajectory(&cells, true)?.ids;
    ids.pop();
    Ok(ids)
}

/// Cell centres of a token sequence.
pub fn decode_points(tokens: &TokenSequence) -> Result<Vec<GeoPoint>> {
    decode(tokens)?.iter().map(pseudo_octal_to_point).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HallucinationConfig {
    pub max_speed_kmh: f64,
    pub max_turn_deg: f64,
    pub step_s: f64,
}

impl Default for HallucinationConfig {
    fn default() -> Self {
        Self { max_speed_kmh: MAX_SPEED_KMH, max_turn_deg: MAX_TURN_DEG, step_s: STEP_S }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    /// Implied speed between points `at` and `at + 1` above the ceiling.
    Jump { at: usize, kmh: f64 },
    /// Heading reverses by `deg` around point `at`.
    UTurn { at: usize, deg: f64 },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn reason(&self) -> Option<&'static str> {
        match self {
            Verdict::Pass => None,
            Verdict::Jump { .. } => Some("jump"),
            Verdict::UTurn { .. } => Some("u-turn"),
        }
    }
}

/// Rejects physically implausible one-minute tracks. Zero-length moves (a
/// vessel staying in its cell) carry no heading and are skipped when
/// comparing consecutive headings.
pub fn hallucination_filter(traj: &[GeoPoint], cfg: &HallucinationConfig) -> Result<Verdict> {
    if traj.len() < 2 {
        return Err(Error::TooShort(format!("hallucination check needs 2 points, got {}", traj.len())));
    }
    for (i, w) in traj.windows(2).enumerate() {
        let kmh = implied_speed(w[0], w[1], cfg.step_s)?;
        if kmh > cfg.max_speed_kmh {
            return Ok(Verdict::Jump { at: i, kmh });
        }
    }
    let mut last_heading: Option<f64> = None;
    for (i, w) in traj.windows(2).enumerate() {
        if haversine(w[0], w[1]) == 0.0 {
            continue;
        }
        let h = bearing(w[0], w[1]);
        if let Some(prev) = last_heading {
            let deg = heading_change(prev, h);
            if deg > cfg.max_turn_deg {
                return Ok(Verdict::UTurn { at: i, deg });
            }
        }
        last_heading = Some(h);
    }
    Ok(Verdict::Pass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n: usize,
    pub n_frames: usize,
    pub temperature: f64,
    pub seed: u64,
    pub agreement_radius_m: f64,
    pub filter: HallucinationConfig,
}

impl EnsembleConfig {
    pub fn new(n_frames: usize, seed: u64) -> Self {
        Self {
            n: DEFAULT_ENSEMBLE,
            n_frames,
            temperature: DEFAULT_TEMPERATURE,
            seed,
            agreement_radius_m: AGREEMENT_RADIUS_M,
            filter: HallucinationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seed: u64,
    pub points: Vec<GeoPoint>,
    /// Why the sample was discarded, if it was.
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub samples: Vec<Sample>,
    /// Final positions of the retained samples, in sample order.
    pub endpoints: Vec<GeoPoint>,
    pub centroid: GeoPoint,
    pub agreement: f64,
    /// Index into `samples` of the retained sample ending nearest the centroid.
    pub representative: usize,
    pub rejected: usize,
}

impl PredictionBundle {
    pub fn representative_points(&self) -> &[GeoPoint] {
        &self.samples[self.representative].points
    }
}

fn run_sample(model: &dyn SequenceModel, context: &[TokenId], anchor: GeoPoint, cfg: &EnsembleConfig, seed: u64) -> Result<Sample> {
    let tokens = generate(model, context, cfg.n_frames, cfg.temperature, seed)?;
    let points = match decode_points(&tokens) {
        Ok(p) => p,
        Err(_) => return Ok(Sample { seed, points: Vec::new(), rejected: Some("invalid-cell".into()) }),
    };
    let mut track = Vec::with_capacity(points.len() + 1);
    track.push(anchor);
    track.extend_from_slice(&points);
    let verdict = hallucination_filter(&track, &cfg.filter)?;
    Ok(Sample { seed, points, rejected: verdict.reason().map(str::to_owned) })
}

/// Draws `cfg.n` samples (seeds `seed + i`) in parallel, filters
/// hallucinations, and summarises the retained endpoints. The last context
/// position is prepended before filtering so the first predicted move is
/// checked too.
pub fn ensemble_predict(model: &dyn SequenceModel, context: &[TokenId], cfg: &EnsembleConfig) -> Result<PredictionBundle> {
    if cfg.n == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let lead = usize::from(context.first() == Some(&BOS));
    if context.len() < lead + FRAME_LEN {
        return Err(Error::InsufficientContext { needed: 1, got: 0 });
    }
    let last = &context[context.len() - FRAME_LEN..];
    let anchor = pseudo_octal_to_point(&decode_frame(last, context.len() - FRAME_LEN)?)?;

    let samples: Vec<Sample> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| run_sample(model, context, anchor, cfg, cfg.seed.wrapping_add(i)))
        .collect::<Result<_>>()?;

    let retained: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].rejected.is_none()).collect();
    if retained.is_empty() {
        return Err(Error::NoViablePrediction { reasons: samples.iter().filter_map(|s| s.rejected.clone()).collect() });
    }
    let endpoints: Vec<GeoPoint> = retained.iter().map(|&i| *samples[i].points.last().unwrap_or(&anchor)).collect();
    let centre = centroid(&endpoints)?;
    let distances: Vec<f64> = endpoints.iter().map(|&e| haversine(e, centre)).collect();
    let close = distances.iter().filter(|&&d| d <= cfg.agreement_radius_m).count();
    let mut best = 0;
    for (k, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = k;
        }
    }
    Ok(PredictionBundle {
        rejected: samples.len() - retained.len(),
        representative: retained[best],
        agreement: close as f64 / endpoints.len() as f64,
        centroid: centre,
        endpoints,
        samples,
    })
}
