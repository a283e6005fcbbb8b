//! AIS trajectory toolkit: cleaning raw position reports, discretising them
//! onto the H3 resolution-10 grid in pseudo-octal form, tokenizing, predicting
//! future positions with an autoregressive sequence model or a Kalman
//! baseline, and scoring predictions with a Haversine discrete Fréchet metric.

pub mod error;
pub mod geo;
pub mod geojson;
pub mod h3codec;
pub mod kalman;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod report;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
pub use geo::GeoPoint;
