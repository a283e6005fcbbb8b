//! GeoJSON export of trajectories for map viewers.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Context,
    Prediction,
    Truth,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Context => "context",
            Role::Prediction => "prediction",
            Role::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Track<'a> {
    pub id: &'a str,
    pub role: Role,
    pub points: &'a [GeoPoint],
}

/// A FeatureCollection with one LineString per track, coordinates in
/// `[lon, lat]` order.
pub fn export_geojson(tracks: &[Track<'_>]) -> Result<Value> {
    if tracks.is_empty() {
        return Err(Error::EmptyInput("no trajectories to export"));
    }
    let features: Vec<Value> = tracks
        .iter()
        .map(|t| {
            let coords: Vec<[f64; 2]> = t.points.iter().map(|p| [p.lon, p.lat]).collect();
            json!({
                "type": "Feature",
                "properties": { "id": t.id, "role": t.role.as_str() },
                "geometry": { "type": "LineString", "coordinates": coords },
            })
        })
        .collect();
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}
