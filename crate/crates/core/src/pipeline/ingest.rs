//! Raw AIS record readers and writers (CSV and NDJSON).

use std::io::{BufRead, Read, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::AisRecord;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Ndjson,
}

impl Format {
    /// Guesses from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson" | "jsonl" | "json") => Format::Ndjson,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<AisRecord>,
    pub skipped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    mmsi: serde_json::Value,
    timestamp: serde_json::Value,
    lat: f64,
    lon: f64,
    sog: f64,
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| t.to_string())
}

fn record(mmsi: &str, timestamp: &str, lat: f64, lon: f64, sog: f64) -> Option<AisRecord> {
    let mmsi: u32 = mmsi.trim().parse().ok()?;
    if mmsi == 0 || mmsi > 999_999_999 {
        return None;
    }
    let timestamp = parse_timestamp(timestamp)?;
    let position = GeoPoint::new(lat, lon).ok()?;
    if !sog.is_finite() || sog < 0.0 {
        return None;
    }
    Some(AisRecord { mmsi, timestamp, position, sog })
}

fn finish(records: Vec<AisRecord>, skipped: usize) -> Result<Ingested> {
    let total = records.len() + skipped;
    if total == 0 {
        log::warn!("input holds no AIS rows");
    } else if skipped * 2 > total {
        return Err(Error::CorruptInput { malformed: skipped, total });
    } else if skipped > 0 {
        log::warn!("skipped {skipped} of {total} malformed rows");
    }
    Ok(Ingested { records, skipped })
}

pub fn read_csv<R: Read>(r: R) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(mmsi), Some(ts), Some(lat), Some(lon), Some(sog)) =
        (col("mmsi"), col("timestamp"), col("lat"), col("lon"), col("sog"))
    else {
        if headers.is_empty() {
            return finish(Vec::new(), 0);
        }
        return Err(Error::Parse(format!("CSV header must name mmsi,timestamp,lat,lon,sog; got {headers:?}")));
    };

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) if e.is_io_error() => return Err(csv_err(e)),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let num = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok());
        let parsed = match (row.get(mmsi), row.get(ts), num(lat), num(lon), num(sog)) {
            (Some(m), Some(t), Some(la), Some(lo), Some(s)) => record(m, t, la, lo, s),
            _ => None,
        };
        match parsed {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    finish(records, skipped)
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

pub fn read_ndjson<R: BufRead>(r: R) -> Result<Ingested> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRow>(&line).ok().and_then(|row| {
            let mmsi = match row.mmsi {
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::String(s) => s,
                _ => return None,
            };
            let ts = match row.timestamp {
                serde_json::Value::String(s) => s,
                _ => return None,
            };
            record(&mmsi, &ts, row.lat, row.lon, row.sog)
        });
        match parsed {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    finish(records, skipped)
}

pub fn ingest<R: BufRead>(r: R, format: Format) -> Result<Ingested> {
    match format {
        Format::Csv => read_csv(r),
        Format::Ndjson => read_ndjson(r),
    }
}

pub fn write_csv<W: Write>(w: W, records: &[AisRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["mmsi", "timestamp", "lat", "lon", "sog"]).map_err(csv_err)?;
    for r in records {
        writer
            .write_record([
                r.mmsi.to_string(),
                format_timestamp(r.timestamp),
                r.position.lat.to_string(),
                r.position.lon.to_string(),
                r.sog.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_ndjson<W: Write>(mut w: W, records: &[AisRecord]) -> Result<()> {
    for r in records {
        let row = serde_json::json!({
            "mmsi": r.mmsi,
            "timestamp": format_timestamp(r.timestamp),
            "lat": r.position.lat,
            "lon": r.position.lon,
            "sog": r.sog,
        });
        writeln!(w, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "mmsi,timestamp,lat,lon,sog\n\
        227000001,2023-08-01T00:00:00Z,43.1,5.2,10.5\n\
        227000001,2023-08-01T00:01:00Z,43.2,5.3,10.4\n\
        227000002,2023-08-01T00:00:30Z,44.0,6.0,0\n";

    #[test]
    fn well_formed_csv() {
        let got = read_csv(CSV.as_bytes()).unwrap();
        assert_eq!(got.records.len(), 3);
        assert_eq!(got.skipped, 0);
        assert_eq!(got.records[1].timestamp - got.records[0].timestamp, 60);
        assert_eq!(got.records[0].timestamp, 1_690_848_000);
    }

    #[test]
    fn out_of_range_row_is_skipped() {
        let text = format!("{CSV}227000003,2023-08-01T00:02:00Z,999,5.3,10\n");
        let got = read_csv(text.as_bytes()).unwrap();
        assert_eq!((got.records.len(), got.skipped), (3, 1));
    }

    #[test]
    fn empty_input() {
        assert!(read_csv("".as_bytes()).unwrap().records.is_empty());
        assert!(read_csv("mmsi,timestamp,lat,lon,sog\n".as_bytes()).unwrap().records.is_empty());
        assert!(read_ndjson("".as_bytes()).unwrap().records.is_empty());
    }

    #[test]
    fn mostly_garbage_is_corrupt() {
        let text = "mmsi,timestamp,lat,lon,sog\n1,x,1,1,1\n2,y,1,1,1\n227000001,2023-08-01T00:00:00Z,43.1,5.2,10.5\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::CorruptInput { malformed: 2, total: 3 })));
    }

    #[test]
    fn ndjson_and_round_trip() {
        let csv = read_csv(CSV.as_bytes()).unwrap().records;
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &csv).unwrap();
        let back = read_ndjson(&buf[..]).unwrap();
        assert_eq!(back.records, csv);
        let mut buf = Vec::new();
        write_csv(&mut buf, &csv).unwrap();
        assert_eq!(read_csv(&buf[..]).unwrap().records, csv);
    }

    #[test]
    fn timestamp_forms() {
        assert_eq!(parse_timestamp("2023-08-01T00:00:00Z"), Some(1_690_848_000));
        assert_eq!(parse_timestamp("2023-08-01T02:00:00+02:00"), Some(1_690_848_000));
        assert_eq!(parse_timestamp("2023-08-01 00:00:00"), Some(1_690_848_000));
        assert_eq!(parse_timestamp("yesterday"), None);
        assert_eq!(format_timestamp(1_690_848_000), "2023-08-01T00:00:00Z");
    }
}
