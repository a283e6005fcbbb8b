//! H3 cell identifiers and their pseudo-octal rendering.
//!
//! A cell-mode H3 index packs, from the most significant bit down: a reserved
//! bit, a 4-bit mode, 3 mode-dependent bits, a 4-bit resolution, a 7-bit base
//! cell and fifteen 3-bit resolution digits. The pseudo-octal form drops the
//! 12-bit header, writes the base cell as two hex characters and each digit as
//! one octal character, giving 17 characters per cell.
//!
//! Mapping between coordinates and cells is delegated to `h3o`; everything in
//! this module besides [`geo_to_cell`] and [`cell_to_geo`] is pure bit work.

use std::fmt;
use std::str::FromStr;

use h3o::{CellIndex, LatLng, Resolution};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Resolution used for every cell this crate produces.
pub const RESOLUTION: u8 = 10;

pub const MAX_BASE_CELL: u8 = 121;
pub const PSEUDO_OCTAL_LEN: usize = 17;

const MODE_OFFSET: u32 = 59;
const RESOLUTION_OFFSET: u32 = 52;
const BASE_CELL_OFFSET: u32 = 45;
const CELL_MODE: u64 = 1;
const UNUSED_DIGIT: u8 = 7;

/// A 64-bit H3 cell index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(u64);

impl CellId {
    /// Wraps a raw index after checking the header and digit fields.
    pub fn new(value: u64) -> Result<Self> {
        let cell = Self(value);
        cell.validate()?;
        Ok(cell)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn reserved(self) -> u8 {
        (self.0 >> 63) as u8
    }

    pub fn mode(self) -> u8 {
        ((self.0 >> MODE_OFFSET) & 0xf) as u8
    }

    pub fn resolution(self) -> u8 {
        ((self.0 >> RESOLUTION_OFFSET) & 0xf) as u8
    }

    pub fn base_cell(self) -> u8 {
        ((self.0 >> BASE_CELL_OFFSET) & 0x7f) as u8
    }

    /// Resolution digit `r` in `1..=15`.
    pub fn digit(self, r: u8) -> u8 {
        debug_assert!((1..=15).contains(&r));
        ((self.0 >> ((15 - u32::from(r)) * 3)) & 7) as u8
    }

    fn validate(self) -> Result<()> {
        if self.reserved() != 0 {
            return Err(Error::MalformedCell(format!("{:x}: reserved bit set", self.0)));
        }
        if u64::from(self.mode()) != CELL_MODE {
            return Err(Error::MalformedCell(format!("{:x}: index mode {} is not cell mode", self.0, self.mode())));
        }
        if self.base_cell() > MAX_BASE_CELL {
            return Err(Error::MalformedCell(format!("{:x}: base cell {} > {MAX_BASE_CELL}", self.0, self.base_cell())));
        }
        let res = self.resolution();
        for r in 1..=15 {
            let d = self.digit(r);
            if r <= res && d == UNUSED_DIGIT {
                return Err(Error::MalformedCell(format!("{:x}: digit {r} is unused marker", self.0)));
            }
            if r > res && d != UNUSED_DIGIT {
                return Err(Error::MalformedCell(format!("{:x}: digit {r} beyond resolution is {d}", self.0)));
            }
        }
        Ok(())
    }

    /// Canonical H3 text form: lowercase hex without leading zeros.
    pub fn to_hex(self) -> String {
        format!("{:x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > 16 {
            return Err(Error::Parse(format!("bad H3 hex length: {s:?}")));
        }
        let value = u64::from_str_radix(s, 16).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        Self::new(value)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

impl TryFrom<u64> for CellId {
    type Error = Error;

    fn try_from(value: u64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CellId> for u64 {
    fn from(c: CellId) -> u64 {
        c.0
    }
}

/// The 17-character pseudo-octal rendering of a cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PseudoOctalId(String);

impl PseudoOctalId {
    /// Checks the character classes: two lowercase hex characters followed by
    /// fifteen octal digits.
    pub fn parse(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != PSEUDO_OCTAL_LEN {
            return Err(Error::Parse(format!("pseudo-octal id must be {PSEUDO_OCTAL_LEN} chars, got {s:?}")));
        }
        if let Some(i) = bytes[..2].iter().position(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(Error::Parse(format!("{s:?}: char {} is not lowercase hex", i + 1)));
        }
        if let Some(i) = bytes[2..].iter().position(|b| !matches!(b, b'0'..=b'7')) {
            return Err(Error::Parse(format!("{s:?}: char {} is not octal", i + 3)));
        }
        Ok(Self(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn base_cell_str(&self) -> &str {
        &self.0[..2]
    }

    /// The fifteen digit characters.
    pub fn digits(&self) -> &[u8] {
        &self.0.as_bytes()[2..]
    }

    pub(crate) fn from_parts(base_cell: u8, digits: &[u8; 15]) -> Self {
        let mut s = format!("{base_cell:02x}");
        s.extend(digits.iter().map(|d| char::from(b'0' + d)));
        Self(s)
    }
}

impl fmt::Display for PseudoOctalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PseudoOctalId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Drops the 12-bit header and renders base cell plus digits.
pub fn to_pseudo_octal(cell: CellId) -> Result<PseudoOctalId> {
    let value = cell.value();
    if cell.reserved() != 0 || u64::from(cell.mode()) != CELL_MODE {
        return Err(Error::MalformedCell(format!("{value:x}: not a cell-mode index")));
    }
    let mut out = format!("{:02x}", (value >> BASE_CELL_OFFSET) & 0x7f);
    for shift in (0..=42).rev().step_by(3) {
        out.push(char::from(b'0' + ((value >> shift) & 7) as u8));
    }
    Ok(PseudoOctalId(out))
}

/// Rebuilds the resolution-10 cell index from its pseudo-octal form.
pub fn from_pseudo_octal(s: &PseudoOctalId) -> Result<CellId> {
    from_pseudo_octal_at(s, RESOLUTION)
}

pub(crate) fn from_pseudo_octal_at(s: &PseudoOctalId, resolution: u8) -> Result<CellId> {
    let base = u8::from_str_radix(s.base_cell_str(), 16).map_err(|e| Error::Parse(e.to_string()))?;
    if base > MAX_BASE_CELL {
        return Err(Error::Domain(format!("base cell {base} > {MAX_BASE_CELL} in {s}")));
    }
    for (i, &c) in s.digits().iter().enumerate() {
        let r = i as u8 + 1;
        let used = r <= resolution;
        if used == (c == b'7') {
            return Err(Error::Domain(format!(
                "{s}: digit {r} is '{}' at resolution {resolution}",
                char::from(c)
            )));
        }
    }
    let mut value: u64 = (((1 << 7) | u64::from(resolution)) << 7) | u64::from(base);
    for &c in s.digits() {
        value = (value << 3) | u64::from(c - b'0');
    }
    CellId::new(value)
}

/// The resolution-`res` cell containing `p`.
pub fn geo_to_cell(p: GeoPoint, res: u8) -> Result<CellId> {
    let resolution = Resolution::try_from(res).map_err(|e| Error::Domain(e.to_string()))?;
    let ll = LatLng::new(p.lat, p.lon).map_err(|_| Error::InvalidCoordinate { lat: p.lat, lon: p.lon })?;
    Ok(CellId(u64::from(ll.to_cell(resolution))))
}

/// Centre of the cell.
pub fn cell_to_geo(c: CellId) -> Result<GeoPoint> {
    let index = CellIndex::try_from(c.value()).map_err(|e| Error::MalformedCell(format!("{:x}: {e}", c.value())))?;
    let ll = LatLng::from(index);
    Ok(GeoPoint { lat: ll.lat(), lon: ll.lng() })
}

/// Convenience composition used by the tokenizer and predictor.
pub fn point_to_pseudo_octal(p: GeoPoint) -> Result<PseudoOctalId> {
    to_pseudo_octal(geo_to_cell(p, RESOLUTION)?)
}

pub fn pseudo_octal_to_point(s: &PseudoOctalId) -> Result<GeoPoint> {
    cell_to_geo(from_pseudo_octal(s)?)
}
