//! Fixed-grammar tokenization of pseudo-octal trajectories.
//!
//! Every position becomes an 18-token frame:
//! `[BOC] <base cell> d1 d2 ... d15 [EOC]`. The vocabulary holds 6 special
//! tokens, the 8 octal digits and the 256 two-character hex base-cell tokens,
//! 270 entries in all.

pub mod corpus;

use crate::error::{Error, Result};
use crate::h3codec::PseudoOctalId;

pub type TokenId = u16;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const BOC: TokenId = 4;
pub const EOC: TokenId = 5;

pub const DIGIT_BASE: TokenId = 6;
pub const BASE_CELL_BASE: TokenId = 14;
pub const VOCAB_SIZE: usize = 270;

pub const FRAME_LEN: usize = 18;
pub const DEFAULT_MAX_LEN: usize = 2560;
pub const DEFAULT_OVERLAP: usize = 252;

/// Frame offsets holding digits 11-15, always `7` at resolution 10.
pub const PADDING_DIGIT_OFFSETS: std::ops::RangeInclusive<usize> = 12..=16;

const SPECIALS: [&str; 6] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]", "[BOC]", "[EOC]"];

/// Grammatical role of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Special,
    Digit(u8),
    BaseCell(u8),
}

/// The token the frame grammar expects at a given offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    BeginCell,
    BaseCell,
    Digit,
    EndCell,
}

impl Slot {
    pub fn at(offset: usize) -> Slot {
        match offset % FRAME_LEN {
            0 => Slot::BeginCell,
            1 => Slot::BaseCell,
            17 => Slot::EndCell,
            _ => Slot::Digit,
        }
    }

    pub fn accepts(self, id: TokenId) -> bool {
        match (self, classify(id)) {
            (Slot::BeginCell, _) => id == BOC,
            (Slot::EndCell, _) => id == EOC,
            (Slot::BaseCell, Some(TokenClass::BaseCell(_))) => true,
            (Slot::Digit, Some(TokenClass::Digit(_))) => true,
            _ => false,
        }
    }
}

pub fn digit_token(d: u8) -> TokenId {
    debug_assert!(d < 8);
    DIGIT_BASE + TokenId::from(d)
}

pub fn base_cell_token(b: u8) -> TokenId {
    BASE_CELL_BASE + TokenId::from(b)
}

pub fn classify(id: TokenId) -> Option<TokenClass> {
    match id {
        0..=5 => Some(TokenClass::Special),
        6..=13 => Some(TokenClass::Digit((id - DIGIT_BASE) as u8)),
        14..=269 => Some(TokenClass::BaseCell((id - BASE_CELL_BASE) as u8)),
        _ => None,
    }
}

/// Id-to-text table for the 270 tokens.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut entries: Vec<String> = SPECIALS.iter().map(|s| (*s).to_owned()).collect();
        entries.extend((0..8).map(|d| d.to_string()));
        entries.extend((0..=255u8).map(|b| format!("{b:02x}")));
        debug_assert_eq!(entries.len(), VOCAB_SIZE);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.entries.get(usize::from(id)).map(String::as_str)
    }

    /// Looks up a token by text. Single characters resolve to digits, two
    /// hex characters to base cells.
    pub fn id(&self, text: &str) -> Option<TokenId> {
        self.entries.iter().position(|e| e == text).map(|i| i as TokenId)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// Token ids with an attention mask that is zero exactly on padding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub attention_mask: Vec<u8>,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<TokenId>) -> Self {
        let attention_mask = ids.iter().map(|&id| u8::from(id != PAD)).collect();
        Self { ids, attention_mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids carrying a non-zero mask.
    pub fn content(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids.iter().zip(&self.attention_mask).filter(|(_, &m)| m != 0).map(|(&id, _)| id)
    }
}

pub fn encode_position(s: &PseudoOctalId) -> [TokenId; FRAME_LEN] {
    let mut frame = [0; FRAME_LEN];
    frame[0] = BOC;
    // Validated by PseudoOctalId::parse, so these cannot fail.
    frame[1] = base_cell_token(u8::from_str_radix(s.base_cell_str(), 16).unwrap_or(0));
    for (slot, &c) in frame[2..17].iter_mut().zip(s.digits()) {
        *slot = digit_token(c - b'0');
    }
    frame[17] = EOC;
    frame
}

/// Parses raw text before framing it.
pub fn encode_position_str(s: &str) -> Result<[TokenId; FRAME_LEN]> {
    Ok(encode_position(&PseudoOctalId::parse(s)?))
}

pub fn encode_trajectory(cells: &[PseudoOctalId], with_terminals: bool) -> Result<TokenSequence> {
    if cells.is_empty() {
        return Err(Error::EmptyInput("trajectory has no positions"));
    }
    let mut ids = Vec::with_capacity(cells.len() * FRAME_LEN + 2);
    if with_terminals {
        ids.push(BOS);
    }
    for c in cells {
        ids.extend_from_slice(&encode_position(c));
    }
    if with_terminals {
        ids.push(EOS);
    }
    Ok(TokenSequence::from_ids(ids))
}

/// Decodes a single frame; `at` is the frame's offset in the enclosing
/// sequence, used for error reporting.
pub fn decode_frame(frame: &[TokenId], at: usize) -> Result<PseudoOctalId> {
    if frame.len() != FRAME_LEN {
        return Err(Error::FrameGrammar {
            offset: at + frame.len(),
            detail: format!("truncated frame of {} tokens", frame.len()),
        });
    }
    for (i, &id) in frame.iter().enumerate() {
        let slot = Slot::at(i);
        if !slot.accepts(id) {
            return Err(Error::FrameGrammar {
                offset: at + i,
                detail: format!("token {id} cannot fill {slot:?}"),
            });
        }
    }
    let base = match classify(frame[1]) {
        Some(TokenClass::BaseCell(b)) => b,
        _ => unreachable!("checked by slot grammar"),
    };
    let mut digits = [0u8; 15];
    for (d, &id) in digits.iter_mut().zip(&frame[2..17]) {
        *d = (id - DIGIT_BASE) as u8;
    }
    Ok(PseudoOctalId::from_parts(base, &digits))
}

/// Inverse of [`encode_trajectory`]. A leading `[BOS]`, a trailing `[EOS]` and
/// masked padding are stripped before the frames are read.
pub fn decode(t: &TokenSequence) -> Result<Vec<PseudoOctalId>> {
    let body: Vec<(usize, TokenId)> = t
        .ids
        .iter()
        .zip(&t.attention_mask)
        .enumerate()
        .filter(|(_, (&id, &m))| m != 0 && id != PAD)
        .map(|(i, (&id, _))| (i, id))
        .collect();
    let mut body = body.as_slice();
    if let Some(((_, BOS), rest)) = body.split_first() {
        body = rest;
    }
    if let Some(((_, EOS), rest)) = body.split_last() {
        body = rest;
    }
    let mut out = Vec::with_capacity(body.len() / FRAME_LEN);
    for chunk in body.chunks(FRAME_LEN) {
        let ids: Vec<TokenId> = chunk.iter().map(|&(_, id)| id).collect();
        out.push(decode_frame(&ids, chunk[0].0)?);
    }
    Ok(out)
}

/// Splits a long sequence into frame-aligned windows of at most `max_len`
/// tokens, consecutive windows sharing `overlap` tokens. The final window is
/// right-padded to `max_len` when the input needed more than one window.
pub fn chunk(t: &TokenSequence, max_len: usize, overlap: usize) -> Result<Vec<TokenSequence>> {
    if overlap >= max_len {
        return Err(Error::Config(format!("overlap {overlap} must be below max_len {max_len}")));
    }
    if !overlap.is_multiple_of(FRAME_LEN) {
        return Err(Error::Config(format!("overlap {overlap} is not a multiple of {FRAME_LEN}")));
    }
    let ids: Vec<TokenId> = t.content().collect();
    if ids.len() <= max_len {
        return Ok(vec![TokenSequence::from_ids(ids)]);
    }
    let lead = usize::from(ids.first() == Some(&BOS));
    let span = (max_len - lead) / FRAME_LEN * FRAME_LEN;
    if span <= overlap {
        return Err(Error::Config(format!("max_len {max_len} leaves no room beyond the {overlap}-token overlap")));
    }

    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        if ids.len() - start <= max_len {
            let mut window = TokenSequence::from_ids(ids[start..].to_vec());
            window.ids.resize(max_len, PAD);
            window.attention_mask.resize(max_len, 0);
            chunks.push(window);
            return Ok(chunks);
        }
        let end = if start == 0 { lead + span } else { start + span };
        let mut window = TokenSequence::from_ids(ids[start..end].to_vec());
        window.ids.resize(max_len, PAD);
        window.attention_mask.resize(max_len, 0);
        chunks.push(window);
        start = end - overlap;
    }
}

/// Concatenates chunk contents, dropping the shared overlap.
pub fn reassemble(chunks: &[TokenSequence], overlap: usize) -> TokenSequence {
    let mut ids = Vec::new();
    for (i, c) in chunks.iter().enumerate() {
        let skip = if i == 0 { 0 } else { overlap };
        ids.extend(c.content().skip(skip));
    }
    TokenSequence::from_ids(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> PseudoOctalId {
        PseudoOctalId::parse("1c551026435077777").unwrap()
    }

    fn cells(n: usize) -> Vec<PseudoOctalId> {
        (0..n)
            .map(|i| {
                let digits: String = (0..10).map(|j| char::from(b'0' + ((i + j) % 7) as u8)).collect();
                PseudoOctalId::parse(&format!("{:02x}{digits}77777", i % 122)).unwrap()
            })
            .collect()
    }

    #[test]
    fn vocabulary_has_270_entries() {
        let v = Vocabulary::new();
        assert_eq!(v.len(), VOCAB_SIZE);
        let mut seen = std::collections::HashSet::new();
        for id in 0..VOCAB_SIZE as TokenId {
            assert!(seen.insert(v.token(id).unwrap().to_owned()));
        }
        assert_eq!(v.id("[BOC]"), Some(BOC));
        assert_eq!(v.id("7"), Some(13));
        assert_eq!(v.id("1c"), Some(BASE_CELL_BASE + 0x1c));
        assert_eq!(v.id("ff"), Some(269));
    }

    #[test]
    fn golden_frame() {
        let v = Vocabulary::new();
        let frame = encode_position(&golden());
        let d = |c: &str| v.id(c).unwrap();
        let expected = [
            4,
            d("1c"),
            d("5"),
            d("5"),
            d("1"),
            d("0"),
            d("2"),
            d("6"),
            d("4"),
            d("3"),
            d("5"),
            d("0"),
            d("7"),
            d("7"),
            d("7"),
            d("7"),
            d("7"),
            5,
        ];
        assert_eq!(frame, expected);
        assert_eq!(decode_frame(&frame, 0).unwrap(), golden());
        assert!(encode_position_str("1c55102643507777x").is_err());
    }

    #[test]
    fn context_lengths_match_reported_token_counts() {
        for (minutes, tokens) in [(30, 540), (60, 1080), (100, 1800)] {
            assert_eq!(encode_trajectory(&cells(minutes), false).unwrap().len(), tokens);
        }
        assert_eq!(encode_trajectory(&cells(1), true).unwrap().len(), 20);
        assert!(matches!(encode_trajectory(&[], false), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn decode_errors() {
        let mut t = encode_trajectory(&cells(2), false).unwrap();
        t.ids.truncate(30);
        t.attention_mask.truncate(30);
        match decode(&t) {
            Err(Error::FrameGrammar { offset, .. }) => assert_eq!(offset, 30),
            other => panic!("{other:?}"),
        }

        let mut t = encode_trajectory(&cells(2), true).unwrap();
        t.ids[1 + 18 + 1] = digit_token(3);
        match decode(&t) {
            Err(Error::FrameGrammar { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_input_is_one_unpadded_chunk() {
        let t = TokenSequence::from_ids(vec![digit_token(1); 2560]);
        let chunks = chunk(&t, 2560, 252).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].len(), 2560);
        assert!(chunks[0].attention_mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn long_input_chunks_on_frames() {
        let t = encode_trajectory(&cells(150), false).unwrap();
        assert_eq!(t.len(), 2700);
        let chunks = chunk(&t, 2560, 252).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(&chunks[0].ids[..2556], &t.ids[..2556]);
        assert_eq!(&chunks[1].ids[..396], &t.ids[2304..]);
        assert_eq!(chunks[1].attention_mask.iter().filter(|&&m| m == 1).count(), 396);
        for c in &chunks {
            assert_eq!(c.len(), 2560);
            assert!(decode(c).is_ok());
        }
        assert_eq!(reassemble(&chunks, 252), t);
    }

    #[test]
    fn chunk_config_errors() {
        let t = encode_trajectory(&cells(3), false).unwrap();
        assert!(matches!(chunk(&t, 36, 36), Err(Error::Config(_))));
        assert!(matches!(chunk(&t, 100, 20), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(n in 1usize..40, terminals: bool) {
            let c = cells(n);
            let t = encode_trajectory(&c, terminals).unwrap();
            prop_assert_eq!(t.len(), 18 * n + if terminals { 2 } else { 0 });
            prop_assert_eq!(decode(&t).unwrap(), c);
        }

        #[test]
        fn chunks_reassemble_and_respect_frames(n in 1usize..400, frames in 3usize..150, ov in 0usize..3, terminals: bool) {
            let max_len = frames * 18 + 7;
            let overlap = ov * 18;
            let t = encode_trajectory(&cells(n), terminals).unwrap();
            let chunks = chunk(&t, max_len, overlap).unwrap();
            prop_assert_eq!(reassemble(&chunks, overlap), t.clone());
            for c in &chunks {
                prop_assert!(c.len() <= max_len);
                for (&id, &m) in c.ids.iter().zip(&c.attention_mask) {
                    prop_assert_eq!(m == 0, id == PAD);
                }
                prop_assert!(decode(c).is_ok());
            }
        }
    }
}
