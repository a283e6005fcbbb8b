//! Stupid-backoff n-gram model over trajectory tokens.
//!
//! Two context units are supported. [`Unit::Token`] is the classic model: the
//! context is the last `order - 1` tokens. [`Unit::Frame`] conditions on the
//! last `order - 1` whole positions plus the partially emitted current frame,
//! then backs off to the previous position coarsened to resolutions 9, 8 and
//! 7, then to the partial frame alone, then to add-α unigrams. A single frame
//! spans 18 tokens, so a token-unit model of any practical order never sees
//! the previous position in full.

use std::hash::Hasher;
use std::io::{Read, Write};

use fnv::{FnvHashMap, FnvHasher};

use super::SequenceModel;
use crate::error::{Error, Result};
use crate::tokenizer::{
    base_cell_token, decode_frame, digit_token, TokenId, BASE_CELL_BASE, BOS, DIGIT_BASE, EOS, FRAME_LEN,
    VOCAB_SIZE,
};

pub const NGM_MAGIC: &[u8; 4] = b"NGM1";
const FORMAT_VERSION: u16 = 1;

pub const DEFAULT_ORDER: usize = 8;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BACKOFF: f64 = 0.4;

/// Resolutions the previous position is coarsened to when no exact context matches.
const COARSE_RESOLUTIONS: [u32; 3] = [9, 8, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Token,
    Frame,
}

impl Unit {
    fn tag(self) -> u8 {
        match self {
            Unit::Token => 0,
            Unit::Frame => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Unit::Token),
            1 => Ok(Unit::Frame),
            t => Err(Error::Parse(format!("unknown n-gram unit tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramConfig {
    pub order: usize,
    pub alpha: f64,
    pub backoff: f64,
    pub unit: Unit,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, alpha: DEFAULT_ALPHA, backoff: DEFAULT_BACKOFF, unit: Unit::Frame }
    }
}

impl NGramConfig {
    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing constant must be positive, got {}", self.alpha)));
        }
        if !(self.backoff > 0.0 && self.backoff <= 1.0) {
            return Err(Error::Config(format!("backoff factor {} outside (0, 1]", self.backoff)));
        }
        Ok(())
    }
}

/// Continuation counts for one context, sorted by key.
#[derive(Debug, Clone, PartialEq)]
struct Counts<K> {
    total: u64,
    next: Vec<(K, u32)>,
}

impl<K> Default for Counts<K> {
    fn default() -> Self {
        Self { total: 0, next: Vec::new() }
    }
}

impl<K: Ord + Copy> Counts<K> {
    fn add(&mut self, k: K) {
        self.total += 1;
        match self.next.binary_search_by(|(x, _)| x.cmp(&k)) {
            Ok(i) => self.next[i].1 += 1,
            Err(i) => self.next.insert(i, (k, 1)),
        }
    }
}

type TokenTable = FnvHashMap<u64, Counts<TokenId>>;
type CellTable = FnvHashMap<u64, Counts<u64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    cfg: NGramConfig,
    unigram: Vec<u64>,
    unigram_total: u64,
    /// Token unit: one table per context length `1..order`.
    /// Frame unit: a single table keyed by the partial frame.
    token_tables: Vec<TokenTable>,
    /// Frame unit only: one table per whole-position context length
    /// `1..order`, followed by one per coarse resolution.
    cell_tables: Vec<CellTable>,
}

fn key_tokens(tokens: &[TokenId]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_usize(tokens.len());
    for &t in tokens {
        h.write_u16(t);
    }
    h.finish()
}

fn key_cells(cells: &[u64]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_usize(cells.len());
    for &c in cells {
        h.write_u64(c);
    }
    h.finish()
}

/// Packs base cell and the fifteen digits of a grammatical frame into
/// `base << 45 | d1 << 42 | ... | d15`.
fn frame_code(frame: &[TokenId]) -> u64 {
    let mut code = u64::from(frame[1] - BASE_CELL_BASE) << 45;
    for (i, &t) in frame[2..17].iter().enumerate() {
        code |= u64::from(t - DIGIT_BASE) << (42 - 3 * i);
    }
    code
}

/// Token at frame offset `o` (1..=16) of a packed frame.
fn token_at(code: u64, o: usize) -> TokenId {
    if o == 1 {
        base_cell_token((code >> 45) as u8)
    } else {
        digit_token(((code >> (3 * (16 - o))) & 7) as u8)
    }
}

/// Bits of a packed frame fixed by its first `o` tokens.
fn prefix_mask(o: usize) -> u64 {
    match o {
        0 | 1 => 0,
        _ => !((1u64 << (45 - 3 * (o - 2))) - 1) & ((1u64 << 53) - 1),
    }
}

fn coarsen(code: u64, res: u32) -> u64 {
    code & !((1u64 << (45 - 3 * res)) - 1)
}

/// Partial frame as a packed code; only the bits under `prefix_mask` matter.
fn partial_code(partial: &[TokenId]) -> Option<u64> {
    let mut code = 0;
    for (o, &t) in partial.iter().enumerate().skip(1) {
        code |= match o {
            1 => u64::from(t.checked_sub(BASE_CELL_BASE)?) << 45,
            _ => u64::from(t.checked_sub(DIGIT_BASE).filter(|d| *d < 8)?) << (3 * (16 - o)),
        };
    }
    Some(code)
}

/// Leading `[BOS]` and trailing `[EOS]` removed.
fn body(seq: &[TokenId]) -> &[TokenId] {
    let seq = seq.strip_prefix(&[BOS]).unwrap_or(seq);
    seq.strip_suffix(&[EOS]).unwrap_or(seq)
}

impl NGramModel {
    pub fn train(corpus: &[Vec<TokenId>], cfg: NGramConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyInput("training corpus has no tokens"));
        }
        let mut m = Self {
            cfg,
            unigram: vec![0; VOCAB_SIZE],
            unigram_total: 0,
            token_tables: Vec::new(),
            cell_tables: Vec::new(),
        };
        match cfg.unit {
            Unit::Token => {
                m.token_tables = vec![TokenTable::default(); cfg.order - 1];
                for seq in corpus {
                    m.train_tokens(seq)?;
                }
            }
            Unit::Frame => {
                m.token_tables = vec![TokenTable::default()];
                let coarse = if cfg.order > 1 { COARSE_RESOLUTIONS.len() } else { 0 };
                m.cell_tables = vec![CellTable::default(); cfg.order - 1 + coarse];
                for (i, seq) in corpus.iter().enumerate() {
                    m.train_frames(seq).map_err(|e| match e {
                        Error::FrameGrammar { offset, detail } => {
                            Error::FrameGrammar { offset, detail: format!("sequence {i}: {detail}") }
                        }
                        other => other,
                    })?;
                }
            }
        }
        Ok(m)
    }

    fn count_unigram(&mut self, t: TokenId) -> Result<()> {
        let slot = self
            .unigram
            .get_mut(usize::from(t))
            .ok_or_else(|| Error::Domain(format!("token id {t} outside the vocabulary")))?;
        *slot += 1;
        self.unigram_total += 1;
        Ok(())
    }

    fn train_tokens(&mut self, seq: &[TokenId]) -> Result<()> {
        for i in 0..seq.len() {
            self.count_unigram(seq[i])?;
            for j in 1..=i.min(self.cfg.order - 1) {
                self.token_tables[j - 1].entry(key_tokens(&seq[i - j..i])).or_default().add(seq[i]);
            }
        }
        Ok(())
    }

    fn train_frames(&mut self, seq: &[TokenId]) -> Result<()> {
        let lead = usize::from(seq.first() == Some(&BOS));
        let body = body(seq);
        let mut codes = Vec::with_capacity(body.len() / FRAME_LEN);
        for (f, frame) in body.chunks(FRAME_LEN).enumerate() {
            decode_frame(frame, lead + f * FRAME_LEN)?;
            codes.push(frame_code(frame));
        }
        let k = self.cfg.order;
        for (t, frame) in body.chunks(FRAME_LEN).enumerate() {
            for o in 0..FRAME_LEN {
                self.count_unigram(frame[o])?;
                self.token_tables[0].entry(key_tokens(&frame[..o])).or_default().add(frame[o]);
            }
            for j in 1..=t.min(k - 1) {
                self.cell_tables[j - 1].entry(key_cells(&codes[t - j..t])).or_default().add(codes[t]);
            }
            if t >= 1 && k > 1 {
                for (r, &res) in COARSE_RESOLUTIONS.iter().enumerate() {
                    let key = key_cells(&[coarsen(codes[t - 1], res)]);
                    self.cell_tables[k - 1 + r].entry(key).or_default().add(codes[t]);
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> NGramConfig {
        self.cfg
    }

    /// Number of distinct contexts stored across all tables.
    pub fn context_count(&self) -> usize {
        self.token_tables.iter().map(|t| t.len()).sum::<usize>() + self.cell_tables.iter().map(|t| t.len()).sum::<usize>()
    }

    fn fill_unigram(&self, scores: &mut [Option<f64>], weight: f64) {
        let denom = self.unigram_total as f64 + self.cfg.alpha * VOCAB_SIZE as f64;
        for (s, &c) in scores.iter_mut().zip(&self.unigram) {
            s.get_or_insert(weight * (c as f64 + self.cfg.alpha) / denom);
        }
    }

    fn apply_tokens(scores: &mut [Option<f64>], counts: &Counts<TokenId>, weight: f64) {
        for &(t, c) in &counts.next {
            scores[usize::from(t)].get_or_insert(weight * f64::from(c) / counts.total as f64);
        }
    }

    fn token_scores(&self, prefix: &[TokenId], scores: &mut [Option<f64>]) -> f64 {
        let mut weight = 1.0;
        for j in (1..=prefix.len().min(self.cfg.order - 1)).rev() {
            if let Some(counts) = self.token_tables[j - 1].get(&key_tokens(&prefix[prefix.len() - j..])) {
                Self::apply_tokens(scores, counts, weight);
            }
            weight *= self.cfg.backoff;
        }
        weight
    }

    fn frame_scores(&self, prefix: &[TokenId], scores: &mut [Option<f64>]) -> f64 {
        let body = prefix.strip_prefix(&[BOS]).unwrap_or(prefix);
        let o = body.len() % FRAME_LEN;
        let whole = body.len() / FRAME_LEN;
        let partial = &body[whole * FRAME_LEN..];
        let mut weight = 1.0;

        let history = whole.min(self.cfg.order - 1);
        let codes: Option<Vec<u64>> = (whole - history..whole)
            .map(|f| {
                let frame = &body[f * FRAME_LEN..(f + 1) * FRAME_LEN];
                decode_frame(frame, 0).ok().map(|_| frame_code(frame))
            })
            .collect();
        if let (Some(codes), Some(pcode), 1..=16) = (codes, partial_code(partial), o) {
            let mask = prefix_mask(o);
            let mut apply = |counts: &Counts<u64>, weight: f64| {
                let mut acc = FnvHashMap::<TokenId, u64>::default();
                let mut total = 0;
                for &(code, c) in counts.next.iter().filter(|(code, _)| code & mask == pcode & mask) {
                    *acc.entry(token_at(code, o)).or_default() += u64::from(c);
                    total += u64::from(c);
                }
                for (t, c) in acc {
                    scores[usize::from(t)].get_or_insert(weight * c as f64 / total as f64);
                }
            };
            for j in (1..=codes.len()).rev() {
                if let Some(counts) = self.cell_tables[j - 1].get(&key_cells(&codes[codes.len() - j..])) {
                    apply(counts, weight);
                }
                weight *= self.cfg.backoff;
            }
            if let Some(&prev) = codes.last() {
                for (r, &res) in COARSE_RESOLUTIONS.iter().enumerate() {
                    if let Some(counts) = self.cell_tables[self.cfg.order - 1 + r].get(&key_cells(&[coarsen(prev, res)])) {
                        apply(counts, weight);
                    }
                    weight *= self.cfg.backoff;
                }
            }
        }
        if let Some(counts) = self.token_tables[0].get(&key_tokens(partial)) {
            Self::apply_tokens(scores, counts, weight);
        }
        weight * self.cfg.backoff
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(NGM_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.cfg.unit.tag()])?;
        w.write_all(&(self.cfg.order as u32).to_le_bytes())?;
        w.write_all(&self.cfg.alpha.to_le_bytes())?;
        w.write_all(&self.cfg.backoff.to_le_bytes())?;
        for &c in &self.unigram {
            w.write_all(&c.to_le_bytes())?;
        }
        write_tables(&mut w, &self.token_tables, |w, t| w.write_all(&t.to_le_bytes()))?;
        write_tables(&mut w, &self.cell_tables, |w, c| w.write_all(&c.to_le_bytes()))?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != NGM_MAGIC {
            return Err(Error::Parse("not an NGM1 model file".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported model format version {version}")));
        }
        let [unit] = read_array(&mut r)?;
        let cfg = NGramConfig {
            unit: Unit::from_tag(unit)?,
            order: u32::from_le_bytes(read_array(&mut r)?) as usize,
            alpha: f64::from_le_bytes(read_array(&mut r)?),
            backoff: f64::from_le_bytes(read_array(&mut r)?),
        };
        cfg.validate().map_err(|e| Error::Parse(format!("model header: {e}")))?;
        let mut unigram = Vec::with_capacity(VOCAB_SIZE);
        for _ in 0..VOCAB_SIZE {
            unigram.push(u64::from_le_bytes(read_array(&mut r)?));
        }
        let token_tables = read_tables(&mut r, |r| {
            let t = u16::from_le_bytes(read_array(r)?);
            if usize::from(t) >= VOCAB_SIZE {
                return Err(Error::Parse(format!("token id {t} outside the vocabulary")));
            }
            Ok(t)
        })?;
        let cell_tables = read_tables(&mut r, |r| Ok(u64::from_le_bytes(read_array(r)?)))?;

        let coarse = if cfg.order > 1 { COARSE_RESOLUTIONS.len() } else { 0 };
        let (want_tok, want_cell) = match cfg.unit {
            Unit::Token => (cfg.order - 1, 0),
            Unit::Frame => (1, cfg.order - 1 + coarse),
        };
        if token_tables.len() != want_tok || cell_tables.len() != want_cell {
            return Err(Error::Parse("table count does not match model order".into()));
        }
        let unigram_total = unigram.iter().sum();
        Ok(Self { cfg, unigram, unigram_total, token_tables, cell_tables })
    }
}

impl SequenceModel for NGramModel {
    fn next_token_dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut scores = vec![None; VOCAB_SIZE];
        let weight = match self.cfg.unit {
            Unit::Token => self.token_scores(prefix, &mut scores),
            Unit::Frame => self.frame_scores(prefix, &mut scores),
        };
        self.fill_unigram(&mut scores, weight);
        let raw: Vec<f64> = scores.into_iter().map(|s| s.unwrap_or(0.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|s| s / total).collect()
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Parse("model file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn write_tables<W: Write, K: Copy>(
    w: &mut W,
    tables: &[FnvHashMap<u64, Counts<K>>],
    write_key: impl Fn(&mut W, K) -> std::io::Result<()>,
) -> Result<()> {
    w.write_all(&(tables.len() as u32).to_le_bytes())?;
    for table in tables {
        let mut keys: Vec<&u64> = table.keys().collect();
        keys.sort_unstable();
        w.write_all(&(keys.len() as u64).to_le_bytes())?;
        for key in keys {
            let counts = &table[key];
            w.write_all(&key.to_le_bytes())?;
            w.write_all(&(counts.next.len() as u32).to_le_bytes())?;
            for &(k, c) in &counts.next {
                write_key(w, k)?;
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_tables<R: Read, K: Ord + Copy>(
    r: &mut R,
    read_key: impl Fn(&mut R) -> Result<K>,
) -> Result<Vec<FnvHashMap<u64, Counts<K>>>> {
    let n = u32::from_le_bytes(read_array(r)?);
    if n > 64 {
        return Err(Error::Parse(format!("implausible table count {n}")));
    }
    let mut tables = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let entries = u64::from_le_bytes(read_array(r)?);
        let mut table = FnvHashMap::default();
        for _ in 0..entries {
            let key = u64::from_le_bytes(read_array(r)?);
            let len = u32::from_le_bytes(read_array(r)?);
            let mut counts = Counts { total: 0, next: Vec::new() };
            for _ in 0..len {
                let k = read_key(r)?;
                let c = u32::from_le_bytes(read_array(r)?);
                counts.total += u64::from(c);
                counts.next.push((k, c));
            }
            if counts.next.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Parse("continuation counts are not sorted".into()));
            }
            table.insert(key, counts);
        }
        tables.push(table);
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{offset_m, GeoPoint};
    use crate::h3codec::point_to_pseudo_octal;
    use crate::tokenizer::{encode_trajectory, BOC, EOC};
    use proptest::prelude::*;

    fn token_model(corpus: &[Vec<TokenId>], order: usize) -> NGramModel {
        NGramModel::train(corpus, NGramConfig { order, unit: Unit::Token, ..Default::default() }).unwrap()
    }

    fn argmax(p: &[f64]) -> TokenId {
        let mut best = 0;
        for (i, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = i;
            }
        }
        best as TokenId
    }

    fn route_tokens(n: usize, east_m_per_min: f64) -> Vec<TokenId> {
        let start = GeoPoint::new(43.2, 5.1).unwrap();
        let cells: Vec<_> = (0..n)
            .map(|i| point_to_pseudo_octal(offset_m(start, 0.0, east_m_per_min * i as f64)).unwrap())
            .collect();
        encode_trajectory(&cells, true).unwrap().ids
    }

    #[test]
    fn repeated_token_dominates() {
        let m = token_model(&[vec![42; 50]], 3);
        for prefix in [vec![], vec![42], vec![7, 9], vec![42, 42, 42]] {
            assert_eq!(argmax(&m.next_token_dist(&prefix)), 42);
        }
    }

    #[test]
    fn cyclic_corpus_is_reproduced() {
        let cycle: Vec<TokenId> = vec![20, 31, 20, 45, 60];
        let seq: Vec<TokenId> = cycle.iter().cycle().take(60).copied().collect();
        let m = token_model(&[seq], cycle.len());
        let mut out = cycle[..4].to_vec();
        for _ in 0..40 {
            let next = argmax(&m.next_token_dist(&out));
            out.push(next);
        }
        let expected: Vec<TokenId> = cycle.iter().cycle().take(out.len()).copied().collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn stupid_backoff_by_hand() {
        // bigram counts after 10: 11 twice, 12 once; token 13 only seen as a unigram
        let m = token_model(&[vec![10, 11, 10, 11, 10, 12, 13]], 2);
        let alpha = DEFAULT_ALPHA;
        let uni = |c: f64| 0.4 * (c + alpha) / (7.0 + alpha * 270.0);
        let raw_11 = 2.0 / 3.0;
        let raw_12 = 1.0 / 3.0;
        let raw_13 = uni(1.0);
        let raw_other = uni(0.0);
        let z = raw_11 + raw_12 + raw_13 + 266.0 * raw_other + uni(3.0);
        let p = m.next_token_dist(&[10]);
        assert!((p[11] - raw_11 / z).abs() < 1e-12);
        assert!((p[12] - raw_12 / z).abs() < 1e-12);
        assert!((p[13] - raw_13 / z).abs() < 1e-12);
        assert!((p[10] - uni(3.0) / z).abs() < 1e-12);
        assert!((p[200] - raw_other / z).abs() < 1e-12);
    }

    #[test]
    fn packed_frames() {
        let frame = route_tokens(1, 0.0)[1..19].to_vec();
        let code = frame_code(&frame);
        for o in 1..=16 {
            assert_eq!(token_at(code, o), frame[o]);
        }
        for o in 0..=17 {
            let p = partial_code(&frame[..o]).unwrap();
            assert_eq!(p & prefix_mask(o), code & prefix_mask(o), "offset {o}");
        }
        assert_eq!(prefix_mask(17), (1u64 << 53) - 1);
        assert_eq!(coarsen(code, 15), code);
        assert_eq!(coarsen(code, 10) | 0o77777, code);
    }

    #[test]
    fn frame_model_follows_a_route() {
        let seq = route_tokens(60, 330.0);
        let m = NGramModel::train(std::slice::from_ref(&seq), NGramConfig::default()).unwrap();
        // from 10 frames of context, greedy decoding walks the rest of the route
        let mut out = seq[..1 + 10 * FRAME_LEN].to_vec();
        while out.len() < seq.len() - 1 {
            let next = argmax(&m.next_token_dist(&out));
            out.push(next);
        }
        assert_eq!(out, seq[..seq.len() - 1]);
    }

    #[test]
    fn frame_boundaries() {
        let seq = route_tokens(20, 330.0);
        let m = NGramModel::train(std::slice::from_ref(&seq), NGramConfig::default()).unwrap();
        assert_eq!(argmax(&m.next_token_dist(&seq[..1 + 3 * FRAME_LEN])), BOC);
        assert_eq!(argmax(&m.next_token_dist(&seq[..1 + 3 * FRAME_LEN + 17])), EOC);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(NGramModel::train(&[], NGramConfig::default()), Err(Error::EmptyInput(_))));
        let cfg = NGramConfig { order: 0, ..Default::default() };
        assert!(matches!(NGramModel::train(&[vec![1]], cfg), Err(Error::Config(_))));
        let cfg = NGramConfig { alpha: 0.0, ..Default::default() };
        assert!(NGramModel::train(&[vec![1]], cfg).is_err());
        let mut seq = route_tokens(3, 330.0);
        seq[1 + FRAME_LEN + 5] = BOC;
        match NGramModel::train(&[seq], NGramConfig::default()) {
            Err(Error::FrameGrammar { offset, .. }) => assert_eq!(offset, 1 + FRAME_LEN + 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn persistence_round_trip() {
        for cfg in [NGramConfig::default(), NGramConfig { unit: Unit::Token, order: 4, ..Default::default() }] {
            let m = NGramModel::train(&[route_tokens(30, 300.0), route_tokens(25, 250.0)], cfg).unwrap();
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            assert_eq!(&buf[..4], b"NGM1");
            let back = NGramModel::load(&buf[..]).unwrap();
            assert_eq!(back, m);
            let mut again = Vec::new();
            back.save(&mut again).unwrap();
            assert_eq!(again, buf);
            assert!(NGramModel::load(&buf[..buf.len() - 3]).is_err());
        }
        assert!(NGramModel::load(&b"HTK1...."[..]).is_err());
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(
            corpus in proptest::collection::vec(proptest::collection::vec(0u16..270, 0..40), 1..5),
            prefix in proptest::collection::vec(0u16..270, 0..12),
            order in 1usize..6,
        ) {
            prop_assume!(corpus.iter().any(|s| !s.is_empty()));
            let m = token_model(&corpus, order);
            let p = m.next_token_dist(&prefix);
            prop_assert_eq!(p.len(), VOCAB_SIZE);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn frame_distributions_sum_to_one(cut in 0usize..400, speed in 50.0f64..600.0) {
            let seq = route_tokens(25, speed);
            let m = NGramModel::train(std::slice::from_ref(&seq), NGramConfig::default()).unwrap();
            let p = m.next_token_dist(&seq[..cut.min(seq.len())]);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
