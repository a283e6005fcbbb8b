//! Token corpus files.
//!
//! Text form: one trajectory per line, space-separated decimal ids.
//! Binary form: the magic `HTK1` followed by little-endian `u16` ids, every
//! trajectory wrapped in `[BOS]` ... `[EOS]`.

use std::io::{BufRead, Read, Write};

use super::{TokenId, BOS, EOS, VOCAB_SIZE};
use crate::error::{Error, Result};

pub const HTK_MAGIC: &[u8; 4] = b"HTK1";

pub fn write_text<W: Write>(mut w: W, sequences: &[Vec<TokenId>]) -> Result<()> {
    for seq in sequences {
        let line = seq.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<Vec<Vec<TokenId>>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = line
            .split_ascii_whitespace()
            .map(|tok| parse_id(tok).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<_>>>()?;
        out.push(seq);
    }
    Ok(out)
}

fn parse_id(tok: &str) -> std::result::Result<TokenId, String> {
    let id: TokenId = tok.parse().map_err(|_| format!("bad token id {tok:?}"))?;
    if usize::from(id) >= VOCAB_SIZE {
        return Err(format!("token id {id} outside vocabulary"));
    }
    Ok(id)
}

fn strip_terminals(seq: &[TokenId]) -> &[TokenId] {
    let seq = seq.strip_prefix(&[BOS]).unwrap_or(seq);
    seq.strip_suffix(&[EOS]).unwrap_or(seq)
}

pub fn write_binary<W: Write>(mut w: W, sequences: &[Vec<TokenId>]) -> Result<()> {
    w.write_all(HTK_MAGIC)?;
    let mut buf = Vec::new();
    for seq in sequences {
        buf.clear();
        buf.extend_from_slice(&BOS.to_le_bytes());
        for id in strip_terminals(seq) {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        buf.extend_from_slice(&EOS.to_le_bytes());
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a binary corpus; returned sequences carry no terminals.
pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<Vec<TokenId>>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != HTK_MAGIC {
        return Err(Error::Parse("missing HTK1 magic".into()));
    }
    let body = &bytes[4..];
    if body.len() % 2 != 0 {
        return Err(Error::Parse("odd byte count in HTK1 body".into()));
    }
    let mut out = Vec::new();
    let mut current: Option<Vec<TokenId>> = None;
    for (i, pair) in body.chunks_exact(2).enumerate() {
        let id = u16::from_le_bytes([pair[0], pair[1]]);
        if usize::from(id) >= VOCAB_SIZE {
            return Err(Error::Parse(format!("token {i}: id {id} outside vocabulary")));
        }
        match (id, current.as_mut()) {
            (BOS, None) => current = Some(Vec::new()),
            (EOS, Some(_)) => out.push(current.take().unwrap_or_default()),
            (BOS | EOS, _) => return Err(Error::Parse(format!("token {i}: unbalanced terminal {id}"))),
            (_, Some(seq)) => seq.push(id),
            (_, None) => return Err(Error::Parse(format!("token {i}: id outside a [BOS]..[EOS] block"))),
        }
    }
    if current.is_some() {
        return Err(Error::Parse("truncated HTK1 corpus: missing final [EOS]".into()));
    }
    Ok(out)
}

/// Reads either form, sniffing the magic.
pub fn read_any(bytes: &[u8]) -> Result<Vec<Vec<TokenId>>> {
    if bytes.starts_with(HTK_MAGIC) {
        read_binary(bytes)
    } else {
        let seqs = read_text(bytes)?;
        Ok(seqs.iter().map(|s| strip_terminals(s).to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &[vec![4, 20, 5]]).unwrap();
        assert_eq!(buf, b"HTK1\x01\x00\x04\x00\x14\x00\x05\x00\x02\x00");
        assert_eq!(read_binary(&buf[..]).unwrap(), vec![vec![4, 20, 5]]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_binary(&b"HTK2"[..]).is_err());
        assert!(read_binary(&b"HTK1\x01\x00\x04\x00"[..]).is_err());
        assert!(read_text(&b"1 2 999\n"[..]).is_err());
        assert!(read_text(&b"1 x\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn both_forms_round_trip(seqs in proptest::collection::vec(proptest::collection::vec(3u16..270, 0..50), 0..10)) {
            let mut bin = Vec::new();
            write_binary(&mut bin, &seqs).unwrap();
            prop_assert_eq!(&read_any(&bin).unwrap(), &seqs);
            let mut text = Vec::new();
            write_text(&mut text, &seqs).unwrap();
            let expected: Vec<_> = seqs.iter().filter(|s| !s.is_empty()).cloned().collect();
            prop_assert_eq!(read_any(&text).unwrap(), expected);
        }
    }
}
