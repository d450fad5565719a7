//! Training pairs for a correction model: standard Viterbi output next to the
//! transmitted sentence.
//!
//! One pair per line, `decoded<TAB>clean`. Bytes outside printable ASCII and
//! the backslash are escaped (`\t`, `\n`, `\r`, `\\`, `\xHH`) so every pair
//! stays on one line.

use std::io::Write;

use super::config::ExperimentConfig;
use super::sweep::{stream_id, transmit};
use super::HarnessError;
use crate::viterbi::viterbi_decode;

pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\\' => out.push_str("\\\\"),
            b'\t' => out.push_str("\\t"),
            b'\n' => out.push_str("\\n"),
            b'\r' => out.push_str("\\r"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02x}")),
        }
    }
    out
}

pub fn unescape_bytes(text: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(text.len());
    let mut it = text.bytes();
    while let Some(b) = it.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        match it.next() {
            Some(b'\\') => out.push(b'\\'),
            Some(b't') => out.push(b'\t'),
            Some(b'n') => out.push(b'\n'),
            Some(b'r') => out.push(b'\r'),
            Some(b'x') => {
                let hex = [it.next(), it.next()];
                let [Some(h), Some(l)] = hex else {
                    return Err("truncated \\x escape".into());
                };
                let s = [h, l];
                let s = std::str::from_utf8(&s).map_err(|e| e.to_string())?;
                out.push(u8::from_str_radix(s, 16).map_err(|e| format!("\\x{s}: {e}"))?);
            }
            other => return Err(format!("bad escape {:?}", other.map(char::from))),
        }
    }
    Ok(out)
}

/// Writes `frames` pairs per grid point using the sweep's frame and noise
/// assignment. Returns the number of pairs written.
pub fn export_pairs<W: Write>(
    cfg: &ExperimentConfig,
    corpus: &[Vec<u8>],
    frames: u64,
    mut writer: W,
) -> Result<u64, HarnessError> {
    if corpus.is_empty() {
        return Err(HarnessError::Corpus("no sentences".into()));
    }
    let trellis = cfg.code.trellis()?;
    let mut written = 0;
    for (point, &ebn0_db) in cfg.channel.ebn0_db.iter().enumerate() {
        for frame in 0..frames {
            let message = &corpus[(frame % corpus.len() as u64) as usize];
            let tx = transmit(&trellis, message, cfg.code.terminate, ebn0_db, cfg.channel.seed, stream_id(point, frame))?;
            let bits = viterbi_decode(&trellis, &tx.received, cfg.code.terminate)
                .map_err(|e| HarnessError::Output(e.to_string()))?;
            let decoded: Vec<u8> =
                bits.chunks(8).map(|c| c.iter().fold(0u8, |a, &b| (a << 1) | b)).collect();
            writeln!(writer, "{}\t{}", escape_bytes(&decoded), escape_bytes(message))?;
            written += 1;
        }
    }
    writer.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_round_trips() {
        let all: Vec<u8> = (0..=255).collect();
        let escaped = escape_bytes(&all);
        assert!(!escaped.contains('\t') && !escaped.contains('\n'));
        assert_eq!(unescape_bytes(&escaped).unwrap(), all);
        assert_eq!(escape_bytes(b"a\tb\\"), "a\\tb\\\\");
        assert!(unescape_bytes("\\x4").is_err());
        assert!(unescape_bytes("\\q").is_err());
    }
}
