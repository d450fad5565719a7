//! Sentence corpora: one sentence per line.

use std::path::Path;

use super::HarnessError;

/// Loads sentences whose byte length lies in `[min_chars, max_chars]`, in file order.
///
/// With `strict_ascii`, any byte outside 0..=127 is an error. Blank lines are skipped.
pub fn load_corpus(
    path: &Path,
    min_chars: usize,
    max_chars: Option<usize>,
    strict_ascii: bool,
) -> Result<Vec<Vec<u8>>, HarnessError> {
    let data = std::fs::read(path)
        .map_err(|e| HarnessError::Corpus(format!("{}: {e}", path.display())))?;
    parse_corpus(&data, min_chars, max_chars, strict_ascii)
        .map_err(|e| HarnessError::Corpus(format!("{}: {e}", path.display())))
}

pub fn parse_corpus(
    data: &[u8],
    min_chars: usize,
    max_chars: Option<usize>,
    strict_ascii: bool,
) -> Result<Vec<Vec<u8>>, String> {
    let mut out = Vec::new();
    let mut seen = 0usize;
    for (lineno, line) in data.split(|&b| b == b'\n').enumerate() {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        seen += 1;
        if strict_ascii && !line.is_ascii() {
            return Err(format!("line {} contains non-ASCII bytes", lineno + 1));
        }
        if line.len() >= min_chars && max_chars.is_none_or(|m| line.len() <= m) {
            out.push(line.to_vec());
        }
    }
    if seen == 0 {
        return Err("corpus is empty".into());
    }
    if out.is_empty() {
        return Err(format!("none of {seen} sentences passes the length filter"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_filter() {
        let text = format!("{}\n{}\n{}\n", "a".repeat(50), "b".repeat(90), "c".repeat(130));
        let s = parse_corpus(text.as_bytes(), 80, Some(120), true).unwrap();
        assert_eq!(s, vec![b"b".repeat(90)]);
        assert_eq!(parse_corpus(text.as_bytes(), 1, None, true).unwrap().len(), 3);
    }

    #[test]
    fn empty_and_non_ascii() {
        assert!(parse_corpus(b"", 1, None, true).is_err());
        assert!(parse_corpus(b"\n  \n", 1, None, true).is_err());
        let utf8 = "caf\u{e9}\nplain\r\n".as_bytes();
        assert!(parse_corpus(utf8, 1, None, true).is_err());
        assert_eq!(parse_corpus(utf8, 1, None, false).unwrap().len(), 2);
        assert_eq!(parse_corpus(b"x\r\n", 1, None, true).unwrap(), vec![b"x".to_vec()]);
    }

    #[test]
    fn unreadable_file() {
        assert!(load_corpus(Path::new("/nonexistent/corpus.txt"), 1, None, true).is_err());
    }
}
