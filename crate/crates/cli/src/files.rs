//! Plain-text frame files.
//!
//! Symbol files hold one value per line with 17 significant digits, enough
//! to read back the exact `f64`. Bits files hold a single line of `0`/`1`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context};

pub fn write_symbols<W: Write>(mut w: W, symbols: &[f64]) -> io::Result<()> {
    for y in symbols {
        writeln!(w, "{y:.16e}")?;
    }
    w.flush()
}

pub fn read_symbols(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: f64 = line.parse().with_context(|| format!("{}:{}: {line:?}", path.display(), i + 1))?;
        if !y.is_finite() {
            bail!("{}:{}: non-finite symbol", path.display(), i + 1);
        }
        out.push(y);
    }
    Ok(out)
}

pub fn write_bits<W: Write>(mut w: W, bits: &[u8]) -> io::Result<()> {
    let line: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
    writeln!(w, "{line}")?;
    w.flush()
}

pub fn read_bits(path: &Path) -> anyhow::Result<Vec<u8>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => bail!("{}: unexpected {other:?} in bits file", path.display()),
        })
        .collect()
}
