//! Byte n-gram model with add-α smoothing.
//!
//! `P(b | h) = (c(h, b) + α) / (c(h) + 256 α)` where `h` is the previous
//! `order - 1` symbols. Sentence starts are padded with an out-of-band
//! boundary symbol, so the first byte of a text is predicted from a context
//! that no byte sequence can produce.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use sha2::{Digest, Sha256};

use super::{LmPrior, PriorError, ALPHABET};

/// Largest supported order; contexts are packed into a `u64` key.
pub const MAX_ORDER: usize = 8;

const BOUNDARY: u16 = 256;
const RADIX: u64 = 257;
const MAGIC: &str = "lmviterbi-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u8, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByteNGramModel {
    order: usize,
    alpha: f64,
    corpus_sha256: String,
    contexts: HashMap<u64, ContextCounts>,
}

fn push_symbol(key: u64, sym: u16, width: usize) -> u64 {
    if width == 0 {
        return 0;
    }
    (key * RADIX + sym as u64) % RADIX.pow(width as u32)
}

fn boundary_key(width: usize) -> u64 {
    (0..width).fold(0, |k, _| push_symbol(k, BOUNDARY, width))
}

fn key_symbols(mut key: u64, width: usize) -> Vec<u16> {
    let mut syms = vec![0u16; width];
    for s in syms.iter_mut().rev() {
        *s = (key % RADIX) as u16;
        key /= RADIX;
    }
    syms
}

fn check_params(order: usize, alpha: f64) -> Result<(), PriorError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(PriorError::InvalidParameter(format!("order {order} not in 1..={MAX_ORDER}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PriorError::InvalidParameter(format!("alpha {alpha} must be positive")));
    }
    Ok(())
}

/// Trains on sentences; each sentence starts from a fresh boundary context.
pub fn train_ngram<S: AsRef<[u8]>>(
    sentences: &[S],
    order: usize,
    alpha: f64,
) -> Result<ByteNGramModel, PriorError> {
    check_params(order, alpha)?;
    if sentences.iter().all(|s| s.as_ref().is_empty()) {
        return Err(PriorError::EmptyCorpus);
    }
    let width = order - 1;
    let mut hasher = Sha256::new();
    let mut contexts: HashMap<u64, ContextCounts> = HashMap::new();
    for s in sentences {
        let s = s.as_ref();
        hasher.update(s);
        hasher.update(b"\n");
        let mut key = boundary_key(width);
        for &b in s {
            let c = contexts.entry(key).or_default();
            c.total += 1;
            *c.next.entry(b).or_default() += 1;
            key = push_symbol(key, b as u16, width);
        }
    }
    Ok(ByteNGramModel {
        order,
        alpha,
        corpus_sha256: hex::encode(hasher.finalize()),
        contexts,
    })
}

impl ByteNGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn corpus_sha256(&self) -> &str {
        &self.corpus_sha256
    }

    /// Same counts, different smoothing constant.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, PriorError> {
        check_params(self.order, alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }

    fn context_key(&self, history: &[u8]) -> u64 {
        let width = self.order - 1;
        let start = history.len().saturating_sub(width);
        let mut key = boundary_key(width);
        for &b in &history[start..] {
            key = push_symbol(key, b as u16, width);
        }
        key
    }

    fn log_prob_keyed(&self, key: u64, byte: u8) -> f64 {
        let denom_extra = self.alpha * ALPHABET as f64;
        match self.contexts.get(&key) {
            Some(c) => {
                let count = c.next.get(&byte).copied().unwrap_or(0) as f64;
                ((count + self.alpha) / (c.total as f64 + denom_extra)).ln()
            }
            None => -(ALPHABET as f64).ln(),
        }
    }

    /// `log P(byte | history)`.
    pub fn log_prob(&self, history: &[u8], byte: u8) -> f64 {
        self.log_prob_keyed(self.context_key(history), byte)
    }

    /// Sum of `log P(b_i | b_<i)` over the continuation.
    pub fn ngram_score(&self, context: &[u8], continuation: &[u8]) -> f64 {
        let width = self.order - 1;
        let mut key = self.context_key(context);
        let mut total = 0.0;
        for &b in continuation {
            total += self.log_prob_keyed(key, b);
            key = push_symbol(key, b as u16, width);
        }
        total
    }

    /// Total log-likelihood of sentences scored from the boundary context.
    pub fn log_likelihood<S: AsRef<[u8]>>(&self, sentences: &[S]) -> f64 {
        sentences.iter().map(|s| self.ngram_score(b"", s.as_ref())).sum()
    }

    /// Writes the versioned text format.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), PriorError> {
        let width = self.order - 1;
        writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(w, "order {}", self.order)?;
        writeln!(w, "alpha {:e}", self.alpha)?;
        writeln!(w, "corpus_sha256 {}", self.corpus_sha256)?;
        writeln!(w, "contexts {}", self.contexts.len())?;
        let mut keys: Vec<_> = self.contexts.keys().copied().collect();
        keys.sort_by_key(|&k| key_symbols(k, width));
        for k in keys {
            let mut line = key_symbols(k, width)
                .iter()
                .map(|&s| if s == BOUNDARY { "^".to_owned() } else { s.to_string() })
                .collect::<Vec<_>>()
                .join(",");
            if line.is_empty() {
                line.push('-');
            }
            for (b, c) in &self.contexts[&k].next {
                write!(line, " {b}:{c}").expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, PriorError> {
        let bad = |msg: &str| PriorError::Model(msg.to_owned());
        let mut lines = BufReader::new(r).lines();
        let mut header = |name: &str| -> Result<String, PriorError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))??;
            let (key, value) =
                line.split_once(' ').ok_or_else(|| bad(&format!("bad header line {line:?}")))?;
            if key != name {
                return Err(bad(&format!("expected {name:?}, found {key:?}")));
            }
            Ok(value.trim().to_owned())
        };
        let version: u32 = header(MAGIC)?.parse().map_err(|_| bad("bad version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let order: usize = header("order")?.parse().map_err(|_| bad("bad order"))?;
        let alpha: f64 = header("alpha")?.parse().map_err(|_| bad("bad alpha"))?;
        check_params(order, alpha)?;
        let corpus_sha256 = header("corpus_sha256")?;
        let count: usize = header("contexts")?.parse().map_err(|_| bad("bad context count"))?;
        let width = order - 1;
        let mut contexts = HashMap::with_capacity(count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let ctx = fields.next().ok_or_else(|| bad("empty context line"))?;
            let syms: Vec<u16> = if ctx == "-" {
                Vec::new()
            } else {
                ctx.split(',')
                    .map(|s| if s == "^" { Ok(BOUNDARY) } else { s.parse::<u8>().map(u16::from) })
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(&format!("bad context {ctx:?}")))?
            };
            if syms.len() != width {
                return Err(bad(&format!("context {ctx:?} has wrong width")));
            }
            let key = syms.iter().fold(0, |k, &s| push_symbol(k, s, width));
            let mut counts = ContextCounts::default();
            for f in fields {
                let (b, c) = f.split_once(':').ok_or_else(|| bad(&format!("bad entry {f:?}")))?;
                let b: u8 = b.parse().map_err(|_| bad(&format!("bad byte {b:?}")))?;
                let c: u64 = c.parse().map_err(|_| bad(&format!("bad count {c:?}")))?;
                counts.total += c;
                counts.next.insert(b, c);
            }
            contexts.insert(key, counts);
        }
        if contexts.len() != count {
            return Err(bad(&format!("expected {count} contexts, read {}", contexts.len())));
        }
        Ok(Self { order, alpha, corpus_sha256, contexts })
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), PriorError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Self, PriorError> {
        Self::load(std::fs::File::open(path)?)
    }
}

impl LmPrior for ByteNGramModel {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        Ok(self.ngram_score(context, continuation))
    }

    fn describe(&self) -> String {
        format!("ngram(order={}, alpha={})", self.order, self.alpha)
    }
}
