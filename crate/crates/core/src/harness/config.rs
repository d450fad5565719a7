//! Experiment configuration (TOML).
//!
//! ```toml
//! schema_version = 1
//!
//! [code]
//! generators = ["7", "5"]
//! constraint_length = 3
//! recursive = false
//! terminate = true
//!
//! [channel]
//! ebn0_db = [1.0, 2.0, 3.0]
//! seed = 42
//!
//! [[decoders]]
//! kind = "standard"
//!
//! [[decoders]]
//! kind = "llm-viterbi"
//! k = 8
//! n = 5
//!
//! [prior]
//! kind = "ngram"
//! order = 3
//! alpha = 0.01
//! corpus = "train.txt"
//!
//! [stop]
//! target_block_errors = 100
//! max_frames = 2000
//!
//! [corpus]
//! path = "test.txt"
//! min_chars = 80
//! max_chars = 120
//!
//! [output]
//! csv = "results.csv"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::code::{GeneratorSet, Trellis};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub code: CodeConfig,
    pub channel: ChannelConfig,
    pub decoders: Vec<DecoderConfig>,
    #[serde(default)]
    pub prior: PriorConfig,
    pub stop: StopRule,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub generators: Vec<String>,
    pub constraint_length: u32,
    #[serde(default)]
    pub recursive: bool,
    #[serde(default = "yes")]
    pub terminate: bool,
}

impl CodeConfig {
    pub fn trellis(&self) -> Result<Trellis, HarnessError> {
        let g = GeneratorSet::from_octal(&self.generators, self.constraint_length, self.recursive)?;
        Ok(Trellis::new(g))
    }
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            generators: vec!["7".into(), "5".into()],
            constraint_length: 3,
            recursive: false,
            terminate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub ebn0_db: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DecoderConfig {
    Standard,
    Kbest {
        k: usize,
    },
    LlmViterbi {
        k: usize,
        n: usize,
        /// Replaces the channel noise variance in the joint score.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma2_override: Option<f64>,
    },
    OneshotBaseline,
}

impl DecoderConfig {
    pub fn id(&self) -> &'static str {
        match self {
            DecoderConfig::Standard => "standard",
            DecoderConfig::Kbest { .. } => "kbest",
            DecoderConfig::LlmViterbi { .. } => "llm-viterbi",
            DecoderConfig::OneshotBaseline => "oneshot-baseline",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            DecoderConfig::Kbest { k } | DecoderConfig::LlmViterbi { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn n(&self) -> Option<usize> {
        match self {
            DecoderConfig::LlmViterbi { n, .. } => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorConfig {
    #[default]
    Uniform,
    Ngram {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Training corpus, one sentence per line.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corpus: Option<PathBuf>,
        /// Saved model; takes precedence over `corpus`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
    },
    Remote {
        /// Falls back to the `LMVITERBI_ENDPOINT` environment variable.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

fn default_order() -> usize {
    3
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub target_block_errors: u64,
    pub max_frames: u64,
    /// Abort when more than this fraction of frames fail to decode.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_failure_rate() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default = "default_min_chars")]
    pub min_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_chars: Option<usize>,
    #[serde(default = "yes")]
    pub strict_ascii: bool,
}

fn default_min_chars() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Per-frame records, one JSON object per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<PathBuf>,
    /// Record wall-clock decode time. Timings make the CSV irreproducible.
    #[serde(default)]
    pub measure_latency: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        if let PriorConfig::Ngram { corpus, model, .. } = &mut self.prior {
            corpus.iter_mut().for_each(fix);
            model.iter_mut().for_each(fix);
        }
        self.output.csv.iter_mut().for_each(fix);
        self.output.trials.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.code.trellis()?;
        if self.channel.ebn0_db.is_empty() {
            return bad("channel.ebn0_db must list at least one point".into());
        }
        if self.channel.ebn0_db.iter().any(|e| !e.is_finite()) {
            return bad("channel.ebn0_db values must be finite".into());
        }
        if self.decoders.is_empty() {
            return bad("at least one decoder is required".into());
        }
        for d in &self.decoders {
            if d.k() == Some(0) || d.n() == Some(0) {
                return bad(format!("decoder {}: K and N must be at least 1", d.id()));
            }
            if let DecoderConfig::LlmViterbi { sigma2_override: Some(s), .. } = d {
                if !(*s > 0.0 && s.is_finite()) {
                    return bad(format!("sigma2_override {s} must be positive"));
                }
            }
            if matches!(d, DecoderConfig::OneshotBaseline)
                && !matches!(self.prior, PriorConfig::Remote { .. })
            {
                return bad("oneshot-baseline needs a remote prior providing correction".into());
            }
        }
        if self.stop.target_block_errors < 1 {
            return bad("stop.target_block_errors must be at least 1".into());
        }
        if self.stop.max_frames < 1 {
            return bad("stop.max_frames must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.stop.max_failure_rate) {
            return bad("stop.max_failure_rate must lie in [0, 1]".into());
        }
        if let Some(max) = self.corpus.max_chars {
            if max < self.corpus.min_chars {
                return bad("corpus.max_chars is below corpus.min_chars".into());
            }
        }
        if let PriorConfig::Ngram { corpus: None, model: None, .. } = self.prior {
            return bad("ngram prior needs `corpus` or `model`".into());
        }
        if self.output.threads == Some(0) {
            return bad("output.threads must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schema_version = 1
[code]
generators = ["7", "5"]
constraint_length = 3
[channel]
ebn0_db = [1.0, 2.5]
seed = 7
[[decoders]]
kind = "standard"
[[decoders]]
kind = "llm-viterbi"
k = 8
n = 5
[prior]
kind = "ngram"
corpus = "train.txt"
[stop]
target_block_errors = 10
max_frames = 100
[corpus]
path = "test.txt"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert!(cfg.code.terminate);
        assert_eq!(cfg.decoders[1], DecoderConfig::LlmViterbi { k: 8, n: 5, sigma2_override: None });
        assert_eq!(cfg.prior, PriorConfig::Ngram {
            order: 3,
            alpha: 0.01,
            corpus: Some("train.txt".into()),
            model: None
        });
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn resolves_relative_paths() {
        let mut cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        cfg.resolve_paths(Path::new("/data"));
        assert_eq!(cfg.corpus.path, Path::new("/data/test.txt"));
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            EXAMPLE.replace("schema_version = 1", "schema_version = 2"),
            EXAMPLE.replace("ebn0_db = [1.0, 2.5]", "ebn0_db = []"),
            EXAMPLE.replace("target_block_errors = 10", "target_block_errors = 0"),
            EXAMPLE.replace("k = 8", "k = 0"),
            EXAMPLE.replace("kind = \"standard\"", "kind = \"oneshot-baseline\""),
            EXAMPLE.replace("generators = [\"7\", \"5\"]", "generators = [\"9\", \"5\"]"),
            EXAMPLE.replace("seed = 7", "seed = 7\nunknown = 1"),
            EXAMPLE.replace("corpus = \"train.txt\"", ""),
        ];
        for c in cases {
            assert!(ExperimentConfig::from_toml(&c).is_err(), "accepted:\n{c}");
        }
    }
}
