//! Autoregressive priors over byte sequences.
//!
//! All scores are natural-log probabilities over the full 256-value byte
//! alphabet: `score(c, t)` is `log P(t | c)` summed over the bytes of `t`.

use std::sync::Arc;

use thiserror::Error;

pub mod bridge;
pub mod conformance;
pub mod ngram;
pub mod remote;

pub use ngram::ByteNGramModel;
pub use remote::RemotePrior;

/// Alphabet size of every prior.
pub const ALPHABET: usize = 256;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("cannot reach language-model bridge: {0}")]
    Connection(String),
    #[error("language-model bridge timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed bridge reply: {0}")]
    Protocol(String),
    #[error("bridge reported an error: {0}")]
    Remote(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid n-gram parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PriorError {
    /// Transport failures that may succeed on a fresh attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            PriorError::Connection(_)
                | PriorError::Timeout(_)
                | PriorError::Protocol(_)
                | PriorError::Remote(_)
        )
    }
}

/// Source of `log P(continuation | context)`.
pub trait LmPrior: Send + Sync {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError>;

    /// Short identifier used in reports.
    fn describe(&self) -> String;
}

impl<P: LmPrior + ?Sized> LmPrior for &P {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        (**self).score(context, continuation)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<P: LmPrior + ?Sized> LmPrior for Box<P> {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        (**self).score(context, continuation)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<P: LmPrior + ?Sized> LmPrior for Arc<P> {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        (**self).score(context, continuation)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Every byte equally likely; the prior implicit in conventional decoding.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPrior;

/// `|continuation| * log(1/256)`.
pub fn uniform_score(_context: &[u8], continuation: &[u8]) -> f64 {
    continuation.len() as f64 * -(ALPHABET as f64).ln()
}

impl LmPrior for UniformPrior {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        Ok(uniform_score(context, continuation))
    }

    fn describe(&self) -> String {
        "uniform".to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_values() {
        assert_abs_diff_eq!(uniform_score(b"", b"x"), -5.5452, epsilon = 1e-4);
        assert_abs_diff_eq!(uniform_score(b"abc", b"wxyz"), 4.0 * (1.0f64 / 256.0).ln());
        assert_eq!(UniformPrior.score(b"q", b"").unwrap(), 0.0);
    }

    #[test]
    fn retriable_classification() {
        assert!(PriorError::Timeout(std::time::Duration::from_secs(1)).is_retriable());
        assert!(PriorError::Protocol("x".into()).is_retriable());
        assert!(!PriorError::EmptyCorpus.is_retriable());
    }
}
