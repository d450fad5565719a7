//! Conformance checks shared by every [`LmPrior`] implementation.

use std::fmt;

use rand::Rng;

use super::{LmPrior, PriorError, ALPHABET};
use crate::channel::frame_rng;

#[derive(Debug, Clone)]
pub struct ConformanceOptions {
    /// Number of sampled contexts.
    pub contexts: usize,
    pub seed: u64,
    pub additivity_tol: f64,
    pub normalization_tol: f64,
    pub max_context_len: usize,
    pub max_continuation_len: usize,
    /// When given, half of the contexts are slices of this text so that
    /// trained models are probed where they carry information.
    pub sample_text: Option<Vec<u8>>,
}

impl Default for ConformanceOptions {
    fn default() -> Self {
        Self {
            contexts: 100,
            seed: 0x5eed,
            additivity_tol: 1e-6,
            normalization_tol: 1e-4,
            max_context_len: 24,
            max_continuation_len: 8,
            sample_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation (absolute deviation or positive score).
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceReport {
    pub prior: String,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conformance report for {}", self.prior)?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<14} worst={:.3e} tol={:.1e} samples={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.tolerance,
                c.samples
            )?;
        }
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn sample_bytes<R: Rng>(rng: &mut R, opts: &ConformanceOptions, max_len: usize) -> Vec<u8> {
    let len = rng.random_range(0..=max_len);
    match &opts.sample_text {
        Some(text) if !text.is_empty() && rng.random_bool(0.5) => {
            let len = len.min(text.len());
            let start = rng.random_range(0..=text.len() - len);
            text[start..start + len].to_vec()
        }
        _ => (0..len).map(|_| rng.random::<u8>()).collect(),
    }
}

/// Runs chain-rule additivity, normalization, sign and determinism checks.
pub fn run_conformance<P: LmPrior + ?Sized>(
    prior: &P,
    opts: &ConformanceOptions,
) -> Result<ConformanceReport, PriorError> {
    let mut rng = frame_rng(opts.seed, 0);
    let mut additivity = 0.0f64;
    let mut normalization = 0.0f64;
    let mut positivity = 0.0f64;
    let mut determinism = 0.0f64;
    let mut scored = 0usize;

    for _ in 0..opts.contexts {
        let ctx = sample_bytes(&mut rng, opts, opts.max_context_len);
        let a = sample_bytes(&mut rng, opts, opts.max_continuation_len);
        let b = sample_bytes(&mut rng, opts, opts.max_continuation_len);
        let ab: Vec<u8> = a.iter().chain(&b).copied().collect();
        let ctx_a: Vec<u8> = ctx.iter().chain(&a).copied().collect();

        let whole = prior.score(&ctx, &ab)?;
        let first = prior.score(&ctx, &a)?;
        let second = prior.score(&ctx_a, &b)?;
        additivity = additivity.max((whole - (first + second)).abs());
        let again = prior.score(&ctx, &ab)?;
        determinism = determinism.max((whole - again).abs());

        let mut mass = 0.0;
        for byte in 0..ALPHABET {
            let lp = prior.score(&ctx, &[byte as u8])?;
            positivity = positivity.max(lp);
            mass += lp.exp();
        }
        for lp in [whole, first, second] {
            positivity = positivity.max(lp);
        }
        normalization = normalization.max((mass - 1.0).abs());
        scored += 1;
    }

    let check = |name, worst: f64, tolerance| CheckResult {
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
        samples: scored,
    };
    Ok(ConformanceReport {
        prior: prior.describe(),
        checks: vec![
            check("additivity", additivity, opts.additivity_tol),
            check("normalization", normalization, opts.normalization_tol),
            check("nonpositive", positivity.max(0.0), 0.0),
            check("determinism", determinism, 0.0),
        ],
    })
}
