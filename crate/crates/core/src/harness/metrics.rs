//! Bit, block and character error measures.

use serde::Serialize;

use crate::bits::bytes_to_bits;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub bit_errors: usize,
    pub bits: usize,
    pub ber: f64,
    pub block_error: bool,
    pub char_errors: usize,
    pub chars: usize,
    pub cer: f64,
    pub edit_distance: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("aligned metrics need equal lengths ({reference} vs {hypothesis} bytes)")]
pub struct LengthMismatch {
    pub reference: usize,
    pub hypothesis: usize,
}

/// Metrics for equal-length byte strings.
pub fn error_metrics(reference: &[u8], hypothesis: &[u8]) -> Result<ErrorMetrics, LengthMismatch> {
    if reference.len() != hypothesis.len() {
        return Err(LengthMismatch { reference: reference.len(), hypothesis: hypothesis.len() });
    }
    Ok(error_metrics_unaligned(reference, hypothesis))
}

/// Metrics for byte strings of any length. Positions missing from the shorter
/// string count as errors; rates are relative to the reference length.
pub fn error_metrics_unaligned(reference: &[u8], hypothesis: &[u8]) -> ErrorMetrics {
    let (rb, hb) = (bytes_to_bits(reference), bytes_to_bits(hypothesis));
    let bit_errors =
        rb.iter().zip(&hb).filter(|(a, b)| a != b).count() + rb.len().abs_diff(hb.len());
    let char_errors = reference.iter().zip(hypothesis).filter(|(a, b)| a != b).count()
        + reference.len().abs_diff(hypothesis.len());
    let ratio = |e: usize, n: usize| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    ErrorMetrics {
        bit_errors,
        bits: rb.len(),
        ber: ratio(bit_errors, rb.len()),
        block_error: bit_errors > 0,
        char_errors,
        chars: reference.len(),
        cer: ratio(char_errors, reference.len()),
        edit_distance: levenshtein(reference, hypothesis),
    }
}

/// Bit-level metrics over information bits.
pub fn bit_errors(reference: &[u8], hypothesis: &[u8]) -> Result<usize, LengthMismatch> {
    if reference.len() != hypothesis.len() {
        return Err(LengthMismatch { reference: reference.len(), hypothesis: hypothesis.len() });
    }
    Ok(reference.iter().zip(hypothesis).filter(|(a, b)| (*a & 1) != (*b & 1)).count())
}

/// Byte-level Levenshtein distance.
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
