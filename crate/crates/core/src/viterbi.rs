//! Soft-decision Viterbi and K-best list Viterbi decoding.
//!
//! Branch metrics are squared Euclidean distances between received symbols
//! and the BPSK image of the branch output. Metric ties are broken toward
//! the lexicographically smaller input-bit history.

use std::cmp::Ordering;

use thiserror::Error;

use crate::bits::BitHistory;
use crate::channel::SymbolFrame;
use crate::code::Trellis;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("frame of {len} symbols is not a multiple of {streams} symbols per branch")]
    FrameLength { len: usize, streams: usize },
    #[error("frame of {steps} trellis steps is shorter than the {tail} tail steps")]
    FrameTooShort { steps: usize, tail: usize },
    #[error("{0} information bits do not form whole bytes")]
    PartialByte(usize),
    #[error("received symbol {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("list size K must be at least 1")]
    ZeroK,
}

/// Squared Euclidean distance between received symbols and BPSK-mapped bits.
pub fn branch_metric<T: Real>(received: &[T], expected_bits: &[u8]) -> Result<T, DecodeError> {
    if received.len() != expected_bits.len() {
        return Err(DecodeError::LengthMismatch {
            expected: expected_bits.len(),
            got: received.len(),
        });
    }
    Ok(received.iter().zip(expected_bits).map(|(&y, &b)| sq_dist(y, b)).sum())
}

#[inline]
fn sq_dist<T: Real>(y: T, bit: u8) -> T {
    let x = if bit & 1 == 0 { T::one() } else { -T::one() };
    (y - x) * (y - x)
}

#[inline]
fn branch_metric_packed<T: Real>(trellis: &Trellis, received: &[T], output: u32) -> T {
    received
        .iter()
        .enumerate()
        .map(|(i, &y)| sq_dist(y, trellis.output_bit(output, i)))
        .fold(T::zero(), |a, b| a + b)
}

/// Checked view of a received frame: trellis step count and information length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub steps: usize,
    pub info_len: usize,
    pub terminated: bool,
}

impl FrameLayout {
    pub fn new<T: Real>(
        trellis: &Trellis,
        received: &SymbolFrame<T>,
        terminated: bool,
    ) -> Result<Self, DecodeError> {
        let n = trellis.streams();
        if !received.len().is_multiple_of(n) {
            return Err(DecodeError::FrameLength { len: received.len(), streams: n });
        }
        if let Some(index) = received.symbols.iter().position(|y| !y.is_finite()) {
            return Err(DecodeError::NonFinite { index });
        }
        let steps = received.len() / n;
        let tail = if terminated { trellis.tail_len() } else { 0 };
        if steps < tail {
            return Err(DecodeError::FrameTooShort { steps, tail });
        }
        Ok(Self { steps, info_len: steps - tail, terminated })
    }
}

/// Recomputes the cumulative metric of an input sequence from the zero state.
pub fn path_metric<T: Real>(trellis: &Trellis, received: &[T], inputs: &[u8]) -> T {
    let n = trellis.streams();
    let mut state = 0;
    let mut m = T::zero();
    for (step, &u) in inputs.iter().enumerate() {
        let t = trellis.transition(state, u);
        m = m + branch_metric_packed(trellis, &received[step * n..(step + 1) * n], t.output);
        state = t.next_state;
    }
    m
}

/// Maximum-likelihood decoding; returns the information bits (tail stripped).
///
/// A terminated frame is traced back from the zero state, otherwise from the
/// state with the smallest final metric.
pub fn viterbi_decode<T: Real>(
    trellis: &Trellis,
    received: &SymbolFrame<T>,
    terminated: bool,
) -> Result<Vec<u8>, DecodeError> {
    let layout = FrameLayout::new(trellis, received, terminated)?;
    let n = trellis.streams();
    let states = trellis.num_states();
    let inf = T::infinity();

    let mut metrics = vec![inf; states];
    metrics[0] = T::zero();
    // decisions[step * states + s] = (previous state, input) of the survivor at s.
    let mut decisions: Vec<(u32, u8)> = vec![(0, 0); layout.steps * states];
    let mut next = vec![inf; states];

    for step in 0..layout.steps {
        let y = &received.symbols[step * n..(step + 1) * n];
        next.fill(inf);
        let in_tail = step >= layout.info_len;
        for (s, &m) in metrics.iter().enumerate() {
            if m == inf {
                continue;
            }
            let tail_input = [trellis.tail_input(s)];
            let inputs: &[u8] = if in_tail { &tail_input } else { &[0, 1] };
            for &u in inputs {
                let t = trellis.transition(s, u);
                let cand = m + branch_metric_packed(trellis, y, t.output);
                let slot = step * states + t.next_state;
                let better = match cand.partial_cmp(&next[t.next_state]) {
                    Some(Ordering::Less) => true,
                    Some(Ordering::Equal) => {
                        let (ps, pu) = decisions[slot];
                        compare_histories(&decisions, states, step, (s as u32, u), (ps, pu))
                            == Ordering::Less
                    }
                    _ => false,
                };
                if better {
                    next[t.next_state] = cand;
                    decisions[slot] = (s as u32, u);
                }
            }
        }
        std::mem::swap(&mut metrics, &mut next);
    }

    let end = if terminated {
        0
    } else {
        let mut best = 0;
        for s in 1..states {
            let ord = metrics[s].partial_cmp(&metrics[best]).unwrap_or(Ordering::Greater);
            let tie_smaller = ord == Ordering::Equal
                && traceback(&decisions, states, layout.steps, s)
                    < traceback(&decisions, states, layout.steps, best);
            if ord == Ordering::Less || tie_smaller {
                best = s;
            }
        }
        best
    };
    let mut bits = traceback(&decisions, states, layout.steps, end);
    bits.truncate(layout.info_len);
    Ok(bits)
}

/// Input history of the survivor ending at `state` after `steps` steps.
fn traceback(decisions: &[(u32, u8)], states: usize, steps: usize, state: usize) -> Vec<u8> {
    let mut bits = vec![0u8; steps];
    let mut s = state;
    for step in (0..steps).rev() {
        let (prev, u) = decisions[step * states + s];
        bits[step] = u;
        s = prev as usize;
    }
    bits
}

/// Compares two candidate histories arriving at the same state at `step`,
/// each given as (predecessor state, input).
fn compare_histories(
    decisions: &[(u32, u8)],
    states: usize,
    step: usize,
    a: (u32, u8),
    b: (u32, u8),
) -> Ordering {
    let mut ha = traceback(decisions, states, step, a.0 as usize);
    ha.push(a.1);
    let mut hb = traceback(decisions, states, step, b.0 as usize);
    hb.push(b.1);
    ha.cmp(&hb)
}

/// Cached language-model score of a path's leading characters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LmCache {
    pub scored_chars: usize,
    pub logprob: f64,
}

/// One surviving trellis path.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodePath<T> {
    pub state: usize,
    pub metric: T,
    pub bits: BitHistory,
    /// Completed bytes over information bits.
    pub chars: Vec<u8>,
    /// `char_metrics[j]` is the cumulative metric after `j` characters; entry 0 is zero.
    pub char_metrics: Vec<T>,
    pub lm_cache: LmCache,
}

impl<T: Real> DecodePath<T> {
    /// The empty path at the zero state.
    pub fn root() -> Self {
        Self {
            state: 0,
            metric: T::zero(),
            bits: BitHistory::new(),
            chars: Vec::new(),
            char_metrics: vec![T::zero()],
            lm_cache: LmCache::default(),
        }
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    /// Cumulative metric after the first `j` characters.
    pub fn metric_at_char(&self, j: usize) -> T {
        self.char_metrics[j]
    }

    /// Information bits (first `info_len` bits of the history).
    pub fn info_bits(&self, info_len: usize) -> Vec<u8> {
        self.bits.iter().take(info_len).collect()
    }

    /// Extends along `input`, assembling a byte every eighth information bit.
    fn extend(&self, trellis: &Trellis, input: u8, received_step: &[T], info_bit: bool) -> Self {
        let mut p = self.clone();
        p.advance(trellis, input, received_step, info_bit);
        p
    }

    fn advance(&mut self, trellis: &Trellis, input: u8, received_step: &[T], info_bit: bool) {
        let t = trellis.transition(self.state, input);
        self.metric = self.metric + branch_metric_packed(trellis, received_step, t.output);
        self.state = t.next_state;
        self.bits.push(input);
        if info_bit && self.bits.len().is_multiple_of(8) {
            self.chars.push(self.bits.byte_at(self.chars.len()));
            self.char_metrics.push(self.metric);
        }
    }
}

/// Path order: metric ascending, then bit history.
pub fn rank_order<T: Real>(a: &DecodePath<T>, b: &DecodePath<T>) -> Ordering {
    a.metric
        .partial_cmp(&b.metric)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.bits.cmp(&b.bits))
}

/// Extends every path along both branches and keeps the `k` best arrivals per
/// successor state. The result is indexed by successor state.
pub fn kbest_step<T: Real>(
    paths: &[DecodePath<T>],
    trellis: &Trellis,
    received_step: &[T],
    k: usize,
) -> Result<Vec<Vec<DecodePath<T>>>, DecodeError> {
    if k == 0 {
        return Err(DecodeError::ZeroK);
    }
    if received_step.len() != trellis.streams() {
        return Err(DecodeError::LengthMismatch {
            expected: trellis.streams(),
            got: received_step.len(),
        });
    }
    let mut buckets: Vec<Vec<DecodePath<T>>> = vec![Vec::new(); trellis.num_states()];
    for p in paths {
        for u in 0..2 {
            let q = p.extend(trellis, u, received_step, true);
            buckets[q.state].push(q);
        }
    }
    for b in &mut buckets {
        b.sort_by(rank_order);
        b.truncate(k);
    }
    Ok(buckets)
}

/// Survivor set of a K-best trellis search, advanced one trellis step at a time.
#[derive(Debug, Clone)]
pub struct KBestSearch<'a, T> {
    trellis: &'a Trellis,
    k: usize,
    paths: Vec<DecodePath<T>>,
}

impl<'a, T: Real> KBestSearch<'a, T> {
    pub fn new(trellis: &'a Trellis, k: usize) -> Result<Self, DecodeError> {
        if k == 0 {
            return Err(DecodeError::ZeroK);
        }
        Ok(Self { trellis, k, paths: vec![DecodePath::root()] })
    }

    pub fn paths(&self) -> &[DecodePath<T>] {
        &self.paths
    }

    pub fn into_paths(self) -> Vec<DecodePath<T>> {
        self.paths
    }

    pub fn take_paths(&mut self) -> Vec<DecodePath<T>> {
        std::mem::take(&mut self.paths)
    }

    pub fn replace_paths(&mut self, paths: Vec<DecodePath<T>>) {
        self.paths = paths;
    }

    /// One information-bit step: both branches, `k` survivors per state.
    /// Survivors come out grouped by state, each group in rank order.
    pub fn advance_info(&mut self, received_step: &[T]) {
        let states = self.trellis.num_states();
        let mut buckets: Vec<Vec<DecodePath<T>>> = vec![Vec::new(); states];
        for mut p in self.paths.drain(..) {
            let mut q = p.clone();
            p.advance(self.trellis, 0, received_step, true);
            q.advance(self.trellis, 1, received_step, true);
            buckets[p.state].push(p);
            buckets[q.state].push(q);
        }
        for mut b in buckets {
            b.sort_by(rank_order);
            b.truncate(self.k);
            self.paths.append(&mut b);
        }
    }

    /// One zero-tail step. Each path has a single forced successor, so the
    /// survivor count cannot grow and no per-state truncation is applied.
    pub fn advance_tail(&mut self, received_step: &[T]) {
        for p in &mut self.paths {
            let u = self.trellis.tail_input(p.state);
            p.advance(self.trellis, u, received_step, false);
        }
    }
}

/// K-best list decoding. Returns up to `k` complete paths in rank order; the
/// first equals the [`viterbi_decode`] result.
pub fn kbest_decode<T: Real>(
    trellis: &Trellis,
    received: &SymbolFrame<T>,
    k: usize,
    terminated: bool,
) -> Result<Vec<DecodePath<T>>, DecodeError> {
    let layout = FrameLayout::new(trellis, received, terminated)?;
    let mut search = KBestSearch::new(trellis, k)?;
    let n = trellis.streams();
    for step in 0..layout.steps {
        let y = &received.symbols[step * n..(step + 1) * n];
        if step < layout.info_len {
            search.advance_info(y);
        } else {
            search.advance_tail(y);
        }
    }
    let mut paths = search.into_paths();
    if terminated {
        paths.retain(|p| p.state == 0);
    }
    paths.sort_by(rank_order);
    paths.truncate(k);
    Ok(paths)
}
