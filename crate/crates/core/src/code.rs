//! Convolutional codes: generator sets, trellis construction, encoding and free distance.
//!
//! Tap masks are `ν` bits wide with the most significant bit multiplying the
//! current input (or, for recursive codes, the feedback-modified register
//! input). A trellis state holds the `ν-1` memory bits with the newest bit in
//! the high position, so the (7,5) code has impulse response `11 10 11`.

use thiserror::Error;

/// Widest supported constraint length.
pub const MAX_CONSTRAINT_LENGTH: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("invalid octal digit in generator {0:?}")]
    InvalidOctal(String),
    #[error("generator {spec:?} does not fit in constraint length {constraint_length}")]
    MaskTooWide { spec: String, constraint_length: u32 },
    #[error("generator masks must be nonzero")]
    ZeroMask,
    #[error("constraint length {0} outside 1..={MAX_CONSTRAINT_LENGTH}")]
    ConstraintLength(u32),
    #[error("need at least {required} generator strings, got {got}")]
    TooFewStreams { required: usize, got: usize },
    #[error("feedback polynomial must tap the register input (most significant bit set)")]
    FeedbackMsbClear,
    #[error("no remerging detour found within {0} steps; the code may be catastrophic")]
    SearchDepthExceeded(usize),
    #[error("info bits must be nonempty")]
    EmptyInput,
}

/// Code rate `1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRate {
    pub streams: usize,
}

impl CodeRate {
    pub fn as_f64(self) -> f64 {
        1.0 / self.streams as f64
    }
}

/// Definition of a rate `1/n` convolutional code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSet {
    constraint_length: u32,
    /// Feedforward tap masks. In recursive mode these are the parity streams
    /// that follow the systematic stream.
    output_taps: Vec<u32>,
    feedback_taps: Option<u32>,
}

impl GeneratorSet {
    /// Feedforward (non-systematic) code.
    pub fn feedforward(constraint_length: u32, output_taps: Vec<u32>) -> Result<Self, CodeError> {
        check_constraint_length(constraint_length)?;
        if output_taps.len() < 2 {
            return Err(CodeError::TooFewStreams { required: 2, got: output_taps.len() });
        }
        for &m in &output_taps {
            check_mask(m, constraint_length, &format!("{m:o}"))?;
        }
        Ok(Self { constraint_length, output_taps, feedback_taps: None })
    }

    /// Recursive systematic code `(1, g_1/f, ..., g_k/f)`.
    pub fn recursive(
        constraint_length: u32,
        parity_taps: Vec<u32>,
        feedback_taps: u32,
    ) -> Result<Self, CodeError> {
        check_constraint_length(constraint_length)?;
        if parity_taps.is_empty() {
            return Err(CodeError::TooFewStreams { required: 2, got: 1 });
        }
        for &m in parity_taps.iter().chain(std::iter::once(&feedback_taps)) {
            check_mask(m, constraint_length, &format!("{m:o}"))?;
        }
        if feedback_taps >> (constraint_length - 1) & 1 == 0 {
            return Err(CodeError::FeedbackMsbClear);
        }
        Ok(Self { constraint_length, output_taps: parity_taps, feedback_taps: Some(feedback_taps) })
    }

    /// Parses octal generator strings.
    ///
    /// In recursive mode the last string is the feedback polynomial and the
    /// others are parity numerators, so `("7", "5")` gives the `(1, 7/5)` code.
    pub fn from_octal<S: AsRef<str>>(
        octal: &[S],
        constraint_length: u32,
        recursive: bool,
    ) -> Result<Self, CodeError> {
        check_constraint_length(constraint_length)?;
        let masks = octal
            .iter()
            .map(|s| {
                let s = s.as_ref();
                let mask = parse_octal(s)?;
                check_mask(mask, constraint_length, s)?;
                Ok(mask)
            })
            .collect::<Result<Vec<_>, CodeError>>()?;
        if recursive {
            if masks.len() < 2 {
                return Err(CodeError::TooFewStreams { required: 2, got: masks.len() });
            }
            let (feedback, parity) = masks.split_last().expect("nonempty");
            Self::recursive(constraint_length, parity.to_vec(), *feedback)
        } else {
            Self::feedforward(constraint_length, masks)
        }
    }

    pub fn constraint_length(&self) -> u32 {
        self.constraint_length
    }

    pub fn output_taps(&self) -> &[u32] {
        &self.output_taps
    }

    pub fn feedback_taps(&self) -> Option<u32> {
        self.feedback_taps
    }

    pub fn is_recursive(&self) -> bool {
        self.feedback_taps.is_some()
    }

    /// Number of coded bits per input bit.
    pub fn streams(&self) -> usize {
        self.output_taps.len() + usize::from(self.is_recursive())
    }

    pub fn rate(&self) -> CodeRate {
        CodeRate { streams: self.streams() }
    }
}

fn check_constraint_length(nu: u32) -> Result<(), CodeError> {
    if (1..=MAX_CONSTRAINT_LENGTH).contains(&nu) {
        Ok(())
    } else {
        Err(CodeError::ConstraintLength(nu))
    }
}

fn check_mask(mask: u32, nu: u32, spec: &str) -> Result<(), CodeError> {
    if mask == 0 {
        return Err(CodeError::ZeroMask);
    }
    if mask >> nu != 0 {
        return Err(CodeError::MaskTooWide { spec: spec.to_owned(), constraint_length: nu });
    }
    Ok(())
}

fn parse_octal(s: &str) -> Result<u32, CodeError> {
    let digits = s.trim();
    if digits.is_empty() || !digits.bytes().all(|b| (b'0'..=b'7').contains(&b)) {
        return Err(CodeError::InvalidOctal(s.to_owned()));
    }
    u32::from_str_radix(digits, 8).map_err(|_| CodeError::InvalidOctal(s.to_owned()))
}

#[inline]
fn parity(x: u32) -> u8 {
    (x.count_ones() & 1) as u8
}

/// One trellis branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub next_state: usize,
    /// Coded bits, first stream in the most significant of the low `n` bits.
    pub output: u32,
}

/// State-transition table of a convolutional code.
#[derive(Debug, Clone)]
pub struct Trellis {
    code: GeneratorSet,
    num_states: usize,
    streams: usize,
    /// Indexed by `state * 2 + input`.
    transitions: Vec<Transition>,
    /// Input that drives the newest memory bit to zero, per state.
    tail_inputs: Vec<u8>,
}

impl Trellis {
    pub fn new(code: GeneratorSet) -> Self {
        let nu = code.constraint_length;
        let memory = nu - 1;
        let num_states = 1usize << memory;
        let memory_mask = (1u32 << memory) - 1;
        let streams = code.streams();
        let mut transitions = Vec::with_capacity(2 * num_states);
        let mut tail_inputs = Vec::with_capacity(num_states);
        for state in 0..num_states as u32 {
            let feedback = code.feedback_taps.map_or(0, |f| parity(state & f & memory_mask));
            tail_inputs.push(feedback);
            for input in 0..2u8 {
                let reg_in = (input ^ feedback) as u32;
                let register = (reg_in << memory) | state;
                let mut output = 0u32;
                if code.is_recursive() {
                    output = input as u32;
                }
                for &taps in &code.output_taps {
                    output = (output << 1) | parity(register & taps) as u32;
                }
                let next_state = if memory == 0 { 0 } else { (register >> 1) as usize };
                transitions.push(Transition { next_state, output });
            }
        }
        Self { code, num_states, streams, transitions, tail_inputs }
    }

    pub fn code(&self) -> &GeneratorSet {
        &self.code
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Coded bits per branch (`n`).
    pub fn streams(&self) -> usize {
        self.streams
    }

    /// Number of zero-tail bits (`ν-1`).
    pub fn tail_len(&self) -> usize {
        self.code.constraint_length as usize - 1
    }

    #[inline]
    pub fn transition(&self, state: usize, input: u8) -> Transition {
        self.transitions[state * 2 + input as usize]
    }

    /// Input bit that moves `state` one step toward the zero state.
    #[inline]
    pub fn tail_input(&self, state: usize) -> u8 {
        self.tail_inputs[state]
    }

    /// Coded bit `i` (0-based stream index) of a branch output.
    #[inline]
    pub fn output_bit(&self, output: u32, i: usize) -> u8 {
        ((output >> (self.streams - 1 - i)) & 1) as u8
    }

    /// Coded bits of the branch `(state, input)` in stream order.
    pub fn output_bits(&self, state: usize, input: u8) -> Vec<u8> {
        let out = self.transition(state, input).output;
        (0..self.streams).map(|i| self.output_bit(out, i)).collect()
    }

    /// Number of coded bits produced for `info_len` information bits.
    pub fn coded_len(&self, info_len: usize, terminate: bool) -> usize {
        self.streams * (info_len + if terminate { self.tail_len() } else { 0 })
    }

    /// Walks the trellis from the zero state and returns the coded bits.
    ///
    /// With `terminate`, `ν-1` tail inputs return the encoder to the zero state.
    pub fn encode(&self, info_bits: &[u8], terminate: bool) -> Result<Vec<u8>, CodeError> {
        if info_bits.is_empty() {
            return Err(CodeError::EmptyInput);
        }
        let mut coded = Vec::with_capacity(self.coded_len(info_bits.len(), terminate));
        let mut state = 0usize;
        let mut push = |state: &mut usize, input: u8| {
            let t = self.transition(*state, input);
            coded.extend((0..self.streams).map(|i| self.output_bit(t.output, i)));
            *state = t.next_state;
        };
        for &b in info_bits {
            push(&mut state, b & 1);
        }
        if terminate {
            for _ in 0..self.tail_len() {
                let u = self.tail_input(state);
                push(&mut state, u);
            }
            debug_assert_eq!(state, 0);
        }
        Ok(coded)
    }

    /// Information bits followed by the tail inputs actually used by [`Trellis::encode`].
    pub fn input_sequence(&self, info_bits: &[u8], terminate: bool) -> Vec<u8> {
        let mut seq: Vec<u8> = info_bits.iter().map(|b| b & 1).collect();
        if terminate {
            let mut state = seq.iter().fold(0, |s, &u| self.transition(s, u).next_state);
            for _ in 0..self.tail_len() {
                let u = self.tail_input(state);
                seq.push(u);
                state = self.transition(state, u).next_state;
            }
        }
        seq
    }

    /// Minimum Hamming weight over detours leaving and re-merging with the zero state.
    pub fn free_distance(&self) -> Result<u32, CodeError> {
        self.free_distance_bounded(64 * self.num_states.max(8))
    }

    /// Breadth-first search over detour depth, tracking the lightest partial
    /// detour per state. Fails when lighter unmerged detours still exist after
    /// `max_depth` steps, which happens for catastrophic codes.
    pub fn free_distance_bounded(&self, max_depth: usize) -> Result<u32, CodeError> {
        const UNREACHED: u32 = u32::MAX;
        let weight = |out: u32| out.count_ones();
        let mut best = UNREACHED;
        let mut active = vec![UNREACHED; self.num_states];
        // First step must leave the zero state with a nonzero input.
        let first = self.transition(0, 1);
        if first.next_state == 0 {
            best = weight(first.output);
        } else {
            active[first.next_state] = weight(first.output);
        }
        for _ in 1..max_depth {
            let lightest = active.iter().copied().min().unwrap_or(UNREACHED);
            if lightest >= best {
                return Ok(best);
            }
            let mut next = vec![UNREACHED; self.num_states];
            for (state, &w) in active.iter().enumerate() {
                if w == UNREACHED {
                    continue;
                }
                for input in 0..2 {
                    let t = self.transition(state, input);
                    let nw = w + weight(t.output);
                    if t.next_state == 0 {
                        best = best.min(nw);
                    } else if nw < next[t.next_state] {
                        next[t.next_state] = nw;
                    }
                }
            }
            active = next;
        }
        let lightest = active.iter().copied().min().unwrap_or(UNREACHED);
        if lightest >= best {
            Ok(best)
        } else {
            Err(CodeError::SearchDepthExceeded(max_depth))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ff(taps: &[&str], nu: u32) -> Trellis {
        Trellis::new(GeneratorSet::from_octal(taps, nu, false).unwrap())
    }

    #[test]
    fn parses_octal_generators() {
        let g = GeneratorSet::from_octal(&["7", "5"], 3, false).unwrap();
        assert_eq!(g.output_taps(), &[0b111, 0b101]);
        let g = GeneratorSet::from_octal(&["35", "23"], 5, false).unwrap();
        assert_eq!(g.output_taps(), &[0b11101, 0b10011]);
        let g = GeneratorSet::from_octal(&["371", "247"], 8, false).unwrap();
        assert_eq!(g.output_taps(), &[0b1111_1001, 0b1010_0111]);
        assert_eq!(g.rate(), CodeRate { streams: 2 });
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(matches!(
            GeneratorSet::from_octal(&["8", "5"], 3, false),
            Err(CodeError::InvalidOctal(_))
        ));
        assert!(matches!(
            GeneratorSet::from_octal(&["17", "5"], 3, false),
            Err(CodeError::MaskTooWide { .. })
        ));
        assert!(matches!(
            GeneratorSet::from_octal(&["7"], 3, false),
            Err(CodeError::TooFewStreams { .. })
        ));
        assert!(matches!(
            GeneratorSet::from_octal(&["0", "5"], 3, false),
            Err(CodeError::ZeroMask)
        ));
        assert!(matches!(
            GeneratorSet::from_octal(&["7", "3"], 3, true),
            Err(CodeError::FeedbackMsbClear)
        ));
        assert!(GeneratorSet::from_octal(&["", "5"], 3, false).is_err());
    }

    #[test]
    fn recursive_branch_labels() {
        let t = Trellis::new(GeneratorSet::from_octal(&["7", "5"], 3, true).unwrap());
        assert_eq!(t.streams(), 2);
        let s00_1 = t.transition(0b00, 1);
        assert_eq!((s00_1.next_state, t.output_bits(0b00, 1)), (0b10, vec![1, 1]));
        let s10_0 = t.transition(0b10, 0);
        assert_eq!((s10_0.next_state, t.output_bits(0b10, 0)), (0b01, vec![0, 1]));
    }

    #[test]
    fn feedforward_branch_label() {
        let t = ff(&["7", "5"], 3);
        assert_eq!(t.transition(0b10, 0).next_state, 0b01);
        assert_eq!(t.output_bits(0b10, 0), vec![1, 0]);
    }

    #[test]
    fn encode_examples() {
        let t = ff(&["7", "5"], 3);
        assert_eq!(t.encode(&[1, 0, 0], false).unwrap(), vec![1, 1, 1, 0, 1, 1]);
        assert_eq!(t.encode(&[1, 1], false).unwrap(), vec![1, 1, 0, 1]);
        assert_eq!(t.encode(&[0; 10], true).unwrap(), vec![0; 24]);
        assert_eq!(t.encode(&[], true), Err(CodeError::EmptyInput));
    }

    #[test]
    fn recursive_termination_returns_to_zero() {
        let t = Trellis::new(GeneratorSet::from_octal(&["7", "5"], 3, true).unwrap());
        let info = [1, 1, 0, 1, 0, 0, 1];
        let seq = t.input_sequence(&info, true);
        let end = seq.iter().fold(0, |s, &u| t.transition(s, u).next_state);
        assert_eq!(end, 0);
        assert_eq!(t.encode(&info, true).unwrap().len(), 2 * (7 + 2));
    }

    #[test]
    fn free_distances() {
        assert_eq!(ff(&["7", "5"], 3).free_distance().unwrap(), 5);
        assert_eq!(ff(&["35", "23"], 5).free_distance().unwrap(), 7);
        assert_eq!(ff(&["1", "1"], 1).free_distance().unwrap(), 2);
        assert_eq!(ff(&["371", "247"], 8).free_distance().unwrap(), 10);
    }

    #[test]
    fn catastrophic_code_is_diagnosed() {
        // (6, 5) = (1+D)(...) share the factor 1+D: an all-ones input has finite output weight.
        let t = ff(&["6", "5"], 3);
        assert_eq!(t.free_distance_bounded(200), Err(CodeError::SearchDepthExceeded(200)));
    }

    #[test]
    fn state_count() {
        for nu in 1..=8 {
            let t = ff(&["1", "1"], nu);
            assert_eq!(t.num_states(), 1 << (nu - 1));
        }
    }
}
