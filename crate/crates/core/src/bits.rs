//! Packed bit histories.

use std::cmp::Ordering;

/// Append-only bit sequence packed MSB-first into 64-bit words.
///
/// Ordering is lexicographic over the bits, first bit most significant, with
/// a shorter prefix ordering before its extensions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitHistory {
    words: Vec<u64>,
    len: usize,
}

impl BitHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { words: Vec::with_capacity(bits.div_ceil(64)), len: 0 }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut h = Self::with_capacity(bits.len());
        for &b in bits {
            h.push(b);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: u8) {
        let offset = self.len % 64;
        if offset == 0 {
            self.words.push(0);
        }
        if bit & 1 == 1 {
            *self.words.last_mut().expect("word pushed above") |= 1u64 << (63 - offset);
        }
        self.len += 1;
    }

    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        ((self.words[i / 64] >> (63 - i % 64)) & 1) as u8
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.iter().collect()
    }

    /// The byte formed by bits `8*index .. 8*index+8`, first bit as bit 7.
    pub fn byte_at(&self, index: usize) -> u8 {
        let start = index * 8;
        assert!(start + 8 <= self.len);
        let word = self.words[start / 64];
        let shift = 56 - (start % 64);
        (word >> shift) as u8
    }
}

impl Ord for BitHistory {
    fn cmp(&self, other: &Self) -> Ordering {
        // Unused trailing bits are zero, so word order equals bit order up to
        // the shorter length; ties fall back to length.
        self.words.cmp(&other.words).then(self.len.cmp(&other.len))
    }
}

impl PartialOrd for BitHistory {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Unpacks bytes to bits, most significant bit first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}
