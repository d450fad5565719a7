#![allow(dead_code)]

use lmviterbi::channel::frame_rng;
use lmviterbi::{bpsk_modulate, GeneratorSet, LmPrior, Trellis};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn code(taps: &[&str], nu: u32) -> Trellis {
    Trellis::new(GeneratorSet::from_octal(taps, nu, false).unwrap())
}

pub fn random_bits<R: Rng>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}

pub fn int_to_bits(value: u64, len: usize) -> Vec<u8> {
    (0..len).rev().map(|i| ((value >> i) & 1) as u8).collect()
}

/// Squared Euclidean distance between received symbols and a codeword's BPSK image.
pub fn distance(received: &[f64], coded: &[u8]) -> f64 {
    let clean = bpsk_modulate::<f64>(coded);
    received.iter().zip(&clean.symbols).map(|(y, x)| (y - x) * (y - x)).sum()
}

/// Every information sequence of length `len` with its codeword distance,
/// sorted by (distance, bits).
pub fn exhaustive_ranking(trellis: &Trellis, received: &[f64], len: usize, terminate: bool) -> Vec<(f64, Vec<u8>)> {
    let mut all: Vec<(f64, Vec<u8>)> = (0..1u64 << len)
        .map(|v| {
            let bits = int_to_bits(v, len);
            let coded = trellis.encode(&bits, terminate).unwrap();
            (distance(received, &coded), bits)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    all
}

/// Brute-force maximiser of `log P(t) - M / (2σ²)` over all single bytes.
pub fn exhaustive_map_byte<P: LmPrior>(trellis: &Trellis, received: &[f64], prior: &P, sigma2: f64) -> u8 {
    let mut best = (f64::NEG_INFINITY, 0u8);
    for b in 0..=255u8 {
        let bits = int_to_bits(b as u64, 8);
        let coded = trellis.encode(&bits, true).unwrap();
        let score = prior.score(b"", &[b]).unwrap() - distance(received, &coded) / (2.0 * sigma2);
        if score > best.0 {
            best = (score, b);
        }
    }
    best.1
}

pub const VOCABULARY: [&str; 50] = [
    "the", "a", "man", "woman", "dog", "cat", "child", "girl", "boy", "people",
    "is", "are", "was", "sitting", "running", "playing", "walking", "eating", "looking", "standing",
    "on", "in", "at", "with", "near", "under", "over", "beside", "through", "behind",
    "park", "street", "beach", "table", "house", "water", "grass", "road", "field", "window",
    "red", "blue", "green", "small", "large", "old", "young", "happy", "white", "black",
];

/// Sentences of random words from [`VOCABULARY`], capitalised and ending in a period.
pub fn synthetic_corpus(sentences: usize, words: std::ops::RangeInclusive<usize>, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = frame_rng(seed, 0);
    (0..sentences)
        .map(|_| {
            let n = rng.random_range(words.clone());
            let mut s: Vec<String> = (0..n).map(|_| VOCABULARY.choose(&mut rng).unwrap().to_string()).collect();
            s[0][..1].make_ascii_uppercase();
            let mut line = s.join(" ");
            line.push('.');
            line.into_bytes()
        })
        .collect()
}
