//! BPSK over a real AWGN channel.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::code::CodeRate;
use crate::scalar::Real;

/// Modulated or received symbols, one per coded bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame<T> {
    pub symbols: Vec<T>,
}

impl<T: Real> SymbolFrame<T> {
    pub fn new(symbols: Vec<T>) -> Self {
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Hard decision: negative symbols map to bit 1.
    pub fn hard_decision(&self) -> Vec<u8> {
        self.symbols.iter().map(|&y| u8::from(y < T::zero())).collect()
    }
}

/// Noise parameters for one frame.
///
/// The noise stream is ChaCha12 keyed by `seed` with stream id `stream`, so
/// frames with distinct stream ids draw independent noise regardless of the
/// order in which they are simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    pub sigma: T,
    pub ebn0_db: f64,
    pub seed: u64,
    pub stream: u64,
}

impl<T: Real> NoiseSpec<T> {
    /// Noise calibrated to `ebn0_db` for a code of the given rate.
    pub fn from_ebn0(ebn0_db: f64, rate: CodeRate, seed: u64, stream: u64) -> Self {
        Self { sigma: T::from_f64_lossy(ebn0_to_sigma(ebn0_db, rate)), ebn0_db, seed, stream }
    }

    pub fn variance(&self) -> T {
        self.sigma * self.sigma
    }

    pub fn rng(&self) -> ChaCha12Rng {
        frame_rng(self.seed, self.stream)
    }
}

/// Deterministic per-frame random stream.
pub fn frame_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Maps bit 0 to +1 and bit 1 to -1.
pub fn bpsk_modulate<T: Real>(bits: &[u8]) -> SymbolFrame<T> {
    SymbolFrame::new(
        bits.iter().map(|&b| if b & 1 == 0 { T::one() } else { -T::one() }).collect(),
    )
}

/// Per-dimension noise standard deviation for unit-energy BPSK:
/// `σ² = 1 / (2 R Eb/N0)`.
///
/// `rate` is the nominal `1/n`; termination overhead is not charged to `Eb`.
pub fn ebn0_to_sigma(ebn0_db: f64, rate: CodeRate) -> f64 {
    let gamma = 10f64.powf(ebn0_db / 10.0);
    (1.0 / (2.0 * rate.as_f64() * gamma)).sqrt()
}

/// Adds i.i.d. Gaussian noise drawn from the stream named by `noise`.
pub fn awgn_apply<T>(frame: &SymbolFrame<T>, noise: &NoiseSpec<T>) -> SymbolFrame<T>
where
    T: Real,
    StandardNormal: Distribution<T>,
{
    let mut rng = noise.rng();
    awgn_apply_with(frame, noise.sigma, &mut rng)
}

pub fn awgn_apply_with<T, R>(frame: &SymbolFrame<T>, sigma: T, rng: &mut R) -> SymbolFrame<T>
where
    T: Real,
    R: rand::Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    if sigma == T::zero() {
        return frame.clone();
    }
    SymbolFrame::new(
        frame
            .symbols
            .iter()
            .map(|&x| {
                let z: T = StandardNormal.sample(rng);
                x + sigma * z
            })
            .collect(),
    )
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Bit error rate of uncoded BPSK: `Q(sqrt(2 Eb/N0))`.
pub fn theoretical_uncoded_ber(ebn0_db: f64) -> f64 {
    let gamma = 10f64.powf(ebn0_db / 10.0);
    q_function((2.0 * gamma).sqrt())
}
