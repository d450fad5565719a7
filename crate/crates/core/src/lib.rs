//! Joint source-channel decoding of byte text sent over a convolutionally
//! coded BPSK/AWGN link.
//!
//! The decoders range from plain soft-decision Viterbi through K-best list
//! Viterbi to [`semantic::llm_viterbi_decode`], which prunes the list
//! periodically using an autoregressive prior over bytes ([`prior::LmPrior`]).
//!
//! Channel and metric arithmetic is generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the scalar for common use.

pub mod bits;
pub mod channel;
pub mod code;
pub mod harness;
pub mod prior;
pub mod scalar;
pub mod semantic;
pub mod viterbi;

pub use bits::{bytes_to_bits, BitHistory};
pub use channel::{
    awgn_apply, bpsk_modulate, ebn0_to_sigma, theoretical_uncoded_ber, NoiseSpec, SymbolFrame,
};
pub use code::{CodeError, CodeRate, GeneratorSet, Trellis};
pub use prior::{ByteNGramModel, LmPrior, PriorError, RemotePrior, UniformPrior};
pub use scalar::Real;
pub use semantic::{
    llm_viterbi_decode, SemanticDecodeOutput, SemanticDecoderConfig, SemanticError,
};
pub use viterbi::{kbest_decode, viterbi_decode, DecodeError, DecodePath};

pub type Frame = SymbolFrame<f64>;
pub type Frame32 = SymbolFrame<f32>;
pub type Noise = NoiseSpec<f64>;
pub type Noise32 = NoiseSpec<f32>;
pub type Path = DecodePath<f64>;
pub type Path32 = DecodePath<f32>;
pub type DecoderConfig = SemanticDecoderConfig<f64>;
pub type DecoderConfig32 = SemanticDecoderConfig<f32>;
pub type DecodeOutput = SemanticDecodeOutput<f64>;
