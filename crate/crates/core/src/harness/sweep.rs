//! Monte Carlo sweeps over Eb/N0 and decoders.
//!
//! Frame `f` at grid point `e` carries sentence `f mod |corpus|` and draws
//! its noise from stream `(e << 40) | f` of the master seed, so every decoder
//! sees the same noisy frames and adding a decoder never changes another
//! decoder's results. Frames run in parallel batches and are reduced in
//! frame order; the stop rule is applied frame by frame, so results do not
//! depend on batch size or thread count.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{DecoderConfig, ExperimentConfig, PriorConfig};
use super::corpus::load_corpus;
use super::metrics::{bit_errors, error_metrics_unaligned};
use super::HarnessError;
use crate::bits::bytes_to_bits;
use crate::channel::{awgn_apply, bpsk_modulate, ebn0_to_sigma, NoiseSpec, SymbolFrame};
use crate::code::Trellis;
use crate::prior::ngram::train_ngram;
use crate::prior::remote::ENDPOINT_ENV;
use crate::prior::{ByteNGramModel, LmPrior, PriorError, RemotePrior, UniformPrior};
use crate::semantic::{llm_viterbi_decode, SemanticDecoderConfig};
use crate::viterbi::{kbest_decode, viterbi_decode};

const BATCH: usize = 64;

/// Bits reserved for the frame index in a noise stream id.
const FRAME_BITS: u32 = 40;

/// Loaded prior plus its optional correction capability.
pub enum PriorHandle {
    Uniform(UniformPrior),
    Ngram(ByteNGramModel),
    Remote(RemotePrior),
}

impl PriorHandle {
    pub fn load(cfg: &PriorConfig) -> Result<Self, HarnessError> {
        Ok(match cfg {
            PriorConfig::Uniform => PriorHandle::Uniform(UniformPrior),
            PriorConfig::Ngram { model: Some(path), .. } => {
                PriorHandle::Ngram(ByteNGramModel::load_from_path(path)?)
            }
            PriorConfig::Ngram { order, alpha, corpus: Some(path), model: None } => {
                let sentences = load_corpus(path, 1, None, false)?;
                PriorHandle::Ngram(train_ngram(&sentences, *order, *alpha)?)
            }
            PriorConfig::Ngram { .. } => {
                return Err(HarnessError::Config("ngram prior needs `corpus` or `model`".into()))
            }
            PriorConfig::Remote { endpoint } => {
                let endpoint = match endpoint {
                    Some(e) => e.clone(),
                    None => std::env::var(ENDPOINT_ENV).map_err(|_| {
                        HarnessError::Config(format!("no endpoint configured and {ENDPOINT_ENV} unset"))
                    })?,
                };
                PriorHandle::Remote(RemotePrior::connect(&endpoint)?)
            }
        })
    }

    pub fn prior(&self) -> &dyn LmPrior {
        match self {
            PriorHandle::Uniform(p) => p,
            PriorHandle::Ngram(p) => p,
            PriorHandle::Remote(p) => p,
        }
    }

    pub fn corrector(&self) -> Option<&RemotePrior> {
        match self {
            PriorHandle::Remote(p) => Some(p),
            _ => None,
        }
    }
}

/// A frame as it leaves the channel.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub message: Vec<u8>,
    pub info_bits: Vec<u8>,
    pub coded: Vec<u8>,
    pub received: SymbolFrame<f64>,
    pub sigma2: f64,
}

/// Noise stream id of frame `frame` at grid point `point`.
pub fn stream_id(point: usize, frame: u64) -> u64 {
    ((point as u64) << FRAME_BITS) | (frame & ((1 << FRAME_BITS) - 1))
}

/// Encodes, modulates and adds calibrated noise.
pub fn transmit(
    trellis: &Trellis,
    message: &[u8],
    terminate: bool,
    ebn0_db: f64,
    seed: u64,
    stream: u64,
) -> Result<Transmission, HarnessError> {
    let info_bits = bytes_to_bits(message);
    let coded = trellis.encode(&info_bits, terminate)?;
    let clean: SymbolFrame<f64> = bpsk_modulate(&coded);
    let noise = NoiseSpec::from_ebn0(ebn0_db, trellis.code().rate(), seed, stream);
    Ok(Transmission {
        message: message.to_vec(),
        info_bits,
        coded,
        received: awgn_apply(&clean, &noise),
        sigma2: noise.variance(),
    })
}

/// Output of one decoder on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecode {
    pub bytes: Vec<u8>,
    /// Information bits, when the decoder works on the trellis directly.
    pub bits: Option<Vec<u8>>,
    pub lm_calls: usize,
}

fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().fold(0u8, |a, &b| (a << 1) | (b & 1))).collect()
}

/// Runs one configured decoder on a received frame.
pub fn decode_frame(
    decoder: &DecoderConfig,
    trellis: &Trellis,
    received: &SymbolFrame<f64>,
    terminated: bool,
    sigma2: f64,
    prior: &PriorHandle,
) -> Result<FrameDecode, String> {
    let fixed = |bits: Vec<u8>| FrameDecode { bytes: bits_to_bytes(&bits), bits: Some(bits), lm_calls: 0 };
    match decoder {
        DecoderConfig::Standard => {
            viterbi_decode(trellis, received, terminated).map(fixed).map_err(|e| e.to_string())
        }
        DecoderConfig::Kbest { k } => {
            let list = kbest_decode(trellis, received, *k, terminated).map_err(|e| e.to_string())?;
            let info_len = received.len() / trellis.streams()
                - if terminated { trellis.tail_len() } else { 0 };
            Ok(fixed(list[0].info_bits(info_len)))
        }
        DecoderConfig::LlmViterbi { k, n, sigma2_override } => {
            let cfg = SemanticDecoderConfig {
                k: *k,
                interval: *n,
                sigma2: sigma2_override.unwrap_or(sigma2),
                terminated,
            };
            let out = llm_viterbi_decode(trellis, received, prior.prior(), &cfg)
                .map_err(|e| e.to_string())?;
            Ok(FrameDecode { bytes: out.bytes, bits: Some(out.bits), lm_calls: out.diagnostics.lm_calls })
        }
        DecoderConfig::OneshotBaseline => {
            let corrector = prior
                .corrector()
                .ok_or_else(|| "oneshot-baseline needs a remote corrector".to_owned())?;
            let bits = viterbi_decode(trellis, received, terminated).map_err(|e| e.to_string())?;
            let bytes = corrector
                .correct(&bits_to_bytes(&bits))
                .map_err(|e: PriorError| e.to_string())?;
            Ok(FrameDecode { bytes, bits: None, lm_calls: 1 })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub frame: u64,
    pub ebn0_db: f64,
    pub decoder: String,
    pub bit_errors: usize,
    pub info_bits: usize,
    pub block_error: bool,
    pub char_errors: usize,
    pub chars: usize,
    pub edit_distance: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decode_ms: Option<f64>,
    pub lm_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// One CSV row: a (decoder, Eb/N0) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub decoder: String,
    pub ebn0_db: f64,
    pub frames: u64,
    pub block_errors: u64,
    pub bler: f64,
    pub ber: f64,
    pub cer: f64,
    pub mean_edit_distance: f64,
    pub mean_decode_ms: Option<f64>,
    pub mean_lm_calls: f64,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub seed: u64,
    pub failures: u64,
}

impl SweepRow {
    /// Standard error of the BLER estimate.
    pub fn bler_std_error(&self) -> f64 {
        if self.frames == 0 {
            return 0.0;
        }
        (self.bler * (1.0 - self.bler) / self.frames as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialResult>,
}

/// Loads the corpus and prior named by the config and runs the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus.path, cfg.corpus.min_chars, cfg.corpus.max_chars, cfg.corpus.strict_ascii)?;
    let prior = PriorHandle::load(&cfg.prior)?;
    run_sweep_with(cfg, &corpus, &prior)
}

fn run_trial(
    cfg: &ExperimentConfig,
    trellis: &Trellis,
    decoder: &DecoderConfig,
    prior: &PriorHandle,
    corpus: &[Vec<u8>],
    point: usize,
    frame: u64,
) -> Result<TrialResult, HarnessError> {
    let ebn0_db = cfg.channel.ebn0_db[point];
    let message = &corpus[(frame % corpus.len() as u64) as usize];
    let tx = transmit(
        trellis,
        message,
        cfg.code.terminate,
        ebn0_db,
        cfg.channel.seed,
        stream_id(point, frame),
    )?;
    let started = Instant::now();
    let decoded = decode_frame(decoder, trellis, &tx.received, cfg.code.terminate, tx.sigma2, prior);
    let elapsed = started.elapsed();
    let decode_ms = cfg.output.measure_latency.then_some(elapsed.as_secs_f64() * 1e3);
    let mut trial = TrialResult {
        frame,
        ebn0_db,
        decoder: decoder.id().to_owned(),
        bit_errors: 0,
        info_bits: tx.info_bits.len(),
        block_error: false,
        char_errors: 0,
        chars: message.len(),
        edit_distance: 0,
        decode_ms,
        lm_calls: 0,
        failure: None,
    };
    match decoded {
        Ok(d) => {
            let m = error_metrics_unaligned(message, &d.bytes);
            trial.bit_errors = match &d.bits {
                Some(bits) => bit_errors(&tx.info_bits, bits).unwrap_or(m.bit_errors),
                None => m.bit_errors,
            };
            trial.block_error = trial.bit_errors > 0;
            trial.char_errors = m.char_errors;
            trial.edit_distance = m.edit_distance;
            trial.lm_calls = d.lm_calls;
        }
        Err(e) => trial.failure = Some(e),
    }
    Ok(trial)
}

#[derive(Default)]
struct Tally {
    attempted: u64,
    frames: u64,
    block_errors: u64,
    bit_errors: u64,
    bits: u64,
    char_errors: u64,
    chars: u64,
    edit_distance: u64,
    decode_ms: f64,
    lm_calls: u64,
    failures: u64,
}

impl Tally {
    fn add(&mut self, t: &TrialResult) {
        self.attempted += 1;
        if t.failure.is_some() {
            self.failures += 1;
            return;
        }
        self.frames += 1;
        self.block_errors += u64::from(t.block_error);
        self.bit_errors += t.bit_errors as u64;
        self.bits += t.info_bits as u64;
        self.char_errors += t.char_errors as u64;
        self.chars += t.chars as u64;
        self.edit_distance += t.edit_distance as u64;
        self.decode_ms += t.decode_ms.unwrap_or(0.0);
        self.lm_calls += t.lm_calls as u64;
    }

    fn row(&self, cfg: &ExperimentConfig, decoder: &DecoderConfig, ebn0_db: f64) -> SweepRow {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        SweepRow {
            decoder: decoder.id().to_owned(),
            ebn0_db,
            frames: self.frames,
            block_errors: self.block_errors,
            bler: ratio(self.block_errors, self.frames),
            ber: ratio(self.bit_errors, self.bits),
            cer: ratio(self.char_errors, self.chars),
            mean_edit_distance: ratio(self.edit_distance, self.frames),
            mean_decode_ms: (cfg.output.measure_latency && self.frames > 0)
                .then(|| self.decode_ms / self.frames as f64),
            mean_lm_calls: ratio(self.lm_calls, self.frames),
            k: decoder.k(),
            n: decoder.n(),
            seed: cfg.channel.seed,
            failures: self.failures,
        }
    }
}

/// Runs the sweep over an already loaded corpus and prior.
pub fn run_sweep_with(
    cfg: &ExperimentConfig,
    corpus: &[Vec<u8>],
    prior: &PriorHandle,
) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(HarnessError::Corpus("no sentences".into()));
    }
    let trellis = cfg.code.trellis()?;
    let pool = match cfg.output.threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        ),
        None => None,
    };
    let mut result = SweepResult::default();
    for (point, &ebn0_db) in cfg.channel.ebn0_db.iter().enumerate() {
        for decoder in &cfg.decoders {
            let mut tally = Tally::default();
            'cell: while tally.attempted < cfg.stop.max_frames {
                let start = tally.attempted;
                let end = (start + BATCH as u64).min(cfg.stop.max_frames);
                let batch = || -> Result<Vec<TrialResult>, HarnessError> {
                    (start..end)
                        .into_par_iter()
                        .map(|f| run_trial(cfg, &trellis, decoder, prior, corpus, point, f))
                        .collect()
                };
                let trials = match &pool {
                    Some(p) => p.install(batch)?,
                    None => batch()?,
                };
                for t in trials {
                    tally.add(&t);
                    result.trials.push(t);
                    if tally.block_errors >= cfg.stop.target_block_errors {
                        break 'cell;
                    }
                }
                check_failures(&tally, cfg, decoder, ebn0_db, false)?;
            }
            check_failures(&tally, cfg, decoder, ebn0_db, true)?;
            result.rows.push(tally.row(cfg, decoder, ebn0_db));
        }
    }
    Ok(result)
}

fn check_failures(
    tally: &Tally,
    cfg: &ExperimentConfig,
    decoder: &DecoderConfig,
    ebn0_db: f64,
    final_check: bool,
) -> Result<(), HarnessError> {
    // Early batches are too small to judge a rate unless the cell is done.
    if tally.attempted == 0 || (!final_check && tally.attempted < BATCH as u64) {
        return Ok(());
    }
    let rate = tally.failures as f64 / tally.attempted as f64;
    if rate > cfg.stop.max_failure_rate {
        return Err(HarnessError::FailureRate { decoder: decoder.id().to_owned(), ebn0_db, rate });
    }
    Ok(())
}

/// Writes rows with the fixed column set.
pub fn write_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Output(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one JSON object per trial.
pub fn write_trials<W: Write>(trials: &[TrialResult], mut writer: W) -> Result<(), HarnessError> {
    for t in trials {
        serde_json::to_writer(&mut writer, t).map_err(|e| HarnessError::Output(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the CSV and trial log to the paths named in the config.
pub fn write_outputs(cfg: &ExperimentConfig, result: &SweepResult) -> Result<(), HarnessError> {
    if let Some(path) = &cfg.output.csv {
        write_csv(&result.rows, std::io::BufWriter::new(create(path)?))?;
    }
    if let Some(path) = &cfg.output.trials {
        write_trials(&result.trials, std::io::BufWriter::new(create(path)?))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File, HarnessError> {
    std::fs::File::create(path).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}

/// Mean decode time in milliseconds per frame for one decoder, over trials
/// that recorded timing.
pub fn measure_latency(trials: &[TrialResult], decoder: &str) -> Option<f64> {
    let times: Vec<f64> = trials
        .iter()
        .filter(|t| t.decoder == decoder && t.failure.is_none())
        .filter_map(|t| t.decode_ms)
        .collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}

/// Sigma² for a grid point, as handed to the decoders.
pub fn genie_sigma2(trellis: &Trellis, ebn0_db: f64) -> f64 {
    ebn0_to_sigma(ebn0_db, trellis.code().rate()).powi(2)
}
