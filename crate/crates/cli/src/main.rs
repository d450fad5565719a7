use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lmviterbi::channel::ebn0_to_sigma;
use lmviterbi::harness::config::ExperimentConfig;
use lmviterbi::harness::pairs::export_pairs;
use lmviterbi::harness::sweep::{decode_frame, transmit, write_csv, write_outputs};
use lmviterbi::harness::{load_corpus, run_sweep, DecoderConfig, HarnessError, PriorConfig, PriorHandle};
use lmviterbi::prior::bridge::BridgeServer;
use lmviterbi::prior::conformance::{run_conformance, ConformanceOptions};
use lmviterbi::prior::ngram::train_ngram;
use lmviterbi::prior::remote::ENDPOINT_ENV;
use lmviterbi::semantic::llm_viterbi_decode;
use lmviterbi::{
    bpsk_modulate, bytes_to_bits, ByteNGramModel, DecoderConfig as SemanticConfig, Frame, GeneratorSet,
    LmPrior, RemotePrior, Trellis, UniformPrior,
};

mod files;

/// Joint source-channel decoding of text over a convolutionally coded BPSK/AWGN link.
#[derive(Parser)]
#[command(name = "lmviterbi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode text into a coded bits file, or a BPSK symbol file with --symbols.
    Encode(EncodeArgs),
    /// Decode a symbol file (or bits file with --bits) back to text.
    Decode(DecodeArgs),
    /// Send one message through the channel and print a trace of the decode.
    Simulate(SimulateArgs),
    /// Run an experiment config and write the CSV.
    Sweep(SweepArgs),
    /// Train a byte n-gram model from a corpus, one sentence per line.
    TrainNgram(TrainArgs),
    /// Run the prior conformance suite against a model or bridge endpoint.
    LmCheck(LmCheckArgs),
    /// Serve a prior over the bridge protocol.
    Serve(ServeArgs),
    /// Export Viterbi-output/clean sentence pairs for a correction model.
    Pairs(PairsArgs),
}

#[derive(Args, Clone)]
struct CodeArgs {
    /// Octal generators, comma separated; for recursive codes the last is the feedback.
    #[arg(long, default_value = "7,5", value_delimiter = ',')]
    generators: Vec<String>,
    /// Constraint length.
    #[arg(long, default_value_t = 3)]
    nu: u32,
    #[arg(long)]
    recursive: bool,
    /// Do not append the zero tail.
    #[arg(long)]
    unterminated: bool,
}

impl CodeArgs {
    fn trellis(&self) -> Result<Trellis, CliError> {
        let g = GeneratorSet::from_octal(&self.generators, self.nu, self.recursive).map_err(CliError::usage)?;
        Ok(Trellis::new(g))
    }

    fn terminated(&self) -> bool {
        !self.unterminated
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderKind {
    Standard,
    Kbest,
    LlmViterbi,
    OneshotBaseline,
}

#[derive(Args, Clone)]
struct DecoderArgs {
    #[arg(long, value_enum, default_value = "llm-viterbi")]
    decoder: DecoderKind,
    /// Paths kept per state.
    #[arg(long = "K", default_value_t = 8)]
    k: usize,
    /// Characters between pruning checkpoints.
    #[arg(long = "N", default_value_t = 5)]
    n: usize,
}

impl DecoderArgs {
    fn config(&self) -> DecoderConfig {
        match self.decoder {
            DecoderKind::Standard => DecoderConfig::Standard,
            DecoderKind::Kbest => DecoderConfig::Kbest { k: self.k },
            DecoderKind::LlmViterbi => DecoderConfig::LlmViterbi { k: self.k, n: self.n, sigma2_override: None },
            DecoderKind::OneshotBaseline => DecoderConfig::OneshotBaseline,
        }
    }
}

#[derive(Args, Clone)]
struct PriorArgs {
    /// `uniform`, `ngram:<model file>` or `remote`. Defaults to remote when
    /// --endpoint is given, uniform otherwise.
    #[arg(long)]
    prior: Option<String>,
    /// Bridge endpoint (`tcp://host:port` or `exec:<command>`). A remote prior
    /// without this flag reads the LMVITERBI_ENDPOINT environment variable.
    #[arg(long)]
    endpoint: Option<String>,
}

impl PriorArgs {
    fn load(&self) -> Result<PriorHandle, CliError> {
        let kind = self.prior.as_deref().unwrap_or(if self.endpoint.is_some() { "remote" } else { "uniform" });
        if kind == "uniform" {
            return Ok(PriorHandle::Uniform(UniformPrior));
        }
        if kind == "remote" {
            let endpoint = match &self.endpoint {
                Some(e) => e.clone(),
                None => std::env::var(ENDPOINT_ENV)
                    .map_err(|_| CliError::usage(format!("remote prior needs --endpoint or {ENDPOINT_ENV}")))?,
            };
            let remote = RemotePrior::connect(&endpoint).map_err(|e| CliError::Runtime(e.into()))?;
            return Ok(PriorHandle::Remote(remote));
        }
        if let Some(path) = kind.strip_prefix("ngram:") {
            let model = ByteNGramModel::load_from_path(Path::new(path))
                .map_err(|e| CliError::usage(format!("{path}: {e}")))?;
            return Ok(PriorHandle::Ngram(model));
        }
        Err(CliError::usage(format!("unknown prior {kind:?}")))
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Message text; read from --in when absent.
    #[arg(long, conflicts_with = "input")]
    text: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    code: CodeArgs,
    /// Write BPSK symbols instead of bits.
    #[arg(long)]
    symbols: bool,
    /// Add channel noise at this Eb/N0 (dB); implies --symbols.
    #[arg(long)]
    ebn0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Input is a bits file, decoded as a noiseless frame.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    code: CodeArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Noise variance for the joint score.
    #[arg(long, conflicts_with = "ebn0")]
    sigma2: Option<f64>,
    /// Channel Eb/N0 (dB), used to derive the noise variance.
    #[arg(long)]
    ebn0: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    text: String,
    #[arg(long, default_value_t = 3.0)]
    ebn0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    code: CodeArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[command(flatten)]
    prior: PriorArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's Eb/N0 grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    ebn0: Option<Vec<f64>>,
    /// Overrides the CSV path; `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Endpoint for a config with a remote prior.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LmCheckArgs {
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 100)]
    contexts: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Text to draw half of the contexts from.
    #[arg(long)]
    sample: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// `uniform` or `ngram:<model file>`.
    #[arg(long, default_value = "uniform")]
    prior: String,
    /// Address to listen on; serves standard input/output when absent.
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    config: PathBuf,
    /// Frames per Eb/N0 point.
    #[arg(long, default_value_t = 1000)]
    frames: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(anyhow!("{e}"))
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_usage() {
            CliError::Usage(e.into())
        } else {
            CliError::Runtime(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::TrainNgram(a) => train(a),
        Command::LmCheck(a) => lm_check(a),
        Command::Serve(a) => serve(a),
        Command::Pairs(a) => pairs(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_message(text: Option<String>, input: Option<PathBuf>) -> Result<Vec<u8>, CliError> {
    match (text, input) {
        (Some(t), _) => Ok(t.into_bytes()),
        (None, Some(p)) => fs::read(&p).with_context(|| p.display().to_string()).map_err(CliError::Usage),
        (None, None) => Err(CliError::usage("give --text or --in")),
    }
}

fn encode(a: EncodeArgs) -> Result<(), CliError> {
    let trellis = a.code.trellis()?;
    let message = read_message(a.text, a.input)?;
    let out = BufWriter::new(fs::File::create(&a.out).with_context(|| a.out.display().to_string())?);
    if let Some(ebn0) = a.ebn0 {
        let tx = transmit(&trellis, &message, a.code.terminated(), ebn0, a.seed, 0)?;
        files::write_symbols(out, &tx.received.symbols)?;
        return Ok(());
    }
    let coded = trellis.encode(&bytes_to_bits(&message), a.code.terminated()).map_err(CliError::usage)?;
    if a.symbols {
        files::write_symbols(out, &bpsk_modulate::<f64>(&coded).symbols)?;
    } else {
        files::write_bits(out, &coded)?;
    }
    Ok(())
}

/// Noise variance from the flags, else estimated from the symbols around ±1.
fn noise_variance(sigma2: Option<f64>, ebn0: Option<f64>, trellis: &Trellis, frame: &Frame) -> f64 {
    if let Some(s) = sigma2 {
        return s;
    }
    if let Some(e) = ebn0 {
        return ebn0_to_sigma(e, trellis.code().rate()).powi(2);
    }
    let n = frame.symbols.len().max(1) as f64;
    let est = frame.symbols.iter().map(|y| (y.abs() - 1.0).powi(2)).sum::<f64>() / n;
    est.max(1e-3)
}

fn decode(a: DecodeArgs) -> Result<(), CliError> {
    let trellis = a.code.trellis()?;
    let frame = if a.bits {
        Frame::new(bpsk_modulate::<f64>(&files::read_bits(&a.input).map_err(CliError::Usage)?).symbols)
    } else {
        Frame::new(files::read_symbols(&a.input).map_err(CliError::Usage)?)
    };
    let decoder = a.decoder.config();
    let prior = match decoder {
        DecoderConfig::LlmViterbi { .. } | DecoderConfig::OneshotBaseline => a.prior.load()?,
        _ => PriorHandle::Uniform(UniformPrior),
    };
    let sigma2 = noise_variance(a.sigma2, a.ebn0, &trellis, &frame);
    let out = decode_frame(&decoder, &trellis, &frame, a.code.terminated(), sigma2, &prior)
        .map_err(|e| CliError::Runtime(anyhow!(e)))?;
    match a.out {
        Some(path) => fs::write(&path, &out.bytes).with_context(|| path.display().to_string())?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(&out.bytes)?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let trellis = a.code.trellis()?;
    let terminated = a.code.terminated();
    let message = a.text.into_bytes();
    let tx = transmit(&trellis, &message, terminated, a.ebn0, a.seed, 0)?;
    let hard_errors = tx.received.hard_decision().iter().zip(&tx.coded).filter(|(a, b)| a != b).count();
    println!("message      {:?} ({} bytes, {} info bits)", String::from_utf8_lossy(&message), message.len(), tx.info_bits.len());
    println!("code         {} states, {} coded bits, dfree {}", trellis.num_states(), tx.coded.len(),
             trellis.free_distance().map(|d| d.to_string()).unwrap_or_else(|_| "?".into()));
    println!("channel      Eb/N0 {} dB, sigma^2 {:.5}, hard-decision errors {hard_errors}", a.ebn0, tx.sigma2);

    let decoder = a.decoder.config();
    let prior = match decoder {
        DecoderConfig::LlmViterbi { .. } | DecoderConfig::OneshotBaseline => a.prior.load()?,
        _ => PriorHandle::Uniform(UniformPrior),
    };
    if let DecoderConfig::LlmViterbi { k, n, .. } = decoder {
        let cfg = SemanticConfig { k, interval: n, sigma2: tx.sigma2, terminated };
        let out = llm_viterbi_decode(&trellis, &tx.received, prior.prior(), &cfg).map_err(|e| anyhow!(e))?;
        println!("prior        {}", prior.prior().describe());
        for c in &out.diagnostics.checkpoints {
            println!(
                "checkpoint   j={:<3} paths {:<4} groups {:<3} kept {:<4} prefix {:?} score {:.3}",
                c.position, c.paths_before, c.groups, c.survivors,
                String::from_utf8_lossy(&c.winning_prefix), c.winning_score
            );
        }
        println!("final        {} candidates, {} prior calls, {:.2} ms", out.diagnostics.final_candidates,
                 out.diagnostics.lm_calls, out.diagnostics.elapsed.as_secs_f64() * 1e3);
        report(&message, &tx.info_bits, &out.bytes, Some(&out.bits));
    } else {
        let out = decode_frame(&decoder, &trellis, &tx.received, terminated, tx.sigma2, &prior)
            .map_err(|e| CliError::Runtime(anyhow!(e)))?;
        report(&message, &tx.info_bits, &out.bytes, out.bits.as_deref());
    }
    Ok(())
}

fn report(message: &[u8], info_bits: &[u8], bytes: &[u8], bits: Option<&[u8]>) {
    let m = lmviterbi::harness::metrics::error_metrics_unaligned(message, bytes);
    let bit_errors = bits
        .and_then(|b| lmviterbi::harness::metrics::bit_errors(info_bits, b).ok())
        .unwrap_or(m.bit_errors);
    println!("decoded      {:?}", String::from_utf8_lossy(bytes));
    println!("errors       {bit_errors} bits, {} chars, edit distance {}", m.char_errors, m.edit_distance);
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.channel.seed = seed;
    }
    if let Some(grid) = a.ebn0 {
        cfg.channel.ebn0_db = grid;
    }
    if let Some(endpoint) = a.endpoint.filter(|_| matches!(cfg.prior, PriorConfig::Remote { .. })) {
        cfg.prior = PriorConfig::Remote { endpoint: Some(endpoint) };
    }
    let to_stdout = a.out.as_deref() == Some(Path::new("-"));
    if let Some(out) = a.out.filter(|_| !to_stdout) {
        cfg.output.csv = Some(out);
    }
    cfg.validate()?;
    let result = run_sweep(&cfg)?;
    write_outputs(&cfg, &result)?;
    if to_stdout || cfg.output.csv.is_none() {
        write_csv(&result.rows, io::stdout().lock())?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let sentences = load_corpus(&a.corpus, 1, None, false)?;
    let model = train_ngram(&sentences, a.order, a.alpha).map_err(CliError::usage)?;
    model.save_to_path(&a.out).map_err(|e| CliError::Runtime(e.into()))?;
    eprintln!("trained order-{} model on {} sentences, corpus sha256 {}", a.order, sentences.len(), model.corpus_sha256());
    Ok(())
}

fn lm_check(a: LmCheckArgs) -> Result<(), CliError> {
    let prior = a.prior.load()?;
    let sample_text = match &a.sample {
        Some(p) => Some(fs::read(p).with_context(|| p.display().to_string()).map_err(CliError::Usage)?),
        None => None,
    };
    let opts = ConformanceOptions { contexts: a.contexts, seed: a.seed, sample_text, ..Default::default() };
    let report = run_conformance(prior.prior(), &opts).map_err(|e| CliError::Runtime(e.into()))?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow!("conformance failed")))
    }
}

fn serve_with<P: LmPrior + 'static>(prior: P, listen: Option<String>) -> Result<(), CliError> {
    let server = BridgeServer::new(prior);
    match listen {
        Some(addr) => {
            let listener = std::net::TcpListener::bind(&addr).with_context(|| addr.clone())?;
            eprintln!("listening on {}", listener.local_addr()?);
            Arc::new(server).serve_tcp(listener)?;
        }
        None => server.serve_stream(io::stdin().lock(), io::stdout().lock())?,
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    if a.prior == "uniform" {
        return serve_with(UniformPrior, a.listen);
    }
    let Some(path) = a.prior.strip_prefix("ngram:") else {
        return Err(CliError::usage(format!("cannot serve prior {:?}", a.prior)));
    };
    let model = ByteNGramModel::load_from_path(Path::new(path)).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
    serve_with(model, a.listen)
}

fn pairs(a: PairsArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.channel.seed = seed;
    }
    let c = &cfg.corpus;
    let corpus = load_corpus(&c.path, c.min_chars, c.max_chars, c.strict_ascii)?;
    let out = BufWriter::new(fs::File::create(&a.out).with_context(|| a.out.display().to_string())?);
    let n = export_pairs(&cfg, &corpus, a.frames, out)?;
    if n == 0 {
        return Err(CliError::usage("no pairs written"));
    }
    eprintln!("wrote {n} pairs to {}", a.out.display());
    Ok(())
}
