//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::{code, exhaustive_map_byte, exhaustive_ranking, random_bits, synthetic_corpus};
use lmviterbi::channel::{awgn_apply_with, frame_rng};
use lmviterbi::harness::config::{ChannelConfig, CodeConfig, CorpusConfig, OutputConfig, StopRule};
use lmviterbi::harness::sweep::write_csv;
use lmviterbi::harness::{run_sweep_with, DecoderConfig, ExperimentConfig, PriorConfig, PriorHandle, SweepRow};
use lmviterbi::prior::conformance::{run_conformance, ConformanceOptions};
use lmviterbi::prior::ngram::train_ngram;
use lmviterbi::{
    awgn_apply, bpsk_modulate, bytes_to_bits, ebn0_to_sigma, kbest_decode, llm_viterbi_decode,
    theoretical_uncoded_ber, viterbi_decode, ByteNGramModel, CodeRate, DecoderConfig as SemanticConfig,
    Frame, Noise, Trellis, UniformPrior,
};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn noisy(t: &Trellis, bits: &[u8], ebn0: f64, seed: u64, stream: u64) -> (Frame, f64) {
    let clean = bpsk_modulate(&t.encode(bits, true).unwrap());
    let noise = Noise::from_ebn0(ebn0, t.code().rate(), seed, stream);
    (awgn_apply(&clean, &noise), noise.variance())
}

fn ml_oracle() -> Outcome {
    let t = code(&["7", "5"], 3);
    let mut rng = frame_rng(101, 0);
    let start = Instant::now();
    let mut matches = 0;
    for frame in 0..200 {
        let bits = random_bits(&mut rng, 12);
        let (rx, _) = noisy(&t, &bits, 2.0, 101, frame);
        let oracle = &exhaustive_ranking(&t, &rx.symbols, 12, true)[0].1;
        matches += usize::from(&viterbi_decode(&t, &rx, true).unwrap() == oracle);
    }
    let elapsed = start.elapsed();
    outcome(
        matches == 200 && elapsed < Duration::from_secs(10),
        format!("{matches}/200 match, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn list_oracle() -> Outcome {
    let t = code(&["7", "5"], 3);
    let mut rng = frame_rng(102, 0);
    let mut matches = 0;
    for frame in 0..100 {
        let bits = random_bits(&mut rng, 8);
        let (rx, _) = noisy(&t, &bits, 2.0, 102, frame);
        let oracle = exhaustive_ranking(&t, &rx.symbols, 8, true);
        let list = kbest_decode(&t, &rx, 4, true).unwrap();
        let same = list.len() == 4
            && list.iter().zip(&oracle).all(|(p, (m, b))| &p.info_bits(8) == b && (p.metric - m).abs() < 1e-9);
        matches += usize::from(same);
    }
    outcome(matches == 100, format!("{matches}/100 top-4 lists match"))
}

fn training_corpus() -> Vec<Vec<u8>> {
    synthetic_corpus(20_000, 3..=8, 1)
}

fn test_corpus() -> Vec<Vec<u8>> {
    synthetic_corpus(2_000, 3..=8, 2)
}

fn micro_map(lm: &ByteNGramModel) -> Outcome {
    let t = code(&["7", "5"], 3);
    let corpus = test_corpus();
    let mut matches = 0;
    for frame in 0..100 {
        let byte = corpus[frame][frame % corpus[frame].len()];
        let (rx, sigma2) = noisy(&t, &bytes_to_bits(&[byte]), 0.0, 103, frame as u64);
        let cfg = SemanticConfig::new(64, 1, sigma2).unwrap();
        let out = llm_viterbi_decode(&t, &rx, lm, &cfg).unwrap();
        matches += usize::from(out.bytes == [exhaustive_map_byte(&t, &rx.symbols, lm, sigma2)]);
    }
    outcome(matches == 100, format!("{matches}/100 match brute-force MAP"))
}

fn reduction() -> Outcome {
    let t = code(&["7", "5"], 3);
    let mut rng = frame_rng(104, 0);
    let mut matches = 0;
    for frame in 0..1000u64 {
        let chars = 1 + (frame % 8) as usize;
        let bits = random_bits(&mut rng, 8 * chars);
        let (rx, sigma2) = noisy(&t, &bits, 1.0, 104, frame);
        let cfg = SemanticConfig::new(1 + (frame % 4) as usize, chars + 1 + (frame % 3) as usize, sigma2).unwrap();
        let out = llm_viterbi_decode(&t, &rx, &UniformPrior, &cfg).unwrap();
        matches += usize::from(out.bits == viterbi_decode(&t, &rx, true).unwrap());
    }
    outcome(matches == 1000, format!("{matches}/1000 bit-identical (N > L_T)"))
}

fn channel_calibration() -> Outcome {
    let start = Instant::now();
    let n = 4_000_000usize;
    let sigma = ebn0_to_sigma(4.0, CodeRate { streams: 1 });
    let bits = vec![0u8; n];
    let mut rng = frame_rng(105, 0);
    let clean = bpsk_modulate::<f64>(&bits);
    let rx = awgn_apply_with(&clean, sigma, &mut rng);
    let errors = rx.hard_decision().iter().filter(|&&b| b == 1).count();
    let ber = errors as f64 / n as f64;
    let p = theoretical_uncoded_ber(4.0);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let elapsed = start.elapsed();
    outcome(
        (ber - p).abs() <= 3.0 * se && (p - 0.01250).abs() < 5e-6 && elapsed < Duration::from_secs(30),
        format!("BER {ber:.5} vs {p:.5} ({:.2} SE, {n} bits, {:.2} s)", (ber - p) / se, elapsed.as_secs_f64()),
    )
}

fn sweep_config(ebn0: &[f64], decoders: Vec<DecoderConfig>, target: u64, max_frames: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        code: CodeConfig::default(),
        channel: ChannelConfig { ebn0_db: ebn0.to_vec(), seed: 2024 },
        decoders,
        prior: PriorConfig::Ngram { order: 3, alpha: 0.01, corpus: Some("synthetic".into()), model: None },
        stop: StopRule { target_block_errors: target, max_frames, max_failure_rate: 0.0 },
        corpus: CorpusConfig { path: "synthetic".into(), min_chars: 1, max_chars: None, strict_ascii: true },
        output: OutputConfig::default(),
    }
}

fn semantic(n: usize) -> DecoderConfig {
    DecoderConfig::LlmViterbi { k: 8, n, sigma2_override: None }
}

fn row<'a>(rows: &'a [SweepRow], decoder: &str, n: Option<usize>, ebn0: f64) -> &'a SweepRow {
    rows.iter().find(|r| r.decoder == decoder && r.n == n && r.ebn0_db == ebn0).unwrap()
}

fn semantic_gain(prior: &PriorHandle) -> Outcome {
    let cfg = sweep_config(&[3.0], vec![DecoderConfig::Standard, semantic(5)], 200, 200_000);
    let rows = run_sweep_with(&cfg, &test_corpus(), prior).unwrap().rows;
    let standard = row(&rows, "standard", None, 3.0);
    let llm = row(&rows, "llm-viterbi", Some(5), 3.0);
    let worse = standard.block_errors.max(llm.block_errors);
    let reduction = 1.0 - llm.bler / standard.bler;
    outcome(
        worse >= 200 && reduction >= 0.20,
        format!(
            "BLER standard {:.4} ({}/{}), LLM-Viterbi {:.4} ({}/{}), reduction {:.1}%",
            standard.bler, standard.block_errors, standard.frames, llm.bler, llm.block_errors, llm.frames,
            100.0 * reduction
        ),
    )
}

fn interval_tradeoff(prior: &PriorHandle) -> Outcome {
    let points = [1.0, 1.5, 2.0];
    let cfg = sweep_config(&points, vec![semantic(1), semantic(5)], 1500, 100_000);
    let rows = run_sweep_with(&cfg, &test_corpus(), prior).unwrap().rows;
    let mut passed = true;
    let mut detail = Vec::new();
    for e in points {
        let a = row(&rows, "llm-viterbi", Some(1), e);
        let b = row(&rows, "llm-viterbi", Some(5), e);
        let se = (a.bler_std_error().powi(2) + b.bler_std_error().powi(2)).sqrt();
        let z = (a.bler - b.bler) / se;
        passed &= z >= 2.0;
        detail.push(format!("{e} dB: N=1 {:.4} vs N=5 {:.4} ({z:.1} SE)", a.bler, b.bler));
    }
    outcome(passed, detail.join("; "))
}

fn determinism(prior: &PriorHandle) -> Outcome {
    let mut cfg = sweep_config(
        &[1.0, 3.0],
        vec![DecoderConfig::Standard, DecoderConfig::Kbest { k: 4 }, semantic(3)],
        50,
        500,
    );
    let csv = |cfg: &ExperimentConfig| {
        let mut out = Vec::new();
        write_csv(&run_sweep_with(cfg, &test_corpus(), prior).unwrap().rows, &mut out).unwrap();
        out
    };
    let first = csv(&cfg);
    let second = csv(&cfg);
    cfg.output.threads = Some(3);
    let third = csv(&cfg);
    outcome(
        first == second && second == third,
        format!("{} bytes, reruns identical: {}", first.len(), first == second && second == third),
    )
}

fn conformance(lm: &ByteNGramModel) -> Outcome {
    let text = test_corpus().join(&b' ');
    let mut detail = Vec::new();
    let mut passed = true;
    let opts = ConformanceOptions { sample_text: Some(text), ..Default::default() };
    for report in [run_conformance(lm, &opts).unwrap(), run_conformance(&UniformPrior, &opts).unwrap()] {
        passed &= report.passed();
        let worst: Vec<String> =
            report.checks.iter().take(2).map(|c| format!("{} {:.1e}", c.name, c.worst)).collect();
        detail.push(format!("{}: {}", report.prior, worst.join(", ")));
    }
    outcome(passed, detail.join("; "))
}

fn main() {
    let lm = train_ngram(&training_corpus(), 3, 0.01).unwrap();
    let prior = PriorHandle::Ngram(lm.clone());
    let criteria: Vec<Criterion> = vec![
        ("ml-oracle", Box::new(ml_oracle)),
        ("list-oracle", Box::new(list_oracle)),
        ("micro-map", Box::new(|| micro_map(&lm))),
        ("reduction", Box::new(reduction)),
        ("channel-calibration", Box::new(channel_calibration)),
        ("semantic-gain", Box::new(|| semantic_gain(&prior))),
        ("interval-tradeoff", Box::new(|| interval_tradeoff(&prior))),
        ("determinism", Box::new(|| determinism(&prior))),
        ("lm-conformance", Box::new(|| conformance(&lm))),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.passed);
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
