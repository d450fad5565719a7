//! K-best Viterbi decoding with periodic language-model pruning.
//!
//! The decoder extends a K-best survivor set bit by bit. Every eighth
//! information bit completes a byte on each path. When the byte count `j`
//! reaches a multiple of the evaluation interval `N`, survivors are grouped by
//! their first `j-1` bytes. Paths in a group share their whole trellis
//! trajectory up to bit `8(j-1)`, so each group has one channel metric and one
//! prefix probability, and is scored once:
//!
//! ```text
//! score = log P(t_1..t_{j-1}) - M(u_1..u_{8(j-1)}) / (2σ²)
//! ```
//!
//! Only the best-scoring group survives, with every member kept whatever its
//! newest byte. After the last trellis step every survivor is scored on its
//! complete byte sequence and total metric, and the best is returned.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::channel::SymbolFrame;
use crate::code::Trellis;
use crate::prior::{LmPrior, PriorError};
use crate::scalar::Real;
use crate::viterbi::{rank_order, DecodeError, DecodePath, FrameLayout, KBestSearch, LmCache};

/// Bits per character.
pub const CHAR_BITS: usize = 8;

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("language model failed: {0}")]
    Prior(#[from] PriorError),
    #[error("path has {have} characters, grouping at position {j} needs {j}")]
    MissingChars { have: usize, j: usize },
    #[error("no surviving paths")]
    NoPaths,
    #[error("evaluation interval N must be at least 1")]
    ZeroInterval,
    #[error("noise variance must be positive and finite, got {0}")]
    BadVariance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticDecoderConfig<T> {
    /// Paths kept per trellis state.
    pub k: usize,
    /// Characters between pruning checkpoints.
    pub interval: usize,
    /// Noise variance used in the joint score.
    pub sigma2: T,
    /// Frame ends with a zero tail.
    pub terminated: bool,
}

impl<T: Real> SemanticDecoderConfig<T> {
    pub fn new(k: usize, interval: usize, sigma2: T) -> Result<Self, SemanticError> {
        let cfg = Self { k, interval, sigma2, terminated: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SemanticError> {
        if self.k == 0 {
            return Err(DecodeError::ZeroK.into());
        }
        if self.interval == 0 {
            return Err(SemanticError::ZeroInterval);
        }
        if !(self.sigma2 > T::zero() && self.sigma2.is_finite()) {
            return Err(SemanticError::BadVariance(self.sigma2.to_f64_lossy()));
        }
        Ok(())
    }
}

/// Assembles a byte from exactly eight bits, first bit most significant.
pub fn bits_to_byte(bits: &[u8]) -> Result<u8, DecodeError> {
    if bits.len() != CHAR_BITS {
        return Err(DecodeError::LengthMismatch { expected: CHAR_BITS, got: bits.len() });
    }
    Ok(bits.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
}

/// `-M / (2σ²) + log P`.
pub fn path_joint_score<T: Real>(metric: T, lm_logprob: f64, sigma2: T) -> T {
    let two = T::one() + T::one();
    -metric / (two * sigma2) + T::from_f64_lossy(lm_logprob)
}

/// Survivors sharing their first `j-1` characters.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixGroup<T> {
    pub prefix: Vec<u8>,
    /// Indices into the path slice the group was built from.
    pub members: Vec<usize>,
    /// Cumulative metric at the end of the prefix.
    pub prefix_metric: T,
}

/// Partitions paths by their first `j-1` characters, ordered by prefix.
pub fn group_by_prefix<T: Real>(
    paths: &[DecodePath<T>],
    j: usize,
) -> Result<Vec<PrefixGroup<T>>, SemanticError> {
    let cut = j.saturating_sub(1);
    let mut groups: BTreeMap<&[u8], PrefixGroup<T>> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        if p.chars.len() < j {
            return Err(SemanticError::MissingChars { have: p.chars.len(), j });
        }
        let prefix = &p.chars[..cut];
        groups
            .entry(prefix)
            .or_insert_with(|| PrefixGroup {
                prefix: prefix.to_vec(),
                members: Vec::new(),
                prefix_metric: p.metric_at_char(cut),
            })
            .members
            .push(i);
    }
    Ok(groups.into_values().collect())
}

/// Extends a cached prefix score to cover `chars`, making one prior call.
fn extend_score<P: LmPrior + ?Sized>(
    lm: &P,
    cache: LmCache,
    chars: &[u8],
    calls: &mut usize,
) -> Result<LmCache, PriorError> {
    let (base, from) = if cache.scored_chars <= chars.len() {
        (cache.logprob, cache.scored_chars)
    } else {
        (0.0, 0)
    };
    *calls += 1;
    let lp = base + lm.score(&chars[..from], &chars[from..])?;
    Ok(LmCache { scored_chars: chars.len(), logprob: lp })
}

/// Outcome of one pruning checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    /// Character position `j` that triggered the checkpoint.
    pub position: usize,
    pub paths_before: usize,
    pub groups: usize,
    pub survivors: usize,
    pub lm_calls: usize,
    pub winning_prefix: Vec<u8>,
    pub winning_score: f64,
}

/// Scores each group once and returns the winning group index, its score
/// and the prior cache covering its prefix. Ties go to the lexicographically
/// smaller prefix.
pub fn select_prefix<T: Real, P: LmPrior + ?Sized>(
    paths: &[DecodePath<T>],
    groups: &[PrefixGroup<T>],
    lm: &P,
    sigma2: T,
    calls: &mut usize,
) -> Result<(usize, T, LmCache), SemanticError> {
    let mut best: Option<(usize, T, LmCache)> = None;
    for (g, group) in groups.iter().enumerate() {
        let cache = paths[group.members[0]].lm_cache;
        let cache = extend_score(lm, cache, &group.prefix, calls)?;
        let score = path_joint_score(group.prefix_metric, cache.logprob, sigma2);
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((g, score, cache));
        }
    }
    best.ok_or(SemanticError::NoPaths)
}

/// Keeps only the members of the best-scoring prefix group, whatever their
/// newest character, and advances their caches over the prefix.
pub fn prune_to_best_prefix<T: Real, P: LmPrior + ?Sized>(
    paths: Vec<DecodePath<T>>,
    groups: &[PrefixGroup<T>],
    lm: &P,
    sigma2: T,
    calls: &mut usize,
) -> Result<(Vec<DecodePath<T>>, usize, T), SemanticError> {
    let (winner, score, cache) = select_prefix(&paths, groups, lm, sigma2, calls)?;
    Ok((retain_group(paths, &groups[winner], cache), winner, score))
}

fn retain_group<T: Real>(
    paths: Vec<DecodePath<T>>,
    group: &PrefixGroup<T>,
    cache: LmCache,
) -> Vec<DecodePath<T>> {
    paths
        .into_iter()
        .enumerate()
        .filter(|(i, _)| group.members.binary_search(i).is_ok())
        .map(|(_, mut p)| {
            p.lm_cache = cache;
            p
        })
        .collect()
}

/// Scores every complete path and returns the best with its score.
///
/// Ties go to the lexicographically smaller bit history.
pub fn final_select<T: Real, P: LmPrior + ?Sized>(
    paths: Vec<DecodePath<T>>,
    lm: &P,
    sigma2: T,
    calls: &mut usize,
) -> Result<(DecodePath<T>, T), SemanticError> {
    let mut best: Option<(DecodePath<T>, T)> = None;
    for mut p in paths {
        p.lm_cache = extend_score(lm, p.lm_cache, &p.chars, calls)?;
        let score = path_joint_score(p.metric, p.lm_cache.logprob, sigma2);
        let better = match &best {
            None => true,
            Some((b, s)) => score > *s || (score == *s && p.bits < b.bits),
        };
        if better {
            best = Some((p, score));
        }
    }
    best.ok_or(SemanticError::NoPaths)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub lm_calls: usize,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Survivor count after each trellis step.
    pub survivors_per_step: Vec<usize>,
    /// Paths entering the final evaluation.
    pub final_candidates: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct SemanticDecodeOutput<T> {
    pub bytes: Vec<u8>,
    /// Information bits (tail stripped).
    pub bits: Vec<u8>,
    pub path: DecodePath<T>,
    pub score: T,
    pub diagnostics: Diagnostics,
}

/// Called at every checkpoint with the paths before pruning, their groups and
/// the index of the winning group.
pub trait CheckpointObserver<T> {
    fn on_checkpoint(&mut self, position: usize, paths: &[DecodePath<T>], groups: &[PrefixGroup<T>], winner: usize);
}

impl<T> CheckpointObserver<T> for () {
    fn on_checkpoint(&mut self, _: usize, _: &[DecodePath<T>], _: &[PrefixGroup<T>], _: usize) {}
}

impl<T, F> CheckpointObserver<T> for F
where
    F: FnMut(usize, &[DecodePath<T>], &[PrefixGroup<T>], usize),
{
    fn on_checkpoint(&mut self, position: usize, paths: &[DecodePath<T>], groups: &[PrefixGroup<T>], winner: usize) {
        self(position, paths, groups, winner)
    }
}

/// Decodes one frame carrying whole bytes.
pub fn llm_viterbi_decode<T: Real, P: LmPrior + ?Sized>(
    trellis: &Trellis,
    received: &SymbolFrame<T>,
    lm: &P,
    cfg: &SemanticDecoderConfig<T>,
) -> Result<SemanticDecodeOutput<T>, SemanticError> {
    llm_viterbi_decode_observed(trellis, received, lm, cfg, &mut ())
}

pub fn llm_viterbi_decode_observed<T, P, O>(
    trellis: &Trellis,
    received: &SymbolFrame<T>,
    lm: &P,
    cfg: &SemanticDecoderConfig<T>,
    observer: &mut O,
) -> Result<SemanticDecodeOutput<T>, SemanticError>
where
    T: Real,
    P: LmPrior + ?Sized,
    O: CheckpointObserver<T> + ?Sized,
{
    let started = Instant::now();
    cfg.validate()?;
    let layout = FrameLayout::new(trellis, received, cfg.terminated)?;
    if layout.info_len % CHAR_BITS != 0 {
        return Err(DecodeError::PartialByte(layout.info_len).into());
    }
    let n = trellis.streams();
    let mut search = KBestSearch::new(trellis, cfg.k)?;
    let mut diag = Diagnostics { survivors_per_step: Vec::with_capacity(layout.steps), ..Default::default() };

    for step in 0..layout.steps {
        let y = &received.symbols[step * n..(step + 1) * n];
        if step >= layout.info_len {
            search.advance_tail(y);
            diag.survivors_per_step.push(search.paths().len());
            continue;
        }
        search.advance_info(y);
        let tau = step + 1;
        if tau % CHAR_BITS == 0 {
            let j = tau / CHAR_BITS;
            if j.is_multiple_of(cfg.interval) {
                let paths = search.take_paths();
                let groups = group_by_prefix(&paths, j)?;
                let calls_before = diag.lm_calls;
                let paths_before = paths.len();
                let (winner, score, cache) =
                    select_prefix(&paths, &groups, lm, cfg.sigma2, &mut diag.lm_calls)?;
                observer.on_checkpoint(j, &paths, &groups, winner);
                let survivors = retain_group(paths, &groups[winner], cache);
                diag.checkpoints.push(CheckpointRecord {
                    position: j,
                    paths_before,
                    groups: groups.len(),
                    survivors: survivors.len(),
                    lm_calls: diag.lm_calls - calls_before,
                    winning_prefix: groups[winner].prefix.clone(),
                    winning_score: score.to_f64_lossy(),
                });
                search.replace_paths(survivors);
            }
        }
        diag.survivors_per_step.push(search.paths().len());
    }

    let mut finals = search.into_paths();
    if cfg.terminated {
        finals.retain(|p| p.state == 0);
    }
    finals.sort_by(rank_order);
    diag.final_candidates = finals.len();
    let (path, score) = final_select(finals, lm, cfg.sigma2, &mut diag.lm_calls)?;
    diag.elapsed = started.elapsed();
    Ok(SemanticDecodeOutput {
        bytes: path.chars.clone(),
        bits: path.info_bits(layout.info_len),
        path,
        score,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitHistory;
    use crate::prior::UniformPrior;
    use approx::assert_abs_diff_eq;

    fn path_with(chars: &[u8], metric: f64) -> DecodePath<f64> {
        let mut p = DecodePath::root();
        p.bits = BitHistory::from_bits(&crate::bits::bytes_to_bits(chars));
        p.chars = chars.to_vec();
        p.metric = metric;
        p.char_metrics = (0..=chars.len()).map(|j| metric * j as f64 / chars.len() as f64).collect();
        p
    }

    #[test]
    fn byte_assembly() {
        assert_eq!(bits_to_byte(&[0, 1, 0, 0, 0, 0, 0, 1]).unwrap(), b'A');
        assert_eq!(bits_to_byte(&[0; 8]).unwrap(), 0);
        assert_eq!(bits_to_byte(&[0, 1, 1, 0, 1, 0, 0, 0]).unwrap(), b'h');
        assert!(bits_to_byte(&[1; 7]).is_err());
    }

    #[test]
    fn joint_score_examples() {
        assert_eq!(path_joint_score(0.0, 0.0, 1.0), 0.0);
        assert_abs_diff_eq!(path_joint_score(2.0, -3.0, 1.0), -4.0);
        let a = path_joint_score(5.0f64, -1.0, 1.0) + 1.0;
        let b = path_joint_score(5.0f64, -1.0, 2.0) + 1.0;
        assert_abs_diff_eq!(b, a / 2.0);
    }

    #[test]
    fn grouping_by_prefix() {
        let paths: Vec<_> = [b"HELLO", b"HELLA", b"HALLE", b"HALLT"]
            .iter()
            .map(|c| path_with(*c, 1.0))
            .collect();
        let groups = group_by_prefix(&paths, 5).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].prefix, b"HALL");
        assert_eq!(groups[0].members, vec![2, 3]);
        assert_eq!(groups[1].prefix, b"HELL");
        assert_eq!(groups[1].members, vec![0, 1]);

        let same = vec![path_with(b"ab", 0.0), path_with(b"ac", 0.0)];
        assert_eq!(group_by_prefix(&same, 2).unwrap().len(), 1);
        assert_eq!(group_by_prefix(&same, 3).map(|_| ()).unwrap_err().to_string(),
                   "path has 2 characters, grouping at position 3 needs 3");
        let distinct = vec![path_with(b"ab", 0.0), path_with(b"cb", 0.0)];
        assert_eq!(group_by_prefix(&distinct, 2).unwrap().len(), 2);
    }

    struct TablePrior(Vec<(&'static [u8], f64)>);

    impl LmPrior for TablePrior {
        fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
            let full: Vec<u8> = context.iter().chain(continuation).copied().collect();
            let lookup = |t: &[u8]| self.0.iter().find(|(k, _)| *k == t).map_or(0.0, |e| e.1);
            Ok(lookup(&full) - lookup(context))
        }
        fn describe(&self) -> String {
            "table".into()
        }
    }

    #[test]
    fn prunes_to_best_prefix() {
        let lm = TablePrior(vec![(b"HELL", -6.0), (b"HALL", -11.0)]);
        let paths = vec![
            path_with(b"HELLO", 12.5),
            path_with(b"HELLA", 12.5),
            path_with(b"HALLE", 11.25),
            path_with(b"HALLT", 11.25),
        ];
        let groups = group_by_prefix(&paths, 5).unwrap();
        assert_eq!(groups[1].prefix_metric, 10.0);
        assert_eq!(groups[0].prefix_metric, 9.0);
        let mut calls = 0;
        let (kept, winner, score) = prune_to_best_prefix(paths, &groups, &lm, 1.0, &mut calls).unwrap();
        assert_eq!(calls, 2);
        assert_eq!(groups[winner].prefix, b"HELL");
        assert_abs_diff_eq!(score, -11.0);
        assert_eq!(kept.iter().map(|p| p.chars.clone()).collect::<Vec<_>>(), vec![b"HELLO".to_vec(), b"HELLA".to_vec()]);
        assert!(kept.iter().all(|p| p.lm_cache == LmCache { scored_chars: 4, logprob: -6.0 }));
    }

    #[test]
    fn single_group_keeps_everything() {
        let paths = vec![path_with(b"xa", 1.0), path_with(b"xb", 3.0)];
        let groups = group_by_prefix(&paths, 2).unwrap();
        let mut calls = 0;
        let (kept, _, _) = prune_to_best_prefix(paths, &groups, &UniformPrior, 1.0, &mut calls).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(calls, 1);
    }

    #[test]
    fn uniform_prior_prefers_smallest_prefix_metric() {
        let paths = vec![path_with(b"ab", 4.0), path_with(b"cd", 2.0), path_with(b"ef", 6.0)];
        let groups = group_by_prefix(&paths, 2).unwrap();
        let mut calls = 0;
        let (kept, _, _) = prune_to_best_prefix(paths, &groups, &UniformPrior, 0.5, &mut calls).unwrap();
        assert_eq!(kept[0].chars, b"cd");
    }

    #[test]
    fn final_selection() {
        let mut calls = 0;
        let one = vec![path_with(b"q", 3.0)];
        let (p, _) = final_select(one.clone(), &UniformPrior, 1.0, &mut calls).unwrap();
        assert_eq!(p.chars, one[0].chars);

        let lm = TablePrior(vec![(b"a", -2.0), (b"b", -1.0)]);
        // Scores: a -> -2 - 4/2 = -4; b -> -1 - 12/2 = -7.
        let two = vec![path_with(b"b", 12.0), path_with(b"a", 4.0)];
        let (p, s) = final_select(two, &lm, 1.0, &mut calls).unwrap();
        assert_eq!(p.chars, b"a");
        assert_abs_diff_eq!(s, -4.0);

        let three = vec![path_with(b"x", 5.0), path_with(b"y", 1.0), path_with(b"z", 2.0)];
        let (p, _) = final_select(three, &UniformPrior, 1.0, &mut calls).unwrap();
        assert_eq!(p.chars, b"y");
        assert!(final_select(Vec::<DecodePath<f64>>::new(), &UniformPrior, 1.0, &mut calls).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SemanticDecoderConfig::new(0, 5, 1.0).is_err());
        assert!(SemanticDecoderConfig::new(8, 0, 1.0).is_err());
        assert!(SemanticDecoderConfig::new(8, 5, 0.0).is_err());
        assert!(SemanticDecoderConfig::new(8, 5, f64::NAN).is_err());
        assert!(SemanticDecoderConfig::new(8, 5, 0.5f32).is_ok());
    }
}
