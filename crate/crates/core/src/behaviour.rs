//! Behaviour characteristics and behavioural distance.
//!
//! A behaviour characteristic is the string of actions an agent took during
//! one training episode, padded with `x` to the frame budget `F`. Action `i`
//! is written as the i-th symbol of [`ACTION_SYMBOLS`].

use std::fmt;

use thiserror::Error;

use crate::genome::Genome;
use crate::rng::DeterministicRng;

/// Padding symbol for frames the agent never consumed.
pub const PAD: u8 = b'x';

/// Symbols for action indices `0..61`: digits, lowercase without `x`, uppercase.
pub const ACTION_SYMBOLS: &[u8; 61] =
    b"0123456789abcdefghijklmnopqrstuvwyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

pub const ARCHIVE_HEADER: &str = "seedevo-archive v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BehaviourError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("distribution distance needs non-empty strings")]
    EmptyString,
    #[error("symbol `{0}` is outside the alphabet")]
    UnknownSymbol(char),
    #[error("action {0} has no symbol (at most 61 actions are supported)")]
    ActionOutOfRange(usize),
    #[error("{taken} actions do not fit in {frames} frames")]
    TooManyActions { taken: usize, frames: usize },
    #[error("segment length must be at least 1")]
    ZeroSegment,
    #[error("novelty needs at least one neighbour")]
    NoNeighbours,
    #[error("archive dump line {line}: {reason}")]
    Dump { line: usize, reason: String },
}

pub fn action_symbol(action: usize) -> Result<u8, BehaviourError> {
    ACTION_SYMBOLS.get(action).copied().ok_or(BehaviourError::ActionOutOfRange(action))
}

pub fn symbol_action(symbol: u8) -> Option<usize> {
    ACTION_SYMBOLS.iter().position(|&s| s == symbol)
}

/// Fixed-length action string over the action alphabet and `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionSequence(Vec<u8>);

impl ActionSequence {
    /// Encodes `actions` and pads with `x` to exactly `frames` symbols.
    pub fn from_actions(actions: &[usize], frames: usize) -> Result<Self, BehaviourError> {
        if actions.len() > frames {
            return Err(BehaviourError::TooManyActions { taken: actions.len(), frames });
        }
        let mut symbols = actions.iter().map(|&a| action_symbol(a)).collect::<Result<Vec<_>, _>>()?;
        symbols.resize(frames, PAD);
        Ok(Self(symbols))
    }

    pub fn parse(text: &str) -> Result<Self, BehaviourError> {
        for c in text.chars() {
            if c != PAD as char && (!c.is_ascii() || symbol_action(c as u8).is_none()) {
                return Err(BehaviourError::UnknownSymbol(c));
            }
        }
        Ok(Self(text.as_bytes().to_vec()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Frames actually consumed, i.e. the number of non-`x` symbols.
    pub fn lifespan(&self) -> usize {
        self.0.iter().filter(|&&s| s != PAD).count()
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Only ASCII symbols are ever stored.
        f.write_str(std::str::from_utf8(&self.0).unwrap_or_default())
    }
}

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, &lc) in long.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if lc == sc {
                diagonal
            } else {
                1 + diagonal.min(above).min(row[j])
            };
            diagonal = above;
        }
    }
    row[short.len()]
}

pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize, BehaviourError> {
    if a.len() != b.len() {
        return Err(BehaviourError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// `KL(P_a || P_b)` in nats between add-one-smoothed symbol frequencies.
pub fn kl_divergence(a: &[u8], b: &[u8], alphabet: &[u8]) -> Result<f64, BehaviourError> {
    if a.is_empty() || b.is_empty() {
        return Err(BehaviourError::EmptyString);
    }
    let counts = |s: &[u8]| -> Result<Vec<f64>, BehaviourError> {
        let mut counts = vec![1.0; alphabet.len()];
        for &c in s {
            let i = alphabet
                .iter()
                .position(|&x| x == c)
                .ok_or(BehaviourError::UnknownSymbol(c as char))?;
            counts[i] += 1.0;
        }
        let total = (s.len() + alphabet.len()) as f64;
        Ok(counts.into_iter().map(|c| c / total).collect())
    };
    let p = counts(a)?;
    let q = counts(b)?;
    Ok(p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum::<f64>().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationParams {
    segment_length: usize,
}

impl SegmentationParams {
    pub fn new(segment_length: usize) -> Result<Self, BehaviourError> {
        if segment_length == 0 {
            return Err(BehaviourError::ZeroSegment);
        }
        Ok(Self { segment_length })
    }

    pub fn segment_length(self) -> usize {
        self.segment_length
    }

    /// `ceil(frames / n)`.
    pub fn segment_count(self, frames: usize) -> usize {
        frames.div_ceil(self.segment_length)
    }
}

/// Sum of Levenshtein distances over aligned `n`-symbol segments.
///
/// The last segment is shorter when `n` does not divide the length.
pub fn segmented_distance(
    a: &ActionSequence,
    b: &ActionSequence,
    params: SegmentationParams,
) -> Result<usize, BehaviourError> {
    if a.len() != b.len() {
        return Err(BehaviourError::LengthMismatch(a.len(), b.len()));
    }
    Ok(segmented_unchecked(a.as_bytes(), b.as_bytes(), params))
}

fn segmented_unchecked(a: &[u8], b: &[u8], params: SegmentationParams) -> usize {
    a.chunks(params.segment_length)
        .zip(b.chunks(params.segment_length))
        .map(|(x, y)| if x == y { 0 } else { levenshtein(x, y) })
        .sum()
}

/// Mean of the `k` smallest distances; all of them if fewer than `k`.
fn knn_mean(mut distances: Vec<usize>, k: usize) -> Result<f64, BehaviourError> {
    if distances.is_empty() {
        return Err(BehaviourError::NoNeighbours);
    }
    let k = k.clamp(1, distances.len());
    if k < distances.len() {
        distances.select_nth_unstable(k - 1);
    }
    Ok(distances[..k].iter().sum::<usize>() as f64 / k as f64)
}

/// k-nearest-neighbour novelty of `bc` against archived and current behaviours.
///
/// `exclude` is the position of `bc` itself inside `current`, if present; it
/// is skipped by position, so identical behaviours from other individuals
/// still count as neighbours.
pub fn novelty_score(
    bc: &ActionSequence,
    archived: &[ArchiveEntry],
    current: &[ActionSequence],
    exclude: Option<usize>,
    k: usize,
    params: SegmentationParams,
) -> Result<f64, BehaviourError> {
    let mut distances = Vec::with_capacity(archived.len() + current.len());
    for other in archived.iter().map(|e| &e.bc) {
        distances.push(segmented_distance(bc, other, params)?);
    }
    for (i, other) in current.iter().enumerate() {
        if Some(i) != exclude {
            distances.push(segmented_distance(bc, other, params)?);
        }
    }
    knn_mean(distances, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub bc: ActionSequence,
}

/// Append-only store of past individuals and their behaviours.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
    insertion_probability: f64,
}

impl Archive {
    pub fn new(insertion_probability: f64) -> Self {
        Self { entries: Vec::new(), insertion_probability: insertion_probability.clamp(0.0, 1.0) }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insertion_probability(&self) -> f64 {
        self.insertion_probability
    }

    pub fn push(&mut self, genome: Genome, bc: ActionSequence) {
        self.entries.push(ArchiveEntry { genome, bc });
    }

    /// Draws one uniform from `rng` and appends the entry if it falls below
    /// the insertion probability. Returns whether the entry was stored.
    pub fn maybe_archive(&mut self, genome: &Genome, bc: &ActionSequence, rng: &mut DeterministicRng) -> bool {
        let accepted = rng.uniform() < self.insertion_probability;
        if accepted {
            self.push(genome.clone(), bc.clone());
        }
        accepted
    }

    /// Text dump: header line, then `<comma-separated seeds>|<bc>` per entry.
    pub fn to_dump(&self) -> String {
        let mut out = format!("{ARCHIVE_HEADER} p={}\n", self.insertion_probability);
        for entry in &self.entries {
            let seeds: Vec<String> = entry.genome.seeds().iter().map(u64::to_string).collect();
            out.push_str(&format!("{};{}|{}\n", entry.genome.sigma(), seeds.join(","), entry.bc));
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, BehaviourError> {
        let bad = |line: usize, reason: &str| BehaviourError::Dump { line, reason: reason.into() };
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let p = header
            .strip_prefix(ARCHIVE_HEADER)
            .and_then(|rest| rest.strip_prefix(" p="))
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(|| bad(1, "expected `seedevo-archive v1 p=<probability>`"))?;
        let mut archive = Archive::new(p);
        for (offset, line) in lines.enumerate() {
            let n = offset + 2;
            let (genome, bc) = line.split_once('|').ok_or_else(|| bad(n, "missing `|`"))?;
            let (sigma, seeds) = genome.split_once(';').ok_or_else(|| bad(n, "missing `;`"))?;
            let sigma: f32 = sigma.parse().map_err(|_| bad(n, "bad sigma"))?;
            let seeds = seeds
                .split(',')
                .map(|s| s.parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(n, "bad seed list"))?;
            let genome = Genome::new(seeds, sigma).map_err(|e| bad(n, &e.to_string()))?;
            let bc = ActionSequence::parse(bc).map_err(|e| bad(n, &e.to_string()))?;
            archive.push(genome, bc);
        }
        Ok(archive)
    }
}
