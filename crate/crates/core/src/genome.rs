//! Seed-list genomes.
//!
//! A genome is the seed `τ0` that initializes a network plus one seed per
//! mutation. Decoding replays the chain: Glorot-normal weights from `τ0`, then
//! `σ·ε(τi)` added for each later seed in list order. Weights are `f32`; each
//! noise value is drawn as `f64`, rounded to `f32` and multiplied by `σ` in
//! `f32` before it is added.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::network::{ArchitectureDescriptor, NetworkError};
use crate::rng::DeterministicRng;

pub const CHECKPOINT_HEADER: &str = "seedevo-genome v1";

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("genome has no seeds")]
    Empty,
    #[error("mutation power must be finite and non-negative, got {0}")]
    BadSigma(f32),
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error("checkpoint line 3: {0}")]
    Architecture(#[from] NetworkError),
    #[error("checkpoint {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    seeds: Vec<u64>,
    sigma: f32,
}

impl Genome {
    pub fn new(seeds: Vec<u64>, sigma: f32) -> Result<Self, GenomeError> {
        if seeds.is_empty() {
            return Err(GenomeError::Empty);
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(GenomeError::BadSigma(sigma));
        }
        Ok(Self { seeds, sigma })
    }

    pub fn from_seed(seed: u64, sigma: f32) -> Result<Self, GenomeError> {
        Self::new(vec![seed], sigma)
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn sigma(&self) -> f32 {
        self.sigma
    }

    /// Child genome with `new_seed` appended.
    pub fn mutate(&self, new_seed: u64) -> Genome {
        let mut seeds = Vec::with_capacity(self.seeds.len() + 1);
        seeds.extend_from_slice(&self.seeds);
        seeds.push(new_seed);
        Genome { seeds, sigma: self.sigma }
    }

    /// `true` if `self` is `parent` plus exactly one appended seed.
    pub fn is_child_of(&self, parent: &Genome) -> bool {
        self.seeds.len() == parent.seeds.len() + 1 && self.seeds.starts_with(&parent.seeds)
    }

    pub fn decode(&self, arch: &ArchitectureDescriptor) -> Vec<f32> {
        let mut weights = init_weights(self.seeds[0], arch);
        for &seed in &self.seeds[1..] {
            add_noise(&mut weights, seed, self.sigma);
        }
        weights
    }

    /// Continues decoding from the already-decoded weights of the genome made
    /// of the first `decoded_seeds` seeds. Bit-identical to [`Genome::decode`].
    pub fn decode_from(&self, mut weights: Vec<f32>, decoded_seeds: usize) -> Vec<f32> {
        for &seed in &self.seeds[decoded_seeds..] {
            add_noise(&mut weights, seed, self.sigma);
        }
        weights
    }

    pub fn to_checkpoint(&self, arch: &ArchitectureDescriptor) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\nsigma={}\narch={arch}\n", self.sigma);
        for seed in &self.seeds {
            let _ = writeln!(out, "{seed}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<(Genome, ArchitectureDescriptor), GenomeError> {
        let bad = |line: usize, reason: &str| GenomeError::Checkpoint { line, reason: reason.to_string() };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad(1, "expected `seedevo-genome v1` header"));
        }
        let sigma = lines
            .next()
            .and_then(|l| l.strip_prefix("sigma="))
            .ok_or_else(|| bad(2, "expected `sigma=<value>`"))?;
        let sigma: f32 = sigma.parse().map_err(|_| bad(2, "sigma is not a number"))?;
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(bad(2, "sigma must be finite and non-negative"));
        }
        let arch = lines
            .next()
            .and_then(|l| l.strip_prefix("arch="))
            .ok_or_else(|| bad(3, "expected `arch=<descriptor>`"))?;
        let arch = ArchitectureDescriptor::parse(arch)?;
        let mut seeds = Vec::new();
        for (offset, line) in lines.enumerate() {
            let n = offset + 4;
            if line.is_empty() || !line.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad(n, "expected a decimal u64 seed"));
            }
            seeds.push(line.parse().map_err(|_| bad(n, "seed does not fit in u64"))?);
        }
        if seeds.is_empty() {
            return Err(bad(4, "checkpoint lists no seeds"));
        }
        Ok((Genome { seeds, sigma }, arch))
    }

    pub fn save(&self, arch: &ArchitectureDescriptor, path: &Path) -> Result<(), GenomeError> {
        std::fs::write(path, self.to_checkpoint(arch))
            .map_err(|source| GenomeError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<(Genome, ArchitectureDescriptor), GenomeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| GenomeError::Io { path: path.display().to_string(), source })?;
        Self::from_checkpoint(&text)
    }
}

/// Glorot-normal weights (std `sqrt(2 / (fan_in + fan_out))`), zero biases.
pub fn init_weights(seed: u64, arch: &ArchitectureDescriptor) -> Vec<f32> {
    let mut rng = DeterministicRng::new(seed);
    let mut weights = Vec::with_capacity(arch.parameter_count());
    for layer in arch.layer_params() {
        let std = (2.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        weights.extend((0..layer.weights).map(|_| (rng.normal() * std) as f32));
        weights.extend(std::iter::repeat(0.0f32).take(layer.biases));
    }
    weights
}

/// The standard-normal perturbation `ε(seed)` for a vector of length `len`.
pub fn noise(seed: u64, len: usize) -> Vec<f32> {
    let mut rng = DeterministicRng::new(seed);
    (0..len).map(|_| rng.normal() as f32).collect()
}

fn add_noise(weights: &mut [f32], seed: u64, sigma: f32) {
    let mut rng = DeterministicRng::new(seed);
    for w in weights.iter_mut() {
        *w += sigma * rng.normal() as f32;
    }
}
