//! Generational loops: the score-driven GA, novelty-driven selection, and the
//! score-driven GA with stagnation-triggered archive resampling.
//!
//! All three share one generation step:
//!
//! 1. evaluate every genome on the generation's training episodes,
//! 2. (novelty, resample) offer each individual to the archive,
//! 3. rank by game score, or by novelty for [`Method::Novelty`],
//! 4. re-evaluate the top candidates on the fixed validation episodes and keep
//!    the best validation mean as the elite,
//! 5. take the top `T` of the ranking as parents; under [`Method::Resample`]
//!    a stagnant validation trend swaps them for the most novel archive
//!    entries,
//! 6. breed the next population: the elite unmutated, then `N - 1` mutated
//!    children of uniformly drawn parents.
//!
//! Evaluation fans out over rayon's current pool. Every seed is assigned by
//! index before the fan-out and results are gathered in index order, so the
//! output does not depend on the number of workers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::behaviour::{novelty_score, ActionSequence, Archive, BehaviourError, SegmentationParams};
use crate::config::{ConfigError, Method, RunConfig};
use crate::environments::{check_compatible, run_episode, EnvError, Episode, EnvironmentFactory};
use crate::genome::{Genome, GenomeError};
use crate::network::ArchitectureDescriptor;
use crate::rng::{derive_seed, DeterministicRng};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("generation {generation}: {source}")]
    Environment { generation: usize, source: EnvError },
    #[error(transparent)]
    Environments(#[from] EnvError),
    #[error(transparent)]
    Behaviour(#[from] BehaviourError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("truncation size {truncation} exceeds population of {population}")]
    Truncation { truncation: usize, population: usize },
    #[error("cannot resample parents from an empty archive")]
    EmptyArchive,
    #[error("{method} loop called with a `{configured}` config")]
    MethodMismatch { method: Method, configured: Method },
    #[error("{0}")]
    Sink(String),
}

/// Runs a genome on a batch of episode seeds.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &Genome, episode_seeds: &[u64]) -> Result<Vec<Episode>, EnvError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Genome, &[u64]) -> Result<Vec<Episode>, EnvError> + Sync,
{
    fn evaluate(&self, genome: &Genome, episode_seeds: &[u64]) -> Result<Vec<Episode>, EnvError> {
        self(genome, episode_seeds)
    }
}

/// Weight values kept by the decode cache, across all entries.
const CACHE_FLOATS: usize = 1 << 26;

/// Decodes the genome once, then plays it in `env` for each seed.
///
/// Recently decoded weights are cached by seed list, so a child whose parent
/// was evaluated recently costs one noise vector instead of a full replay.
pub struct PolicyEvaluator<'a> {
    env: &'a dyn EnvironmentFactory,
    arch: ArchitectureDescriptor,
    frames: usize,
    cache: Mutex<HashMap<(Vec<u64>, u32), Arc<Vec<f32>>>>,
    cache_entries: usize,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(env: &'a dyn EnvironmentFactory, arch: ArchitectureDescriptor, frames: usize) -> Result<Self, EnvError> {
        check_compatible(&arch, env)?;
        let cache_entries = (CACHE_FLOATS / arch.parameter_count().max(1)).max(2);
        Ok(Self { env, arch, frames, cache: Mutex::new(HashMap::new()), cache_entries })
    }

    pub fn arch(&self) -> &ArchitectureDescriptor {
        &self.arch
    }

    fn weights(&self, genome: &Genome) -> Arc<Vec<f32>> {
        let seeds = genome.seeds();
        let sigma = genome.sigma().to_bits();
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(hit) = cache.get(&(seeds.to_vec(), sigma)) {
            return Arc::clone(hit);
        }
        let parent = cache.get(&(seeds[..seeds.len() - 1].to_vec(), sigma)).cloned();
        drop(cache);
        let weights = Arc::new(match parent {
            Some(parent) if seeds.len() > 1 => genome.decode_from(parent.as_ref().clone(), seeds.len() - 1),
            _ => genome.decode(&self.arch),
        });
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if cache.len() >= self.cache_entries {
            cache.clear();
        }
        cache.insert((seeds.to_vec(), sigma), Arc::clone(&weights));
        weights
    }
}

impl Evaluator for PolicyEvaluator<'_> {
    fn evaluate(&self, genome: &Genome, episode_seeds: &[u64]) -> Result<Vec<Episode>, EnvError> {
        let weights = self.weights(genome);
        episode_seeds
            .iter()
            .map(|&seed| run_episode(&weights, &self.arch, self.env, seed, self.frames))
            .collect()
    }
}

/// Training outcome of one individual.
///
/// `game_score` is the mean over training episodes; `bc` and `lifespan` come
/// from the first training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub genome: Genome,
    pub game_score: f64,
    pub bc: ActionSequence,
    pub lifespan: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub mean_score: f64,
    pub high_score: f64,
    pub elite_validation: f64,
    pub mean_novelty: Option<f64>,
    pub stagnant: bool,
    pub wall_ms: u128,
}

pub const LOG_HEADER: &str = "gen,mean_score,high_score,elite_validation,mean_novelty,stagnant,wall_ms";

impl GenerationLog {
    /// CSV row matching [`LOG_HEADER`]. Wall time is written as 0 unless
    /// `with_timing` is set, so that logs of identical runs compare equal.
    pub fn csv_row(&self, with_timing: bool) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.generation,
            self.mean_score,
            self.high_score,
            self.elite_validation,
            self.mean_novelty.map(|n| n.to_string()).unwrap_or_default(),
            u8::from(self.stagnant),
            if with_timing { self.wall_ms } else { 0 },
        )
    }
}

/// Everything decided in one generation, for logging and inspection.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub generation: usize,
    /// Training results in population order.
    pub results: Vec<EvalResult>,
    /// Novelty per individual ([`Method::Novelty`] only).
    pub novelty: Option<Vec<f64>>,
    /// Population indices from best to worst under the active criterion.
    pub ranking: Vec<usize>,
    /// Population indices of the elite candidates, in rank order.
    pub candidates: Vec<usize>,
    /// Validation mean of each candidate.
    pub validation: Vec<f64>,
    pub elite: Genome,
    pub parents: Vec<Genome>,
    /// Whether the parents came from the archive this generation.
    pub resampled: bool,
    pub archive_len: usize,
    pub log: GenerationLog,
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub elite: Genome,
    pub logs: Vec<GenerationLog>,
    pub archive: Archive,
}

/// `true` when the last `ig` validation scores show no increase over the
/// first of them. Needs at least `ig` scores since the last reset.
pub fn stagnation_check(v_scores: &[f64], ig: usize) -> bool {
    if ig == 0 || v_scores.len() < ig {
        return false;
    }
    let window = &v_scores[v_scores.len() - ig..];
    window[1..].iter().all(|v| v - window[0] <= 0.0)
}

/// The first `t` entries of an already-ranked list.
pub fn truncation_select<T: Clone>(ranked: &[T], t: usize) -> Result<Vec<T>, EvolutionError> {
    if t > ranked.len() {
        return Err(EvolutionError::Truncation { truncation: t, population: ranked.len() });
    }
    Ok(ranked[..t].to_vec())
}

/// Archive indices ordered by novelty against `current_bcs` (most novel
/// first, earlier entry on ties), with their scores.
pub fn rank_archive(
    archive: &Archive,
    current_bcs: &[ActionSequence],
    novelty_k: usize,
    params: SegmentationParams,
) -> Result<Vec<(usize, f64)>, EvolutionError> {
    if archive.is_empty() {
        return Err(EvolutionError::EmptyArchive);
    }
    let scores = archive
        .entries()
        .par_iter()
        .map(|entry| novelty_score(&entry.bc, &[], current_bcs, None, novelty_k, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(order)
}

/// Genomes of the `count` archive entries most novel relative to
/// `current_bcs`. Only the current behaviours serve as neighbours.
pub fn resample_parents(
    archive: &Archive,
    current_bcs: &[ActionSequence],
    count: usize,
    novelty_k: usize,
    params: SegmentationParams,
) -> Result<Vec<Genome>, EvolutionError> {
    Ok(rank_archive(archive, current_bcs, novelty_k, params)?
        .into_iter()
        .take(count)
        .map(|(i, _)| archive.entries()[i].genome.clone())
        .collect())
}

fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Generation-by-generation driver shared by all methods.
pub struct Evolution<'a> {
    config: RunConfig,
    evaluator: &'a dyn Evaluator,
    params: SegmentationParams,
    population: Vec<Genome>,
    archive: Archive,
    v_scores: Vec<f64>,
    breed_rng: DeterministicRng,
    archive_rng: DeterministicRng,
    generation: usize,
}

impl<'a> Evolution<'a> {
    pub fn new(config: RunConfig, evaluator: &'a dyn Evaluator) -> Result<Self, EvolutionError> {
        config.validate()?;
        let params = SegmentationParams::new(config.segment_length)?;
        let mut breed_rng = DeterministicRng::new(derive_seed(config.master_seed, "breed", &[]));
        let archive_rng = DeterministicRng::new(derive_seed(config.master_seed, "archive", &[]));
        let population = (0..config.population_size)
            .map(|_| Genome::from_seed(breed_rng.seed32(), config.mutation_power))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            archive: Archive::new(config.archive_probability),
            config,
            evaluator,
            params,
            population,
            v_scores: Vec::new(),
            breed_rng,
            archive_rng,
            generation: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn population(&self) -> &[Genome] {
        &self.population
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.generations
    }

    fn evaluate_all(&self, genomes: &[Genome], seeds: &[u64]) -> Result<Vec<Vec<Episode>>, EvolutionError> {
        let generation = self.generation;
        genomes
            .par_iter()
            .map(|genome| self.evaluator.evaluate(genome, seeds))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| EvolutionError::Environment { generation, source })
    }

    /// Runs one generation and breeds the next population (unless this was
    /// the last generation).
    pub fn step(&mut self) -> Result<GenerationOutcome, EvolutionError> {
        let started = Instant::now();
        let config = &self.config;
        let g = self.generation;

        let train_seeds: Vec<u64> = (0..config.training_episodes)
            .map(|e| derive_seed(config.master_seed, "train", &[g as u64, e as u64]))
            .collect();
        let results: Vec<EvalResult> = self
            .evaluate_all(&self.population, &train_seeds)?
            .into_iter()
            .zip(&self.population)
            .map(|(episodes, genome)| {
                let scores: Vec<f64> = episodes.iter().map(|e| e.score).collect();
                let first = episodes.into_iter().next().expect("at least one training episode");
                EvalResult {
                    genome: genome.clone(),
                    game_score: mean(&scores),
                    bc: first.bc,
                    lifespan: first.lifespan,
                }
            })
            .collect();
        let bcs: Vec<ActionSequence> = results.iter().map(|r| r.bc.clone()).collect();
        let scores: Vec<f64> = results.iter().map(|r| r.game_score).collect();

        // Entries archived this generation duplicate current individuals, so
        // novelty only looks at what was archived before.
        let archived_before = self.archive.len();
        if config.method != Method::Base {
            for r in &results {
                self.archive.maybe_archive(&r.genome, &r.bc, &mut self.archive_rng);
            }
        }

        let novelty = if config.method == Method::Novelty {
            let prior = &self.archive.entries()[..archived_before];
            let (k, params) = (config.novelty_k, self.params);
            let values = (0..bcs.len())
                .into_par_iter()
                .map(|i| match novelty_score(&bcs[i], prior, &bcs, Some(i), k, params) {
                    Err(BehaviourError::NoNeighbours) => Ok(0.0),
                    other => other,
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(values)
        } else {
            None
        };

        let ranking = rank_descending(novelty.as_deref().unwrap_or(&scores));
        let candidates = truncation_select(&ranking, config.elite_candidate_count)?;

        let valid_seeds: Vec<u64> = (0..config.validation_episodes)
            .map(|e| derive_seed(config.master_seed, "valid", &[e as u64]))
            .collect();
        let candidate_genomes: Vec<Genome> = candidates.iter().map(|&i| self.population[i].clone()).collect();
        let validation: Vec<f64> = self
            .evaluate_all(&candidate_genomes, &valid_seeds)?
            .iter()
            .map(|episodes| mean(&episodes.iter().map(|e| e.score).collect::<Vec<_>>()))
            .collect();
        let elite_pos = rank_descending(&validation)[0];
        let elite = candidate_genomes[elite_pos].clone();
        let elite_validation = validation[elite_pos];

        let mut parents: Vec<Genome> = truncation_select(&ranking, config.truncation_size)?
            .into_iter()
            .map(|i| self.population[i].clone())
            .collect();

        let mut stagnant = false;
        let mut resampled = false;
        let mut mean_novelty = novelty.as_deref().map(mean);
        if config.method == Method::Resample {
            self.v_scores.push(elite_validation);
            if stagnation_check(&self.v_scores, config.improvement_generations) {
                stagnant = true;
                match rank_archive(&self.archive, &bcs, config.novelty_k, self.params) {
                    Ok(order) => {
                        let chosen: Vec<(usize, f64)> = order.into_iter().take(config.resample_count()).collect();
                        mean_novelty = Some(chosen.iter().map(|c| c.1).sum::<f64>() / chosen.len() as f64);
                        parents = chosen.iter().map(|&(i, _)| self.archive.entries()[i].genome.clone()).collect();
                        resampled = true;
                    }
                    Err(EvolutionError::EmptyArchive) => {
                        log::warn!("generation {g}: stagnation detected but the archive is empty; keeping score-based parents");
                    }
                    Err(e) => return Err(e),
                }
                self.v_scores.clear();
            }
        }

        if g + 1 < config.generations {
            let mut next = Vec::with_capacity(config.population_size);
            next.push(elite.clone());
            while next.len() < config.population_size {
                let parent = &parents[self.breed_rng.below(parents.len())];
                next.push(parent.mutate(self.breed_rng.seed32()));
            }
            self.population = next;
        }
        self.generation += 1;

        let log = GenerationLog {
            generation: g,
            mean_score: mean(&scores),
            high_score: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            elite_validation,
            mean_novelty,
            stagnant,
            wall_ms: started.elapsed().as_millis(),
        };
        Ok(GenerationOutcome {
            generation: g,
            results,
            novelty,
            ranking,
            candidates,
            validation,
            elite,
            parents,
            resampled,
            archive_len: self.archive.len(),
            log,
        })
    }

    /// Runs the remaining generations, handing each outcome to `sink`.
    pub fn run_with<S>(mut self, mut sink: S) -> Result<RunSummary, EvolutionError>
    where
        S: FnMut(&GenerationOutcome) -> Result<(), EvolutionError>,
    {
        let mut logs = Vec::with_capacity(self.config.generations);
        let mut elite = None;
        while !self.is_finished() {
            let outcome = self.step()?;
            sink(&outcome)?;
            logs.push(outcome.log);
            elite = Some(outcome.elite);
        }
        Ok(RunSummary {
            elite: elite.expect("at least one generation"),
            logs,
            archive: self.archive,
        })
    }

    pub fn run(self) -> Result<RunSummary, EvolutionError> {
        self.run_with(|_| Ok(()))
    }
}

fn run_method(
    method: Method,
    config: &RunConfig,
    env: &dyn EnvironmentFactory,
) -> Result<(Genome, Vec<GenerationLog>), EvolutionError> {
    if config.method != method {
        return Err(EvolutionError::MethodMismatch { method, configured: config.method });
    }
    let arch = config.architecture_for(env)?;
    let evaluator = PolicyEvaluator::new(env, arch, config.max_frames)?;
    let summary = Evolution::new(config.clone(), &evaluator)?.run()?;
    Ok((summary.elite, summary.logs))
}

pub fn run_base_ga(config: &RunConfig, env: &dyn EnvironmentFactory) -> Result<(Genome, Vec<GenerationLog>), EvolutionError> {
    run_method(Method::Base, config, env)
}

pub fn run_novelty_ga(config: &RunConfig, env: &dyn EnvironmentFactory) -> Result<(Genome, Vec<GenerationLog>), EvolutionError> {
    run_method(Method::Novelty, config, env)
}

pub fn run_resample_ga(config: &RunConfig, env: &dyn EnvironmentFactory) -> Result<(Genome, Vec<GenerationLog>), EvolutionError> {
    run_method(Method::Resample, config, env)
}
