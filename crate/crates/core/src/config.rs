//! Run configuration.
//!
//! The on-disk format is one `key = value` pair per line with `#` comments.
//! Unknown keys, repeated keys and unparsable values are errors.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::environments::EnvironmentFactory;
use crate::network::{format_layers, parse_layers, ArchitectureDescriptor, Layer, NetworkError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: bad value for `{key}`: {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid architecture: {0}")]
    Architecture(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Score-driven GA.
    Base,
    /// Parents chosen by behavioural novelty; elite by validation score.
    Novelty,
    /// Score-driven GA that resamples parents from the archive on stagnation.
    Resample,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Novelty => "novelty",
            Method::Resample => "resample",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Method::Base),
            "novelty" => Ok(Method::Novelty),
            "resample" => Ok(Method::Resample),
            other => Err(format!("unknown method `{other}` (expected base, novelty or resample)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub population_size: usize,
    pub generations: usize,
    pub truncation_size: usize,
    pub mutation_power: f32,
    pub archive_probability: f64,
    pub max_frames: usize,
    pub training_episodes: usize,
    pub validation_episodes: usize,
    pub improvement_generations: usize,
    pub novelty_k: usize,
    pub segment_length: usize,
    pub elite_candidate_count: usize,
    /// Parents drawn from the archive on stagnation; `None` means `2 * T`.
    pub resample_count: Option<usize>,
    pub master_seed: u64,
    pub hidden_layers: Vec<Layer>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Novelty,
            population_size: 101,
            generations: 500,
            truncation_size: 20,
            mutation_power: 0.002,
            archive_probability: 0.1,
            max_frames: 20_000,
            training_episodes: 1,
            validation_episodes: 5,
            improvement_generations: 10,
            novelty_k: 25,
            segment_length: 500,
            elite_candidate_count: 10,
            resample_count: None,
            master_seed: 0,
            hidden_layers: vec![Layer::Dense { units: 16 }, Layer::Dense { units: 16 }],
        }
    }
}

const KEYS: &[&str] = &[
    "method",
    "population_size",
    "generations",
    "truncation_size",
    "mutation_power",
    "archive_probability",
    "max_frames",
    "training_episodes",
    "validation_episodes",
    "improvement_generations",
    "novelty_k",
    "segment_length",
    "elite_candidate_count",
    "resample_count",
    "master_seed",
    "hidden_layers",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Syntax { line, reason: format!("duplicate key `{key}`") });
            }
            seen.push(key);
            config.set(key, value).map_err(|reason| ConfigError::Value {
                line,
                key: key.to_string(),
                reason,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("`{value}` is not a valid number"))
        }
        match key {
            "method" => self.method = value.parse()?,
            "population_size" => self.population_size = num(value)?,
            "generations" => self.generations = num(value)?,
            "truncation_size" => self.truncation_size = num(value)?,
            "mutation_power" => self.mutation_power = num(value)?,
            "archive_probability" => self.archive_probability = num(value)?,
            "max_frames" => self.max_frames = num(value)?,
            "training_episodes" => self.training_episodes = num(value)?,
            "validation_episodes" => self.validation_episodes = num(value)?,
            "improvement_generations" => self.improvement_generations = num(value)?,
            "novelty_k" => self.novelty_k = num(value)?,
            "segment_length" => self.segment_length = num(value)?,
            "elite_candidate_count" => self.elite_candidate_count = num(value)?,
            "resample_count" => self.resample_count = Some(num(value)?),
            "master_seed" => self.master_seed = num(value)?,
            "hidden_layers" => self.hidden_layers = parse_layers(value).map_err(|e| e.to_string())?,
            _ => unreachable!("keys are checked before set"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.population_size == 0 {
            return fail("population_size must be at least 1");
        }
        if self.generations == 0 {
            return fail("generations must be at least 1");
        }
        if self.truncation_size == 0 || self.truncation_size > self.population_size {
            return fail("truncation_size must be in 1..=population_size");
        }
        if self.elite_candidate_count == 0 || self.elite_candidate_count > self.population_size {
            return fail("elite_candidate_count must be in 1..=population_size");
        }
        if !self.mutation_power.is_finite() || self.mutation_power < 0.0 {
            return fail("mutation_power must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.archive_probability) {
            return fail("archive_probability must lie in [0, 1]");
        }
        if self.max_frames == 0 {
            return fail("max_frames must be at least 1");
        }
        if self.training_episodes == 0 {
            return fail("training_episodes must be at least 1");
        }
        if self.validation_episodes == 0 {
            return fail("validation_episodes must be at least 1");
        }
        if self.method == Method::Resample && self.improvement_generations == 0 {
            return fail("improvement_generations must be at least 1");
        }
        if self.novelty_k == 0 {
            return fail("novelty_k must be at least 1");
        }
        if self.segment_length == 0 {
            return fail("segment_length must be at least 1");
        }
        if self.resample_count == Some(0) {
            return fail("resample_count must be at least 1");
        }
        Ok(())
    }

    pub fn resample_count(&self) -> usize {
        self.resample_count.unwrap_or(2 * self.truncation_size)
    }

    /// Hidden layers wrapped with the environment's input and action sizes.
    pub fn architecture_for(&self, env: &dyn EnvironmentFactory) -> Result<ArchitectureDescriptor, ConfigError> {
        Ok(ArchitectureDescriptor::new(
            vec![env.observation_length()],
            self.hidden_layers.clone(),
            env.action_space_size(),
        )?)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method = {}", self.method)?;
        writeln!(f, "population_size = {}", self.population_size)?;
        writeln!(f, "generations = {}", self.generations)?;
        writeln!(f, "truncation_size = {}", self.truncation_size)?;
        writeln!(f, "mutation_power = {}", self.mutation_power)?;
        writeln!(f, "archive_probability = {}", self.archive_probability)?;
        writeln!(f, "max_frames = {}", self.max_frames)?;
        writeln!(f, "training_episodes = {}", self.training_episodes)?;
        writeln!(f, "validation_episodes = {}", self.validation_episodes)?;
        writeln!(f, "improvement_generations = {}", self.improvement_generations)?;
        writeln!(f, "novelty_k = {}", self.novelty_k)?;
        writeln!(f, "segment_length = {}", self.segment_length)?;
        writeln!(f, "elite_candidate_count = {}", self.elite_candidate_count)?;
        if let Some(count) = self.resample_count {
            writeln!(f, "resample_count = {count}")?;
        }
        writeln!(f, "master_seed = {}", self.master_seed)?;
        writeln!(f, "hidden_layers = {}", format_layers(&self.hidden_layers))
    }
}
