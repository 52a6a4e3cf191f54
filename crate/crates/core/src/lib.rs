//! Neuroevolution of feed-forward policies with seed-list genomes.
//!
//! Genomes are chains of PRNG seeds that unfold into network weights
//! ([`genome`]). Three evolution loops share one engine ([`evolution`]): a
//! score-driven GA, a novelty-driven GA whose behavioural distance is the
//! segmented edit distance between action strings ([`behaviour`]), and a
//! score-driven GA that resamples novel parents from its archive when
//! validation progress stalls.

pub mod analytics;
pub mod behaviour;
pub mod config;
pub mod environments;
pub mod evolution;
pub mod genome;
pub mod network;
pub mod rng;

pub use behaviour::{ActionSequence, Archive, SegmentationParams};
pub use config::{Method, RunConfig};
pub use environments::{EnvironmentFactory, GridWorld, StubEnvironment};
pub use evolution::{Evolution, EvalResult, GenerationLog, GenerationOutcome};
pub use genome::Genome;
pub use network::ArchitectureDescriptor;
