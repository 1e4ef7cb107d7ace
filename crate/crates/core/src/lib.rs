//! Genetic neural-architecture search over plain convolutional networks.
//!
//! Genomes are flat integer strings, four genes per conv cell. They compile
//! to layer stacks (pruned so no feature map collapses), get trained by a
//! pluggable backend, and are scored by the maximum of a window-smoothed
//! validation-accuracy curve. Scores are cached by architecture digest.
//!
//! Numeric code for fitness smoothing and classification metrics is generic
//! over [`num_traits::Float`]; the aliases below fix the scalar type.

pub mod arch_compiler;
pub mod data_tools;
pub mod evaluation;
pub mod fitness;
pub mod genetic_ops;
pub mod orchestrator;
pub mod rng;
pub mod search_space;

pub use arch_compiler::{canonical_key, decode, out_dim, param_count, ArchKey, Layer, Phenotype, Shape};
pub use data_tools::{balanced_batches, compute_metrics, threshold_search, ConfusionMatrix};
pub use evaluation::{EvalError, Evaluator, FinalTrainer, Label, RemoteEvaluator, Surrogate, TrainConfig};
pub use fitness::{genas_wf, lookup_or_evaluate, FitnessCache, Smoothing};
pub use genetic_ops::{crossover, mutate, tournament_select, GaConfig, Individual};
pub use orchestrator::{finalize, run_search, RunConfig, RunOptions, SearchReport};
pub use search_space::{random_genome, validate_genome, Genome, SearchSpace};

pub type AccuracySeries = fitness::AccuracySeries<f64>;
pub type AccuracySeries32 = fitness::AccuracySeries<f32>;
pub type Window = fitness::Window<f64>;
pub type Window32 = fitness::Window<f32>;
pub type Metrics = data_tools::Metrics<f64>;
pub type Metrics32 = data_tools::Metrics<f32>;
pub type ThresholdChoice = data_tools::ThresholdChoice<f64>;
