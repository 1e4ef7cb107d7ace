use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RunConfig;
use crate::arch_compiler::{decode, ArchKey, Layer};
use crate::data_tools::{
    compute_metrics, threshold_search, ConfusionMatrix, DataError, Metrics, DEFAULT_THRESHOLD_HI, DEFAULT_THRESHOLD_LO,
    DEFAULT_THRESHOLD_STEP,
};
use crate::evaluation::{EvalError, FinalTrainer, TrainConfig};
use crate::search_space::{Genome, Violations};

/// F-beta weight used for threshold selection and reporting.
pub const REPORT_BETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub genome: Genome,
    pub key: ArchKey,
    pub layers: Vec<Layer>,
    pub param_count: u64,
    pub mini_batches: u32,
    pub threshold: f64,
    pub validation_f_beta: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics<f64>,
    /// Scores came from the surrogate; the metrics are placeholders.
    pub synthetic: bool,
}

#[derive(Debug, Error)]
pub enum FinalizeError {
    #[error(transparent)]
    Invalid(#[from] Violations),
    #[error("final training failed: {0}")]
    Backend(#[from] EvalError),
    #[error("scoring: {0}")]
    Data(#[from] DataError),
}

/// Trains the best architecture for the long schedule, picks the threshold
/// maximizing validation F0.5 in `[0.2, 0.8]` and scores the test split with
/// it.
pub fn finalize(best: &Genome, cfg: &RunConfig, trainer: &dyn FinalTrainer) -> Result<FinalReport, FinalizeError> {
    let phenotype = decode(best, &cfg.space)?;
    let train = TrainConfig { mini_batches: cfg.final_mini_batches, ..cfg.train.clone() };
    let scores = trainer.train_final(&phenotype, &train)?;
    let choice = threshold_search(
        &scores.validation.scores,
        &scores.validation.labels,
        REPORT_BETA,
        DEFAULT_THRESHOLD_LO,
        DEFAULT_THRESHOLD_HI,
        DEFAULT_THRESHOLD_STEP,
    )?;
    let confusion = ConfusionMatrix::from_scores(&scores.test.scores, &scores.test.labels, choice.threshold)?;
    Ok(FinalReport {
        genome: best.clone(),
        key: phenotype.key(),
        layers: phenotype.plain_layers().copied().collect(),
        param_count: phenotype.param_count(),
        mini_batches: train.mini_batches,
        threshold: choice.threshold,
        validation_f_beta: choice.f_beta,
        confusion,
        metrics: compute_metrics(&confusion, REPORT_BETA),
        synthetic: scores.synthetic,
    })
}
