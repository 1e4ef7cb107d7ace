//! The evaluator contract and its backends.
//!
//! An [`Evaluator`] turns a phenotype into a validation-accuracy series.
//! [`Surrogate`] is a deterministic synthetic landscape for tests and search
//! dynamics studies; [`RemoteEvaluator`] speaks the newline-delimited JSON
//! worker protocol to real trainers.

mod echo;
pub mod protocol;
mod remote;
mod surrogate;

use std::fmt;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_compiler::Phenotype;
use crate::fitness::AccuracySeries;

pub use echo::{serve_echo, EchoMode};
pub use remote::RemoteEvaluator;
pub use surrogate::Surrogate;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[default]
    Head,
    Vacuole,
    Acrosome,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Head => "head",
            Label::Vacuole => "vacuole",
            Label::Acrosome => "acrosome",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head" => Ok(Label::Head),
            "vacuole" => Ok(Label::Vacuole),
            "acrosome" => Ok(Label::Acrosome),
            other => Err(format!("unknown label {other:?} (expected head, vacuole or acrosome)")),
        }
    }
}

/// Training recipe sent with every request. Field names are the wire names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mini_batches: u32,
    pub batch_size: u32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub label: Label,
    pub eval_interval: u32,
    pub seed: u64,
}

/// Mini-batches used for the final training of the best architecture.
pub const FINAL_MINI_BATCHES: u32 = 20_000;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mini_batches: 2000,
            batch_size: 32,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            label: Label::Head,
            eval_interval: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid training config: {0}")]
pub struct TrainConfigError(pub String);

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainConfigError> {
        let bad = |m: &str| Err(TrainConfigError(m.to_owned()));
        if self.mini_batches < 1 || self.batch_size < 1 || self.eval_interval < 1 {
            return bad("mini_batches, batch_size and eval_interval must be >= 1");
        }
        if self.eval_interval > self.mini_batches {
            return bad("eval_interval exceeds mini_batches");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    /// Recordings per training run.
    pub fn series_len(&self) -> usize {
        (self.mini_batches / self.eval_interval.max(1)) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    /// Worker unreachable, resource exhaustion and the like; worth retrying.
    #[error("transient evaluation failure: {0}")]
    Transient(String),
    /// Diverged training, unrealizable architecture, protocol violation.
    #[error("permanent evaluation failure: {0}")]
    Permanent(String),
}

impl EvalError {
    pub fn is_transient(&self) -> bool {
        matches!(self, EvalError::Transient(_))
    }
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        (**self).evaluate(phenotype, cfg)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        (**self).evaluate(phenotype, cfg)
    }
}

/// Scores and binary labels of one data split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Output of the long final training: model scores on validation and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScores {
    pub validation: ScoredSet,
    pub test: ScoredSet,
    /// Set when the scores come from the surrogate rather than a real model.
    pub synthetic: bool,
}

/// Backends able to run the final training of the best architecture.
pub trait FinalTrainer: Send + Sync {
    fn train_final(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<FinalScores, EvalError>;
}

/// Retries transient failures with exponential backoff.
#[derive(Debug, Clone)]
pub struct Retrying<E> {
    inner: E,
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl<E> Retrying<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, max_retries: 3, base_delay: Duration::from_millis(500) }
    }

    pub fn with_delay(mut self, base_delay: Duration) -> Self {
        self.base_delay = base_delay;
        self
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, EvalError>) -> Result<T, EvalError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    let delay = self.base_delay * 2u32.pow(attempt);
                    log::warn!("{e}; retry {} of {} in {delay:?}", attempt + 1, self.max_retries);
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl<E: Evaluator> Evaluator for Retrying<E> {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        self.run(|| self.inner.evaluate(phenotype, cfg))
    }
}

impl<E: FinalTrainer> FinalTrainer for Retrying<E> {
    fn train_final(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<FinalScores, EvalError> {
        self.run(|| self.inner.train_final(phenotype, cfg))
    }
}
