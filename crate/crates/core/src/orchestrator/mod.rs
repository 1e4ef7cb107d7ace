//! The search driver: configuration, the generational loop with
//! checkpoint/resume, the final training step and run-log reports.

mod config;
mod finalize;
mod report;
mod runlog;
mod search;

use std::io;
use std::time::Duration;

pub use config::{Backend, ConfigError, Paths, RemoteConfig, RunConfig, SurrogateConfig};
pub use finalize::{finalize, FinalReport, FinalizeError, REPORT_BETA};
pub use report::{GenerationRow, RunSummary};
pub use runlog::{read_log, BestRecord, IndividualRecord, Record, RunLog, RUN_LOG_VERSION};
pub use search::{
    regression_slope, GenerationSummary, RunOptions, Search, SearchError, SearchReport, SearchState, CHECKPOINT_VERSION,
};

use crate::evaluation::{Evaluator, FinalTrainer, RemoteEvaluator, Retrying, Surrogate};
use crate::fitness::FitnessCache;

/// A backend usable both during search and for the final training.
pub trait TrainingBackend: Evaluator + FinalTrainer {
    fn as_evaluator(&self) -> &dyn Evaluator;
    fn as_trainer(&self) -> &dyn FinalTrainer;
}

impl<T: Evaluator + FinalTrainer> TrainingBackend for T {
    fn as_evaluator(&self) -> &dyn Evaluator {
        self
    }

    fn as_trainer(&self) -> &dyn FinalTrainer {
        self
    }
}

/// Builds the configured backend. Remote backends retry transient failures.
pub fn open_backend(cfg: &RunConfig) -> io::Result<Box<dyn TrainingBackend>> {
    match cfg.backend {
        Backend::Surrogate => Ok(Box::new(Surrogate { noise_sd: cfg.surrogate.noise_sd })),
        Backend::Remote => {
            let remote = if let Some(socket) = &cfg.remote.socket {
                connect_socket(socket, cfg.worker_slots)?
            } else if let Some(cmd) = &cfg.remote.command {
                RemoteEvaluator::spawn(cmd, &cfg.remote.args, cfg.worker_slots)?
            } else {
                return Err(io::Error::new(io::ErrorKind::InvalidInput, "no remote endpoint configured"));
            };
            let mut r = Retrying::new(remote);
            if let Some(ms) = cfg.remote.retry_delay_ms {
                r = r.with_delay(Duration::from_millis(ms));
            }
            Ok(Box::new(r))
        }
    }
}

#[cfg(unix)]
fn connect_socket(path: &std::path::Path, slots: usize) -> io::Result<RemoteEvaluator> {
    RemoteEvaluator::connect(path, slots)
}

#[cfg(not(unix))]
fn connect_socket(_: &std::path::Path, _: usize) -> io::Result<RemoteEvaluator> {
    Err(io::Error::new(io::ErrorKind::Unsupported, "unix sockets are not available on this platform"))
}

/// Opens the configured cache and backend and runs (or resumes) a search.
pub fn run_search(cfg: &RunConfig, opts: &RunOptions) -> Result<SearchReport, SearchError> {
    cfg.validate()?;
    let cache = FitnessCache::open(&cfg.paths.cache).map_err(|e| SearchError::Io {
        what: "opening cache",
        path: cfg.paths.cache.clone(),
        source: io::Error::other(e),
    })?;
    let backend = open_backend(cfg).map_err(|source| SearchError::Io {
        what: "starting backend",
        path: cfg.remote.command.clone().unwrap_or_default().into(),
        source,
    })?;
    Search::new(cfg, backend.as_evaluator(), &cache).run(opts)
}
