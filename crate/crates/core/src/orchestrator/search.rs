use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::RunConfig;
use super::runlog::{BestRecord, IndividualRecord, Record, RunLog};
use crate::arch_compiler::{decode, ArchKey, Phenotype};
use crate::evaluation::{EvalError, Evaluator, TrainConfig};
use crate::fitness::{lookup_or_evaluate, AccuracySeries, FitnessCache, FitnessError, Lookup};
use crate::genetic_ops::{next_generation, BreedRngs, GaError, Individual};
use crate::rng::{stream, Purpose};
use crate::search_space::{random_genome, Genome, Violations};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub cache_hits: usize,
    pub failures: usize,
}

/// Everything needed to continue a run after generation `next_generation - 1`.
///
/// Random streams are derived from the master seed and the generation index,
/// so no generator state has to be stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub version: u32,
    pub config_digest: String,
    pub next_generation: usize,
    pub population: Vec<Genome>,
    pub global_best: Option<BestRecord>,
    pub history: Vec<GenerationSummary>,
    /// Architectures evaluated so far in this run, sorted.
    pub seen: Vec<ArchKey>,
    /// Run log length in bytes when this state was written.
    pub log_len: u64,
}

impl SearchState {
    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Writes through a temporary file and a rename so a crash never leaves
    /// a torn checkpoint.
    pub fn store(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(self).map_err(io::Error::other)?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("{what} {path}: {source}")]
    Io { what: &'static str, path: PathBuf, source: io::Error },
    #[error("checkpoint {0} was written by a different configuration")]
    CheckpointMismatch(PathBuf),
    #[error("population member is invalid: {0}")]
    InvalidGenome(#[from] Violations),
    #[error(transparent)]
    Selection(#[from] GaError),
    #[error("evaluation aborted the run: {0}")]
    Evaluation(FitnessError),
    #[error("nothing to report: no generation was evaluated")]
    Empty,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from this checkpoint instead of starting over.
    pub resume: Option<PathBuf>,
    /// Stop after evaluating this many generations in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub generations: Vec<GenerationSummary>,
    pub best: BestRecord,
    pub best_phenotype: Phenotype,
    /// Evaluator invocations made by this invocation (persistent-cache misses).
    pub evaluator_calls: u64,
    /// False when the run stopped early through `stop_after`.
    pub completed: bool,
}

struct Counting<'a> {
    inner: &'a dyn Evaluator,
    calls: AtomicU64,
}

impl Evaluator for Counting<'_> {
    fn evaluate(&self, p: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(p, cfg)
    }
}

fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.paths = Default::default();
    c.worker_slots = 1;
    let json = serde_json::to_string(&c).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// The generational loop: evaluate, select, pair, cross over, mutate.
pub struct Search<'a> {
    cfg: &'a RunConfig,
    evaluator: Counting<'a>,
    cache: &'a FitnessCache,
}

impl<'a> Search<'a> {
    pub fn new(cfg: &'a RunConfig, evaluator: &'a dyn Evaluator, cache: &'a FitnessCache) -> Self {
        Self { cfg, evaluator: Counting { inner: evaluator, calls: AtomicU64::new(0) }, cache }
    }

    pub fn run(&self, opts: &RunOptions) -> Result<SearchReport, SearchError> {
        let cfg = self.cfg;
        cfg.validate()?;
        let digest = config_digest(cfg);
        let log_path = &cfg.paths.run_log;
        let io_err = |what, path: &Path| {
            let path = path.to_path_buf();
            move |source| SearchError::Io { what, path, source }
        };

        let (mut state, mut log) = match &opts.resume {
            Some(ckpt) => {
                let state = SearchState::load(ckpt).map_err(io_err("reading checkpoint", ckpt))?;
                if state.config_digest != digest || state.version != CHECKPOINT_VERSION {
                    return Err(SearchError::CheckpointMismatch(ckpt.clone()));
                }
                let log = RunLog::resume(log_path, state.log_len).map_err(io_err("reopening run log", log_path))?;
                (state, log)
            }
            None => {
                let log = RunLog::create(log_path, cfg).map_err(io_err("creating run log", log_path))?;
                let mut rng = stream(cfg.seed, Purpose::Init, 0);
                let population = (0..cfg.ga.population_size).map(|_| random_genome(&cfg.space, &mut rng)).collect();
                let state = SearchState {
                    version: CHECKPOINT_VERSION,
                    config_digest: digest,
                    next_generation: 0,
                    population,
                    global_best: None,
                    history: Vec::new(),
                    seen: Vec::new(),
                    log_len: log.len(),
                };
                (state, log)
            }
        };

        let mut seen: BTreeSet<ArchKey> = state.seen.iter().copied().collect();
        let mut done_here = 0;
        while state.next_generation < cfg.ga.generations {
            if opts.stop_after.is_some_and(|n| done_here >= n) {
                break;
            }
            let generation = state.next_generation;
            let records = self.evaluate_generation(&state.population, &mut seen)?;
            let summary = summarize(generation, &records);

            for r in &records {
                let better = state.global_best.as_ref().is_none_or(|b| r.fitness > b.fitness);
                if better {
                    state.global_best =
                        Some(BestRecord { genome: r.genome.clone(), key: r.key, fitness: r.fitness, generation });
                }
            }
            let global_best = state.global_best.clone().expect("population is non-empty");
            log.append(&Record::Generation {
                generation,
                individuals: records.clone(),
                cache_hits: summary.cache_hits,
                best: summary.best,
                mean: summary.mean,
                global_best,
            })
            .map_err(io_err("writing run log", log_path))?;
            log::info!(
                "generation {generation}: best {:.4} mean {:.4} hits {}",
                summary.best,
                summary.mean,
                summary.cache_hits
            );
            state.history.push(summary);

            if generation + 1 < cfg.ga.generations {
                let pop: Vec<Individual> = records
                    .iter()
                    .map(|r| Individual {
                        genome: r.genome.clone(),
                        fitness: Some(r.fitness),
                        generation_born: generation,
                    })
                    .collect();
                let g = generation as u64;
                let (mut sel, mut cx, mut mu) = (
                    stream(cfg.seed, Purpose::Selection, g),
                    stream(cfg.seed, Purpose::Crossover, g),
                    stream(cfg.seed, Purpose::Mutation, g),
                );
                let (children, events) = next_generation(
                    &pop,
                    &cfg.space,
                    &cfg.ga,
                    BreedRngs { selection: &mut sel, crossover: &mut cx, mutation: &mut mu },
                )?;
                log.append(&Record::Operators { generation, events }).map_err(io_err("writing run log", log_path))?;
                state.population = children;
            }
            state.next_generation = generation + 1;
            if state.next_generation == cfg.ga.generations {
                let best = state.global_best.clone().expect("at least one generation ran");
                log.append(&Record::Summary { generations: cfg.ga.generations, best })
                    .map_err(io_err("writing run log", log_path))?;
            }
            state.seen = seen.iter().copied().collect();
            state.log_len = log.len();
            state.store(&cfg.paths.checkpoint).map_err(io_err("writing checkpoint", &cfg.paths.checkpoint))?;
            done_here += 1;
        }

        let best = state.global_best.clone().ok_or(SearchError::Empty)?;
        let best_phenotype = decode(&best.genome, &cfg.space)?;
        Ok(SearchReport {
            generations: state.history,
            best,
            best_phenotype,
            evaluator_calls: self.evaluator.calls.load(Ordering::Relaxed),
            completed: state.next_generation >= cfg.ga.generations,
        })
    }

    /// Fitness of every genome. Each distinct architecture is looked up once;
    /// misses run concurrently on up to `worker_slots` threads.
    fn evaluate_generation(
        &self,
        genomes: &[Genome],
        seen: &mut BTreeSet<ArchKey>,
    ) -> Result<Vec<IndividualRecord>, SearchError> {
        let keys =
            genomes.iter().map(|g| decode(g, &self.cfg.space).map(|p| p.key())).collect::<Result<Vec<_>, _>>()?;
        let mut unique: Vec<(ArchKey, &Genome)> = Vec::new();
        let mut index_of: HashMap<ArchKey, usize> = HashMap::new();
        for (k, g) in keys.iter().zip(genomes) {
            index_of.entry(*k).or_insert_with(|| {
                unique.push((*k, g));
                unique.len() - 1
            });
        }

        let results: Vec<Mutex<Option<Result<Lookup, FitnessError>>>> =
            unique.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let work = || loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some((_, genome)) = unique.get(i) else { break };
            let r = lookup_or_evaluate(
                genome,
                &self.cfg.space,
                self.cache,
                &self.evaluator,
                &self.cfg.train,
                &self.cfg.fitness,
            );
            *results[i].lock().unwrap() = Some(r);
        };
        let threads = self.cfg.worker_slots.min(unique.len()).max(1);
        if threads == 1 {
            work();
        } else {
            thread::scope(|s| {
                for _ in 0..threads {
                    s.spawn(work);
                }
            });
        }

        let mut outcome: Vec<(f64, Option<String>)> = Vec::with_capacity(unique.len());
        for r in results {
            match r.into_inner().unwrap().expect("every slot was filled") {
                Ok(l) => outcome.push((l.fitness, None)),
                Err(FitnessError::Eval { key, source: EvalError::Permanent(msg) }) => {
                    log::warn!("architecture {key} failed permanently, fitness 0: {msg}");
                    outcome.push((0.0, Some(msg)));
                }
                Err(e) => return Err(SearchError::Evaluation(e)),
            }
        }

        let mut in_generation = BTreeSet::new();
        let records = keys
            .iter()
            .zip(genomes)
            .map(|(k, g)| {
                let cache_hit = seen.contains(k) || !in_generation.insert(*k);
                let (fitness, failure) = outcome[index_of[k]].clone();
                IndividualRecord { genome: g.clone(), key: *k, fitness, cache_hit, failure }
            })
            .collect();
        seen.extend(in_generation);
        Ok(records)
    }
}

fn summarize(generation: usize, records: &[IndividualRecord]) -> GenerationSummary {
    let n = records.len().max(1) as f64;
    GenerationSummary {
        generation,
        best: records.iter().map(|r| r.fitness).fold(f64::NEG_INFINITY, f64::max),
        mean: records.iter().map(|r| r.fitness).sum::<f64>() / n,
        cache_hits: records.iter().filter(|r| r.cache_hit).count(),
        failures: records.iter().filter(|r| r.failure.is_some()).count(),
    }
}

/// Ordinary least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn regression_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}
