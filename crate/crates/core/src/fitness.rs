//! Window-smoothed fitness over a validation-accuracy series and the
//! persistent, content-keyed fitness cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_compiler::{decode, ArchKey};
use crate::evaluation::{EvalError, Evaluator, TrainConfig};
use crate::search_space::{Genome, SearchSpace, Violations};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("accuracy series is empty")]
    Empty,
    #[error("accuracy value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("window must be non-empty with non-negative weights and a positive sum")]
    BadWindow,
}

/// Per-recording validation accuracies, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySeries<T> {
    values: Vec<T>,
    /// Mini-batches between consecutive recordings.
    pub eval_interval: u32,
}

impl<T: Float> AccuracySeries<T> {
    pub fn new(values: Vec<T>, eval_interval: u32) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (index, v) in values.iter().enumerate() {
            if !(*v >= T::zero() && *v <= T::one()) {
                return Err(SeriesError::OutOfRange { index, value: v.to_f64().unwrap_or(f64::NAN) });
            }
        }
        Ok(Self { values, eval_interval })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Float + Serialize + for<'a> Deserialize<'a>")]
pub struct Window<T> {
    weights: Vec<T>,
}

impl<T: Float> Window<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, SeriesError> {
        let ok = !weights.is_empty()
            && weights.iter().all(|w| w.is_finite() && *w >= T::zero())
            && weights.iter().fold(T::zero(), |a, &w| a + w) > T::zero();
        if ok {
            Ok(Self { weights })
        } else {
            Err(SeriesError::BadWindow)
        }
    }

    /// All-ones window of the given size.
    pub fn ones(size: usize) -> Self {
        Self { weights: vec![T::one(); size.max(1)] }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl<T: Float> Default for Window<T> {
    fn default() -> Self {
        Self::ones(5)
    }
}

impl<T: Float> TryFrom<Vec<T>> for Window<T> {
    type Error = SeriesError;

    fn try_from(v: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl<T> From<Window<T>> for Vec<T> {
    fn from(w: Window<T>) -> Self {
        w.weights
    }
}

/// How each window position is reduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Weighted mean: the dot product divided by the weight sum.
    #[default]
    WeightedMean,
    /// Plain dot product of window and series.
    RawSum,
}

/// Max over all full window positions of the weighted mean of the series.
///
/// A series shorter than the window falls back to its plain mean, in either
/// smoothing mode.
pub fn genas_wf<T: Float>(series: &AccuracySeries<T>, window: &Window<T>) -> Result<T, SeriesError> {
    genas_wf_with(series.values(), window, Smoothing::WeightedMean)
}

pub fn genas_wf_with<T: Float>(b: &[T], window: &Window<T>, mode: Smoothing) -> Result<T, SeriesError> {
    if b.is_empty() {
        return Err(SeriesError::Empty);
    }
    let w = window.weights();
    let reduce = |values: &[T], weights: &[T]| {
        let dot = values.iter().zip(weights).fold(T::zero(), |a, (&v, &w)| a + v * w);
        match mode {
            Smoothing::RawSum => dot,
            Smoothing::WeightedMean => dot / weights.iter().fold(T::zero(), |a, &x| a + x),
        }
    };
    if b.len() < w.len() {
        let n = T::from(b.len()).unwrap();
        return Ok(b.iter().fold(T::zero(), |a, &x| a + x) / n);
    }
    Ok(b.windows(w.len()).map(|chunk| reduce(chunk, w)).fold(T::neg_infinity(), T::max))
}

/// Thread-safe fitness store keyed by architecture digest, optionally backed
/// by an append-only record file (`digest<TAB>fitness<TAB>timestamp`).
#[derive(Debug, Default)]
pub struct FitnessCache {
    entries: RwLock<HashMap<ArchKey, f64>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed cache record")]
    Malformed { path: PathBuf, line: usize },
}

impl FitnessCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and replays its records.
    /// Later records win over earlier ones for the same key.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| CacheError::Io { path: path.clone(), source };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let (key, fit) =
                    parse_record(&line).ok_or_else(|| CacheError::Malformed { path: path.clone(), line: i + 1 })?;
                entries.insert(key, fit);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        Ok(Self { entries: RwLock::new(entries), file: Some(Mutex::new(file)), path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &ArchKey) -> Option<f64> {
        self.entries.read().unwrap().get(key).copied()
    }

    pub fn contains(&self, key: &ArchKey) -> bool {
        self.entries.read().unwrap().contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: ArchKey, fitness: f64) -> Result<(), CacheError> {
        if let (Some(file), Some(path)) = (&self.file, &self.path) {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            let mut f = file.lock().unwrap();
            // {:?} prints the shortest text that parses back to the same bits
            writeln!(f, "{key}\t{fitness:?}\t{ts}")
                .and_then(|_| f.flush())
                .map_err(|source| CacheError::Io { path: path.clone(), source })?;
        }
        self.entries.write().unwrap().insert(key, fitness);
        Ok(())
    }

    /// Snapshot of all entries, sorted by key.
    pub fn entries(&self) -> Vec<(ArchKey, f64)> {
        let mut v: Vec<_> = self.entries.read().unwrap().iter().map(|(k, f)| (*k, *f)).collect();
        v.sort_by_key(|e| e.0);
        v
    }
}

fn parse_record(line: &str) -> Option<(ArchKey, f64)> {
    let mut parts = line.split('\t');
    let key = parts.next()?.parse().ok()?;
    let fit = parts.next()?.parse().ok()?;
    Some((key, fit))
}

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error(transparent)]
    Invalid(#[from] Violations),
    #[error("evaluating {key}: {source}")]
    Eval { key: ArchKey, source: EvalError },
    #[error("series for {key}: {source}")]
    Series { key: ArchKey, source: SeriesError },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Outcome of a cache-aware fitness lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub key: ArchKey,
    pub fitness: f64,
    pub hit: bool,
}

/// Smoothing parameters shared by every fitness computation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    pub window: Window<f64>,
    pub smoothing: Smoothing,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self { window: Window::ones(5), smoothing: Smoothing::WeightedMean }
    }
}

impl FitnessConfig {
    pub fn score(&self, series: &AccuracySeries<f64>) -> Result<f64, SeriesError> {
        genas_wf_with(series.values(), &self.window, self.smoothing)
    }
}

/// Returns the cached fitness for the genome's architecture, or evaluates,
/// smooths and stores it. The cache is untouched when evaluation fails.
pub fn lookup_or_evaluate<E: Evaluator + ?Sized>(
    genome: &Genome,
    space: &SearchSpace,
    cache: &FitnessCache,
    evaluator: &E,
    train: &TrainConfig,
    fitness: &FitnessConfig,
) -> Result<Lookup, FitnessError> {
    let phenotype = decode(genome, space)?;
    let key = phenotype.key();
    if let Some(fit) = cache.get(&key) {
        log::debug!("cache hit {key}");
        return Ok(Lookup { key, fitness: fit, hit: true });
    }
    log::debug!("cache miss {key}");
    let series = evaluator.evaluate(&phenotype, train).map_err(|source| FitnessError::Eval { key, source })?;
    let fit = fitness.score(&series).map_err(|source| FitnessError::Series { key, source })?;
    cache.insert(key, fit)?;
    Ok(Lookup { key, fitness: fit, hit: false })
}
