use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::runlog::{read_log, Record};
use super::search::regression_slope;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub global_best: f64,
    pub cache_hits: usize,
    pub population: usize,
}

/// Per-generation statistics and every individual's fitness from a run log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub rows: Vec<GenerationRow>,
    /// `(generation, fitness)` of every evaluated individual.
    pub points: Vec<(usize, f64)>,
}

impl RunSummary {
    pub fn from_log(path: &Path) -> io::Result<Self> {
        let mut out = RunSummary::default();
        for rec in read_log(path)? {
            if let Record::Generation { generation, individuals, cache_hits, best, mean, global_best } = rec {
                out.points.extend(individuals.iter().map(|i| (generation, i.fitness)));
                out.rows.push(GenerationRow {
                    generation,
                    best,
                    mean,
                    global_best: global_best.fitness,
                    cache_hits,
                    population: individuals.len(),
                });
            }
        }
        Ok(out)
    }

    /// Least-squares slope of the per-generation mean fitness.
    pub fn mean_slope(&self) -> f64 {
        regression_slope(&self.rows.iter().map(|r| r.mean).collect::<Vec<_>>())
    }

    /// Least-squares slope over every individual's fitness.
    pub fn point_slope(&self) -> f64 {
        let n = self.points.len() as f64;
        if self.points.len() < 2 {
            return 0.0;
        }
        let mx = self.points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let my = self.points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = self.points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
        let sxx: f64 = self.points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
        if sxx == 0.0 {
            0.0
        } else {
            sxy / sxx
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::from("generation      best      mean  global_best  cache_hits\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>10}  {:>8.4}  {:>8.4}  {:>11.4}  {:>10}",
                r.generation, r.best, r.mean, r.global_best, r.cache_hits
            );
        }
        let _ = writeln!(s, "mean-fitness slope per generation: {:+.6}", self.mean_slope());
        s
    }

    pub fn generations_csv(&self) -> String {
        let mut s = String::from("generation,best,mean,global_best,cache_hits,population\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.generation, r.best, r.mean, r.global_best, r.cache_hits, r.population
            );
        }
        s
    }

    pub fn points_csv(&self) -> String {
        let mut s = String::from("generation,fitness\n");
        for (g, f) in &self.points {
            let _ = writeln!(s, "{g},{f}");
        }
        s
    }
}
