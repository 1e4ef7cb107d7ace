use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use genas::data_tools::{
    compute_metrics, ConfusionMatrix, DEFAULT_THRESHOLD_HI, DEFAULT_THRESHOLD_LO, DEFAULT_THRESHOLD_STEP,
};
use genas::evaluation::{serve_echo, EchoMode};
use genas::orchestrator::{open_backend, Backend, RunSummary, REPORT_BETA};
use genas::{
    decode, finalize, run_search, threshold_search, validate_genome, Genome, Label, Layer, RunConfig, RunOptions,
    Surrogate,
};

#[derive(Parser)]
#[command(name = "genas", version, about = "Genetic architecture search for small binary image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or resume an evolutionary search.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        label: Label,
        #[arg(long)]
        backend: Option<Backend>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many generations; resume later with --resume.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Write the best genome here.
        #[arg(long)]
        best_out: Option<PathBuf>,
    },
    /// Train a genome on the long schedule and report test metrics.
    Finalize {
        /// File whose first non-empty line is the genome.
        #[arg(long)]
        best: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        label: Option<Label>,
        #[arg(long)]
        backend: Option<Backend>,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the layer stack and parameter count of each genome.
    Decode {
        /// Genome file; standard input when omitted.
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check genomes against the search space; exits non-zero on any violation.
    Validate {
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Metrics and F0.5 threshold for a `score<TAB>label` file.
    Metrics {
        input: Option<PathBuf>,
        /// Fixed threshold instead of the search.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = REPORT_BETA)]
        beta: f64,
    },
    /// Per-generation tables and CSV files from a run log.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Directory for generations.csv and points.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the worker protocol on stdio with synthetic answers.
    EchoWorker {
        /// Answer every train request with this comma-separated series.
        #[arg(long, value_delimiter = ',')]
        canned: Option<Vec<f64>>,
    },
    /// Print a default configuration file.
    InitConfig {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Jsonl,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Search { config, label, backend, resume, stop_after, best_out } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.train.label = label;
            if let Some(b) = backend {
                cfg.backend = b;
            }
            let report = run_search(&cfg, &RunOptions { resume, stop_after })?;
            writeln!(out, "{:>4}  {:>8}  {:>8}  {:>5}", "gen", "best", "mean", "hits")?;
            for g in &report.generations {
                writeln!(out, "{:>4}  {:>8.4}  {:>8.4}  {:>5}", g.generation, g.best, g.mean, g.cache_hits)?;
            }
            writeln!(
                out,
                "best {} fitness {:.4} (generation {})",
                report.best.genome, report.best.fitness, report.best.generation
            )?;
            writeln!(out, "params {} key {}", report.best_phenotype.param_count(), report.best.key)?;
            writeln!(out, "evaluator calls {}", report.evaluator_calls)?;
            if !report.completed {
                writeln!(out, "stopped early; resume with --resume {}", cfg.paths.checkpoint.display())?;
            }
            if let Some(p) = best_out {
                fs::write(&p, format!("{}\n", report.best.genome))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Finalize { best, config, label, backend, out: report_out } => {
            let mut cfg = load_or_default(config.as_deref())?;
            if let Some(l) = label {
                cfg.train.label = l;
            }
            if let Some(b) = backend {
                cfg.backend = b;
            }
            let text = fs::read_to_string(&best).with_context(|| format!("reading {}", best.display()))?;
            let line = text.lines().find(|l| !l.trim().is_empty()).context("genome file is empty")?;
            let genome: Genome = line.trim().parse()?;
            let backend = open_backend(&cfg).context("starting backend")?;
            let r = finalize(&genome, &cfg, backend.as_trainer())?;
            if r.synthetic {
                writeln!(out, "note: surrogate backend, scores are synthetic")?;
            }
            writeln!(out, "genome {}  params {}  mini-batches {}", r.genome, r.param_count, r.mini_batches)?;
            writeln!(out, "threshold {:.3} (validation F{} {:.4})", r.threshold, REPORT_BETA, r.validation_f_beta)?;
            let c = r.confusion;
            writeln!(out, "confusion tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn)?;
            write_metric_table(&mut out, &r.metrics)?;
            if let Some(p) = report_out {
                fs::write(&p, serde_json::to_string_pretty(&r)?).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Decode { input, format, config } => {
            let space = load_or_default(config.as_deref())?.space;
            let mut failed = false;
            for (n, line) in genome_lines(input.as_deref())? {
                let phenotype =
                    line.parse::<Genome>().map_err(anyhow::Error::from).and_then(|g| Ok(decode(&g, &space)?));
                match (phenotype, format) {
                    (Ok(p), Format::Text) => {
                        writeln!(out, "# {line}")?;
                        writeln!(out, "{:<9} {:>3} {:>3} {:>7}  output", "kind", "F", "S", "filters")?;
                        for placed in &p.layers {
                            let (f, s, filters) = layer_columns(&placed.layer);
                            writeln!(
                                out,
                                "{:<9} {:>3} {:>3} {:>7}  {}",
                                placed.layer.kind(),
                                f,
                                s,
                                filters,
                                placed.output
                            )?;
                        }
                        writeln!(
                            out,
                            "params {}  cells kept {}  pruned {}  key {}\n",
                            p.param_count(),
                            p.cells_kept,
                            p.cells_pruned,
                            p.key()
                        )?;
                    }
                    (Ok(p), Format::Jsonl) => {
                        let layers: Vec<_> = p
                            .layers
                            .iter()
                            .map(|l| serde_json::json!({ "layer": l.layer, "output": l.output }))
                            .collect();
                        let rec = serde_json::json!({
                            "line": n,
                            "genome": line,
                            "layers": layers,
                            "param_count": p.param_count(),
                            "cells_kept": p.cells_kept,
                            "cells_pruned": p.cells_pruned,
                            "key": p.key(),
                        });
                        writeln!(out, "{rec}")?;
                    }
                    (Err(e), Format::Text) => {
                        failed = true;
                        eprintln!("line {n}: {e}");
                    }
                    (Err(e), Format::Jsonl) => {
                        failed = true;
                        writeln!(out, "{}", serde_json::json!({ "line": n, "genome": line, "error": e.to_string() }))?;
                    }
                }
            }
            return Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS });
        }
        Command::Validate { input, config } => {
            let space = load_or_default(config.as_deref())?.space;
            let mut bad = 0;
            for (n, line) in genome_lines(input.as_deref())? {
                match line.parse::<Genome>() {
                    Err(e) => {
                        bad += 1;
                        writeln!(out, "line {n}: {e}")?;
                    }
                    Ok(g) => match validate_genome(&g, &space) {
                        Ok(()) => writeln!(out, "line {n}: ok")?,
                        Err(vs) => {
                            bad += 1;
                            for v in &vs.0 {
                                writeln!(out, "line {n}: {v}")?;
                            }
                        }
                    },
                }
            }
            return Ok(if bad > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS });
        }
        Command::Metrics { input, threshold, beta } => {
            let (scores, labels) = read_predictions(input.as_deref())?;
            let t = match threshold {
                Some(t) => t,
                None => {
                    let choice = threshold_search(
                        &scores,
                        &labels,
                        beta,
                        DEFAULT_THRESHOLD_LO,
                        DEFAULT_THRESHOLD_HI,
                        DEFAULT_THRESHOLD_STEP,
                    )?;
                    writeln!(out, "threshold {:.3} (F{beta} {:.4})", choice.threshold, choice.f_beta)?;
                    choice.threshold
                }
            };
            let cm = ConfusionMatrix::from_scores(&scores, &labels, t)?;
            writeln!(out, "samples {}  tp {} fp {} fn {} tn {}", cm.total(), cm.tp, cm.fp, cm.fn_, cm.tn)?;
            write_metric_table(&mut out, &compute_metrics(&cm, beta))?;
        }
        Command::Report { run, out: dir } => {
            let summary = RunSummary::from_log(&run).with_context(|| format!("reading {}", run.display()))?;
            if summary.rows.is_empty() {
                bail!("{} holds no generation records", run.display());
            }
            write!(out, "{}", summary.table())?;
            writeln!(out, "slope of mean fitness {:+.5}/generation", summary.mean_slope())?;
            if let Some(dir) = dir {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("generations.csv"), summary.generations_csv())?;
                fs::write(dir.join("points.csv"), summary.points_csv())?;
                writeln!(out, "wrote {}", dir.display())?;
            }
        }
        Command::EchoWorker { canned } => {
            drop(out);
            let mode = match canned {
                Some(series) => EchoMode::Canned(series),
                None => EchoMode::Surrogate(Surrogate::default()),
            };
            serve_echo(io::stdin().lock(), io::stdout().lock(), &mode)?;
        }
        Command::InitConfig { seed } => {
            write!(out, "{}", RunConfig::with_seed(seed).to_toml())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_or_default(config: Option<&Path>) -> Result<RunConfig> {
    match config {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::with_seed(0)),
    }
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => {
            Box::new(BufReader::new(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?))
        }
        _ => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf)?;
            Box::new(io::Cursor::new(buf))
        }
    })
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn genome_lines(path: Option<&Path>) -> Result<Vec<(usize, String)>> {
    let mut lines = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            lines.push((i + 1, t.to_string()));
        }
    }
    Ok(lines)
}

fn read_predictions(path: Option<&Path>) -> Result<(Vec<f64>, Vec<bool>)> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(s), Some(l), None) = (parts.next(), parts.next(), parts.next()) else {
            bail!("line {}: expected score<TAB>label", i + 1);
        };
        let score: f64 = s.trim().parse().with_context(|| format!("line {}: bad score {s:?}", i + 1))?;
        let label = match l.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => bail!("line {}: label must be 0/1 or true/false, got {other:?}", i + 1),
        };
        scores.push(score);
        labels.push(label);
    }
    if scores.is_empty() {
        bail!("no predictions read");
    }
    Ok((scores, labels))
}

fn layer_columns(layer: &Layer) -> (String, String, String) {
    let dash = || "-".to_string();
    match *layer {
        Layer::Conv { filters, size, stride, .. } => (size.to_string(), stride.to_string(), filters.to_string()),
        Layer::MaxPool { stride } | Layer::AvgPool { stride } => (stride.to_string(), stride.to_string(), dash()),
        Layer::Dense { units, .. } | Layer::Output { units, .. } => (dash(), dash(), units.to_string()),
    }
}

fn write_metric_table(out: &mut impl Write, m: &genas::Metrics) -> io::Result<()> {
    writeln!(out, "accuracy   {:.4}", m.accuracy)?;
    writeln!(out, "precision  {:.4}", m.precision)?;
    writeln!(out, "recall     {:.4}", m.recall)?;
    writeln!(out, "f{:<9}{:.4}", m.beta, m.f_beta)
}
