//! Line-per-record JSON run log. The first line is a versioned header.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::arch_compiler::ArchKey;
use crate::genetic_ops::OperatorEvent;
use crate::search_space::Genome;

pub const RUN_LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub genome: Genome,
    pub key: ArchKey,
    pub fitness: f64,
    /// Architecture already seen earlier in this run.
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub genome: Genome,
    pub key: ArchKey,
    pub fitness: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header {
        version: u32,
        config: Box<RunConfig>,
    },
    Generation {
        generation: usize,
        individuals: Vec<IndividualRecord>,
        cache_hits: usize,
        best: f64,
        mean: f64,
        global_best: BestRecord,
    },
    Operators {
        generation: usize,
        events: Vec<OperatorEvent>,
    },
    Summary {
        generations: usize,
        best: BestRecord,
    },
}

pub struct RunLog {
    file: File,
    path: PathBuf,
    len: u64,
}

impl RunLog {
    /// Starts a fresh log, replacing any existing file.
    pub fn create(path: &Path, config: &RunConfig) -> io::Result<Self> {
        let file = File::create(path)?;
        let mut log = Self { file, path: path.to_path_buf(), len: 0 };
        log.append(&Record::Header { version: RUN_LOG_VERSION, config: Box::new(config.clone()) })?;
        Ok(log)
    }

    /// Reopens a log and cuts it back to `len` bytes, dropping records
    /// written after the checkpoint that recorded that length.
    pub fn resume(path: &Path, len: u64) -> io::Result<Self> {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let actual = file.metadata()?.len();
        if actual < len {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("run log {} is shorter ({actual} bytes) than its checkpoint ({len})", path.display()),
            ));
        }
        file.set_len(len)?;
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0))?;
        Ok(Self { file, path: path.to_path_buf(), len })
    }

    pub fn append(&mut self, record: &Record) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.len += line.len() as u64;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every record of a log, checking the header version.
pub fn read_log(path: &Path) -> io::Result<Vec<Record>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        if i == 0 {
            match &rec {
                Record::Header { version, .. } if *version == RUN_LOG_VERSION => {}
                Record::Header { version, .. } => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("unsupported run log version {version}"),
                    ))
                }
                _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "run log lacks a header")),
            }
        }
        out.push(rec);
    }
    Ok(out)
}
