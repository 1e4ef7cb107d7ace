use std::io::{self, BufRead, Write};

use super::protocol::{to_line, Request, Response};
use super::{FinalTrainer, Surrogate};

/// What the echo worker answers train requests with.
#[derive(Debug, Clone, PartialEq)]
pub enum EchoMode {
    /// The same series for every request.
    Canned(Vec<f64>),
    /// The surrogate curve of the requested architecture.
    Surrogate(Surrogate),
}

/// Minimal protocol server used as a test fixture and as a stand-in worker.
/// Serves until the input stream closes.
pub fn serve_echo<R: BufRead, W: Write>(reader: R, mut writer: W, mode: &EchoMode) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let msg = format!("unreadable request: {e}");
                writer.write_all(to_line(&Response::Error { id: 0, transient: false, msg }).as_bytes())?;
                writer.flush()?;
                continue;
            }
        };
        for resp in answer(req, mode) {
            writer.write_all(to_line(&resp).as_bytes())?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn answer(req: Request, mode: &EchoMode) -> Vec<Response> {
    let (id, arch, config, finalize) = match req {
        Request::TrainRequest { id, arch, config } => (id, arch, config, false),
        Request::FinalizeRequest { id, arch, config } => (id, arch, config, true),
    };
    let phenotype = match arch.to_phenotype() {
        Ok(p) => p,
        Err(e) => return vec![Response::Error { id, transient: false, msg: e.to_string() }],
    };
    let mut out = vec![Response::Progress { id, done: u64::from(config.mini_batches / 2) }];
    if finalize {
        let surrogate = match mode {
            EchoMode::Surrogate(s) => *s,
            EchoMode::Canned(_) => Surrogate::default(),
        };
        match surrogate.train_final(&phenotype, &config) {
            Ok(f) => out.push(Response::FinalScores { id, validation: f.validation, test: f.test }),
            Err(e) => out.push(Response::Error { id, transient: e.is_transient(), msg: e.to_string() }),
        }
        return out;
    }
    let series = match mode {
        EchoMode::Canned(s) => s.clone(),
        EchoMode::Surrogate(s) => s.series(&phenotype, &config).values().to_vec(),
    };
    out.push(Response::Progress { id, done: u64::from(config.mini_batches) });
    out.push(Response::Result { id, series, wall_time: None, diagnostics: None });
    out
}
