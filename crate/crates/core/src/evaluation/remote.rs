use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, TryLockError};

use super::protocol::{to_line, Request, Response, WireArch};
use super::{EvalError, Evaluator, FinalScores, FinalTrainer, TrainConfig};
use crate::arch_compiler::Phenotype;
use crate::fitness::AccuracySeries;

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    /// Terminal records that arrived for other request ids.
    parked: HashMap<u64, Response>,
    child: Option<Child>,
}

impl Connection {
    fn call(&mut self, req: &Request) -> Result<Response, EvalError> {
        let id = req.id();
        self.writer
            .write_all(to_line(req).as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| EvalError::Transient(format!("sending request {id}: {e}")))?;
        if let Some(r) = self.parked.remove(&id) {
            return Ok(r);
        }
        let mut line = String::new();
        loop {
            line.clear();
            let n = self
                .reader
                .read_line(&mut line)
                .map_err(|e| EvalError::Transient(format!("reading from worker: {e}")))?;
            if n == 0 {
                return Err(EvalError::Transient(format!("worker closed the stream before answering {id}")));
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(line.trim())
                .map_err(|e| EvalError::Permanent(format!("malformed worker record {:?}: {e}", line.trim())))?;
            match resp {
                Response::Progress { id: rid, done } => log::trace!("request {rid}: {done} mini-batches done"),
                r if r.id() == id => return Ok(r),
                r => {
                    self.parked.insert(r.id(), r);
                }
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Client for trainer workers. Each slot is one worker connection; requests
/// on different slots run concurrently.
pub struct RemoteEvaluator {
    slots: Vec<Mutex<Connection>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for RemoteEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEvaluator").field("slots", &self.slots.len()).finish()
    }
}

impl RemoteEvaluator {
    fn new(conns: Vec<Connection>) -> Self {
        assert!(!conns.is_empty(), "at least one worker slot is required");
        Self { slots: conns.into_iter().map(Mutex::new).collect(), next_id: AtomicU64::new(1) }
    }

    /// Uses an already-open byte stream pair as the single worker slot.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: std::io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::new(vec![Connection {
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(writer),
            parked: HashMap::new(),
            child: None,
        }])
    }

    /// Launches `slots` worker processes and talks to each over stdio.
    pub fn spawn(program: &str, args: &[String], slots: usize) -> std::io::Result<Self> {
        let mut conns = Vec::with_capacity(slots.max(1));
        for _ in 0..slots.max(1) {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            conns.push(Connection {
                reader: Box::new(BufReader::new(stdout)),
                writer: Box::new(stdin),
                parked: HashMap::new(),
                child: Some(child),
            });
        }
        Ok(Self::new(conns))
    }

    /// Opens `slots` connections to a worker listening on a unix socket.
    #[cfg(unix)]
    pub fn connect(socket: &Path, slots: usize) -> std::io::Result<Self> {
        use std::os::unix::net::UnixStream;
        let mut conns = Vec::with_capacity(slots.max(1));
        for _ in 0..slots.max(1) {
            let stream = UnixStream::connect(socket)?;
            conns.push(Connection {
                reader: Box::new(BufReader::new(stream.try_clone()?)),
                writer: Box::new(stream),
                parked: HashMap::new(),
                child: None,
            });
        }
        Ok(Self::new(conns))
    }

    pub fn slots(&self) -> usize {
        self.slots.len()
    }

    fn call(&self, make: impl FnOnce(u64) -> Request) -> Result<Response, EvalError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let req = make(id);
        for slot in &self.slots {
            match slot.try_lock() {
                Ok(mut conn) => return conn.call(&req),
                Err(TryLockError::WouldBlock) => continue,
                Err(TryLockError::Poisoned(_)) => continue,
            }
        }
        let slot = &self.slots[(id as usize) % self.slots.len()];
        let mut conn = slot.lock().map_err(|_| EvalError::Transient("worker slot poisoned".into()))?;
        conn.call(&req)
    }
}

fn error_record(transient: bool, msg: String) -> EvalError {
    if transient {
        EvalError::Transient(msg)
    } else {
        EvalError::Permanent(msg)
    }
}

impl Evaluator for RemoteEvaluator {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        let arch = WireArch::from_phenotype(phenotype);
        let resp = self.call(|id| Request::TrainRequest { id, arch, config: cfg.clone() })?;
        match resp {
            Response::Result { series, .. } => {
                if series.len() != cfg.series_len() {
                    log::warn!("worker returned {} recordings, expected {}", series.len(), cfg.series_len());
                }
                AccuracySeries::new(series, cfg.eval_interval)
                    .map_err(|e| EvalError::Permanent(format!("worker series rejected: {e}")))
            }
            Response::Error { transient, msg, .. } => Err(error_record(transient, msg)),
            other => Err(EvalError::Permanent(format!("unexpected reply to train_request: {other:?}"))),
        }
    }
}

impl FinalTrainer for RemoteEvaluator {
    fn train_final(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<FinalScores, EvalError> {
        let arch = WireArch::from_phenotype(phenotype);
        let resp = self.call(|id| Request::FinalizeRequest { id, arch, config: cfg.clone() })?;
        match resp {
            Response::FinalScores { validation, test, .. } => {
                for (name, set) in [("validation", &validation), ("test", &test)] {
                    if set.scores.len() != set.labels.len() || set.scores.is_empty() {
                        return Err(EvalError::Permanent(format!("{name} scores and labels do not line up")));
                    }
                }
                Ok(FinalScores { validation, test, synthetic: false })
            }
            Response::Error { transient, msg, .. } => Err(error_record(transient, msg)),
            other => Err(EvalError::Permanent(format!("unexpected reply to finalize_request: {other:?}"))),
        }
    }
}
