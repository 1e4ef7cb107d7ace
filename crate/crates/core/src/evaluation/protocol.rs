//! Newline-delimited JSON records exchanged with trainer workers.
//!
//! ```text
//! -> {"type":"train_request","id":1,"arch":{...},"config":{...}}
//! <- {"type":"progress","id":1,"done":100}            (zero or more)
//! <- {"type":"result","id":1,"series":[...]}          (or an error record)
//! ```
//!
//! The final training of the best architecture uses `finalize_request`,
//! answered by a `final_scores` record holding validation and test scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ScoredSet, TrainConfig};
use crate::arch_compiler::{Layer, Phenotype, PlacedLayer, Shape};
use crate::search_space::Genome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireArch {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("layer {index} ({kind}) does not fit its input {input}")]
pub struct UnrealizableLayer {
    pub index: usize,
    pub kind: &'static str,
    pub input: Shape,
}

impl WireArch {
    pub fn from_phenotype(p: &Phenotype) -> Self {
        Self { input: p.input, layers: p.plain_layers().copied().collect() }
    }

    /// Recomputes every layer's output shape. The result carries no source
    /// genome and no cell bookkeeping.
    pub fn to_phenotype(&self) -> Result<Phenotype, UnrealizableLayer> {
        let mut current = self.input;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let output =
                layer.output_shape(current).ok_or(UnrealizableLayer { index, kind: layer.kind(), input: current })?;
            layers.push(PlacedLayer { layer: *layer, output });
            current = output;
        }
        Ok(Phenotype { input: self.input, layers, cells_kept: 0, cells_pruned: 0, source: Genome::new(vec![]) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    TrainRequest { id: u64, arch: WireArch, config: TrainConfig },
    FinalizeRequest { id: u64, arch: WireArch, config: TrainConfig },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::TrainRequest { id, .. } | Request::FinalizeRequest { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Progress {
        id: u64,
        done: u64,
    },
    Result {
        id: u64,
        series: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wall_time: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostics: Option<serde_json::Value>,
    },
    Error {
        id: u64,
        transient: bool,
        msg: String,
    },
    FinalScores {
        id: u64,
        validation: ScoredSet,
        test: ScoredSet,
    },
}

impl Response {
    pub fn id(&self) -> u64 {
        match self {
            Response::Progress { id, .. }
            | Response::Result { id, .. }
            | Response::Error { id, .. }
            | Response::FinalScores { id, .. } => *id,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Response::Progress { .. })
    }
}

/// One record per line, no embedded newlines.
pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol records always serialize");
    s.push('\n');
    s
}
