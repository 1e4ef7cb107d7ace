//! Genotype to phenotype translation with shape-driven pruning, parameter
//! counting and the canonical architecture digest used as the cache key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::search_space::{validate_genome, Genome, SearchSpace, Violations};

/// Units in each of the two hidden dense layers of the fixed tail.
pub const TAIL_DENSE_UNITS: u32 = 1024;
/// Stride and window of the tail average pool.
pub const TAIL_AVG_POOL: u32 = 2;

const KEY_VERSION: &str = "genas-arch-v1";

/// Feature-map shape, serialized as `[height, width, channels]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Shape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl Shape {
    pub const fn new(height: u32, width: u32, channels: u32) -> Self {
        Self { height, width, channels }
    }

    pub fn flat(&self) -> u64 {
        u64::from(self.height) * u64::from(self.width) * u64::from(self.channels)
    }
}

impl From<[u32; 3]> for Shape {
    fn from([h, w, c]: [u32; 3]) -> Self {
        Shape::new(h, w, c)
    }
}

impl From<Shape> for [u32; 3] {
    fn from(s: Shape) -> Self {
        [s.height, s.width, s.channels]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Sigmoid,
    None,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Selu => "selu",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        })
    }
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

/// One materialized layer. The serde form is the worker wire format.
///
/// Conv layers always use SELU; pools use a square window equal to their
/// stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        filters: u32,
        size: u32,
        stride: u32,
        #[serde(default, skip_serializing_if = "is_zero")]
        padding: u32,
    },
    MaxPool {
        stride: u32,
    },
    AvgPool {
        stride: u32,
    },
    Dense {
        units: u32,
        act: Activation,
    },
    Output {
        units: u32,
        act: Activation,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::MaxPool { .. } => "max_pool",
            Layer::AvgPool { .. } => "avg_pool",
            Layer::Dense { .. } => "dense",
            Layer::Output { .. } => "output",
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Conv { .. } => Activation::Selu,
            Layer::MaxPool { .. } | Layer::AvgPool { .. } => Activation::None,
            Layer::Dense { act, .. } | Layer::Output { act, .. } => *act,
        }
    }

    /// Output shape for the given input, or `None` if a spatial dimension
    /// would drop below 1.
    pub fn output_shape(&self, input: Shape) -> Option<Shape> {
        let spatial = |f: u32, s: u32, p: u32, c: u32| {
            let h = out_dim(i64::from(input.height), i64::from(f), i64::from(s), i64::from(p));
            let w = out_dim(i64::from(input.width), i64::from(f), i64::from(s), i64::from(p));
            (h >= 1 && w >= 1).then(|| Shape::new(h as u32, w as u32, c))
        };
        match *self {
            Layer::Conv { filters, size, stride, padding } => spatial(size, stride, padding, filters),
            Layer::MaxPool { stride } | Layer::AvgPool { stride } => spatial(stride, stride, 0, input.channels),
            Layer::Dense { units, .. } | Layer::Output { units, .. } => Some(Shape::new(1, 1, units)),
        }
    }

    /// Trainable parameters given the layer's input shape.
    pub fn params(&self, input: Shape) -> u64 {
        match *self {
            Layer::Conv { filters, size, .. } => {
                let f = u64::from(size);
                let out = u64::from(filters);
                f * f * u64::from(input.channels) * out + out
            }
            Layer::MaxPool { .. } | Layer::AvgPool { .. } => 0,
            Layer::Dense { units, .. } | Layer::Output { units, .. } => {
                let out = u64::from(units);
                input.flat() * out + out
            }
        }
    }

    fn canonical(&self) -> String {
        match *self {
            Layer::Conv { filters, size, stride, padding } => {
                format!("conv:{filters}:{size}:{stride}:{padding}")
            }
            Layer::MaxPool { stride } => format!("max_pool:{stride}"),
            Layer::AvgPool { stride } => format!("avg_pool:{stride}"),
            Layer::Dense { units, act } => format!("dense:{units}:{act}"),
            Layer::Output { units, act } => format!("output:{units}:{act}"),
        }
    }
}

/// A layer together with the shape it produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlacedLayer {
    pub layer: Layer,
    pub output: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phenotype {
    pub input: Shape,
    pub layers: Vec<PlacedLayer>,
    pub cells_kept: usize,
    pub cells_pruned: usize,
    pub source: Genome,
}

impl Phenotype {
    /// Structural equality: same input and same layer list, regardless of
    /// which genome produced it.
    pub fn same_architecture(&self, other: &Phenotype) -> bool {
        self.input == other.input && self.layers == other.layers
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l.layer, Layer::Conv { .. })).count()
    }

    pub fn max_pool_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l.layer, Layer::MaxPool { .. })).count()
    }

    /// Shape entering the dense tail.
    pub fn feature_shape(&self) -> Shape {
        self.layers
            .iter()
            .take_while(|l| !matches!(l.layer, Layer::Dense { .. } | Layer::Output { .. }))
            .last()
            .map_or(self.input, |l| l.output)
    }

    pub fn param_count(&self) -> u64 {
        param_count(self)
    }

    pub fn key(&self) -> ArchKey {
        canonical_key(self)
    }

    pub fn plain_layers(&self) -> impl Iterator<Item = &Layer> + '_ {
        self.layers.iter().map(|l| &l.layer)
    }
}

/// `floor((current - f + 2p) / s) + 1`. Non-positive results mean the layer
/// does not fit.
pub fn out_dim(current: i64, f: i64, s: i64, p: i64) -> i64 {
    debug_assert!(s >= 1);
    (current - f + 2 * p).div_euclid(s) + 1
}

struct Builder {
    input: Shape,
    current: Shape,
    layers: Vec<PlacedLayer>,
}

impl Builder {
    fn try_push(&mut self, layer: Layer) -> bool {
        match layer.output_shape(self.current) {
            Some(out) => {
                self.layers.push(PlacedLayer { layer, output: out });
                self.current = out;
                true
            }
            None => false,
        }
    }
}

/// Translates a genome into its phenotype.
///
/// Cells are materialized in order. Before each conv or pool layer its
/// output shape is computed; the first layer that would shrink a dimension
/// below 1 stops translation. A cell counts as kept once its conv layer (or
/// its skipped conv) went through, so a cell cut at its pool still counts.
/// Stride-1 pools and size-0 convs are left out without stopping.
pub fn decode(genome: &Genome, space: &SearchSpace) -> Result<Phenotype, Violations> {
    validate_genome(genome, space)?;
    Ok(decode_unchecked(genome, space.input))
}

fn decode_unchecked(genome: &Genome, input: Shape) -> Phenotype {
    let mut b = Builder { input, current: input, layers: Vec::new() };
    let total = genome.cell_count();
    let mut kept = 0;
    for cell in genome.cells() {
        if cell.filter_size != 0 {
            let conv =
                Layer::Conv { filters: cell.filters, size: cell.filter_size, stride: cell.conv_stride, padding: 0 };
            if !b.try_push(conv) {
                break;
            }
        }
        kept += 1;
        if cell.pool_stride > 1 && !b.try_push(Layer::MaxPool { stride: cell.pool_stride }) {
            break;
        }
    }
    if b.current.height >= TAIL_AVG_POOL && b.current.width >= TAIL_AVG_POOL {
        let pushed = b.try_push(Layer::AvgPool { stride: TAIL_AVG_POOL });
        debug_assert!(pushed);
    }
    for layer in [
        Layer::Dense { units: TAIL_DENSE_UNITS, act: Activation::Selu },
        Layer::Dense { units: TAIL_DENSE_UNITS, act: Activation::Selu },
        Layer::Output { units: 1, act: Activation::Sigmoid },
    ] {
        b.try_push(layer);
    }
    Phenotype { input: b.input, layers: b.layers, cells_kept: kept, cells_pruned: total - kept, source: genome.clone() }
}

/// Sum of trainable parameters over all layers.
pub fn param_count(p: &Phenotype) -> u64 {
    let mut input = p.input;
    let mut total = 0;
    for l in &p.layers {
        total += l.layer.params(input);
        input = l.output;
    }
    total
}

/// 256-bit digest of the versioned canonical layer serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchKey(pub [u8; 32]);

impl fmt::Display for ArchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed architecture key {0:?}")]
pub struct ParseKeyError(pub String);

impl FromStr for ArchKey {
    type Err = ParseKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseKeyError(s.to_owned()))?;
        Ok(ArchKey(out))
    }
}

impl Serialize for ArchKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArchKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical text the key is computed from.
pub fn canonical_text(p: &Phenotype) -> String {
    let mut s = format!("{KEY_VERSION};input={}", p.input);
    for l in &p.layers {
        s.push(';');
        s.push_str(&l.layer.canonical());
    }
    s
}

/// Depends only on the materialized layers, never on the source genome.
pub fn canonical_key(p: &Phenotype) -> ArchKey {
    ArchKey(Sha256::digest(canonical_text(p).as_bytes()).into())
}
