//! The constrained search space and the integer genome that encodes a plain
//! convolutional network, four genes per cell.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_compiler::Shape;

/// Number of genes describing one convolutional cell.
pub const GENES_PER_CELL: usize = 4;

/// Inclusive integer interval used for stride genes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrideRange {
    pub min: u32,
    pub max: u32,
}

impl StrideRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub filter_counts: Vec<u32>,
    pub filter_sizes: Vec<u32>,
    /// Adds filter size 0, meaning "no conv layer in this cell".
    pub allow_skip_conv: bool,
    pub conv_stride: StrideRange,
    /// A pool stride of 1 means the cell has no pooling layer.
    pub pool_stride: StrideRange,
    pub min_cells: usize,
    pub max_cells: usize,
    pub input: Shape,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            filter_counts: vec![4, 8, 16, 32, 64, 128, 256],
            filter_sizes: vec![1, 3, 5, 7, 11],
            allow_skip_conv: false,
            conv_stride: StrideRange::new(1, 2),
            pool_stride: StrideRange::new(1, 2),
            min_cells: 2,
            max_cells: 50,
            input: Shape::new(64, 64, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("{0} must not be empty")]
    EmptySet(&'static str),
    #[error("{name} range [{min}, {max}] is invalid (need 1 <= min <= max)")]
    BadRange { name: &'static str, min: u32, max: u32 },
    #[error("cell bounds [{min}, {max}] are invalid (need 1 <= min <= max)")]
    BadCellBounds { min: usize, max: usize },
    #[error("input shape {0} has a zero dimension")]
    BadInput(Shape),
    #[error("filter size 0 is only allowed through allow_skip_conv")]
    ZeroFilterSize,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.filter_counts.is_empty() {
            return Err(SpaceError::EmptySet("filter_counts"));
        }
        if self.filter_sizes.is_empty() {
            return Err(SpaceError::EmptySet("filter_sizes"));
        }
        if self.filter_sizes.contains(&0) {
            return Err(SpaceError::ZeroFilterSize);
        }
        if self.filter_counts.contains(&0) {
            return Err(SpaceError::EmptySet("non-zero filter_counts"));
        }
        for (name, r) in [("conv_stride", self.conv_stride), ("pool_stride", self.pool_stride)] {
            if r.min < 1 || r.max < r.min {
                return Err(SpaceError::BadRange { name, min: r.min, max: r.max });
            }
        }
        if self.min_cells < 1 || self.max_cells < self.min_cells {
            return Err(SpaceError::BadCellBounds { min: self.min_cells, max: self.max_cells });
        }
        if self.input.height == 0 || self.input.width == 0 || self.input.channels == 0 {
            return Err(SpaceError::BadInput(self.input));
        }
        Ok(())
    }

    /// Filter sizes a gene may take, including the skip marker when enabled.
    pub fn allowed_filter_sizes(&self) -> Vec<u32> {
        let mut sizes = Vec::with_capacity(self.filter_sizes.len() + 1);
        if self.allow_skip_conv {
            sizes.push(0);
        }
        sizes.extend_from_slice(&self.filter_sizes);
        sizes
    }

    pub fn min_len(&self) -> usize {
        self.min_cells * GENES_PER_CELL
    }

    pub fn max_len(&self) -> usize {
        self.max_cells * GENES_PER_CELL
    }

    pub fn len_in_bounds(&self, len: usize) -> bool {
        len.is_multiple_of(GENES_PER_CELL) && (self.min_len()..=self.max_len()).contains(&len)
    }

    /// Draws a value for a gene of the given role uniformly from its domain.
    pub fn sample_gene<R: Rng + ?Sized>(&self, role: GeneRole, rng: &mut R) -> u32 {
        match role {
            GeneRole::FilterCount => pick(&self.filter_counts, rng),
            GeneRole::FilterSize => {
                if self.allow_skip_conv {
                    let i = rng.random_range(0..=self.filter_sizes.len());
                    if i == 0 {
                        0
                    } else {
                        self.filter_sizes[i - 1]
                    }
                } else {
                    pick(&self.filter_sizes, rng)
                }
            }
            GeneRole::ConvStride => rng.random_range(self.conv_stride.min..=self.conv_stride.max),
            GeneRole::PoolStride => rng.random_range(self.pool_stride.min..=self.pool_stride.max),
        }
    }

    fn gene_allowed(&self, role: GeneRole, v: u32) -> bool {
        match role {
            GeneRole::FilterCount => self.filter_counts.contains(&v),
            GeneRole::FilterSize => (v == 0 && self.allow_skip_conv) || self.filter_sizes.contains(&v),
            GeneRole::ConvStride => self.conv_stride.contains(v),
            GeneRole::PoolStride => self.pool_stride.contains(v),
        }
    }
}

fn pick<R: Rng + ?Sized>(set: &[u32], rng: &mut R) -> u32 {
    set[rng.random_range(0..set.len())]
}

/// What a gene encodes, determined by its position modulo four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneRole {
    FilterCount,
    FilterSize,
    ConvStride,
    PoolStride,
}

impl GeneRole {
    pub const ALL: [GeneRole; GENES_PER_CELL] =
        [GeneRole::FilterCount, GeneRole::FilterSize, GeneRole::ConvStride, GeneRole::PoolStride];

    pub fn of_index(index: usize) -> Self {
        Self::ALL[index % GENES_PER_CELL]
    }

    pub fn is_stride(self) -> bool {
        matches!(self, GeneRole::ConvStride | GeneRole::PoolStride)
    }
}

impl fmt::Display for GeneRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneRole::FilterCount => "filter count",
            GeneRole::FilterSize => "filter size",
            GeneRole::ConvStride => "conv stride",
            GeneRole::PoolStride => "pool stride",
        })
    }
}

/// One decoded 4-gene unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub filters: u32,
    pub filter_size: u32,
    pub conv_stride: u32,
    pub pool_stride: u32,
}

/// Raw gene string. Genes hold actual values, not indices into the space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genome(Vec<u32>);

impl Genome {
    pub fn new(genes: Vec<u32>) -> Self {
        Self(genes)
    }

    pub fn genes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.0.len() / GENES_PER_CELL
    }

    /// Complete cells in gene order; a trailing partial cell is ignored.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.0.chunks_exact(GENES_PER_CELL).map(|c| Cell {
            filters: c[0],
            filter_size: c[1],
            conv_stride: c[2],
            pool_stride: c[3],
        })
    }

    pub fn into_genes(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for Genome {
    fn from(genes: Vec<u32>) -> Self {
        Self(genes)
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad genome text at field {field}: {reason}")]
pub struct ParseGenomeError {
    pub field: usize,
    pub reason: String,
}

impl FromStr for Genome {
    type Err = ParseGenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Genome(Vec::new()));
        }
        s.split(',')
            .enumerate()
            .map(|(field, tok)| {
                tok.trim()
                    .parse::<u32>()
                    .map_err(|e| ParseGenomeError { field, reason: format!("{:?}: {e}", tok.trim()) })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Genome)
    }
}

impl From<Genome> for String {
    fn from(g: Genome) -> Self {
        g.to_string()
    }
}

impl TryFrom<String> for Genome {
    type Error = ParseGenomeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthNotMultipleOfFour { len: usize },
    LengthOutOfRange { len: usize, min: usize, max: usize },
    GeneOutOfDomain { index: usize, role: GeneRole, value: u32 },
}

impl Violation {
    /// Gene index the violation refers to, if it is about a single gene.
    pub fn gene_index(&self) -> Option<usize> {
        match self {
            Violation::GeneOutOfDomain { index, .. } => Some(*index),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthNotMultipleOfFour { len } => {
                write!(f, "length not multiple of 4 (length {len})")
            }
            Violation::LengthOutOfRange { len, min, max } => {
                write!(f, "length {len} outside [{min}, {max}]")
            }
            Violation::GeneOutOfDomain { index, role, value } => {
                write!(f, "gene {index} ({role}) has disallowed value {value}")
            }
        }
    }
}

/// Non-empty list of constraint violations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid genome: {}", join_violations(.0))]
pub struct Violations(pub Vec<Violation>);

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Collects every constraint the genome breaks. Violations are data, so this
/// never fails on its own.
pub fn validate_genome(genome: &Genome, space: &SearchSpace) -> Result<(), Violations> {
    let mut out = Vec::new();
    let len = genome.len();
    if !len.is_multiple_of(GENES_PER_CELL) {
        out.push(Violation::LengthNotMultipleOfFour { len });
    }
    if len < space.min_len() || len > space.max_len() {
        out.push(Violation::LengthOutOfRange { len, min: space.min_len(), max: space.max_len() });
    }
    for (index, &value) in genome.genes().iter().enumerate() {
        let role = GeneRole::of_index(index);
        if !space.gene_allowed(role, value) {
            out.push(Violation::GeneOutOfDomain { index, role, value });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(Violations(out))
    }
}

/// Random genome with a uniformly drawn cell count and uniformly drawn genes.
pub fn random_genome<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Genome {
    let cells = rng.random_range(space.min_cells..=space.max_cells);
    let genes = (0..cells * GENES_PER_CELL).map(|i| space.sample_gene(GeneRole::of_index(i), rng)).collect();
    Genome(genes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_is_valid() {
        SearchSpace::default().validate().unwrap();
    }

    #[test]
    fn random_genome_length_rule() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let g = random_genome(&space, &mut rng);
            assert_eq!(g.len() % 4, 0);
            assert!((8..=200).contains(&g.len()));
            validate_genome(&g, &space).unwrap();
        }
    }

    #[test]
    fn degenerate_cell_interval() {
        let space = SearchSpace { min_cells: 2, max_cells: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_genome(&space, &mut rng).len(), 8);
    }

    #[test]
    fn same_seed_same_genome() {
        let space = SearchSpace::default();
        let a = random_genome(&space, &mut ChaCha8Rng::seed_from_u64(42));
        let b = random_genome(&space, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.to_string(), b.to_string());
    }

    #[test]
    fn length_ten_is_rejected() {
        let g: Genome = "8,3,1,1,8,3,1,1,8,3".parse().unwrap();
        let errs = validate_genome(&g, &SearchSpace::default()).unwrap_err();
        assert!(errs.0.contains(&Violation::LengthNotMultipleOfFour { len: 10 }));
        assert!(errs.to_string().contains("length not multiple of 4"));
    }

    #[test]
    fn bad_filter_count_names_gene_zero() {
        let g: Genome = "5,3,1,1,8,3,1,1".parse().unwrap();
        let errs = validate_genome(&g, &SearchSpace::default()).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].gene_index(), Some(0));
    }

    #[test]
    fn skip_conv_flag_gates_zero_size() {
        let g: Genome = "8,0,1,1,8,3,1,1".parse().unwrap();
        assert!(validate_genome(&g, &SearchSpace::default()).is_err());
        let space = SearchSpace { allow_skip_conv: true, ..Default::default() };
        validate_genome(&g, &space).unwrap();
    }

    #[test]
    fn genome_text_roundtrip() {
        let g: Genome = " 8, 3,1,2 ".parse().unwrap();
        assert_eq!(g.to_string(), "8,3,1,2");
        assert!("8,x".parse::<Genome>().is_err());
    }

    #[test]
    fn invalid_spaces() {
        let s = SearchSpace { filter_sizes: vec![], ..Default::default() };
        assert!(s.validate().is_err());
        let s = SearchSpace { min_cells: 3, max_cells: 2, ..Default::default() };
        assert!(s.validate().is_err());
        let s = SearchSpace { conv_stride: StrideRange::new(0, 2), ..Default::default() };
        assert!(s.validate().is_err());
    }
}
