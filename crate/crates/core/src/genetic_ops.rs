//! Tournament selection, the length-changing cut-and-swap crossover, and the
//! clamped stride mutation.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{GeneRole, Genome, SearchSpace, StrideRange, GENES_PER_CELL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
    pub generation_born: usize,
}

impl Individual {
    pub fn new(genome: Genome, generation_born: usize) -> Self {
        Self { genome, fitness: None, generation_born }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Defaults to a third of the population when unset.
    pub tournament_size: Option<usize>,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub crossover_retry_cap: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 30,
            generations: 20,
            tournament_size: None,
            p_crossover: 0.7,
            p_mutation: 0.3,
            crossover_retry_cap: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaError {
    #[error("invalid GA config: {0}")]
    Config(String),
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("tournament size {k} does not fit a population of {n}")]
    TournamentSize { k: usize, n: usize },
}

impl GaConfig {
    pub fn tournament(&self) -> usize {
        self.tournament_size.unwrap_or((self.population_size / 3).max(1))
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::Config(m));
        if self.population_size < 1 || self.generations < 1 {
            return bad("population_size and generations must be >= 1".into());
        }
        let k = self.tournament();
        if k < 1 || k > self.population_size {
            return bad(format!("tournament size {k} outside [1, {}]", self.population_size));
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.crossover_retry_cap < 1 {
            return bad("crossover_retry_cap must be >= 1".into());
        }
        Ok(())
    }
}

/// Draws `k` distinct individuals and returns the index of the fittest.
/// Ties go to the lower population index.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], k: usize, rng: &mut R) -> Result<usize, GaError> {
    if k < 1 || k > pop.len() {
        return Err(GaError::TournamentSize { k, n: pop.len() });
    }
    if let Some(i) = pop.iter().position(|ind| ind.fitness.is_none()) {
        return Err(GaError::Unevaluated(i));
    }
    let mut best: Option<(usize, f64)> = None;
    for i in sample(rng, pop.len(), k) {
        let f = pop[i].fitness.unwrap();
        best = match best {
            Some((bi, bf)) if bf > f || (bf == f && bi < i) => Some((bi, bf)),
            _ => Some((i, f)),
        };
    }
    Ok(best.unwrap().0)
}

/// What a crossover application did, for the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverRecord {
    pub crossed: bool,
    pub point1: Option<usize>,
    pub point2: Option<usize>,
    pub attempts: usize,
    /// All attempts failed and the parents were copied.
    pub fallback: bool,
    pub child_lens: [usize; 2],
}

/// Cut-and-swap crossover keeping every cut on the same gene role.
///
/// `point1` is uniform on `[0, len(p1)]`; `point2` is a uniformly drawn cell
/// boundary of `p2` shifted by `point1 mod 4`. Draws yielding a cut past the
/// end of `p2` or a child length outside the space are redrawn (only `point2`
/// for the first half of the retry budget, both afterwards). When the budget
/// runs out the parents are returned unchanged.
pub fn crossover<R: Rng + ?Sized>(
    p1: &Genome,
    p2: &Genome,
    space: &SearchSpace,
    cfg: &GaConfig,
    rng: &mut R,
) -> ((Genome, Genome), CrossoverRecord) {
    let copies = |crossed, attempts, fallback| {
        (
            (p1.clone(), p2.clone()),
            CrossoverRecord {
                crossed,
                point1: None,
                point2: None,
                attempts,
                fallback,
                child_lens: [p1.len(), p2.len()],
            },
        )
    };
    if !rng.random_bool(cfg.p_crossover) {
        return copies(false, 0, false);
    }
    let (l1, l2) = (p1.len(), p2.len());
    let cap = cfg.crossover_retry_cap.max(1);
    let mut point1 = rng.random_range(0..=l1);
    for attempt in 0..cap {
        if attempt > 0 && attempt >= cap / 2 {
            point1 = rng.random_range(0..=l1);
        }
        let point2 = rng.random_range(0..=l2 / GENES_PER_CELL) * GENES_PER_CELL + point1 % GENES_PER_CELL;
        if point2 > l2 {
            continue;
        }
        let c1_len = point1 + (l2 - point2);
        let c2_len = point2 + (l1 - point1);
        if !space.len_in_bounds(c1_len) || !space.len_in_bounds(c2_len) {
            continue;
        }
        let (a, b) = (p1.genes(), p2.genes());
        let c1: Vec<u32> = a[..point1].iter().chain(&b[point2..]).copied().collect();
        let c2: Vec<u32> = b[..point2].iter().chain(&a[point1..]).copied().collect();
        let record = CrossoverRecord {
            crossed: true,
            point1: Some(point1),
            point2: Some(point2),
            attempts: attempt + 1,
            fallback: false,
            child_lens: [c1.len(), c2.len()],
        };
        return ((Genome::new(c1), Genome::new(c2)), record);
    }
    copies(true, cap, true)
}

/// `max(min(s + z, hi), lo)` rounded to the nearest integer, ties up.
pub fn mutate_stride(stride: u32, normal_draw: f64, range: StrideRange) -> u32 {
    let gamma = (f64::from(stride) + normal_draw).min(f64::from(range.max));
    let clamped = gamma.max(f64::from(range.min));
    (clamped + 0.5).floor() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub index: usize,
    pub old: u32,
    pub new: u32,
    /// Standard-normal draw used for stride genes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_draw: Option<f64>,
}

/// With probability `p_mutation`, changes one uniformly chosen gene.
pub fn mutate<R: Rng + ?Sized>(
    g: &Genome,
    space: &SearchSpace,
    cfg: &GaConfig,
    rng: &mut R,
) -> (Genome, Option<MutationRecord>) {
    if g.is_empty() || !rng.random_bool(cfg.p_mutation) {
        return (g.clone(), None);
    }
    let index = rng.random_range(0..g.len());
    let old = g.genes()[index];
    let role = GeneRole::of_index(index);
    let (new, normal_draw) = match role {
        GeneRole::FilterCount | GeneRole::FilterSize => (space.sample_gene(role, rng), None),
        GeneRole::ConvStride | GeneRole::PoolStride => {
            let z: f64 = rng.sample(StandardNormal);
            let range = if role == GeneRole::ConvStride { space.conv_stride } else { space.pool_stride };
            (mutate_stride(old, z, range), Some(z))
        }
    };
    let mut genes = g.genes().to_vec();
    genes[index] = new;
    (Genome::new(genes), Some(MutationRecord { index, old, new, normal_draw }))
}

/// One breeding step's operator log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OperatorEvent {
    Select { winners: Vec<usize> },
    Crossover { parents: [usize; 2], record: CrossoverRecord },
    Mutation { child: usize, record: MutationRecord },
}

/// Random streams for one breeding step.
pub struct BreedRngs<'a, R: Rng + ?Sized> {
    pub selection: &'a mut R,
    pub crossover: &'a mut R,
    pub mutation: &'a mut R,
}

/// Builds the next population from an evaluated one: `n` tournament winners
/// (drawn independently), paired in draw order, crossed over, then mutated.
/// With an odd population the last winner skips crossover.
pub fn next_generation<R: Rng + ?Sized>(
    pop: &[Individual],
    space: &SearchSpace,
    cfg: &GaConfig,
    rngs: BreedRngs<'_, R>,
) -> Result<(Vec<Genome>, Vec<OperatorEvent>), GaError> {
    let k = cfg.tournament();
    let winners = (0..pop.len()).map(|_| tournament_select(pop, k, rngs.selection)).collect::<Result<Vec<_>, _>>()?;
    let mut events = vec![OperatorEvent::Select { winners: winners.clone() }];
    let mut children = Vec::with_capacity(pop.len());
    for pair in winners.chunks(2) {
        match *pair {
            [a, b] => {
                let ((c1, c2), record) = crossover(&pop[a].genome, &pop[b].genome, space, cfg, rngs.crossover);
                events.push(OperatorEvent::Crossover { parents: [a, b], record });
                children.push(c1);
                children.push(c2);
            }
            [a] => children.push(pop[a].genome.clone()),
            _ => unreachable!(),
        }
    }
    let children = children
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (m, record) = mutate(&c, space, cfg, rngs.mutation);
            if let Some(record) = record {
                events.push(OperatorEvent::Mutation { child: i, record });
            }
            m
        })
        .collect();
    Ok((children, events))
}
