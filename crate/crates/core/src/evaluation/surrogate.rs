use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::{EvalError, Evaluator, FinalScores, FinalTrainer, ScoredSet, TrainConfig};
use crate::arch_compiler::Phenotype;
use crate::fitness::AccuracySeries;
use crate::rng::{derive_seed, Purpose, StreamRng};

/// Deterministic stand-in for GPU training.
///
/// The learning curve saturates towards an asymptote that rewards roughly a
/// million parameters and up to twelve conv layers; Gaussian noise is seeded
/// from the training seed and the architecture key, so equal architectures
/// always see equal curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub noise_sd: f64,
}

impl Default for Surrogate {
    fn default() -> Self {
        Self { noise_sd: 0.02 }
    }
}

/// Validation and test split sizes of the synthetic final scores.
const SYNTH_VALIDATION: usize = 240;
const SYNTH_TEST: usize = 300;
/// Share of positive (normal) samples in the synthetic splits.
const SYNTH_POSITIVE_SHARE: f64 = 0.8;

impl Surrogate {
    pub fn noiseless() -> Self {
        Self { noise_sd: 0.0 }
    }

    pub fn asymptote(phenotype: &Phenotype) -> f64 {
        let params = phenotype.param_count().max(1) as f64;
        let z = params.log10() - 6.0;
        let convs = phenotype.conv_layer_count().min(12) as f64;
        (0.55 + 0.25 * (-z * z / 2.0).exp() + 0.15 * convs / 12.0).clamp(0.0, 1.0)
    }

    fn rng(phenotype: &Phenotype, seed: u64, salt: &[u8]) -> StreamRng {
        let mut extra = phenotype.key().0.to_vec();
        extra.extend_from_slice(salt);
        StreamRng::from_seed(derive_seed(seed, Purpose::Surrogate, &extra))
    }

    pub fn series(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> AccuracySeries<f64> {
        let n = cfg.series_len().max(1);
        let a = Self::asymptote(phenotype);
        let tau = 0.25 * n as f64;
        let mut rng = Self::rng(phenotype, cfg.seed, b"series");
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).unwrap();
        let values = (1..=n)
            .map(|t| {
                let clean = a * (1.0 - (-(t as f64) / tau).exp());
                let eps = if self.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (clean + eps).clamp(0.0, 1.0)
            })
            .collect();
        AccuracySeries::new(values, cfg.eval_interval).expect("clamped values are in range")
    }

    fn scored_set(&self, a: f64, n: usize, rng: &mut StreamRng) -> ScoredSet {
        // separation grows with the asymptote; a = 0.5 gives coin-flip scores
        let sep = 6.0 * (a - 0.5);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut set = ScoredSet::default();
        for _ in 0..n {
            let label = rng.random_bool(SYNTH_POSITIVE_SHARE);
            let centre = if label { sep / 2.0 } else { -sep / 2.0 };
            let logit = centre + unit.sample(rng);
            set.scores.push(1.0 / (1.0 + (-logit).exp()));
            set.labels.push(label);
        }
        set
    }
}

impl Evaluator for Surrogate {
    fn evaluate(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<AccuracySeries<f64>, EvalError> {
        Ok(self.series(phenotype, cfg))
    }
}

impl FinalTrainer for Surrogate {
    fn train_final(&self, phenotype: &Phenotype, cfg: &TrainConfig) -> Result<FinalScores, EvalError> {
        let a = Self::asymptote(phenotype);
        let mut rng = Self::rng(phenotype, cfg.seed, b"final");
        let validation = self.scored_set(a, SYNTH_VALIDATION, &mut rng);
        let test = self.scored_set(a, SYNTH_TEST, &mut rng);
        Ok(FinalScores { validation, test, synthetic: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_compiler::{decode, Activation, Layer, PlacedLayer, Shape};
    use crate::search_space::{Genome, SearchSpace};

    fn pheno(s: &str) -> Phenotype {
        decode(&s.parse().unwrap(), &SearchSpace::default()).unwrap()
    }

    #[test]
    fn deterministic_and_in_range() {
        let p = pheno("8,3,1,2,16,5,1,1");
        let cfg = TrainConfig { mini_batches: 300, ..Default::default() };
        let a = Surrogate::default().series(&p, &cfg);
        let b = Surrogate::default().series(&p, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = Surrogate::default().series(&p, &TrainConfig { seed: 8, ..cfg });
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_curve_is_monotone() {
        let p = pheno("8,3,1,2,16,5,1,1");
        let s = Surrogate::noiseless().series(&p, &TrainConfig { mini_batches: 500, ..Default::default() });
        assert!(s.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn equal_keys_equal_series() {
        let a = pheno("8,11,2,1,8,11,2,1,8,11,2,1,8,3,1,1");
        let b = pheno("8,11,2,1,8,11,2,1,16,11,1,2,4,5,2,2");
        assert_ne!(a.source, b.source);
        let cfg = TrainConfig { mini_batches: 50, ..Default::default() };
        assert_eq!(Surrogate::default().series(&a, &cfg), Surrogate::default().series(&b, &cfg));
    }

    #[test]
    fn peak_asymptote() {
        // 12 cheap convs on a 1x1 map, then a dense stack sized to hit 10^6
        // parameters exactly: 12 * (1*1*1*1 + 1) = 24 conv params.
        let input = Shape::new(1, 1, 1);
        let mut layers = Vec::new();
        for _ in 0..12 {
            layers
                .push(PlacedLayer { layer: Layer::Conv { filters: 1, size: 1, stride: 1, padding: 0 }, output: input });
        }
        // dense(1 -> u): 2u params; output(u -> 1): u + 1. 3u + 25 = 10^6
        let u = (1_000_000 - 25) / 3;
        assert_eq!(3 * u + 25, 1_000_000);
        layers.push(PlacedLayer {
            layer: Layer::Dense { units: u as u32, act: Activation::Selu },
            output: Shape::new(1, 1, u as u32),
        });
        layers.push(PlacedLayer {
            layer: Layer::Output { units: 1, act: Activation::Sigmoid },
            output: Shape::new(1, 1, 1),
        });
        let p = Phenotype { input, layers, cells_kept: 12, cells_pruned: 0, source: Genome::new(vec![]) };
        assert_eq!(p.param_count(), 1_000_000);
        assert!((Surrogate::asymptote(&p) - 0.95).abs() < 1e-12);
        let s = Surrogate::default().series(&p, &TrainConfig { mini_batches: 2000, ..Default::default() });
        let max = s.values().iter().cloned().fold(0.0, f64::max);
        assert!((max - 0.95).abs() < 0.1, "max {max}");
    }

    #[test]
    fn final_scores_are_synthetic() {
        let p = pheno("8,3,1,2,16,5,1,1");
        let f = Surrogate::default().train_final(&p, &TrainConfig::default()).unwrap();
        assert!(f.synthetic);
        assert_eq!(f.validation.scores.len(), 240);
        assert_eq!(f.test.labels.len(), 300);
        assert!(f.test.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
