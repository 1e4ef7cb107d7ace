mod common;

use genas::data_tools::{compute_metrics, threshold_search, ConfusionMatrix};
use genas::fitness::{genas_wf_with, AccuracySeries, Smoothing, Window};
use genas::genetic_ops::{mutate_stride, tournament_select, Individual};
use genas::search_space::StrideRange;
use genas::{canonical_key, decode, genas_wf, random_genome, validate_genome, Genome, SearchSpace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space() -> SearchSpace {
    SearchSpace::default()
}

/// A valid genome under the default space, built gene by gene.
fn genome_strategy() -> impl Strategy<Value = Genome> {
    let s = space();
    let cell = (
        proptest::sample::select(s.filter_counts.clone()),
        proptest::sample::select(s.filter_sizes.clone()),
        1u32..=2,
        1u32..=2,
    );
    proptest::collection::vec(cell, s.min_cells..=12)
        .prop_map(|cells| Genome::new(cells.into_iter().flat_map(|(a, b, c, d)| [a, b, c, d]).collect()))
}

proptest! {
    #[test]
    fn random_genomes_are_valid(seed in any::<u64>()) {
        let g = random_genome(&space(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(validate_genome(&g, &space()).is_ok());
    }

    #[test]
    fn decoded_maps_never_collapse(g in genome_strategy()) {
        let p = decode(&g, &space()).unwrap();
        prop_assert!(p.layers.iter().all(|l| l.output.height >= 1 && l.output.width >= 1));
        prop_assert_eq!(p.cells_kept + p.cells_pruned, g.cell_count());
        let (kept, h, w, c) = common::simulate_shapes(g.genes(), (64, 64, 1));
        let f = p.feature_shape();
        prop_assert_eq!((p.cells_kept, i64::from(f.height), i64::from(f.width), i64::from(f.channels)), (kept, h, w, c));
    }

    #[test]
    fn pruned_suffix_does_not_change_the_key(g in genome_strategy(), extra in genome_strategy()) {
        // Appending cells after an already-collapsed prefix is invisible.
        let p = decode(&g, &space()).unwrap();
        if p.cells_pruned > 0 {
            let mut genes = g.genes().to_vec();
            genes.extend_from_slice(&extra.genes()[..4]);
            let longer = Genome::new(genes);
            if validate_genome(&longer, &space()).is_ok() {
                prop_assert_eq!(canonical_key(&decode(&longer, &space()).unwrap()), p.key());
            }
        }
    }

    #[test]
    fn distinct_architectures_get_distinct_keys(a in genome_strategy(), b in genome_strategy()) {
        let (pa, pb) = (decode(&a, &space()).unwrap(), decode(&b, &space()).unwrap());
        prop_assert_eq!(pa.same_architecture(&pb), pa.key() == pb.key());
    }

    #[test]
    fn smoothed_fitness_is_bounded_by_the_series(
        b in proptest::collection::vec(0.0f64..=1.0, 1..200),
        w in proptest::collection::vec(0.0f64..5.0, 1..10),
    ) {
        prop_assume!(w.iter().any(|x| *x > 0.0));
        let f = genas_wf(&AccuracySeries::new(b.clone(), 1).unwrap(), &Window::new(w.clone()).unwrap()).unwrap();
        let lo = b.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
        prop_assert!((f - common::brute_force_wf(&b, &w)).abs() <= 1e-12);
    }

    #[test]
    fn unit_window_of_full_length_is_the_mean(b in proptest::collection::vec(0.0f64..=1.0, 1..100)) {
        let f = genas_wf(&AccuracySeries::new(b.clone(), 1).unwrap(), &Window::ones(b.len())).unwrap();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        prop_assert!((f - mean).abs() <= 1e-12);
    }

    #[test]
    fn unit_window_of_length_one_is_the_max(b in proptest::collection::vec(0.0f64..=1.0, 1..100)) {
        let f = genas_wf(&AccuracySeries::new(b.clone(), 1).unwrap(), &Window::ones(1)).unwrap();
        prop_assert_eq!(f, b.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn raw_sum_scales_with_window_sum(
        b in proptest::collection::vec(0.0f64..=1.0, 5..100),
        w in proptest::collection::vec(0.1f64..5.0, 1..5),
    ) {
        let window = Window::new(w.clone()).unwrap();
        let mean = genas_wf_with(&b, &window, Smoothing::WeightedMean).unwrap();
        let raw = genas_wf_with(&b, &window, Smoothing::RawSum).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((raw - mean * total).abs() <= 1e-9);
    }

    #[test]
    fn f32_and_f64_smoothing_agree(b in proptest::collection::vec(0.0f32..=1.0, 1..60)) {
        let b64: Vec<f64> = b.iter().map(|x| f64::from(*x)).collect();
        let f32v = genas_wf(&AccuracySeries::new(b, 1).unwrap(), &Window::<f32>::default()).unwrap();
        let f64v = genas_wf(&AccuracySeries::new(b64, 1).unwrap(), &Window::<f64>::default()).unwrap();
        prop_assert!((f64::from(f32v) - f64v).abs() < 1e-5);
    }

    #[test]
    fn metrics_match_per_sample_counting(
        pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300),
        beta in prop_oneof![Just(0.5), Just(1.0), Just(2.0)],
    ) {
        let (pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let scores: Vec<f64> = pred.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        let cm = ConfusionMatrix::from_scores(&scores, &truth, 0.5).unwrap();
        let m = compute_metrics(&cm, beta);
        let (acc, prec, rec, f) = common::naive_metrics(&pred, &truth, beta);
        prop_assert!((m.accuracy - acc).abs() <= 1e-12);
        prop_assert!((m.precision - prec).abs() <= 1e-12);
        prop_assert!((m.recall - rec).abs() <= 1e-12);
        prop_assert!((m.f_beta - f).abs() <= 1e-12);
    }

    #[test]
    fn threshold_ignores_sample_order(
        data in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 2..80),
        rot in 0usize..80,
    ) {
        let (s, l): (Vec<f64>, Vec<bool>) = data.iter().cloned().unzip();
        let mut shuffled = data.clone();
        shuffled.rotate_left(rot % data.len());
        shuffled.reverse();
        let (s2, l2): (Vec<f64>, Vec<bool>) = shuffled.into_iter().unzip();
        let a = threshold_search(&s, &l, 0.5, 0.2, 0.8, 0.01).unwrap();
        let b = threshold_search(&s2, &l2, 0.5, 0.2, 0.8, 0.01).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.2..=0.8).contains(&a.threshold));
    }

    #[test]
    fn threshold_is_the_smallest_maximizer(data in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..60)) {
        let (s, l): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        let got = threshold_search(&s, &l, 0.5, 0.2, 0.8, 0.05).unwrap();
        // exhaustive scan with the naive counter
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for i in 0..=12 {
            let t = [0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8][i];
            let pred: Vec<bool> = s.iter().map(|x| *x > t).collect();
            let f = common::naive_metrics(&pred, &l, 0.5).3;
            if f > best.1 + 1e-12 {
                best = (t, f);
            }
        }
        prop_assert!((got.threshold - best.0).abs() < 1e-12, "got {:?} oracle {:?}", got, best);
        prop_assert!((got.f_beta - best.1).abs() < 1e-12);
    }

    #[test]
    fn stride_mutation_stays_in_range(s in 1u32..=2, z in -10.0f64..10.0) {
        let r = StrideRange::new(1, 2);
        let m = mutate_stride(s, z, r);
        prop_assert!((1..=2).contains(&m));
    }

    #[test]
    fn tournament_of_everyone_picks_the_first_best(fits in proptest::collection::vec(0u8..5, 1..20), seed in any::<u64>()) {
        let pop: Vec<Individual> = fits
            .iter()
            .map(|f| Individual { fitness: Some(f64::from(*f)), ..Individual::new(Genome::new(vec![8, 3, 1, 1, 8, 3, 1, 1]), 0) })
            .collect();
        let winner = tournament_select(&pop, pop.len(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let max = *fits.iter().max().unwrap();
        prop_assert_eq!(winner, fits.iter().position(|f| *f == max).unwrap());
    }
}

#[test]
fn filter_sizes_are_drawn_uniformly() {
    let s = space();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = std::collections::HashMap::new();
    let mut total = 0usize;
    while total < 10_000 {
        let g = random_genome(&s, &mut rng);
        for cell in g.genes().chunks(4) {
            *counts.entry(cell[1]).or_insert(0usize) += 1;
            total += 1;
        }
    }
    let p = 1.0 / s.filter_sizes.len() as f64;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    for size in &s.filter_sizes {
        let share = counts.get(size).copied().unwrap_or(0) as f64 / total as f64;
        assert!((share - p).abs() <= 3.0 * se, "size {size}: share {share}, expected {p} +- {}", 3.0 * se);
    }
}

#[test]
fn genome_lengths_cover_the_range() {
    let s = space();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cells: std::collections::HashSet<usize> = (0..5000).map(|_| random_genome(&s, &mut rng).cell_count()).collect();
    assert!(cells.contains(&s.min_cells) && cells.contains(&s.max_cells));
}

#[test]
fn stride_rounding_ties_go_up() {
    let r = StrideRange::new(1, 2);
    assert_eq!(mutate_stride(1, 0.5, r), 2);
    assert_eq!(mutate_stride(1, 0.49, r), 1);
    assert_eq!(mutate_stride(2, -0.5, r), 2);
    assert_eq!(mutate_stride(2, -0.51, r), 1);
    assert_eq!(mutate_stride(2, 7.0, r), 2);
    assert_eq!(mutate_stride(1, -7.0, r), 1);
}
