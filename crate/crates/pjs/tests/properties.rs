//! Property tests for the solver, motion, and metric invariants.

mod common;

use nalgebra::DMatrix;
use pjs::eval::{cle, success_plot, voc_overlap};
use pjs::motion::{
    partition, propagate, resample, unpartition, AffineState, ParticleSet, Template,
    TransitionNoise,
};
use pjs::rect::Rect;
use pjs::sparse::{mfocuss, somp, Dictionary, SignalGroup};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permute_columns(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (to, &from) in perm.iter().enumerate() {
        out.set_column(to, &m.column(from));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mfocuss_objective_is_monotone(seed in any::<u64>(), m in 3usize..10, n in 2usize..14, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = Dictionary::new(common::random_unit_dictionary(&mut rng, m, n)).unwrap();
        let group = SignalGroup::new(common::randn(&mut rng, m, cols)).unwrap();
        let (_, trace) = pjs::sparse::mfocuss_with_trace(&dict, &group, 0.01, 1e-8, 60).unwrap();
        for step in trace.windows(2) {
            prop_assert!(step[1] <= step[0] + 1e-10, "trace {:?}", step);
        }
    }

    #[test]
    fn somp_first_pick_is_argmax_correlation(seed in any::<u64>(), m in 3usize..10, n in 2usize..14, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = common::random_unit_dictionary(&mut rng, m, n);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let signals = common::randn(&mut rng, m, cols);
        let group = SignalGroup::new(signals.clone()).unwrap();
        let code = somp(&dict, &group, 1).unwrap();

        // Oracle: direct correlation scan, ties to the lowest index.
        let mut best = 0usize;
        let mut best_score = -1.0f64;
        for j in 0..n {
            let score = (signals.tr_mul(&atoms.column(j))).norm();
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        prop_assert_eq!(code.active_rows(), &[best]);
    }

    #[test]
    fn somp_residual_non_increasing_in_sparsity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = Dictionary::new(common::random_unit_dictionary(&mut rng, 8, 16)).unwrap();
        let group = SignalGroup::new(common::randn(&mut rng, 8, 3)).unwrap();
        let mut previous = f64::INFINITY;
        for sparsity in 0..=8 {
            let code = somp(&dict, &group, sparsity).unwrap();
            let residual = (group.signals() - dict.atoms() * code.coefficients()).norm();
            prop_assert!(residual <= previous + 1e-9);
            previous = residual;
        }
    }

    #[test]
    fn solvers_are_equivariant_to_column_permutation(seed in any::<u64>(), cols in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = Dictionary::new(common::random_unit_dictionary(&mut rng, 7, 12)).unwrap();
        let signals = common::randn(&mut rng, 7, cols);
        // Random cyclic shift as the permutation.
        let shift = rng.random_range(0..cols);
        let perm: Vec<usize> = (0..cols).map(|i| (i + shift) % cols).collect();
        let permuted = permute_columns(&signals, &perm);

        let base_group = SignalGroup::new(signals).unwrap();
        let perm_group = SignalGroup::new(permuted).unwrap();

        let base = somp(&dict, &base_group, 3).unwrap();
        let perm_code = somp(&dict, &perm_group, 3).unwrap();
        prop_assert_eq!(base.active_rows(), perm_code.active_rows());
        let expected = permute_columns(base.coefficients(), &perm);
        prop_assert!((perm_code.coefficients() - &expected).norm() < 1e-9);

        let base = mfocuss(&dict, &base_group, 0.05, 1e-10, 50).unwrap();
        let perm_code = mfocuss(&dict, &perm_group, 0.05, 1e-10, 50).unwrap();
        let expected = permute_columns(base.coefficients(), &perm);
        prop_assert!((perm_code.coefficients() - &expected).norm() < 1e-6);
    }

    #[test]
    fn propagate_then_resample_preserves_counts_and_normalization(
        seed in any::<u64>(), n in 1usize..40,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<AffineState> = (0..n)
            .map(|i| AffineState::from_box(10.0 + i as f64, 5.0, 20.0, 25.0, 16))
            .collect();
        let particles = ParticleSet::uniform(states).unwrap();
        let noise = TransitionNoise::new([6.0, 6.0, 0.02, 0.002, 0.002, 0.0]).unwrap();
        let propagated = propagate(&particles, &noise, &mut rng);
        prop_assert_eq!(propagated.len(), n);
        let sum: f64 = propagated.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let resampled = resample(&propagated, &mut rng).unwrap();
        prop_assert_eq!(resampled.len(), n);
        let sum: f64 = resampled.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn resample_is_deterministic_given_the_seed(seed in any::<u64>(), n in 2usize..30) {
        let mut weight_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let raw: Vec<f64> = (0..n).map(|_| weight_rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let states: Vec<AffineState> = (0..n)
            .map(|i| AffineState::from_box(i as f64, 0.0, 8.0, 8.0, 8))
            .collect();
        let particles = ParticleSet::new(states, weights).unwrap();

        let out_a = resample(&particles, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let out_b = resample(&particles, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out_a.states(), out_b.states());
    }

    #[test]
    fn partition_unpartition_roundtrip(seed in any::<u64>(), grid in 1usize..5, patch in 2usize..9) {
        let side = grid * patch;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>()).collect();
        let template = Template::new(side, pixels).unwrap();
        let patches = partition(&template, patch).unwrap();
        prop_assert_eq!(patches.len(), grid * grid);
        let rebuilt = unpartition(&patches, side, patch).unwrap();
        prop_assert_eq!(rebuilt, template);
    }

    #[test]
    fn overlap_is_symmetric_bounded_and_identity(
        ax in 0.0..50.0f64, ay in 0.0..50.0f64, aw in 1.0..30.0f64, ah in 1.0..30.0f64,
        bx in 0.0..50.0f64, by in 0.0..50.0f64, bw in 1.0..30.0f64, bh in 1.0..30.0f64,
    ) {
        let a = Rect::new(ax, ay, aw, ah);
        let b = Rect::new(bx, by, bw, bh);
        let ab = voc_overlap(&a, &b);
        prop_assert_eq!(ab, voc_overlap(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(voc_overlap(&a, &a), 1.0);
        // Disjoint interiors give exactly zero.
        let far = Rect::new(bx + 200.0, by, bw, bh);
        prop_assert_eq!(voc_overlap(&a, &far), 0.0);
    }

    #[test]
    fn cle_is_a_metric_on_centers(
        ax in 0.0..50.0f64, ay in 0.0..50.0f64,
        bx in 0.0..50.0f64, by in 0.0..50.0f64,
        cx in 0.0..50.0f64, cy in 0.0..50.0f64,
    ) {
        let a = Rect::new(ax, ay, 10.0, 10.0);
        let b = Rect::new(bx, by, 12.0, 9.0);
        let c = Rect::new(cx, cy, 7.0, 14.0);
        prop_assert_eq!(cle(&a, &b), cle(&b, &a));
        prop_assert!(cle(&a, &a) == 0.0);
        prop_assert!(cle(&a, &c) <= cle(&a, &b) + cle(&b, &c) + 1e-12);
    }

    #[test]
    fn success_curves_are_non_increasing(overlaps in prop::collection::vec(0.0..1.0f64, 1..40)) {
        let curve = success_plot(&overlaps, 51).unwrap();
        for pair in curve.windows(2) {
            prop_assert!(pair[1].1 <= pair[0].1);
        }
    }
}
