//! Oracle-backed checks of the sparse solvers: exhaustive subset search,
//! orthonormal closed forms, and an independent coordinate-descent lasso.

mod common;

use nalgebra::{DMatrix, DVector};
use pjs::sparse::{
    joint_objective, mfocuss, mfocuss_with_trace, somp, sparse_code_single, Dictionary, SignalGroup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn somp_recovers_shared_support_of_orthonormal_mixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..20 {
        let basis = common::random_orthonormal(&mut rng, 8);
        let dict = Dictionary::new(basis.clone()).unwrap();

        // Ground-truth code with exactly 2 nonzero rows shared by 3 columns.
        let mut truth = DMatrix::zeros(8, 3);
        let rows = loop {
            let a = rng.random_range(0..8usize);
            let b = rng.random_range(0..8usize);
            if a != b {
                break if a < b { [a, b] } else { [b, a] };
            }
        };
        for &row in &rows {
            for col in 0..3 {
                // Keep row entries bounded away from zero so the support is
                // unambiguous.
                let magnitude = 0.5 + rng.random::<f64>();
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                truth[(row, col)] = sign * magnitude;
            }
        }
        let group = SignalGroup::new(&basis * &truth).unwrap();
        let code = somp(&dict, &group, 2).unwrap();
        assert_eq!(code.active_rows(), rows, "trial {trial}");
        let residual = group.signals() - dict.atoms() * code.coefficients();
        assert!(
            residual.norm() <= 1e-9,
            "trial {trial}: {}",
            residual.norm()
        );
    }
}

#[test]
fn somp_single_signal_close_to_exhaustive_pair_fit() {
    // Frozen instance set: greedy pursuit has no uniform approximation
    // factor, so the 1.5x bound is asserted over these 100 fixed instances
    // (worst observed ratio 1.33).
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for trial in 0..100 {
        let atoms = common::random_unit_dictionary(&mut rng, 6, 4);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let y = common::randn(&mut rng, 6, 1);
        let group = SignalGroup::new(y.clone()).unwrap();

        let code = somp(&dict, &group, 2).unwrap();
        let somp_residual = (&y - dict.atoms() * code.coefficients()).norm();

        // Exhaustive oracle: least squares on every atom pair.
        let mut best = f64::INFINITY;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let sub = atoms.select_columns([a, b].iter());
                let solution = sub.clone().svd(true, true).solve(&y, 1e-13).unwrap();
                let residual = (&y - sub * solution).norm();
                best = best.min(residual);
            }
        }
        assert!(
            somp_residual <= 1.5 * best + 1e-12,
            "trial {trial}: somp {somp_residual} vs best {best}"
        );
    }
}

#[test]
fn mfocuss_orthonormal_small_lambda_recovers_analysis_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let basis = common::random_orthonormal(&mut rng, 6);
    let dict = Dictionary::new(basis.clone()).unwrap();
    let y = common::randn(&mut rng, 6, 3);
    let group = SignalGroup::new(y.clone()).unwrap();
    let code = mfocuss(&dict, &group, 1e-8, 1e-10, 500).unwrap();
    let expected = basis.tr_mul(&y);
    let gap = (code.coefficients() - expected).norm();
    assert!(gap < 1e-4, "gap {gap}");
}

#[test]
fn mfocuss_single_column_matches_coordinate_descent_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for trial in 0..25 {
        let atoms = common::random_unit_dictionary(&mut rng, 4, 5);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let y_mat = common::randn(&mut rng, 4, 1);
        let y = DVector::from_column_slice(y_mat.column(0).as_slice());
        let lambda = 0.01;

        let code = sparse_code_single(&dict, &y, lambda).unwrap();
        let ours = common::l1_objective(&atoms, &y, &code.column(0), lambda);
        let oracle_c = common::lasso_cd(&atoms, &y, lambda, 10_000);
        let oracle = common::l1_objective(&atoms, &y, &oracle_c, lambda);
        assert!(
            (ours - oracle).abs() < 1e-3,
            "trial {trial}: ours {ours} vs oracle {oracle}"
        );
        // The oracle is a minimizer; we must not beat it meaningfully.
        assert!(ours >= oracle - 1e-9);
    }
}

#[test]
fn sparse_code_single_picks_the_generating_atom() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let atoms = common::random_unit_dictionary(&mut rng, 64, 160);
    let dict = Dictionary::new(atoms.clone()).unwrap();
    let index = 37;
    let y = DVector::from_column_slice(atoms.column(index).as_slice());
    let code = sparse_code_single(&dict, &y, 0.001).unwrap();
    let c = code.column(0);
    let dominant = (0..160).max_by(|&a, &b| c[a].abs().partial_cmp(&c[b].abs()).unwrap());
    assert_eq!(dominant, Some(index));
    let residual = (&y - &atoms * &c).norm();
    assert!(residual < 0.01, "residual {residual}");
}

#[test]
fn sparse_code_single_equals_one_column_mfocuss_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let atoms = common::random_unit_dictionary(&mut rng, 8, 20);
    let dict = Dictionary::new(atoms).unwrap();
    let y_mat = common::randn(&mut rng, 8, 1);
    let y = DVector::from_column_slice(y_mat.column(0).as_slice());
    let single = sparse_code_single(&dict, &y, 0.05).unwrap();
    let group = SignalGroup::from_column(&y).unwrap();
    let joint = mfocuss(
        &dict,
        &group,
        0.05,
        pjs::sparse::DEFAULT_TOL,
        pjs::sparse::DEFAULT_MAX_ITER,
    )
    .unwrap();
    assert_eq!(single.coefficients(), joint.coefficients());
    assert_eq!(single.active_rows(), joint.active_rows());
}

#[test]
fn mfocuss_trace_never_increases_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..10 {
        let atoms = common::random_unit_dictionary(&mut rng, 12, 30);
        let dict = Dictionary::new(atoms).unwrap();
        let group = SignalGroup::new(common::randn(&mut rng, 12, 4)).unwrap();
        let (code, trace) = mfocuss_with_trace(&dict, &group, 0.05, 1e-8, 80).unwrap();
        for step in trace.windows(2) {
            assert!(step[1] <= step[0] + 1e-10, "trace step {step:?}");
        }
        // The trace end matches the returned coefficients.
        let last = joint_objective(&dict, &group, code.coefficients(), 0.05);
        assert!((last - trace.last().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn somp_residual_non_increasing_in_sparsity() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let atoms = common::random_unit_dictionary(&mut rng, 10, 24);
    let dict = Dictionary::new(atoms).unwrap();
    let group = SignalGroup::new(common::randn(&mut rng, 10, 3)).unwrap();
    let mut previous = f64::INFINITY;
    for sparsity in 0..=10 {
        let code = somp(&dict, &group, sparsity).unwrap();
        let residual = (group.signals() - dict.atoms() * code.coefficients()).norm();
        assert!(
            residual <= previous + 1e-9,
            "L={sparsity}: {residual} > {previous}"
        );
        previous = residual;
    }
}
