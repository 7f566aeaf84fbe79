//! Tracker-level behavior checked against independent implementations.

mod common;

use nalgebra::DVector;
use pjs::appearance::{AppearanceDictionary, TargetHistory};
use pjs::motion::{crop_warp, partition, AffineState, GrayFrame};
use pjs::tracker::candidate_loglik;
use pjs::TrackerConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frame_with_texture(width: usize, height: usize) -> GrayFrame {
    let pixels: Vec<f64> = (0..width * height)
        .map(|i| {
            let x = (i % width) as f64;
            let y = (i / width) as f64;
            0.5 + 0.45 * ((0.37 * x).sin() * (0.21 * y).cos() + 0.4 * (0.13 * (x + y)).sin()) / 1.4
        })
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    GrayFrame::new(width, height, pixels).unwrap()
}

/// With an empty grouping history (`k = 0`) and the greedy solver, joint
/// coding degenerates to independent per-patch OMP. Check both the
/// coefficients path and the per-patch errors against a from-scratch OMP.
#[test]
fn zero_group_size_somp_equals_direct_omp() {
    let frame = frame_with_texture(120, 90);
    let state = AffineState::from_box(30.0, 20.0, 40.0, 40.0, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let extract = |dx: f64, dy: f64| {
        let mut shifted = state;
        shifted.tx += dx;
        shifted.ty += dy;
        crop_warp(&frame, &shifted, 32)
    };
    let dict = AppearanceDictionary::init(extract, 10, 2, 8, &mut rng).unwrap();

    // A candidate near, but not on, the dictionary state.
    let mut candidate_state = state;
    candidate_state.tx += 1.3;
    candidate_state.ty -= 0.8;
    let template = crop_warp(&frame, &candidate_state, 32).unwrap();
    let patches = partition(&template, 8).unwrap();

    let config = TrackerConfig {
        group_size: 0,
        ..TrackerConfig::default()
    };
    let history = TargetHistory::new(0);
    let (loglik, errors) = candidate_loglik(&dict, &history, &patches, &config).unwrap();

    let atoms = dict.solver_dict().atoms();
    let mut oracle_total = 0.0;
    for (i, patch) in patches.iter().enumerate() {
        let code = common::direct_omp(atoms, patch, config.sparsity);
        // In-template reconstruction only, per the observation model.
        let mut reconstruction = DVector::zeros(patch.len());
        for col in dict.block_range(i) {
            reconstruction += atoms.column(col) * code[col];
        }
        let err = (patch - reconstruction).norm_squared();
        assert!(
            (errors[i] - err).abs() < 1e-9,
            "patch {i}: {} vs oracle {err}",
            errors[i]
        );
        oracle_total -= err;
    }
    assert!((loglik - oracle_total).abs() < 1e-9);
}
