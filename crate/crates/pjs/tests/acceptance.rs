//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::Instant;

use nalgebra::DVector;
use pjs::appearance::{AppearanceDictionary, TargetHistory};
use pjs::eval::{cle, voc_overlap, RunReport};
use pjs::motion::{crop_warp, partition, AffineState};
use pjs::occlusion::{BetaPriors, OcclusionChain};
use pjs::rect::Rect;
use pjs::sparse::{mfocuss_with_trace, somp, sparse_code_single, Dictionary, SignalGroup};
use pjs::synth::{self, SynthKind, SynthSpec};
use pjs::tracker::{candidate_loglik, results_to_csv, run_on_frames, Tracker};
use pjs::TrackerConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn criterion(name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance[{name}]: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{name}: {detail}");
}

/// Solver monotonicity: on 100 random (64x160, 64x5, lambda 0.001)
/// instances every M-FOCUSS iteration decreases the objective (within
/// 1e-10), in under 30 seconds.
#[test]
fn solver_monotonicity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let dict = Dictionary::new(common::random_unit_dictionary(&mut rng, 64, 160)).unwrap();
        let group = SignalGroup::new(common::randn(&mut rng, 64, 5)).unwrap();
        let (_, trace) = mfocuss_with_trace(&dict, &group, 0.001, 1e-6, 100).unwrap();
        for step in trace.windows(2) {
            worst = worst.max(step[1] - step[0]);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    criterion(
        "solver-monotonicity",
        worst <= 1e-10 && elapsed < 30.0,
        &format!("max objective increase {worst:.3e}, {elapsed:.1}s"),
    );
}

/// Single-column equivalence: sparse_code_single matches an independent
/// coordinate-descent l1 oracle's objective within 1e-3 on 50 random 4x5
/// problems.
#[test]
fn single_column_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let lambda = 0.01;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..50 {
        let atoms = common::random_unit_dictionary(&mut rng, 4, 5);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let y_mat = common::randn(&mut rng, 4, 1);
        let y = DVector::from_column_slice(y_mat.column(0).as_slice());
        let code = sparse_code_single(&dict, &y, lambda).unwrap();
        let ours = common::l1_objective(&atoms, &y, &code.column(0), lambda);
        let oracle_c = common::lasso_cd(&atoms, &y, lambda, 10_000);
        let oracle = common::l1_objective(&atoms, &y, &oracle_c, lambda);
        worst_gap = worst_gap.max((ours - oracle).abs());
    }
    criterion(
        "single-column-equivalence",
        worst_gap < 1e-3,
        &format!("max objective gap {worst_gap:.2e}"),
    );
}

/// SOMP exact recovery on orthonormal dictionaries, plus L = 1 equals the
/// argmax of residual correlations exactly.
#[test]
fn somp_exact_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let mut support_failures = 0;
    for _ in 0..50 {
        let basis = common::random_orthonormal(&mut rng, 8);
        let dict = Dictionary::new(basis.clone()).unwrap();
        let mut truth = nalgebra::DMatrix::zeros(8, 3);
        let (a, b) = loop {
            let a = rng.random_range(0..8usize);
            let b = rng.random_range(0..8usize);
            if a != b {
                break (a.min(b), a.max(b));
            }
        };
        for &row in &[a, b] {
            for col in 0..3 {
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                truth[(row, col)] = sign * (0.5 + rng.random::<f64>());
            }
        }
        let group = SignalGroup::new(&basis * &truth).unwrap();
        let code = somp(&dict, &group, 2).unwrap();
        if code.active_rows() != [a, b] {
            support_failures += 1;
        }
    }

    let mut argmax_failures = 0;
    for _ in 0..100 {
        let atoms = common::random_unit_dictionary(&mut rng, 6, 12);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let signals = common::randn(&mut rng, 6, 3);
        let group = SignalGroup::new(signals.clone()).unwrap();
        let code = somp(&dict, &group, 1).unwrap();
        let mut best = 0usize;
        let mut best_score = -1.0f64;
        for j in 0..12 {
            let score = signals.tr_mul(&atoms.column(j)).norm();
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        if code.active_rows() != [best] {
            argmax_failures += 1;
        }
    }
    criterion(
        "somp-exact-recovery",
        support_failures == 0 && argmax_failures == 0,
        &format!("{support_failures} support failures, {argmax_failures} argmax failures"),
    );
}

/// MAP closed form vs a 1000x1000 grid maximization of the log posterior,
/// plus the zero-count paper constants.
#[test]
fn map_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    let steps = 1000usize;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let priors = BetaPriors::new(
            1.2 + 6.0 * rng.random::<f64>(),
            1.2 + 6.0 * rng.random::<f64>(),
            1.2 + 6.0 * rng.random::<f64>(),
            1.2 + 6.0 * rng.random::<f64>(),
        )
        .unwrap();
        let mut chain = OcclusionChain::new(priors);
        let flips = rng.random_range(5..60);
        for _ in 0..flips {
            chain.update(rng.random::<f64>() < 0.35);
        }
        let (mu, eta) = chain.map_transitions();
        let (n_oo, n_oc, n_co, n_cc) = chain.counters();

        // Log posterior splits into a mu part and an eta part; evaluate the
        // full grid by combining the precomputed halves.
        let mu_part: Vec<f64> = (0..steps)
            .map(|i| {
                let m = (i as f64 + 0.5) / steps as f64;
                (priors.a - 1.0 + n_oc as f64) * m.ln()
                    + (priors.b - 1.0 + n_oo as f64) * (1.0 - m).ln()
            })
            .collect();
        let eta_part: Vec<f64> = (0..steps)
            .map(|j| {
                let e = (j as f64 + 0.5) / steps as f64;
                (priors.c - 1.0 + n_co as f64) * e.ln()
                    + (priors.d - 1.0 + n_cc as f64) * (1.0 - e).ln()
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for (i, mp) in mu_part.iter().enumerate() {
            for (j, ep) in eta_part.iter().enumerate() {
                let value = mp + ep;
                if value > best.0 {
                    best = (
                        value,
                        (i as f64 + 0.5) / steps as f64,
                        (j as f64 + 0.5) / steps as f64,
                    );
                }
            }
        }
        worst = worst.max((best.1 - mu).abs()).max((best.2 - eta).abs());
    }

    let zero_chain = OcclusionChain::new(BetaPriors::default());
    let (mu0, eta0) = zero_chain.map_transitions();
    criterion(
        "map-closed-form",
        worst < 2e-3 && mu0 == 0.3 && eta0 == 0.7,
        &format!("max grid gap {worst:.2e}, zero-count ({mu0}, {eta0})"),
    );
}

/// Metric oracles: continuous IoU agrees with pixel counting on 1000 random
/// integer boxes; CLE returns 5 exactly on the 3-4-5 case.
#[test]
fn metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(205);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = (
            rng.random_range(0..40i64),
            rng.random_range(0..40i64),
            rng.random_range(1..25i64),
            rng.random_range(1..25i64),
        );
        let b = (
            rng.random_range(0..40i64),
            rng.random_range(0..40i64),
            rng.random_range(1..25i64),
            rng.random_range(1..25i64),
        );
        let continuous = voc_overlap(
            &Rect::new(a.0 as f64, a.1 as f64, a.2 as f64, a.3 as f64),
            &Rect::new(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64),
        );
        let counted = common::pixel_count_iou(a, b);
        worst = worst.max((continuous - counted).abs());
    }
    let pythagorean = cle(
        &Rect::new(0.0, 0.0, 10.0, 10.0),
        &Rect::new(3.0, 4.0, 10.0, 10.0),
    );
    criterion(
        "metric-oracles",
        worst < 1e-9 && pythagorean == 5.0,
        &format!("max IoU gap {worst:.2e}, 3-4-5 CLE {pythagorean}"),
    );
}

/// Likelihood-map shape: candidate log-likelihood strictly decreases along
/// axis shifts of 0, 4, 8 pixels off the true target.
#[test]
fn likelihood_map_shape() {
    let spec = SynthSpec::default();
    let (frames, boxes) = synth::generate(&spec).unwrap();
    let frame = &frames[0];
    let gt = &boxes[0];
    let config = TrackerConfig::default();
    let state = AffineState::from_box(gt.x, gt.y, gt.w, gt.h, config.template_side);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let extract = |dx: f64, dy: f64| {
        let mut shifted = state;
        shifted.tx += dx;
        shifted.ty += dy;
        crop_warp(frame, &shifted, config.template_side)
    };
    let dict = AppearanceDictionary::init(
        extract,
        config.n_targets,
        config.init_shift_px,
        config.patch_side,
        &mut rng,
    )
    .unwrap();
    let mut history = TargetHistory::new(config.group_size);
    let base = crop_warp(frame, &state, config.template_side).unwrap();
    history.push(partition(&base, config.patch_side).unwrap());

    let loglik_at = |dx: f64, dy: f64| {
        let mut shifted = state;
        shifted.tx += dx;
        shifted.ty += dy;
        let template = crop_warp(frame, &shifted, config.template_side).unwrap();
        let patches = partition(&template, config.patch_side).unwrap();
        candidate_loglik(&dict, &history, &patches, &config)
            .unwrap()
            .0
    };
    let along_x: Vec<f64> = [0.0, 4.0, 8.0].iter().map(|&s| loglik_at(s, 0.0)).collect();
    let along_y: Vec<f64> = [0.0, 4.0, 8.0].iter().map(|&s| loglik_at(0.0, s)).collect();
    let ok = along_x[0] > along_x[1]
        && along_x[1] > along_x[2]
        && along_y[0] > along_y[1]
        && along_y[1] > along_y[2];
    criterion(
        "likelihood-map-shape",
        ok,
        &format!("x shifts {along_x:?}, y shifts {along_y:?}"),
    );
}

/// End-to-end synthetic tracking with paper defaults, seed 0: the translate
/// scenario stays within 3 px mean CLE and 0.6 mean overlap; the occlude
/// scenario flags at least 70% of the fully covered lower patches during
/// the occlusion window and leaves flagged patches' atoms unchanged.
/// Thresholds are implementation-chosen for the synthetic generator.
#[test]
fn end_to_end_synthetic_tracking() {
    let started = Instant::now();

    // Translate scenario.
    let spec = SynthSpec::default();
    let (frames, boxes) = synth::generate(&spec).unwrap();
    let config = TrackerConfig::default(); // seed 0, 600 particles
    let results = run_on_frames(&frames, &boxes[0], &config).unwrap();
    let predicted: Vec<Rect> = results.iter().map(|r| r.best_box).collect();
    let report = RunReport::from_boxes(&predicted, &boxes, 0.6, 101).unwrap();

    // Occlude scenario, tracked manually so the dictionary can be
    // snapshotted around every update.
    let occ_spec = SynthSpec {
        kind: SynthKind::Occlude,
        ..SynthSpec::default()
    };
    let (occ_frames, occ_boxes) = synth::generate(&occ_spec).unwrap();
    let (mut tracker, _) = Tracker::init(&occ_frames[0], &occ_boxes[0], config.clone()).unwrap();
    let window = occ_spec.occlusion_start..=occ_spec.occlusion_end;
    let lower_patches = 8..16; // bottom two rows of the 4x4 patch grid
    let mut flagged = 0usize;
    let mut frozen_atom_violations = 0usize;
    for (index, occ_frame) in occ_frames.iter().enumerate().skip(1) {
        let before = tracker.dictionary().solver_dict().atoms().clone();
        let result = tracker.track_frame(occ_frame).unwrap();
        let after = tracker.dictionary().solver_dict().atoms();
        if window.contains(&index) {
            // Post-warm-up frames: patches flagged occluded must keep their
            // atoms through the update. (Warm-up frames overwrite slots
            // unconditionally by design.)
            for patch in 0..tracker.dictionary().n_patches() {
                if !result.occlusion_mask[patch] {
                    continue;
                }
                for col in tracker.dictionary().block_range(patch) {
                    if (before.column(col) - after.column(col)).norm() > 0.0 {
                        frozen_atom_violations += 1;
                    }
                }
            }
            flagged += lower_patches
                .clone()
                .filter(|&p| result.occlusion_mask[p])
                .count();
        }
    }
    let window_len = occ_spec.occlusion_end - occ_spec.occlusion_start + 1;
    let flag_rate = flagged as f64 / (window_len * lower_patches.len()) as f64;

    let elapsed = started.elapsed().as_secs_f64();
    let ok = report.mean_cle <= 3.0
        && report.mean_overlap >= 0.6
        && flag_rate >= 0.7
        && frozen_atom_violations == 0
        && elapsed < 120.0;
    criterion(
        "end-to-end-synthetic",
        ok,
        &format!(
            "mean CLE {:.2}px, mean overlap {:.2}, occlusion flag rate {:.2}, \
             frozen-atom violations {frozen_atom_violations}, {elapsed:.0}s",
            report.mean_cle, report.mean_overlap, flag_rate
        ),
    );
}

/// Determinism: identical seed and config produce byte-identical CSVs,
/// independent of the rayon worker count.
#[test]
fn determinism_across_worker_counts() {
    let spec = SynthSpec {
        frames: 8,
        ..SynthSpec::default()
    };
    let (frames, boxes) = synth::generate(&spec).unwrap();
    let config = TrackerConfig {
        n_particles: 60,
        n_targets: 4,
        seed: 3,
        ..TrackerConfig::default()
    };

    let run_with_threads = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let results = pool
            .install(|| run_on_frames(&frames, &boxes[0], &config))
            .unwrap();
        results_to_csv(&results)
    };
    let single = run_with_threads(1);
    let single_again = run_with_threads(1);
    let multi = run_with_threads(3);
    criterion(
        "determinism",
        single == single_again && single == multi,
        &format!(
            "csv bytes {} (repeat {}, 3 workers {})",
            single.len(),
            single_again.len(),
            multi.len()
        ),
    );
}

/// Best-effort dataset reproduction (non-gating): with user-supplied
/// benchmark sequences under `PJS_OTB_DIR`, the average success rate at
/// threshold 0.6 over seeds 0-9 should land within 10 percentage points of
/// the published 69% figure for the greedy variant. Ignored by default:
/// requires the external dataset and hours of compute.
#[test]
#[ignore = "requires user-supplied benchmark sequences in PJS_OTB_DIR; non-gating"]
fn dataset_reproduction_best_effort() {
    let root = match std::env::var("PJS_OTB_DIR") {
        Ok(dir) => std::path::PathBuf::from(dir),
        Err(_) => panic!(
            "set PJS_OTB_DIR to a directory of benchmark sequences \
             (board, crossing, david, dollar, faceocc2, skating1, stone, sylv, trellis, walking)"
        ),
    };
    let names = [
        "board", "crossing", "david", "dollar", "faceocc2", "skating1", "stone", "sylv", "trellis",
        "walking",
    ];
    let config = TrackerConfig::default();
    let mut rates = Vec::new();
    for name in names {
        let dir = root.join(name);
        if !dir.is_dir() {
            println!("dataset-reproduction: skipping missing sequence {name}");
            continue;
        }
        let sequence = pjs::eval::Sequence::load(&dir).unwrap();
        let mut per_seed = Vec::new();
        for seed in 0..10u64 {
            let mut run_config = config.clone();
            run_config.seed = seed;
            let first = sequence.load_frame(0).unwrap();
            let (mut tracker, first_result) =
                Tracker::init(&first, &sequence.ground_truth[0], run_config).unwrap();
            let mut predicted = vec![first_result.best_box];
            for index in 1..sequence.len() {
                let frame = sequence.load_frame(index).unwrap();
                predicted.push(tracker.track_frame(&frame).unwrap().best_box);
            }
            let report =
                RunReport::from_boxes(&predicted, &sequence.ground_truth, 0.6, 101).unwrap();
            per_seed.push(report.success_rate);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        println!("dataset-reproduction: {name}: success rate {mean:.3}");
        rates.push(mean);
    }
    assert!(!rates.is_empty(), "no sequences found under PJS_OTB_DIR");
    let average = rates.iter().sum::<f64>() / rates.len() as f64;
    let ok = (average - 0.69).abs() <= 0.10;
    criterion(
        "dataset-reproduction",
        ok,
        &format!("average success rate {average:.3} vs published 0.69"),
    );
}
