//! The per-frame tracking loop.
//!
//! Each frame: propagate particles, crop and partition every candidate,
//! code each patch jointly with its recent history, and score candidates by
//! the (negative) sum of in-template patch reconstruction errors. The best
//! candidate updates the occlusion chains and the dictionary, and joins the
//! grouping history.
//!
//! Candidate evaluation is embarrassingly parallel over particles against a
//! read-only dictionary snapshot and consumes no randomness, so results are
//! independent of worker count; all mutation happens in a single-threaded
//! commit phase afterwards.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::appearance::{AppearanceDictionary, TargetHistory};
use crate::config::{SolverKind, TrackerConfig};
use crate::error::{Error, Result};
use crate::motion::{
    crop_warp, partition, propagate, resample, AffineState, GrayFrame, ParticleSet, TransitionNoise,
};
use crate::occlusion::{occlusion_likelihoods, occlusion_posterior, OcclusionChain};
use crate::rect::Rect;
use crate::sparse::{mfocuss, somp, sparse_code_single};

/// Tracker output for one frame.
#[derive(Clone, Debug)]
pub struct FrameResult {
    /// 0-based frame index; frame 0 is the initialization frame.
    pub frame: usize,
    pub best_state: AffineState,
    pub best_box: Rect,
    /// Log-likelihood of the best candidate (always <= 0).
    pub log_likelihood: f64,
    /// Per-patch occlusion decisions, row-major patch order.
    pub occlusion_mask: Vec<bool>,
    /// Per-patch in-template reconstruction errors of the best candidate.
    pub per_patch_errors: Vec<f64>,
    /// Set when every candidate underflowed and weights fell back to
    /// uniform.
    pub degenerate_weights: bool,
}

/// Axis-aligned bounding box of the state's warped template footprint: the
/// four template corners mapped through the affine state.
pub fn state_to_box(state: &AffineState, template_side: usize) -> Rect {
    let a = state.linear_map();
    let c = template_side as f64 / 2.0;
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (du, dv) in [(-c, -c), (c, -c), (-c, c), (c, c)] {
        let x = state.tx + a[0][0] * du + a[0][1] * dv;
        let y = state.ty + a[1][0] * du + a[1][1] * dv;
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    Rect::new(min_x, min_y, max_x - min_x, max_y - min_y)
}

/// Scores one candidate: every patch is grouped with its history and coded
/// by the configured solver; the log-likelihood is the negative sum of
/// in-template reconstruction errors (optionally variance-weighted).
/// Returns the score together with the per-patch errors.
pub fn candidate_loglik(
    dict: &AppearanceDictionary,
    history: &TargetHistory,
    patches: &[DVector<f64>],
    config: &TrackerConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut errors = Vec::with_capacity(patches.len());
    let mut total = 0.0;
    for (i, patch) in patches.iter().enumerate() {
        let group = history.group_signals(patch, i)?;
        let code = match config.solver {
            SolverKind::PjsS => somp(dict.solver_dict(), &group, config.sparsity)?,
            SolverKind::PjsM => mfocuss(
                dict.solver_dict(),
                &group,
                config.lambda,
                config.mfocuss_tol,
                config.mfocuss_max_iter,
            )?,
        };
        let candidate_code = code.last_column();
        let reconstruction = dict.reconstruct_in_block(i, &candidate_code);
        let err = (patch - reconstruction).norm_squared();
        let variance = config.patch_variances.as_ref().map_or(1.0, |v| v[i]);
        total -= err / variance;
        errors.push(err);
    }
    Ok((total, errors))
}

/// Full tracker state for one run over one sequence.
pub struct Tracker {
    config: TrackerConfig,
    noise: TransitionNoise,
    rng: ChaCha8Rng,
    particles: ParticleSet,
    dict: AppearanceDictionary,
    history: TargetHistory,
    chains: Vec<OcclusionChain>,
    frames_tracked: usize,
}

impl Tracker {
    /// Initializes from the first frame and its ground-truth box: builds
    /// the shifted-version dictionary, seeds the history with the initial
    /// target, and spreads all particles on the initial state.
    pub fn init(
        frame: &GrayFrame,
        initial_box: &Rect,
        config: TrackerConfig,
    ) -> Result<(Self, FrameResult)> {
        config.validate()?;
        if !initial_box.is_valid() {
            return Err(Error::InvalidInput(format!(
                "invalid initial box {initial_box:?}"
            )));
        }
        let noise = config.noise()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = AffineState::from_box(
            initial_box.x,
            initial_box.y,
            initial_box.w,
            initial_box.h,
            config.template_side,
        );

        let template_side = config.template_side;
        let extract = |dx: f64, dy: f64| {
            let mut shifted = state;
            shifted.tx += dx;
            shifted.ty += dy;
            crop_warp(frame, &shifted, template_side)
        };
        let dict = AppearanceDictionary::init(
            extract,
            config.n_targets,
            config.init_shift_px,
            config.patch_side,
            &mut rng,
        )?;

        let base = crop_warp(frame, &state, template_side)?;
        let base_patches = partition(&base, config.patch_side)?;
        let mut history = TargetHistory::new(config.group_size);
        history.push(base_patches);

        let n_patches = config.n_patches();
        let chains = vec![OcclusionChain::new(config.beta); n_patches];
        let particles = ParticleSet::uniform(vec![state; config.n_particles])?;

        let result = FrameResult {
            frame: 0,
            best_state: state,
            best_box: state_to_box(&state, template_side),
            log_likelihood: 0.0,
            occlusion_mask: vec![false; n_patches],
            per_patch_errors: vec![0.0; n_patches],
            degenerate_weights: false,
        };
        Ok((
            Tracker {
                config,
                noise,
                rng,
                particles,
                dict,
                history,
                chains,
                frames_tracked: 0,
            },
            result,
        ))
    }

    /// Tracks one frame; see the module docs for the phase breakdown.
    pub fn track_frame(&mut self, frame: &GrayFrame) -> Result<FrameResult> {
        self.frames_tracked += 1;
        let propagated = propagate(&self.particles, &self.noise, &mut self.rng);

        let evals: Vec<Result<(f64, Vec<f64>)>> = propagated
            .states()
            .par_iter()
            .map(|state| {
                let template = crop_warp(frame, state, self.config.template_side)?;
                let patches = partition(&template, self.config.patch_side)?;
                candidate_loglik(&self.dict, &self.history, &patches, &self.config)
            })
            .collect();
        let mut logliks = Vec::with_capacity(evals.len());
        let mut errors = Vec::with_capacity(evals.len());
        for eval in evals {
            let (loglik, errs) = eval?;
            logliks.push(loglik);
            errors.push(errs);
        }

        // Weights via max-subtracted exponentials; argmax is unaffected.
        let max_loglik = logliks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut degenerate = false;
        let weights: Vec<f64> = if max_loglik.is_finite() {
            logliks.iter().map(|l| (l - max_loglik).exp()).collect()
        } else {
            degenerate = true;
            vec![1.0; logliks.len()]
        };
        let sum: f64 = weights.iter().sum();
        let weights: Vec<f64> = if sum.is_finite() && sum > 0.0 {
            weights.iter().map(|w| w / sum).collect()
        } else {
            degenerate = true;
            vec![1.0 / weights.len() as f64; weights.len()]
        };

        let mut best = 0;
        for i in 1..logliks.len() {
            if logliks[i] > logliks[best] {
                best = i;
            }
        }
        let best_state = propagated.states()[best];

        let weighted = ParticleSet::new(propagated.states().to_vec(), weights)?;
        self.particles = resample(&weighted, &mut self.rng)?;

        // Dictionary update on the best candidate: per-patch single-signal
        // coding, occlusion posterior, chain update, masked replacement.
        let best_template = crop_warp(frame, &best_state, self.config.template_side)?;
        let best_patches = partition(&best_template, self.config.patch_side)?;
        let mut mask = vec![false; best_patches.len()];
        for (i, patch) in best_patches.iter().enumerate() {
            let code = sparse_code_single(self.dict.solver_dict(), patch, self.config.lambda)?;
            let coefficients = code.column(0);
            let likelihoods = occlusion_likelihoods(&self.dict, patch, &coefficients, i);
            let prior = self.chains[i].prior();
            let p_occluded = match occlusion_posterior(likelihoods, prior) {
                Ok(p) => p,
                // Both evidence terms underflowed (enormous reconstruction
                // errors on both splits); with no usable evidence the chain
                // prior decides alone.
                Err(Error::Degenerate(_)) => prior.1,
                Err(err) => return Err(err),
            };
            let occluded = p_occluded > 0.5;
            mask[i] = occluded;
            self.chains[i].update(occluded);
        }

        // The shifted-version slots are consumed oldest-first during the
        // first n - 1 frames; afterwards the recency-weighted replacement
        // applies with occluded patches excluded.
        self.dict = if self.frames_tracked < self.config.n_targets {
            self.dict.overwrite_oldest(&best_patches)?
        } else {
            self.dict.replace_target(
                &best_patches,
                &mask,
                self.config.recency_bias,
                &mut self.rng,
            )?
        };
        self.history.push(best_patches);

        Ok(FrameResult {
            frame: self.frames_tracked,
            best_state,
            best_box: state_to_box(&best_state, self.config.template_side),
            log_likelihood: logliks[best],
            occlusion_mask: mask,
            per_patch_errors: errors.swap_remove(best),
            degenerate_weights: degenerate,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &AppearanceDictionary {
        &self.dict
    }

    pub fn chains(&self) -> &[OcclusionChain] {
        &self.chains
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn frames_tracked(&self) -> usize {
        self.frames_tracked
    }
}

/// Runs a full tracker over in-memory frames; the first frame initializes
/// from `initial_box`.
pub fn run_on_frames(
    frames: &[GrayFrame],
    initial_box: &Rect,
    config: &TrackerConfig,
) -> Result<Vec<FrameResult>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("empty frame sequence".into()))?;
    let (mut tracker, first_result) = Tracker::init(first, initial_box, config.clone())?;
    let mut results = Vec::with_capacity(frames.len());
    results.push(first_result);
    for frame in &frames[1..] {
        results.push(tracker.track_frame(frame)?);
    }
    Ok(results)
}

/// Header of the per-run CSV: frame index, best box, log-likelihood, one
/// occlusion bit and one reconstruction error per patch.
pub fn run_csv_header(n_patches: usize) -> String {
    let mut header = String::from("frame,x,y,w,h,loglik");
    for i in 0..n_patches {
        header.push_str(&format!(",occ{i:02}"));
    }
    for i in 0..n_patches {
        header.push_str(&format!(",err{i:02}"));
    }
    header
}

/// One CSV row per [`FrameResult`]; floats use the shortest round-trip
/// representation so identical runs are byte-identical.
pub fn frame_csv_row(result: &FrameResult) -> String {
    let mut row = format!(
        "{},{},{},{},{},{}",
        result.frame,
        result.best_box.x,
        result.best_box.y,
        result.best_box.w,
        result.best_box.h,
        result.log_likelihood
    );
    for &occ in &result.occlusion_mask {
        row.push_str(if occ { ",1" } else { ",0" });
    }
    for &err in &result.per_patch_errors {
        row.push_str(&format!(",{err}"));
    }
    row
}

/// Full per-run CSV (header plus one row per frame, trailing newline).
pub fn results_to_csv(results: &[FrameResult]) -> String {
    let n_patches = results.first().map_or(0, |r| r.occlusion_mask.len());
    let mut out = run_csv_header(n_patches);
    out.push('\n');
    for result in results {
        out.push_str(&frame_csv_row(result));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Template;
    use crate::synth::{self, SynthKind, SynthSpec};

    #[test]
    fn state_to_box_identity_centered() {
        let state = AffineState {
            tx: 50.0,
            ty: 50.0,
            rotation: 0.0,
            scale: 1.0,
            aspect: 1.0,
            skew: 0.0,
        };
        let rect = state_to_box(&state, 32);
        assert_eq!((rect.x, rect.y, rect.w, rect.h), (34.0, 34.0, 32.0, 32.0));
    }

    #[test]
    fn state_to_box_quarter_turn_of_square_is_same_box() {
        let state = AffineState {
            tx: 50.0,
            ty: 50.0,
            rotation: std::f64::consts::FRAC_PI_2,
            scale: 1.0,
            aspect: 1.0,
            skew: 0.0,
        };
        let rect = state_to_box(&state, 32);
        assert!((rect.x - 34.0).abs() < 1e-9);
        assert!((rect.y - 34.0).abs() < 1e-9);
        assert!((rect.w - 32.0).abs() < 1e-9);
        assert!((rect.h - 32.0).abs() < 1e-9);
    }

    #[test]
    fn state_to_box_aspect_doubles_height() {
        let state = AffineState {
            tx: 0.0,
            ty: 0.0,
            rotation: 0.0,
            scale: 1.0,
            aspect: 2.0,
            skew: 0.0,
        };
        let rect = state_to_box(&state, 32);
        assert_eq!(rect.w, 32.0);
        assert_eq!(rect.h, 64.0);
    }

    fn textured_extractor(side: usize) -> impl FnMut(f64, f64) -> Result<Template> {
        move |dx: f64, dy: f64| {
            let pixels = (0..side * side)
                .map(|i| {
                    let x = (i % side) as f64 + dx;
                    let y = (i / side) as f64 + dy;
                    0.5 + 0.35 * ((0.43 * x).sin() + (0.29 * y).cos()) / 2.0
                })
                .collect();
            Template::new(side, pixels)
        }
    }

    #[test]
    fn candidate_from_dictionary_scores_near_zero_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut extract = textured_extractor(32);
        let dict = AppearanceDictionary::init(&mut extract, 10, 2, 8, &mut rng).unwrap();
        let candidate = extract(0.0, 0.0).unwrap();
        let patches = partition(&candidate, 8).unwrap();

        let config = TrackerConfig {
            group_size: 0,
            ..TrackerConfig::default()
        };
        let history = TargetHistory::new(0);
        let (loglik, errors) = candidate_loglik(&dict, &history, &patches, &config).unwrap();
        assert!(errors.iter().all(|&e| e <= 1e-6), "errors = {errors:?}");
        assert!(loglik >= -1e-4, "loglik = {loglik}");
        assert!(loglik <= 0.0);
    }

    #[test]
    fn zero_candidate_has_maximal_loglik() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let dict = AppearanceDictionary::init(textured_extractor(32), 10, 2, 8, &mut rng).unwrap();
        let patches: Vec<DVector<f64>> = (0..16).map(|_| DVector::zeros(64)).collect();
        let history = TargetHistory::new(4);
        let config = TrackerConfig::default();
        let (loglik, errors) = candidate_loglik(&dict, &history, &patches, &config).unwrap();
        assert_eq!(loglik, 0.0);
        assert!(errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn loglik_is_negative_sum_of_errors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut extract = textured_extractor(32);
        let dict = AppearanceDictionary::init(&mut extract, 4, 2, 8, &mut rng).unwrap();
        let shifted = extract(3.0, 1.0).unwrap();
        let patches = partition(&shifted, 8).unwrap();
        let history = TargetHistory::new(0);
        let config = TrackerConfig {
            n_targets: 4,
            ..TrackerConfig::default()
        };
        let (loglik, errors) = candidate_loglik(&dict, &history, &patches, &config).unwrap();
        let sum: f64 = errors.iter().sum();
        assert!((loglik + sum).abs() < 1e-12);
    }

    #[test]
    fn candidate_ordering_invariant_to_common_variance_rescale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut extract = textured_extractor(32);
        let dict = AppearanceDictionary::init(&mut extract, 4, 2, 8, &mut rng).unwrap();
        let history = TargetHistory::new(0);
        let aligned = partition(&extract(0.0, 0.0).unwrap(), 8).unwrap();
        let shifted = partition(&extract(5.0, 2.0).unwrap(), 8).unwrap();

        let mut config = TrackerConfig {
            n_targets: 4,
            ..TrackerConfig::default()
        };
        let (a_base, _) = candidate_loglik(&dict, &history, &aligned, &config).unwrap();
        let (b_base, _) = candidate_loglik(&dict, &history, &shifted, &config).unwrap();

        config.patch_variances = Some(vec![2.5; 16]);
        let (a_scaled, _) = candidate_loglik(&dict, &history, &aligned, &config).unwrap();
        let (b_scaled, _) = candidate_loglik(&dict, &history, &shifted, &config).unwrap();

        assert!(a_base > b_base);
        assert!(a_scaled > b_scaled);
        assert!((a_scaled * 2.5 - a_base).abs() < 1e-9);
    }

    #[test]
    fn static_sequence_zero_noise_stays_on_initial_box() {
        let spec = SynthSpec {
            kind: SynthKind::Static,
            frames: 5,
            ..SynthSpec::default()
        };
        let (frames, boxes) = synth::generate(&spec).unwrap();
        let config = TrackerConfig {
            n_particles: 12,
            n_targets: 3,
            sigma: [0.0; 6],
            seed: 1,
            ..TrackerConfig::default()
        };
        let results = run_on_frames(&frames, &boxes[0], &config).unwrap();
        assert_eq!(results.len(), 5);
        for result in &results {
            assert_eq!(result.best_box, results[0].best_box);
            assert!(result.log_likelihood <= 0.0);
        }
        assert!((results[0].best_box.x - boxes[0].x).abs() < 1e-9);
        assert!((results[0].best_box.y - boxes[0].y).abs() < 1e-9);
    }

    #[test]
    fn csv_layout_matches_patch_count() {
        let header = run_csv_header(16);
        assert_eq!(header.split(',').count(), 6 + 32);
        assert!(header.starts_with("frame,x,y,w,h,loglik,occ00"));
        assert!(header.ends_with("err15"));
    }
}
