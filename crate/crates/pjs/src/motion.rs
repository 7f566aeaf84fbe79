//! SIR particle filter over affine states and candidate extraction.
//!
//! The motion model is a sequential importance resampling filter: states are
//! propagated through a zero-mean Gaussian transition, weighted by the
//! observation model, and resampled systematically every frame. Candidate
//! images are cropped from the frame by an affine warp and partitioned into
//! non-overlapping patches for the appearance model.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A decoded grayscale frame, luminance in `[0, 1]`, row-major.
#[derive(Clone, Debug)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels
            .iter()
            .any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidInput(
                "frame pixels must be finite and in [0, 1]".into(),
            ));
        }
        Ok(GrayFrame {
            width,
            height,
            pixels,
        })
    }

    /// Converts packed 8-bit RGB using the Rec. 601 luma weights
    /// `0.299 R + 0.587 G + 0.114 B`, scaled to `[0, 1]`.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "expected {} rgb bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|px| {
                // The luma weights sum to 1 only in decimal; clamp the
                // floating-point residue so the [0, 1] invariant holds.
                ((0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
                    / 255.0)
                    .clamp(0.0, 1.0)
            })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn from_luma8(width: usize, height: usize, luma: &[u8]) -> Result<Self> {
        if luma.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} luma bytes, got {}",
                width * height,
                luma.len()
            )));
        }
        Self::new(
            width,
            height,
            luma.iter().map(|&v| f64::from(v) / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; coordinates outside the
    /// frame clamp to the nearest edge pixel.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = (1.0 - fx) * self.get(x0, y0) + fx * self.get(x1, y0);
        let bottom = (1.0 - fx) * self.get(x0, y1) + fx * self.get(x1, y1);
        (1.0 - fy) * top + fy * bottom
    }
}

/// Six-parameter affine warp locating a candidate in a frame.
///
/// `(tx, ty)` is the template-center position in frame coordinates;
/// `scale` is the ratio of target width to template width; `aspect` is the
/// target height/width ratio; `skew` is a dimensionless shear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineState {
    pub tx: f64,
    pub ty: f64,
    pub rotation: f64,
    pub scale: f64,
    pub aspect: f64,
    pub skew: f64,
}

impl AffineState {
    /// Initial state for a ground-truth box `(x, y, w, h)`.
    pub fn from_box(x: f64, y: f64, w: f64, h: f64, template_side: usize) -> Self {
        AffineState {
            tx: x + w / 2.0,
            ty: y + h / 2.0,
            rotation: 0.0,
            scale: w / template_side as f64,
            aspect: h / w,
            skew: 0.0,
        }
    }

    /// Components in the fixed order `(tx, ty, rotation, scale, aspect,
    /// skew)` used by the transition noise.
    pub fn components(&self) -> [f64; 6] {
        [
            self.tx,
            self.ty,
            self.rotation,
            self.scale,
            self.aspect,
            self.skew,
        ]
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        AffineState {
            tx: c[0],
            ty: c[1],
            rotation: c[2],
            scale: c[3],
            aspect: c[4],
            skew: c[5],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.components().iter().all(|v| v.is_finite()) && self.scale > 0.0 && self.aspect > 0.0
    }

    /// The 2x2 linear part `A = R(rotation) * [[s, s*skew], [0, s*aspect]]`
    /// mapping centered template offsets to frame offsets.
    pub fn linear_map(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let s = self.scale;
        let sk = s * self.skew;
        let sa = s * self.aspect;
        [
            [s * cos, sk * cos - sa * sin],
            [s * sin, sk * sin + sa * cos],
        ]
    }
}

/// Per-component standard deviations of the Gaussian transition, in the
/// order `(tx, ty, rotation, scale, aspect, skew)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionNoise {
    pub sigma: [f64; 6],
}

impl TransitionNoise {
    pub fn new(sigma: [f64; 6]) -> Result<Self> {
        if sigma.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "noise sigmas must be finite and >= 0".into(),
            ));
        }
        Ok(TransitionNoise { sigma })
    }
}

/// Weighted particles approximating the posterior over affine states.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    states: Vec<AffineState>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(states: Vec<AffineState>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::InvalidInput(
                "particle states and weights must be non-empty and equal-length".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "particle weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "particle weights sum to {total}, expected 1"
            )));
        }
        Ok(ParticleSet { states, weights })
    }

    /// N copies-compatible constructor with uniform weights.
    pub fn uniform(states: Vec<AffineState>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[AffineState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Perturbs every state component by an independent zero-mean Gaussian with
/// the matching sigma and resets weights to uniform (post-resampling SIR
/// convention). Draws are consumed in particle order, component order, one
/// standard-normal per component even when its sigma is zero, so the stream
/// layout is reproducible.
pub fn propagate<R: Rng + ?Sized>(
    particles: &ParticleSet,
    noise: &TransitionNoise,
    rng: &mut R,
) -> ParticleSet {
    let states = particles
        .states
        .iter()
        .map(|state| {
            let mut c = state.components();
            for (i, value) in c.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *value += noise.sigma[i] * z;
            }
            AffineState::from_components(c)
        })
        .collect();
    let n = particles.len();
    ParticleSet {
        states,
        weights: vec![1.0 / n as f64; n],
    }
}

/// Offspring counts of systematic resampling: `n_out` evenly spaced
/// positions `u + i/n_out` walked against the cumulative weights.
/// `weights` must be normalized and `u` must lie in `[0, 1/n_out)`.
pub fn systematic_counts(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let step = 1.0 / n_out as f64;
    let mut counts = vec![0usize; weights.len()];
    let mut cumulative = 0.0;
    let mut next = 0usize; // index of the next position to place
    for (j, w) in weights.iter().enumerate() {
        cumulative += w;
        while next < n_out && u + next as f64 * step < cumulative {
            counts[j] += 1;
            next += 1;
        }
    }
    // Rounding can leave trailing positions unassigned; give them to the
    // last positive-weight particle.
    if next < n_out {
        if let Some(j) = (0..weights.len()).rev().find(|&j| weights[j] > 0.0) {
            counts[j] += n_out - next;
        }
    }
    counts
}

/// Systematic resampling: one uniform draw `u in [0, 1/N)` determines all
/// offspring counts. Output weights are uniform.
pub fn resample<R: Rng + ?Sized>(particles: &ParticleSet, rng: &mut R) -> Result<ParticleSet> {
    let n = particles.len();
    let total: f64 = particles.weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "all particle weights are zero; likelihoods degenerate".into(),
        ));
    }
    let normalized: Vec<f64> = particles.weights.iter().map(|w| w / total).collect();
    let u: f64 = rng.random::<f64>() / n as f64;
    let counts = systematic_counts(&normalized, n, u);
    let mut states = Vec::with_capacity(n);
    for (j, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            states.push(particles.states[j]);
        }
    }
    Ok(ParticleSet {
        states,
        weights: vec![1.0 / n as f64; n],
    })
}

/// A square grayscale candidate image, row-major, side `side`.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    side: usize,
    pixels: Vec<f64>,
}

impl Template {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if side == 0 || pixels.len() != side * side {
            return Err(Error::InvalidInput(format!(
                "template side {side} needs {} pixels, got {}",
                side * side,
                pixels.len()
            )));
        }
        Ok(Template { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.side + x]
    }
}

/// Crops the candidate region of `state` into a `template_side` square.
///
/// Template pixel `(u, v)` samples the frame at
/// `(tx, ty) + A * (u - side/2, v - side/2)` with bilinear interpolation;
/// out-of-frame samples clamp to the nearest edge pixel. With an identity
/// warp (`rotation = skew = 0`, `scale = 1`, `aspect = 1`) and an integer
/// center this reduces to a direct sub-image crop.
pub fn crop_warp(frame: &GrayFrame, state: &AffineState, template_side: usize) -> Result<Template> {
    if template_side == 0 {
        return Err(Error::InvalidInput("template side must be >= 1".into()));
    }
    if !state.components().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidState("non-finite affine state".into()));
    }
    let a = state.linear_map();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-9 {
        return Err(Error::InvalidState(format!(
            "degenerate affine map (det = {det})"
        )));
    }
    let center = template_side as f64 / 2.0;
    let mut pixels = Vec::with_capacity(template_side * template_side);
    for v in 0..template_side {
        let dv = v as f64 - center;
        for u in 0..template_side {
            let du = u as f64 - center;
            let fx = state.tx + a[0][0] * du + a[0][1] * dv;
            let fy = state.ty + a[1][0] * du + a[1][1] * dv;
            pixels.push(frame.sample_clamped(fx, fy));
        }
    }
    Template::new(template_side, pixels)
}

/// Splits a template into non-overlapping `patch_side` squares in row-major
/// patch order; each patch is vectorized column-major into
/// `R^(patch_side^2)`.
pub fn partition(template: &Template, patch_side: usize) -> Result<Vec<DVector<f64>>> {
    let side = template.side();
    if patch_side == 0 || !side.is_multiple_of(patch_side) {
        return Err(Error::InvalidConfig(format!(
            "template side {side} is not divisible by patch side {patch_side}"
        )));
    }
    let grid = side / patch_side;
    let mut patches = Vec::with_capacity(grid * grid);
    for pr in 0..grid {
        for pc in 0..grid {
            let mut patch = DVector::zeros(patch_side * patch_side);
            for col in 0..patch_side {
                for row in 0..patch_side {
                    patch[col * patch_side + row] =
                        template.get(pc * patch_side + col, pr * patch_side + row);
                }
            }
            patches.push(patch);
        }
    }
    Ok(patches)
}

/// Inverse of [`partition`]: reassembles patches into a template.
pub fn unpartition(
    patches: &[DVector<f64>],
    template_side: usize,
    patch_side: usize,
) -> Result<Template> {
    let grid = template_side / patch_side;
    if patch_side == 0 || !template_side.is_multiple_of(patch_side) || patches.len() != grid * grid
    {
        return Err(Error::InvalidConfig(format!(
            "{} patches of side {patch_side} do not tile a {template_side} template",
            patches.len()
        )));
    }
    let mut pixels = vec![0.0; template_side * template_side];
    for (p, patch) in patches.iter().enumerate() {
        if patch.len() != patch_side * patch_side {
            return Err(Error::InvalidConfig(format!(
                "patch {p} has {} values, expected {}",
                patch.len(),
                patch_side * patch_side
            )));
        }
        let pr = p / grid;
        let pc = p % grid;
        for col in 0..patch_side {
            for row in 0..patch_side {
                pixels[(pr * patch_side + row) * template_side + pc * patch_side + col] =
                    patch[col * patch_side + row];
            }
        }
    }
    Template::new(template_side, pixels)
}
