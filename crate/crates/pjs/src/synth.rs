//! Synthetic test sequences.
//!
//! Generates small deterministic sequences, a textured square target over
//! a textured background, used by the end-to-end tests and the `synth` CLI
//! command. Three kinds:
//!
//! * `static`: the target sits still.
//! * `translate`: the target moves `speed` pixels per frame along x.
//! * `occlude`: like `translate`, but a uniform block covers the target's
//!   lower half (plus a safety margin) during the occlusion window.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::motion::GrayFrame;
use crate::rect::Rect;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Static,
    Translate,
    Occlude,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SynthKind::Static),
            "translate" => Ok(SynthKind::Translate),
            "occlude" => Ok(SynthKind::Occlude),
            other => Err(Error::InvalidConfig(format!(
                "unknown synth kind '{other}', expected static, translate, or occlude"
            ))),
        }
    }
}

/// Parameters of a synthetic sequence.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Side of the square target in pixels.
    pub target_size: usize,
    /// Horizontal speed in pixels per frame (translate / occlude kinds).
    pub speed: f64,
    pub start_x: f64,
    pub start_y: f64,
    /// 0-based frame range `[occlusion_start, occlusion_end]` (inclusive)
    /// during which the occluder is drawn.
    pub occlusion_start: usize,
    pub occlusion_end: usize,
    pub texture_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Translate,
            frames: 20,
            width: 160,
            height: 120,
            target_size: 40,
            speed: 2.0,
            start_x: 20.0,
            start_y: 40.0,
            occlusion_start: 10,
            occlusion_end: 12,
            texture_seed: 7,
        }
    }
}

/// Gray level of the uniform occluding block. Mid-gray: plainly different
/// from the target texture, but low-energy so a half-occluded aligned
/// candidate is not swamped by the occluder's reconstruction error.
pub const OCCLUDER_VALUE: f64 = 0.5;

struct Texture {
    size: usize,
    values: Vec<f64>,
}

/// Smooth high-contrast target texture: three seeded sinusoidal gratings.
/// Smoothness keeps the likelihood surface well behaved under sub-pixel
/// candidate shifts.
fn make_texture(size: usize, seed: u64) -> Texture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gratings = Vec::new();
    for amplitude in [0.55, 0.3, 0.15] {
        let fx: f64 = 1.5 + 3.0 * rng.random::<f64>();
        let fy: f64 = 1.5 + 3.0 * rng.random::<f64>();
        let phase: f64 = std::f64::consts::TAU * rng.random::<f64>();
        gratings.push((amplitude, fx, fy, phase));
    }
    let mut values = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut v = 0.0;
            for &(amplitude, fx, fy, phase) in &gratings {
                let arg =
                    std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / size as f64 + phase;
                v += amplitude * arg.sin();
            }
            values.push((0.5 + 0.42 * v).clamp(0.02, 0.98));
        }
    }
    Texture { size, values }
}

/// Deterministic per-pixel noise in `[-1, 1]` (splitmix-style hash).
fn hash_noise(x: usize, y: usize) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 31;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 27;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Static high-contrast textured background (binary blobs plus pixel
/// noise). Texture matters: against a flat, easily reconstructed
/// background, a half-occluded target scores worse than plain background
/// and trackers would legitimately flee the occluder.
fn background(x: usize, y: usize) -> f64 {
    let xf = x as f64;
    let yf = y as f64;
    let field = (0.81 * xf + 0.29 * yf).sin()
        + 0.8 * (0.23 * yf - 0.52 * xf).sin()
        + 0.35 * hash_noise(x, y);
    let base = if field > 0.0 { 0.92 } else { 0.08 };
    (base + 0.06 * hash_noise(x.wrapping_add(7919), y.wrapping_add(104_729))).clamp(0.02, 0.98)
}

fn target_position(spec: &SynthSpec, frame: usize) -> (i64, i64) {
    let x = match spec.kind {
        SynthKind::Static => spec.start_x,
        SynthKind::Translate | SynthKind::Occlude => spec.start_x + spec.speed * frame as f64,
    };
    (x.round() as i64, spec.start_y.round() as i64)
}

/// Generates the frames and per-frame ground-truth boxes.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<GrayFrame>, Vec<Rect>)> {
    if spec.frames == 0 {
        return Err(Error::InvalidConfig("need at least one frame".into()));
    }
    if spec.target_size == 0 || spec.target_size > spec.width || spec.target_size > spec.height {
        return Err(Error::InvalidConfig(format!(
            "target size {} does not fit a {}x{} frame",
            spec.target_size, spec.width, spec.height
        )));
    }
    let last = target_position(spec, spec.frames - 1);
    let size = spec.target_size as i64;
    for (x, y) in [target_position(spec, 0), last] {
        if x < 0 || y < 0 || x + size > spec.width as i64 || y + size > spec.height as i64 {
            return Err(Error::InvalidConfig(format!(
                "target leaves the frame at position ({x}, {y})"
            )));
        }
    }

    let texture = make_texture(spec.target_size, spec.texture_seed);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut boxes = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (tx, ty) = target_position(spec, t);
        let mut pixels = Vec::with_capacity(spec.width * spec.height);
        for y in 0..spec.height {
            for x in 0..spec.width {
                pixels.push(background(x, y));
            }
        }
        for py in 0..texture.size {
            for px in 0..texture.size {
                let fx = tx as usize + px;
                let fy = ty as usize + py;
                pixels[fy * spec.width + fx] = texture.values[py * texture.size + px];
            }
        }
        if spec.kind == SynthKind::Occlude && t >= spec.occlusion_start && t <= spec.occlusion_end {
            // Uniform block over the target's lower half, extended by a
            // margin so the lower patch rows stay fully covered even when
            // the tracked box is a pixel or two off.
            let x0 = (tx - 8).max(0) as usize;
            let x1 = ((tx + size + 8) as usize).min(spec.width);
            let y0 = (ty + size / 2 - 2).max(0) as usize;
            for y in y0..spec.height {
                for x in x0..x1 {
                    pixels[y * spec.width + x] = OCCLUDER_VALUE;
                }
            }
        }
        frames.push(GrayFrame::new(spec.width, spec.height, pixels)?);
        boxes.push(Rect::new(
            tx as f64,
            ty as f64,
            spec.target_size as f64,
            spec.target_size as f64,
        ));
    }
    Ok((frames, boxes))
}

/// Writes the sequence in the on-disk layout the loader expects:
/// `<dir>/img/0001.png ...` plus `<dir>/groundtruth_rect.txt`.
pub fn write_sequence(spec: &SynthSpec, dir: &Path) -> Result<()> {
    let (frames, boxes) = generate(spec)?;
    let img_dir = dir.join("img");
    std::fs::create_dir_all(&img_dir)?;
    for (i, frame) in frames.iter().enumerate() {
        let mut buffer = image::GrayImage::new(frame.width() as u32, frame.height() as u32);
        for (j, pixel) in buffer.pixels_mut().enumerate() {
            pixel.0 = [(frame.pixels()[j] * 255.0).round() as u8];
        }
        let path = img_dir.join(format!("{:04}.png", i + 1));
        buffer
            .save(&path)
            .map_err(|e| Error::Load(format!("writing {}: {e}", path.display())))?;
    }
    let gt: String = boxes
        .iter()
        .map(|b| format!("{},{},{},{}\n", b.x, b.y, b.w, b.h))
        .collect();
    std::fs::write(dir.join("groundtruth_rect.txt"), gt)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_frames_are_identical() {
        let spec = SynthSpec {
            kind: SynthKind::Static,
            frames: 4,
            ..SynthSpec::default()
        };
        let (frames, boxes) = generate(&spec).unwrap();
        assert_eq!(frames.len(), 4);
        for frame in &frames[1..] {
            assert_eq!(frame.pixels(), frames[0].pixels());
        }
        assert!(boxes.iter().all(|b| *b == boxes[0]));
    }

    #[test]
    fn translate_moves_gt_by_speed() {
        let spec = SynthSpec::default();
        let (_, boxes) = generate(&spec).unwrap();
        for (t, b) in boxes.iter().enumerate() {
            assert_eq!(b.x, 20.0 + 2.0 * t as f64);
            assert_eq!(b.y, 40.0);
            assert_eq!((b.w, b.h), (40.0, 40.0));
        }
    }

    #[test]
    fn occluder_covers_lower_half_during_window() {
        let spec = SynthSpec {
            kind: SynthKind::Occlude,
            ..SynthSpec::default()
        };
        let (frames, boxes) = generate(&spec).unwrap();
        for t in [10, 11, 12] {
            let b = &boxes[t];
            // Sample the center of the lower half.
            let x = (b.x + b.w / 2.0) as usize;
            let y = (b.y + 3.0 * b.h / 4.0) as usize;
            assert_eq!(frames[t].get(x, y), OCCLUDER_VALUE, "frame {t}");
            // Upper half stays textured (not the occluder constant).
            let y_up = (b.y + b.h / 4.0) as usize;
            assert_ne!(frames[t].get(x, y_up), OCCLUDER_VALUE);
        }
        let b = &boxes[9];
        let x = (b.x + b.w / 2.0) as usize;
        let y = (b.y + 3.0 * b.h / 4.0) as usize;
        assert_ne!(frames[9].get(x, y), OCCLUDER_VALUE);
        assert_ne!(frames[13].get(x, y), OCCLUDER_VALUE);
    }

    #[test]
    fn target_leaving_frame_is_rejected() {
        let spec = SynthSpec {
            speed: 10.0,
            ..SynthSpec::default()
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn write_sequence_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            frames: 3,
            ..SynthSpec::default()
        };
        write_sequence(&spec, dir.path()).unwrap();
        assert!(dir.path().join("img/0001.png").exists());
        assert!(dir.path().join("img/0003.png").exists());
        let gt = std::fs::read_to_string(dir.path().join("groundtruth_rect.txt")).unwrap();
        assert_eq!(gt.lines().count(), 3);
        assert_eq!(gt.lines().next().unwrap(), "20,40,40,40");
    }
}
