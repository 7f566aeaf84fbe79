//! Patchwise joint-sparse visual object tracking.
//!
//! `pjs` tracks a single target through an image sequence by modeling its
//! appearance as a dictionary of patch templates and scoring particle-filter
//! candidates via patchwise sparse reconstruction errors. Each candidate
//! patch is coded jointly with the corresponding patches of recent targets
//! (a multiple-measurement-vector problem), enforcing a shared sparsity
//! pattern across consecutive frames. A per-patch occlusion posterior,
//! driven by an adaptive two-state Markov chain, keeps occluded patches out
//! of the dictionary update.
//!
//! The crate is organized around the tracker's three classic components:
//!
//! * [`motion`]: SIR particle filter over affine states, plus candidate
//!   extraction (warp, crop, partition).
//! * [`appearance`] + [`sparse`]: the patch-template dictionary and the
//!   joint sparse solvers (greedy SOMP and iteratively reweighted M-FOCUSS)
//!   that code candidates against it.
//! * [`occlusion`] + [`tracker`]: the observation model, per-patch
//!   occlusion detection, and the per-frame tracking loop.
//!
//! [`eval`] loads OTB-style sequences and computes the usual accuracy
//! metrics (center location error, VOC overlap, success plots); [`synth`]
//! generates small synthetic sequences used throughout the test suite. The
//! `pjs` binary in the companion CLI crate wires these together.
//!
//! A narrative guide with runnable examples lives in `book/`; the same
//! chapters are embedded under [`guide`] so the snippets run as doc-tests.

pub mod appearance;
pub mod config;
pub mod error;
pub mod eval;
pub mod guide;
pub mod motion;
pub mod occlusion;
pub mod rect;
pub mod sparse;
pub mod synth;
pub mod tracker;

pub use config::{SolverKind, TrackerConfig};
pub use error::{Error, Result};
pub use rect::Rect;
