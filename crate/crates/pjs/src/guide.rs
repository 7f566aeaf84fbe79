//! The narrative guide, embedded from `book/src` so every code snippet in
//! the book compiles and runs under `cargo test --doc`.
//!
//! Render the standalone book with `mdbook build book`; these modules hold
//! the same chapters, one per module, so rustdoc keeps them honest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/motion-model.md")]
pub mod motion_model {}

#[doc = include_str!("../../../book/src/joint-sparse-coding.md")]
pub mod joint_sparse_coding {}

#[doc = include_str!("../../../book/src/appearance-dictionary.md")]
pub mod appearance_dictionary {}

#[doc = include_str!("../../../book/src/occlusion-detection.md")]
pub mod occlusion_detection {}

#[doc = include_str!("../../../book/src/tracking-loop.md")]
pub mod tracking_loop {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
