//! Grounding narration into viewports of 360° panoramic video.
//!
//! The crate trains a small vision-language model that, given an
//! equirectangular frame and a subtitle, selects the perspective viewport
//! (out of a fixed 60-pose candidate grid) the text describes. Training is
//! weakly supervised through subtitle reconstruction; no viewport labels are
//! used. Besides the model itself the crate ships the spherical geometry,
//! a synthetic dataset generator, pixel-level recall/precision evaluation
//! and throughput benchmarks.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod glimpse;
pub mod grounding;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
