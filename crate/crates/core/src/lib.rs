//! Multimodal screening pipeline.
//!
//! Single-modal feature extraction (MFCC, time-series statistics), DTW-based
//! cross-modal features (relation graph, distance-weighted attention), a
//! stochastic modality-dropout fusion classifier with hand-derived gradients,
//! stratified cross-validated evaluation, and comorbidity / ablation /
//! contribution analyses. Works on ingested precomputed features or on a
//! built-in synthetic dataset generator with planted per-modality signal.

pub mod analysis;
pub mod cli;
pub mod crossmodal;
pub mod dataset;
pub mod dtw;
pub mod embrace;
pub mod error;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
