//! Geometric, topological and spectral analysis of transformer attention.
//!
//! `attngeo` consumes forward-pass dumps (attention tensors, optionally
//! per-head Q/K/V and hidden states) and measures how attention organizes
//! around reference tokens: sink detection, Vietoris–Rips persistence,
//! thresholded-graph Laplacian spectra, KL sink-removal profiles, value-space
//! geometry and random-matrix statistics. The [`classify`] module fuses these
//! into a reference-frame verdict (centralized, distributed, bidirectional).
//!
//! Heavy per-(sample, layer, head) work is data-parallel through rayon when
//! the default `parallel` feature is enabled; without it every map runs
//! sequentially and produces identical results.

pub mod analysis;
pub mod classify;
pub mod dumpio;
pub mod error;
pub mod exec;
pub mod infogeo;
pub mod output;
pub mod report;
pub mod rmt;
pub mod sinks;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod topology;
pub mod valuespace;

pub use analysis::{analyze, AnalysisConfig, AnalysisSummary};
pub use classify::{FrameFeatures, FrameType, FrameVerdict};
pub use dumpio::{read_dump, write_dump, AttentionMatrix, DumpManifest, ModelDump, Sample};
pub use error::{Error, Result};
pub use synth::{generate, FrameKind, SynthSpec};
