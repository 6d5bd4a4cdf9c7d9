//! Core library for studying text-conditioned segmentation under label noise.
//!
//! The crate provides the shared data model and deterministic RNG ([`data`]),
//! the two noise generators ([`text_noise`], [`mask_noise`]), the partitioned
//! evaluation suite ([`metrics`]), a registry of robust per-pixel losses
//! ([`losses`]), and the parallel-mask-head consistency losses ([`pmhm`]).

pub mod data;
pub mod losses;
pub mod mask_noise;
pub mod metrics;
pub mod pmhm;
pub mod text_noise;
