//! Desk-scale harness around the core library: synthetic clip generation,
//! a small text-conditioned pixel scorer trained by exact backpropagation,
//! the robust-training strategies, and experiment plumbing (matrix runner,
//! reports, plots).

pub mod augment;
pub mod corrupt;
pub mod evalrun;
pub mod matrix;
pub mod model;
pub mod plot;
pub mod synth;
pub mod train;
