//! Pixel-wise photometric distortion for dual-view consistency training.
//! Spatial transforms are deliberately absent so per-pixel state stays
//! aligned across views.

use noisyseg_core::data::DeterministicRng;

use crate::model::{FrameTensor, PIXEL_FEATURES};

/// Jitters the color channels of a frame tensor: one brightness shift in
/// [-0.15, 0.15], one contrast scale in [0.75, 1.25], then independent
/// per-channel noise in [-0.05, 0.05]; coordinates are untouched.
pub fn photometric_jitter(frame: &FrameTensor, rng: &mut DeterministicRng) -> FrameTensor {
    let brightness = rng.next_uniform01() * 0.30 - 0.15;
    let contrast = 0.75 + rng.next_uniform01() * 0.50;
    let mut out = frame.clone();
    for px in 0..frame.pixels() {
        let at = px * PIXEL_FEATURES;
        for c in 0..3 {
            let noise = rng.next_uniform01() * 0.10 - 0.05;
            let v = (out.feats[at + c] - 0.5) * contrast + 0.5 + brightness + noise;
            out.feats[at + c] = v.clamp(0.0, 1.0);
        }
    }
    out
}
