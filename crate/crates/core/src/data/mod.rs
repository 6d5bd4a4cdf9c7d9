//! Data model shared by every other module: grids, prompt records, the
//! on-disk manifest format, and the deterministic random-number contract.

mod grid;
mod manifest;
mod pnm;
mod rng;

pub use grid::{binarize, BinaryMask, LabelMask, ProbabilityMap};
pub use manifest::{
    load_manifest, save_manifest, Clip, ClassMapping, Dataset, FrameRef, ManifestError,
    NoiseSpec, PromptRecord, MANIFEST_VERSION,
};
pub use pnm::{read_image, read_mask, write_image, write_mask, PnmError, RgbImage};
pub use rng::{fnv1a64, rng_substream, DeterministicRng};
