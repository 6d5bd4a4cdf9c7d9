//! Dataset-level corruption: applies the text and mask noise generators to
//! an on-disk corpus, producing a self-contained corrupted copy plus the
//! diagnostic reports.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use noisyseg_core::data::{
    binarize, load_manifest, read_mask, save_manifest, write_mask, ClassMapping, Dataset,
    ManifestError, NoiseSpec, PnmError,
};
use noisyseg_core::mask_noise::{
    corrupt_mask, keep_negative_pixels, severity_stats, DilationKernel, MaskNoiseError,
    SeverityStats,
};
use noisyseg_core::text_noise::{
    category_histogram, corrupt_dataset_text, shift_report, ShiftRow, TextNoiseError,
    TextNoiseProvenance,
};

#[derive(Debug, Error)]
pub enum CorruptError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error(transparent)]
    Text(#[from] TextNoiseError),
    #[error(transparent)]
    Mask(#[from] MaskNoiseError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Copies every file referenced by the manifest (plus `classes.json` when
/// present) so corrupted corpora are self-contained.
fn copy_dataset_files(dataset: &Dataset, out: &Path) -> Result<(), CorruptError> {
    for clip in &dataset.clips {
        for frame in &clip.frames {
            for rel in [&frame.image, &frame.mask] {
                let dst = out.join(rel);
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::copy(dataset.resolve(rel), dst)?;
            }
        }
    }
    let classes = dataset.root.join("classes.json");
    if classes.is_file() {
        fs::copy(&classes, out.join("classes.json"))?;
    }
    Ok(())
}

fn write_noise_spec(out: &Path, spec: &NoiseSpec) -> Result<(), CorruptError> {
    let mut bytes = serde_json::to_vec_pretty(spec)?;
    bytes.push(b'\n');
    fs::write(out.join("noise.json"), bytes)?;
    Ok(())
}

/// Distribution-shift report attached to a text corruption run.
#[derive(Debug, Serialize)]
pub struct TextReport {
    pub rate: f64,
    pub seed: u64,
    pub prompts: usize,
    pub flipped: usize,
    pub flipped_fraction: f64,
    pub shift: Vec<ShiftRow>,
}

/// Applies prompt-category corruption to the corpus at `input`, writing the
/// corrupted copy under `out`. Masks and images are byte-copied untouched.
pub fn corrupt_text_dataset(
    input: &Path,
    out: &Path,
    rate: f64,
    mapping: &ClassMapping,
    seed: u64,
    active_only: bool,
) -> Result<(Vec<TextNoiseProvenance>, TextReport), CorruptError> {
    let clean = load_manifest(input)?;
    fs::create_dir_all(out)?;
    copy_dataset_files(&clean, out)?;

    let clean_hist = category_histogram(&clean)?;
    let mut noisy = Dataset {
        root: out.to_path_buf(),
        clips: clean.clips,
    };
    let provenance = corrupt_dataset_text(&mut noisy, rate, mapping, seed, active_only)?;
    save_manifest(&noisy)?;
    write_noise_spec(
        out,
        &NoiseSpec {
            text_rate: rate,
            kernel: existing_kernel(input),
            seed,
        },
    )?;

    let noisy_hist = category_histogram(&noisy)?;
    let flipped = provenance
        .iter()
        .filter(|p| p.branch == noisyseg_core::text_noise::NoiseBranch::Flipped)
        .count();
    let report = TextReport {
        rate,
        seed,
        prompts: provenance.len(),
        flipped,
        flipped_fraction: if provenance.is_empty() {
            0.0
        } else {
            flipped as f64 / provenance.len() as f64
        },
        shift: shift_report(&clean_hist, &noisy_hist, 0.01),
    };
    Ok((provenance, report))
}

/// Kernel already recorded on a corpus (for chained corruption), 0 if none.
fn existing_kernel(root: &Path) -> u32 {
    fs::read(root.join("noise.json"))
        .ok()
        .and_then(|bytes| serde_json::from_slice::<NoiseSpec>(&bytes).ok())
        .map(|spec| spec.kernel)
        .unwrap_or(0)
}

fn existing_text_rate(root: &Path) -> (f64, u64) {
    fs::read(root.join("noise.json"))
        .ok()
        .and_then(|bytes| serde_json::from_slice::<NoiseSpec>(&bytes).ok())
        .map(|spec| (spec.text_rate, spec.seed))
        .unwrap_or((0.0, 0))
}

/// Applies boundary corruption to every mask of the corpus at `input`.
///
/// Positive ids are the active objects in ascending object-id order; the
/// output masks carry only positives unless `keep_negatives` copies the
/// untouched negative pixels into remaining background.
pub fn corrupt_mask_dataset(
    input: &Path,
    out: &Path,
    kernel_side: u32,
    keep_negatives: bool,
) -> Result<SeverityStats, CorruptError> {
    let kernel = DilationKernel::new(kernel_side)?;
    let clean = load_manifest(input)?;
    fs::create_dir_all(out)?;
    copy_dataset_files(&clean, out)?;

    let mut pairs = Vec::new();
    for clip in &clean.clips {
        let mut positive_ids: Vec<u16> = clip
            .objects
            .iter()
            .filter(|o| o.active)
            .map(|o| o.object_id as u16)
            .collect();
        positive_ids.sort_unstable();
        for frame in &clip.frames {
            let annotation = read_mask(clean.resolve(&frame.mask))?;
            let noisy = if positive_ids.is_empty() {
                // Nothing to dilate; the noisy annotation is all background
                // (negatives reappear only under keep_negatives).
                noisyseg_core::data::LabelMask::zeros(annotation.width(), annotation.height())
            } else {
                corrupt_mask(&annotation, &positive_ids, kernel)?
            };
            let mut noisy = noisy;
            if keep_negatives {
                keep_negative_pixels(&mut noisy, &annotation, &positive_ids);
            }
            write_mask(&noisy, out.join(&frame.mask))?;
            for &id in &positive_ids {
                pairs.push((
                    clip.clip_id.clone(),
                    u32::from(id),
                    frame.frame_id.clone(),
                    binarize(&noisy, id),
                    binarize(&annotation, id),
                ));
            }
        }
    }

    let noisy_ds = Dataset {
        root: out.to_path_buf(),
        clips: clean.clips,
    };
    save_manifest(&noisy_ds)?;
    let (text_rate, seed) = existing_text_rate(input);
    write_noise_spec(
        out,
        &NoiseSpec {
            text_rate,
            kernel: kernel_side,
            seed,
        },
    )?;
    severity_stats(&pairs, kernel_side).map_err(CorruptError::from)
}

/// Writes the provenance log as JSON lines, one object per prompt.
pub fn write_provenance_log(
    path: &Path,
    provenance: &[TextNoiseProvenance],
) -> Result<(), CorruptError> {
    let mut out = Vec::new();
    for record in provenance {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_json_report<T: Serialize>(path: &Path, report: &T) -> Result<(), CorruptError> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}
