//! Mask annotation noise: per-object binary separation, square-kernel
//! dilation, and first-hit recombination, plus severity statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{binarize, BinaryMask, LabelMask};

#[derive(Debug, Error)]
pub enum MaskNoiseError {
    #[error("dilation kernel must be odd and >= 1, got {0}")]
    EvenKernel(u32),
    #[error("mask dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("duplicate object id {0} in combine order")]
    DuplicateId(u16),
    #[error("positive id set is empty")]
    NoPositives,
    #[error("object id must be >= 1")]
    ZeroId,
    #[error("datasets misaligned: {0}")]
    Misaligned(String),
}

/// Square structuring element of odd side `k`; `k = 1` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilationKernel(u32);

impl DilationKernel {
    pub fn new(k: u32) -> Result<Self, MaskNoiseError> {
        if k == 0 || k % 2 == 0 {
            return Err(MaskNoiseError::EvenKernel(k));
        }
        Ok(DilationKernel(k))
    }

    pub fn side(self) -> u32 {
        self.0
    }

    pub fn radius(self) -> usize {
        (self.0 as usize - 1) / 2
    }
}

/// Morphological dilation with a k×k square kernel and border clipping:
/// `out[x,y] = max` of the input over the window, out-of-range reads 0.
///
/// Implemented as a separable two-pass window-count filter; the contract is
/// the naive per-pixel maximum.
pub fn dilate(mask: &BinaryMask, kernel: DilationKernel) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r = kernel.radius();
    if r == 0 {
        return mask.clone();
    }

    // Horizontal pass via row prefix sums.
    let mut horiz = vec![0u8; w * h];
    let mut prefix = vec![0u32; w + 1];
    for y in 0..h {
        let row = &mask.bits()[y * w..(y + 1) * w];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + u32::from(row[x]);
        }
        let out_row = &mut horiz[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            out_row[x] = u8::from(prefix[hi] > prefix[lo]);
        }
    }

    // Vertical pass via column prefix sums.
    let mut out = vec![0u8; w * h];
    let mut col_prefix = vec![0u32; h + 1];
    for x in 0..w {
        for y in 0..h {
            col_prefix[y + 1] = col_prefix[y] + u32::from(horiz[y * w + x]);
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            out[y * w + x] = u8::from(col_prefix[hi] > col_prefix[lo]);
        }
    }
    BinaryMask::new(w, h, out)
}

/// Merges dilated per-object masks: each pixel takes the id of the first
/// covering mask in list order; uncovered pixels stay 0.
pub fn combine_first_hit(
    dilated: &[(u16, BinaryMask)],
    width: usize,
    height: usize,
) -> Result<LabelMask, MaskNoiseError> {
    let mut seen = std::collections::BTreeSet::new();
    for (id, mask) in dilated {
        if *id == 0 {
            return Err(MaskNoiseError::ZeroId);
        }
        if !seen.insert(*id) {
            return Err(MaskNoiseError::DuplicateId(*id));
        }
        if mask.width() != width || mask.height() != height {
            return Err(MaskNoiseError::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: mask.width(),
                got_h: mask.height(),
            });
        }
    }
    let mut out = LabelMask::zeros(width, height);
    for (id, mask) in dilated {
        for (i, &bit) in mask.bits().iter().enumerate() {
            if bit != 0 && out.labels()[i] == 0 {
                out.set(i % width, i / width, *id);
            }
        }
    }
    Ok(out)
}

/// Full separate-dilate-combine pipeline over the positive ids, in the given
/// order. The output carries only positive ids; everything else is 0.
pub fn corrupt_mask(
    annotation: &LabelMask,
    positive_ids: &[u16],
    kernel: DilationKernel,
) -> Result<LabelMask, MaskNoiseError> {
    if positive_ids.is_empty() {
        return Err(MaskNoiseError::NoPositives);
    }
    let dilated: Vec<(u16, BinaryMask)> = positive_ids
        .iter()
        .map(|&id| {
            if id == 0 {
                return Err(MaskNoiseError::ZeroId);
            }
            Ok((id, dilate(&binarize(annotation, id), kernel)))
        })
        .collect::<Result<_, _>>()?;
    combine_first_hit(&dilated, annotation.width(), annotation.height())
}

/// Copies pixels of non-positive objects into `noisy` wherever it is still
/// background. Used by the opt-in keep-negatives corruption variant.
pub fn keep_negative_pixels(noisy: &mut LabelMask, clean: &LabelMask, positive_ids: &[u16]) {
    let w = noisy.width();
    for i in 0..clean.labels().len() {
        let v = clean.labels()[i];
        if v != 0 && !positive_ids.contains(&v) && noisy.labels()[i] == 0 {
            noisy.set(i % w, i / w, v);
        }
    }
}

/// One (clip, object, frame) row of the severity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSeverity {
    pub clip_id: String,
    pub object_id: u32,
    pub frame_id: String,
    pub iou: f64,
}

/// Annotation-quality summary between a noisy corpus and its clean source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityStats {
    pub kernel: u32,
    pub miou: f64,
    pub ciou: f64,
    pub per_object: Vec<ObjectSeverity>,
}

/// Compares aligned (clip, object, frame) positive masks: `miou` is the mean
/// per-sample IoU, `ciou` the ratio of summed intersections to summed unions.
pub fn severity_stats(
    pairs: &[(String, u32, String, BinaryMask, BinaryMask)],
    kernel: u32,
) -> Result<SeverityStats, MaskNoiseError> {
    if pairs.is_empty() {
        return Err(MaskNoiseError::Misaligned(
            "no aligned positive samples".into(),
        ));
    }
    let mut per_object = Vec::with_capacity(pairs.len());
    let mut inter_sum = 0.0;
    let mut union_sum = 0.0;
    for (clip_id, object_id, frame_id, noisy, clean) in pairs {
        if noisy.width() != clean.width() || noisy.height() != clean.height() {
            return Err(MaskNoiseError::Misaligned(format!(
                "{clip_id}/{object_id}/{frame_id}: dimension mismatch"
            )));
        }
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in noisy.bits().iter().zip(clean.bits()) {
            inter += usize::from(a == 1 && b == 1);
            union += usize::from(a == 1 || b == 1);
        }
        inter_sum += inter as f64;
        union_sum += union as f64;
        per_object.push(ObjectSeverity {
            clip_id: clip_id.clone(),
            object_id: *object_id,
            frame_id: frame_id.clone(),
            iou: if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            },
        });
    }
    let miou = per_object.iter().map(|o| o.iou).sum::<f64>() / per_object.len() as f64;
    let ciou = if union_sum == 0.0 {
        1.0
    } else {
        inter_sum / union_sum
    };
    Ok(SeverityStats {
        kernel,
        miou,
        ciou,
        per_object,
    })
}
