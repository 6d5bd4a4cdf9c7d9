//! Parallel mask-head consistency: uncertain-pixel selection, symmetric-KL
//! alignment between heads and across decoder stages, and total loss
//! assembly. The auxiliary head exists only during training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinaryMask, ProbabilityMap};

#[derive(Debug, Error)]
pub enum PmhmError {
    #[error("layer consistency needs at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("probability map dimension mismatch")]
    DimensionMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmhmParams {
    /// Margin around 0.5 flagging low-confidence pixels.
    pub tau_m: f64,
    /// Spatial-gradient-norm threshold flagging boundary pixels.
    pub tau_e: f64,
    pub lambda_head: f64,
    pub lambda_layer: f64,
    /// Probability clamp inside the KL terms.
    pub eps: f64,
    /// Dropout rate applied to the auxiliary head input during training.
    pub dropout: f64,
    /// Initial auxiliary freeze probability; decays linearly to 0.
    pub freeze0: f64,
    /// Adds a dice term to the hard loss on confident pixels.
    pub use_dice: bool,
}

impl Default for PmhmParams {
    fn default() -> Self {
        PmhmParams {
            tau_m: 0.20,
            tau_e: 0.85,
            lambda_head: 0.1,
            lambda_layer: 0.1,
            eps: 1e-7,
            dropout: 0.1,
            freeze0: 0.5,
            use_dice: false,
        }
    }
}

/// All probability readouts produced by one forward pass: per-stage maps
/// (the last stage is the main head) plus the auxiliary readout.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub stages: Vec<ProbabilityMap>,
    pub aux: ProbabilityMap,
}

impl HeadOutputs {
    /// The main head: the final-stage readout.
    pub fn main(&self) -> &ProbabilityMap {
        self.stages.last().expect("at least one stage")
    }
}

/// Uncertain pixels: within `tau_m` of the decision boundary or with a
/// forward-difference gradient norm above `tau_e` (the last row/column fall
/// back to backward differences; singleton extents have zero gradient).
pub fn uncertainty_mask(p_main: &ProbabilityMap, params: &PmhmParams) -> BinaryMask {
    let (w, h) = (p_main.width(), p_main.height());
    let mut bits = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = p_main.get(x, y);
            let near_boundary = (p - 0.5).abs() < params.tau_m;
            let gx = if w == 1 {
                0.0
            } else if x + 1 < w {
                p_main.get(x + 1, y) - p
            } else {
                p - p_main.get(x - 1, y)
            };
            let gy = if h == 1 {
                0.0
            } else if y + 1 < h {
                p_main.get(x, y + 1) - p
            } else {
                p - p_main.get(x, y - 1)
            };
            let high_gradient = (gx * gx + gy * gy).sqrt() > params.tau_e;
            bits[y * w + x] = u8::from(near_boundary || high_gradient);
        }
    }
    BinaryMask::new(w, h, bits)
}

fn clamp(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Symmetric Bernoulli KL divergence `KL(p||q) + KL(q||p)` after clamping
/// both arguments to `[eps, 1-eps]`.
pub fn bernoulli_sym_kl(p: f64, q: f64, eps: f64) -> f64 {
    let (p, q) = (clamp(p, eps), clamp(q, eps));
    let kl = |a: f64, b: f64| a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
    kl(p, q) + kl(q, p)
}

/// Partial derivatives of [`bernoulli_sym_kl`] with respect to `p` and `q`
/// at interior (unclamped) points.
pub fn bernoulli_sym_kl_grads(p: f64, q: f64, eps: f64) -> (f64, f64) {
    let (p, q) = (clamp(p, eps), clamp(q, eps));
    let dp = (p / q).ln() - ((1.0 - p) / (1.0 - q)).ln() - q / p + (1.0 - q) / (1.0 - p);
    let dq = (q / p).ln() - ((1.0 - q) / (1.0 - p)).ln() - p / q + (1.0 - p) / (1.0 - q);
    (dp, dq)
}

/// Unnormalized per-frame sums: the symmetric KL totalled over uncertain
/// pixels, with the gradients of that sum. Across frames the caller divides
/// by the total uncertain count.
pub struct ConsistencySums {
    pub sum: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub count: usize,
}

pub fn head_consistency_sums(
    a: &ProbabilityMap,
    b: &ProbabilityMap,
    uncertain: &BinaryMask,
    params: &PmhmParams,
) -> Result<ConsistencySums, PmhmError> {
    if a.width() != b.width()
        || a.height() != b.height()
        || a.width() != uncertain.width()
        || a.height() != uncertain.height()
    {
        return Err(PmhmError::DimensionMismatch);
    }
    let n = a.probs().len();
    let mut sums = ConsistencySums {
        sum: 0.0,
        grad_a: vec![0.0; n],
        grad_b: vec![0.0; n],
        count: 0,
    };
    for i in 0..n {
        if uncertain.bits()[i] == 0 {
            continue;
        }
        let (pa, pb) = (a.probs()[i], b.probs()[i]);
        sums.sum += bernoulli_sym_kl(pa, pb, params.eps);
        let (da, db) = bernoulli_sym_kl_grads(pa, pb, params.eps);
        sums.grad_a[i] = da;
        sums.grad_b[i] = db;
        sums.count += 1;
    }
    Ok(sums)
}

/// Head consistency over one frame: mean symmetric KL between main and
/// auxiliary predictions on the uncertain pixels; an empty set gives 0 with
/// zero gradients.
pub fn head_consistency_loss(
    main: &ProbabilityMap,
    aux: &ProbabilityMap,
    uncertain: &BinaryMask,
    params: &PmhmParams,
) -> Result<(f64, Vec<f64>, Vec<f64>), PmhmError> {
    let mut sums = head_consistency_sums(main, aux, uncertain, params)?;
    if sums.count == 0 {
        return Ok((0.0, sums.grad_a, sums.grad_b));
    }
    let scale = 1.0 / sums.count as f64;
    for g in sums.grad_a.iter_mut().chain(sums.grad_b.iter_mut()) {
        *g *= scale;
    }
    Ok((sums.sum * scale, sums.grad_a, sums.grad_b))
}

/// Layer consistency over one frame: for each early stage, the symmetric KL
/// against the final stage, averaged over the `L-1` early stages and the
/// uncertain pixels. Returns the per-stage gradients (last = final stage).
pub fn layer_consistency_loss(
    stages: &[ProbabilityMap],
    uncertain: &BinaryMask,
    params: &PmhmParams,
) -> Result<(f64, Vec<Vec<f64>>), PmhmError> {
    let sums = layer_consistency_sums(stages, uncertain, params)?;
    let mut grads = sums.grads;
    if sums.count == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / sums.count as f64;
    for stage in &mut grads {
        for g in stage.iter_mut() {
            *g *= scale;
        }
    }
    Ok((sums.sum * scale, grads))
}

/// Unnormalized layer-consistency sums, mirroring [`head_consistency_sums`].
pub struct LayerSums {
    pub sum: f64,
    /// Gradient of the sum per stage, final stage last.
    pub grads: Vec<Vec<f64>>,
    pub count: usize,
}

pub fn layer_consistency_sums(
    stages: &[ProbabilityMap],
    uncertain: &BinaryMask,
    params: &PmhmParams,
) -> Result<LayerSums, PmhmError> {
    let levels = stages.len();
    if levels < 2 {
        return Err(PmhmError::TooFewStages(levels));
    }
    let (w, h) = (stages[0].width(), stages[0].height());
    for s in stages {
        if s.width() != w || s.height() != h {
            return Err(PmhmError::DimensionMismatch);
        }
    }
    if uncertain.width() != w || uncertain.height() != h {
        return Err(PmhmError::DimensionMismatch);
    }
    let n = w * h;
    let final_idx = levels - 1;
    let weight = 1.0 / (levels - 1) as f64;
    let mut sums = LayerSums {
        sum: 0.0,
        grads: vec![vec![0.0; n]; levels],
        count: 0,
    };
    for i in 0..n {
        if uncertain.bits()[i] == 0 {
            continue;
        }
        let p_final = stages[final_idx].probs()[i];
        for early in stages.iter().take(final_idx).enumerate() {
            let (idx, stage) = early;
            let p_early = stage.probs()[i];
            sums.sum += weight * bernoulli_sym_kl(p_final, p_early, params.eps);
            let (d_final, d_early) = bernoulli_sym_kl_grads(p_final, p_early, params.eps);
            sums.grads[final_idx][i] += weight * d_final;
            sums.grads[idx][i] += weight * d_early;
        }
        sums.count += 1;
    }
    Ok(sums)
}

/// `L_seg = L_hard + lambda_head * L_head + lambda_layer * L_layer`.
pub fn total_seg_loss(
    hard_loss_on_confident: f64,
    l_head: f64,
    l_layer: f64,
    params: &PmhmParams,
) -> f64 {
    hard_loss_on_confident + params.lambda_head * l_head + params.lambda_layer * l_layer
}

/// Auxiliary-head perturbations at an epoch: constant dropout plus a freeze
/// probability decaying linearly from `freeze0` to 0 at the end of training.
/// A frozen step skips the auxiliary parameter update, not its forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxPerturbation {
    pub dropout_rate: f64,
    pub freeze_probability: f64,
}

pub fn aux_perturbation_schedule(
    epoch: u32,
    total_epochs: u32,
    params: &PmhmParams,
) -> AuxPerturbation {
    let ramp = 1.0 - f64::from(epoch) / f64::from(total_epochs.max(1));
    AuxPerturbation {
        dropout_rate: params.dropout,
        freeze_probability: params.freeze0 * ramp.max(0.0),
    }
}
