//! Robust per-pixel losses with analytic value and derivative.
//!
//! Stateless losses implement [`PixelLoss`] and are built by name through
//! [`build_pixel_loss`]; the persistent-state learners live in [`stateful`]
//! and the co-teaching selection schedule in [`coteach`].
//!
//! Every loss takes a foreground probability `p` (clamped to
//! `[1e-7, 1-1e-7]` before logs and powers) and a binary label `y`, and
//! returns the loss value together with `d(value)/dp`.

pub mod coteach;
pub mod state_io;
pub mod stateful;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coteach::{keep_rate, select_small_loss, CoTeachSchedule};
pub use stateful::{
    elr_step, elr_value_at, npn_step, ElrParams, ElrSign, NpnEval, NpnParams, NpnPixelState,
};

/// Probability clamp applied before every log/power.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("unknown loss {0:?}")]
    UnknownLoss(String),
    #[error("invalid parameters for {name}: {source}")]
    BadParams {
        name: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("selection rate {0} outside (0, 1]")]
    BadRate(f64),
    #[error("empty batch")]
    EmptyBatch,
}

/// Loss value and its derivative with respect to the probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub d_dp: f64,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Standard cross entropy `-[y log p + (1-y) log(1-p)]`.
pub fn ce(p: f64, y: f64) -> LossGrad {
    let p = clamp_prob(p);
    LossGrad {
        value: -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()),
        d_dp: -y / p + (1.0 - y) / (1.0 - p),
    }
}

/// Reverse cross entropy `-[p log y + (1-p) log(1-y)]` with `log 0 := a`.
pub fn rce(p: f64, y: f64, a: f64) -> LossGrad {
    let p = clamp_prob(p);
    let log_label = |v: f64| if v <= 0.0 { a } else { 0.0 };
    let (ly, l1y) = (log_label(y), log_label(1.0 - y));
    LossGrad {
        value: -(p * ly + (1.0 - p) * l1y),
        d_dp: -(ly - l1y),
    }
}

/// Correctness score `r = y p + (1-y)(1-p)`: the probability assigned to
/// the annotated label.
pub fn correctness_score(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    (y * p + (1.0 - y) * (1.0 - p)).max(PROB_CLAMP)
}

/// Generalized cross entropy `(1 - r^q)/q`.
pub fn gce(p: f64, y: f64, q: f64) -> LossGrad {
    let r = correctness_score(p, y);
    LossGrad {
        value: (1.0 - r.powf(q)) / q,
        d_dp: -(2.0 * y - 1.0) * r.powf(q - 1.0),
    }
}

/// Symmetric cross entropy `alpha * CE + beta * RCE`.
pub fn sce(p: f64, y: f64, params: &SceParams) -> LossGrad {
    let c = ce(p, y);
    let r = rce(p, y, params.a);
    LossGrad {
        value: params.alpha * c.value + params.beta * r.value,
        d_dp: params.alpha * c.d_dp + params.beta * r.d_dp,
    }
}

/// Active-passive loss: `w_active * (1-r^q)/q + w_passive * |p - y|`, with
/// the subgradient of the passive term defined as 0 at `p = y`.
pub fn apl(p: f64, y: f64, params: &AplParams) -> LossGrad {
    let active = gce(p, y, params.q);
    let diff = p - y;
    let passive = diff.abs();
    let d_passive = if diff == 0.0 { 0.0 } else { diff.signum() };
    LossGrad {
        value: params.w_active * active.value + params.w_passive * passive,
        d_dp: params.w_active * active.d_dp + params.w_passive * d_passive,
    }
}

/// Focal binary cross entropy with weights `w+ = alpha (1-p)^gamma` and
/// `w- = (1-alpha) p^gamma`; the derivative includes the weight's
/// p-dependence.
pub fn focal(p: f64, y: f64, params: &FocalParams) -> LossGrad {
    let p = clamp_prob(p);
    let (alpha, gamma) = (params.alpha, params.gamma);
    let pos = -alpha * (1.0 - p).powf(gamma) * p.ln();
    let d_pos = alpha * gamma * (1.0 - p).powf(gamma - 1.0) * p.ln()
        - alpha * (1.0 - p).powf(gamma) / p;
    let neg = -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln();
    let d_neg = -(1.0 - alpha) * gamma * p.powf(gamma - 1.0) * (1.0 - p).ln()
        + (1.0 - alpha) * p.powf(gamma) / (1.0 - p);
    LossGrad {
        value: y * pos + (1.0 - y) * neg,
        d_dp: y * d_pos + (1.0 - y) * d_neg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GceParams {
    pub q: f64,
}

impl Default for GceParams {
    fn default() -> Self {
        GceParams { q: 0.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceParams {
    pub alpha: f64,
    pub beta: f64,
    /// Log-zero substitute used by the reverse term.
    pub a: f64,
}

impl Default for SceParams {
    fn default() -> Self {
        SceParams {
            alpha: 0.1,
            beta: 1.0,
            a: -4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AplParams {
    pub q: f64,
    pub w_active: f64,
    pub w_passive: f64,
}

impl Default for AplParams {
    fn default() -> Self {
        AplParams {
            q: 0.7,
            w_active: 1.0,
            w_passive: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha: 0.5,
            gamma: 2.0,
        }
    }
}

/// A stateless per-pixel loss selectable by name at runtime.
pub trait PixelLoss: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, p: f64, y: f64) -> LossGrad;
}

struct CrossEntropyLoss;

impl PixelLoss for CrossEntropyLoss {
    fn name(&self) -> &'static str {
        "baseline"
    }
    fn eval(&self, p: f64, y: f64) -> LossGrad {
        ce(p, y)
    }
}

struct FocalLoss(FocalParams);

impl PixelLoss for FocalLoss {
    fn name(&self) -> &'static str {
        "focal"
    }
    fn eval(&self, p: f64, y: f64) -> LossGrad {
        focal(p, y, &self.0)
    }
}

struct GceLoss(GceParams);

impl PixelLoss for GceLoss {
    fn name(&self) -> &'static str {
        "gce"
    }
    fn eval(&self, p: f64, y: f64) -> LossGrad {
        gce(p, y, self.0.q)
    }
}

struct SceLoss(SceParams);

impl PixelLoss for SceLoss {
    fn name(&self) -> &'static str {
        "sce"
    }
    fn eval(&self, p: f64, y: f64) -> LossGrad {
        sce(p, y, &self.0)
    }
}

struct AplLoss(AplParams);

impl PixelLoss for AplLoss {
    fn name(&self) -> &'static str {
        "apl"
    }
    fn eval(&self, p: f64, y: f64) -> LossGrad {
        apl(p, y, &self.0)
    }
}

/// Names accepted by [`build_pixel_loss`].
pub const PIXEL_LOSS_NAMES: &[&str] = &["baseline", "focal", "gce", "sce", "apl"];

fn parse_params<T: Default + for<'de> Deserialize<'de>>(
    name: &str,
    params: &serde_json::Value,
) -> Result<T, LossError> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone()).map_err(|source| LossError::BadParams {
        name: name.to_string(),
        source,
    })
}

/// Builds a stateless pixel loss from its method name and JSON parameters
/// (`null` or `{}` selects the defaults).
pub fn build_pixel_loss(
    name: &str,
    params: &serde_json::Value,
) -> Result<Box<dyn PixelLoss>, LossError> {
    match name {
        "baseline" | "ce" => Ok(Box::new(CrossEntropyLoss)),
        "focal" => Ok(Box::new(FocalLoss(parse_params(name, params)?))),
        "gce" => Ok(Box::new(GceLoss(parse_params(name, params)?))),
        "sce" => Ok(Box::new(SceLoss(parse_params(name, params)?))),
        "apl" => Ok(Box::new(AplLoss(parse_params(name, params)?))),
        other => Err(LossError::UnknownLoss(other.to_string())),
    }
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite differences for gradient tests.

    pub const H: f64 = 1e-6;

    pub fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        (f(x + H) - f(x - H)) / (2.0 * H)
    }

    /// Relative error with an absolute floor for near-zero derivatives.
    pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-8 {
            (analytic - numeric).abs()
        } else {
            (analytic - numeric).abs() / scale
        }
    }

    /// The p-grid used across the gradient suite: 0.01 step 0.05, plus 0.99.
    pub fn grid() -> Vec<f64> {
        let mut g: Vec<f64> = (0..20).map(|k| 0.01 + 0.05 * k as f64).collect();
        g.push(0.99);
        g
    }
}
