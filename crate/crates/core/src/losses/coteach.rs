//! Co-teaching schedule: the conservative keep rate and small-loss
//! selection exchanged between peer networks.

use serde::{Deserialize, Serialize};

use super::LossError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoTeachSchedule {
    /// Assumed noise rate driving the keep-rate decay.
    pub rho: f64,
    /// Epochs until the keep rate saturates at `1 - rho`.
    pub t_k: f64,
    /// Loss-rank ceiling applied from epoch 0.
    pub cap: f64,
}

impl Default for CoTeachSchedule {
    fn default() -> Self {
        CoTeachSchedule {
            rho: 0.2,
            t_k: 6.0,
            cap: 0.95,
        }
    }
}

/// Keep rate at epoch `n`: `min(cap, 1 - rho * min(n / T_k, 1))`.
pub fn keep_rate(n: u32, schedule: &CoTeachSchedule) -> f64 {
    let ramp = (f64::from(n) / schedule.t_k).min(1.0);
    schedule.cap.min(1.0 - schedule.rho * ramp)
}

/// Indices of the `max(1, floor(rate * B))` smallest losses, ties broken by
/// lower index; returned ascending.
pub fn select_small_loss(sample_losses: &[f64], rate: f64) -> Result<Vec<usize>, LossError> {
    if sample_losses.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(LossError::BadRate(rate));
    }
    let batch = sample_losses.len();
    let keep = ((rate * batch as f64).floor() as usize).max(1);
    let mut order: Vec<usize> = (0..batch).collect();
    order.sort_by(|&a, &b| {
        sample_losses[a]
            .total_cmp(&sample_losses[b])
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    Ok(kept)
}
