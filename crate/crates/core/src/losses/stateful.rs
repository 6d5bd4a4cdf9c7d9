//! Persistent-state learners: the EMA-agreement regularizer and the
//! count-based partial/negative/consistency objective.

use serde::{Deserialize, Serialize};

use super::{clamp_prob, focal, FocalParams, LossGrad};

/// Sign convention for the agreement regularizer.
///
/// The regularizer is implemented as written, `R = -log(1 - d + eps)`,
/// which is minimized when agreement `d` is small; `Original` restores the
/// conventional `R = log(1 - d + eps)` that rewards agreement instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElrSign {
    #[default]
    Paper,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElrParams {
    /// EMA update weight on the current prediction: `s <- (1-beta) s + beta p`.
    pub beta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    /// Uninformative EMA initialization.
    pub s0: f64,
    pub focal: FocalParams,
    pub sign: ElrSign,
}

impl Default for ElrParams {
    fn default() -> Self {
        ElrParams {
            beta: 0.9,
            epsilon: 1e-6,
            lambda: 1.0,
            s0: 0.5,
            focal: FocalParams::default(),
            sign: ElrSign::Paper,
        }
    }
}

/// Loss value at a fixed EMA target `s` (the EMA is a stop-gradient, so this
/// is also the function the derivative refers to).
pub fn elr_value_at(p: f64, y: f64, s: f64, params: &ElrParams) -> LossGrad {
    let base = focal(p, y, &params.focal);
    let agreement = (p * s + (1.0 - p) * (1.0 - s)).min(1.0 - 1e-12);
    let denom = 1.0 - agreement + params.epsilon;
    let (reg, d_reg) = match params.sign {
        ElrSign::Paper => (-denom.ln(), (2.0 * s - 1.0) / denom),
        ElrSign::Original => (denom.ln(), -(2.0 * s - 1.0) / denom),
    };
    LossGrad {
        value: base.value + params.lambda * reg,
        d_dp: base.d_dp + params.lambda * d_reg,
    }
}

/// One training-step update: refresh the per-pixel EMA first, then evaluate
/// the focal + agreement objective at the updated target.
pub fn elr_step(p: f64, y: f64, s: &mut f64, params: &ElrParams) -> LossGrad {
    *s = (1.0 - params.beta) * *s + params.beta * p;
    elr_value_at(p, y, *s, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NpnParams {
    /// Weight of the negative-learning term.
    pub alpha: f64,
    /// Weight of the weak-to-strong consistency term.
    pub beta: f64,
}

impl Default for NpnParams {
    fn default() -> Self {
        NpnParams {
            alpha: 0.1,
            beta: 0.2,
        }
    }
}

/// Per-pixel candidate counts, accumulated once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NpnPixelState {
    pub m1: u32,
    pub m0: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpnEval {
    pub value: f64,
    pub d_weak: f64,
    pub d_strong: f64,
    pub pll: f64,
    pub nl: f64,
    pub cr: f64,
    pub y_star: f64,
    /// Reliability `max(M1, M0) / (M1 + M0)`, always in `[0.5, 1]`.
    pub w: f64,
}

/// Losses at frozen counts and candidate indicators (the gates and the hard
/// consistency target carry no gradient). The label acts only through the
/// count update in [`npn_step`].
pub fn npn_losses(
    p_weak: f64,
    p_strong: f64,
    state: NpnPixelState,
    a1: u32,
    a0: u32,
    params: &NpnParams,
) -> NpnEval {
    assert!(
        state.m1 + state.m0 > 0,
        "counts must be updated before the first loss evaluation"
    );
    let pw = clamp_prob(p_weak);
    let ps = clamp_prob(p_strong);

    let y_star = f64::from(state.m1 >= state.m0);
    let w = f64::from(state.m1.max(state.m0)) / f64::from(state.m1 + state.m0);
    let pll = -w * (y_star * pw.ln() + (1.0 - y_star) * (1.0 - pw).ln());
    let d_pll = -w * (y_star / pw - (1.0 - y_star) / (1.0 - pw));

    let gate1 = f64::from(a1 >= 1);
    let gate0 = f64::from(a0 >= 1);
    let nl = -(1.0 - gate1) * (1.0 - pw).ln() - (1.0 - gate0) * pw.ln();
    let d_nl = (1.0 - gate1) / (1.0 - pw) - (1.0 - gate0) / pw;

    let t = f64::from(p_weak > 0.5);
    let cr = -(t * ps.ln() + (1.0 - t) * (1.0 - ps).ln());
    let d_cr = -t / ps + (1.0 - t) / (1.0 - ps);

    NpnEval {
        value: pll + params.alpha * nl + params.beta * cr,
        d_weak: d_pll + params.alpha * d_nl,
        d_strong: params.beta * d_cr,
        pll,
        nl,
        cr,
        y_star,
        w,
    }
}

/// One per-epoch step: accumulate the candidate indicators
/// `A1 = y + [p_weak > 0.5]`, `A0 = (1-y) + [p_weak <= 0.5]` into the
/// counts, then evaluate the combined objective.
pub fn npn_step(
    p_weak: f64,
    p_strong: f64,
    y: f64,
    state: &mut NpnPixelState,
    params: &NpnParams,
) -> NpnEval {
    let a1 = y as u32 + u32::from(p_weak > 0.5);
    let a0 = (1.0 - y) as u32 + u32::from(p_weak <= 0.5);
    state.m1 += a1;
    state.m0 += a0;
    npn_losses(p_weak, p_strong, *state, a1, a0, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::fd::{central, grid, rel_err};

    #[test]
    fn ema_follows_the_worked_example() {
        let params = ElrParams::default();
        let mut s = 0.5;
        elr_step(1.0, 1.0, &mut s, &params);
        assert!((s - 0.95).abs() < 1e-9, "s1 = {s}");
        elr_step(1.0, 1.0, &mut s, &params);
        assert!((s - 0.995).abs() < 1e-9, "s2 = {s}");
    }

    #[test]
    fn ema_matches_closed_form_over_fifty_steps() {
        // s_n = p + (1-beta)^n (s0 - p) for a constant observation p.
        let params = ElrParams::default();
        for &p in &[0.2, 0.73, 1.0] {
            let mut s = params.s0;
            for n in 1..=50 {
                elr_step(p, 1.0, &mut s, &params);
                let expected = p + (1.0 - params.beta).powi(n) * (params.s0 - p);
                assert!(
                    (s - expected).abs() < 1e-12,
                    "step {n}: s = {s}, closed form {expected}"
                );
            }
        }
    }

    #[test]
    fn agreement_regularizer_arithmetic() {
        // p = s = 0.5: d = 0.5, R = -ln(0.5 + 1e-6)
        let params = ElrParams {
            lambda: 1.0,
            ..ElrParams::default()
        };
        let focal_part = focal(0.5, 1.0, &params.focal).value;
        let got = elr_value_at(0.5, 1.0, 0.5, &params).value - focal_part;
        let expected = -(0.5f64 + 1e-6).ln();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.69315).abs() < 1e-4);
    }

    #[test]
    fn lambda_zero_reduces_to_focal() {
        let params = ElrParams {
            lambda: 0.0,
            ..ElrParams::default()
        };
        for &p in &grid() {
            let base = focal(p, 1.0, &params.focal);
            let full = elr_value_at(p, 1.0, 0.7, &params);
            assert!((full.value - base.value).abs() < 1e-15);
            assert!((full.d_dp - base.d_dp).abs() < 1e-15);
        }
    }

    #[test]
    fn elr_derivative_matches_finite_differences_at_fixed_state() {
        for sign in [ElrSign::Paper, ElrSign::Original] {
            let params = ElrParams {
                sign,
                ..ElrParams::default()
            };
            for &s in &[0.2, 0.5, 0.9] {
                for &p in &grid() {
                    for &y in &[0.0, 1.0] {
                        let analytic = elr_value_at(p, y, s, &params).d_dp;
                        let numeric = central(|x| elr_value_at(x, y, s, &params).value, p);
                        assert!(
                            rel_err(analytic, numeric) <= 1e-6,
                            "sign {sign:?} s={s} p={p} y={y}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn npn_first_epoch_walkthrough() {
        let params = NpnParams::default();
        let mut state = NpnPixelState::default();
        let eval = npn_step(0.8, 0.6, 1.0, &mut state, &params);
        assert_eq!((state.m1, state.m0), (2, 0));
        assert_eq!(eval.y_star, 1.0);
        assert_eq!(eval.w, 1.0);
        assert!((eval.pll - (-(0.8f64).ln())).abs() < 1e-9);
        assert!((eval.pll - 0.22314).abs() < 1e-5);
        // A1 = 2 gates the first NL term off; A0 = 0 leaves -ln p_weak.
        assert!((eval.nl - (-(0.8f64).ln())).abs() < 1e-9);
        // Hard target from the weak view: t = 1 -> -ln p_strong.
        assert!((eval.cr - (-(0.6f64).ln())).abs() < 1e-9);
        assert!((eval.cr - 0.51083).abs() < 1e-5);
        let expected = eval.pll + 0.1 * eval.nl + 0.2 * eval.cr;
        assert!((eval.value - expected).abs() < 1e-12);
    }

    #[test]
    fn npn_reliability_bounds_and_persistent_agreement() {
        let params = NpnParams::default();
        // w is always in [0.5, 1].
        let mut state = NpnPixelState::default();
        let mut rng = crate::data::rng_substream(33, "npn-w");
        for _ in 0..200 {
            let p = rng.next_uniform01();
            let y = f64::from(rng.next_uniform01() < 0.5);
            let eval = npn_step(p, p, y, &mut state, &params);
            assert!((0.5..=1.0).contains(&eval.w), "w = {}", eval.w);
        }
        // Persistent agreement pins y* = y and w = 1.
        for y in [0.0, 1.0] {
            let mut state = NpnPixelState::default();
            let agreeing = if y == 1.0 { 0.9 } else { 0.1 };
            for _ in 0..20 {
                let eval = npn_step(agreeing, agreeing, y, &mut state, &params);
                assert_eq!(eval.y_star, y);
                assert_eq!(eval.w, 1.0);
            }
        }
    }

    #[test]
    fn npn_derivatives_match_finite_differences() {
        let params = NpnParams::default();
        // Freeze a few count configurations and check both directions.
        let states = [
            (NpnPixelState { m1: 2, m0: 0 }, 2, 0),
            (NpnPixelState { m1: 1, m0: 1 }, 1, 1),
            (NpnPixelState { m1: 0, m0: 2 }, 0, 2),
            (NpnPixelState { m1: 3, m0: 5 }, 1, 1),
        ];
        for &(state, a1, a0) in &states {
            for &p in &grid() {
                let eval = npn_losses(p, 0.4, state, a1, a0, &params);
                let numeric = central(|x| npn_losses(x, 0.4, state, a1, a0, &params).value, p);
                assert!(
                    rel_err(eval.d_weak, numeric) <= 1e-6,
                    "weak at p={p} state={state:?}"
                );

                let eval_s = npn_losses(0.7, p, state, a1, a0, &params);
                let numeric_s = central(|x| npn_losses(0.7, x, state, a1, a0, &params).value, p);
                assert!(rel_err(eval_s.d_strong, numeric_s) <= 1e-6, "strong at p={p}");
            }
        }
    }

    #[test]
    fn npn_components_are_non_negative() {
        let params = NpnParams::default();
        let mut state = NpnPixelState::default();
        let mut rng = crate::data::rng_substream(91, "npn-nonneg");
        for _ in 0..300 {
            let eval = npn_step(
                rng.next_uniform01(),
                rng.next_uniform01(),
                f64::from(rng.next_uniform01() < 0.5),
                &mut state,
                &params,
            );
            assert!(eval.pll >= 0.0 && eval.nl >= 0.0 && eval.cr >= 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "counts must be updated")]
    fn npn_guards_unset_counts() {
        npn_losses(0.5, 0.5, NpnPixelState::default(), 1, 0, &NpnParams::default());
    }
}
