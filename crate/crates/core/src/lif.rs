//! Leaky-integrate-and-fire dynamics and the boxcar surrogate derivative.
//!
//! The membrane update is `u_t = alpha * u_{t-1} * (1 - s_{t-1}) + in_t` with
//! a hard reset through the `(1 - s)` term, and the neuron fires when the
//! stored potential strictly exceeds the threshold. The stored potential is
//! the pre-reset value; the reset only applies when computing the next step.

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Leak factor, in (0, 1].
    pub alpha: f64,
    /// Firing threshold.
    pub u_th: f64,
    /// Firing width of the surrogate derivative window, > 0.
    pub beta: f64,
}

impl LifParams {
    pub fn new(alpha: f64, u_th: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Validation(format!("alpha {alpha} not in (0, 1]")));
        }
        if !(beta > 0.0) {
            return Err(Error::Validation(format!("beta {beta} must be > 0")));
        }
        if !u_th.is_finite() {
            return Err(Error::Validation("u_th must be finite".into()));
        }
        Ok(LifParams { alpha, u_th, beta })
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        LifParams::new(
            cfg.require_f64("alpha")?,
            cfg.require_f64("u_th")?,
            cfg.require_f64("beta")?,
        )
    }
}

/// Boxcar surrogate derivative of the firing function: `1/beta` iff the
/// potential lies strictly inside the `beta`-wide window around the
/// threshold, else 0.
#[inline]
pub fn surrogate_grad(u: f64, p: &LifParams) -> f64 {
    if (u - p.u_th).abs() < p.beta / 2.0 {
        1.0 / p.beta
    } else {
        0.0
    }
}

/// True when the surrogate derivative at `u` is exactly zero (the element
/// counts toward grad-f sparsity).
#[inline]
pub fn outside_surrogate_window(u: f64, p: &LifParams) -> bool {
    (u - p.u_th).abs() >= p.beta / 2.0
}

/// One LIF step on scalars. Returns `(u_t, s_t)`.
///
/// The leak term is branch-evaluated so that a fired neuron contributes an
/// exact +0.0, which keeps the sparse and dense backward paths bit-identical.
#[inline]
pub fn lif_step_scalar(u_prev: f64, s_prev: f64, weighted_input: f64, p: &LifParams) -> (f64, f64) {
    let leak = if s_prev != 0.0 { 0.0 } else { p.alpha * u_prev };
    let u = leak + weighted_input;
    let s = if u > p.u_th { 1.0 } else { 0.0 };
    (u, s)
}

/// One LIF step over whole tensors. Shapes must agree; `s_prev` must be
/// binary.
pub fn lif_step(
    u_prev: &Tensor,
    s_prev: &Tensor,
    weighted_input: &Tensor,
    p: &LifParams,
) -> Result<(Tensor, Tensor)> {
    if u_prev.shape() != s_prev.shape() || u_prev.shape() != weighted_input.shape() {
        return Err(Error::Validation(format!(
            "lif_step shape mismatch: u {:?}, s {:?}, input {:?}",
            u_prev.shape(),
            s_prev.shape(),
            weighted_input.shape()
        )));
    }
    if !s_prev.is_binary() {
        return Err(Error::Validation("lif_step: s_prev is not binary".into()));
    }
    let mut u = Tensor::zeros(u_prev.shape());
    let mut s = Tensor::zeros(u_prev.shape());
    lif_step_slices(
        u_prev.data(),
        s_prev.data(),
        weighted_input.data(),
        p,
        u.data_mut(),
        s.data_mut(),
    );
    Ok((u, s))
}

pub(crate) fn lif_step_slices(
    u_prev: &[f64],
    s_prev: &[f64],
    weighted_input: &[f64],
    p: &LifParams,
    u_out: &mut [f64],
    s_out: &mut [f64],
) {
    for i in 0..u_prev.len() {
        let (u, s) = lif_step_scalar(u_prev[i], s_prev[i], weighted_input[i], p);
        u_out[i] = u;
        s_out[i] = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> LifParams {
        LifParams::new(0.94, 0.75, 2.5).unwrap()
    }

    #[test]
    fn param_invariants() {
        assert!(LifParams::new(0.0, 0.75, 2.5).is_err());
        assert!(LifParams::new(1.1, 0.75, 2.5).is_err());
        assert!(LifParams::new(0.9, 0.75, 0.0).is_err());
        assert!(LifParams::new(0.9, f64::NAN, 2.5).is_err());
        assert!(LifParams::new(1.0, 0.75, 2.5).is_ok());
    }

    #[test]
    fn step_integrates_and_fires() {
        let (u, s) = lif_step_scalar(0.5, 0.0, 0.4, &params());
        assert!((u - 0.87).abs() < 1e-12);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn step_hard_resets_after_spike() {
        let (u, s) = lif_step_scalar(0.9, 1.0, 0.0, &params());
        assert_eq!(u, 0.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn step_stays_subthreshold() {
        let (u, s) = lif_step_scalar(0.5, 0.0, 0.1, &params());
        assert!((u - 0.57).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn firing_is_strict_at_threshold() {
        let p = params();
        let (_, s) = lif_step_scalar(0.0, 0.0, p.u_th, &p);
        assert_eq!(s, 0.0, "u == u_th must not fire");
    }

    #[test]
    fn surrogate_window() {
        let p = params();
        assert_eq!(surrogate_grad(0.75, &p), 0.4);
        assert_eq!(surrogate_grad(2.1, &p), 0.0);
        // strict inequality at the window edge
        assert_eq!(surrogate_grad(p.u_th + p.beta / 2.0, &p), 0.0);
        assert_eq!(surrogate_grad(p.u_th - p.beta / 2.0, &p), 0.0);
    }

    #[test]
    fn tensor_step_checks_shapes_and_binarity() {
        let u = Tensor::zeros(&[4]);
        let s_bad = Tensor::from_vec(&[4], vec![0.0, 0.5, 0.0, 0.0]).unwrap();
        let w = Tensor::zeros(&[4]);
        assert!(lif_step(&u, &s_bad, &w, &params()).is_err());
        let s = Tensor::zeros(&[3]);
        assert!(lif_step(&u, &s, &w, &params()).is_err());
    }
}
