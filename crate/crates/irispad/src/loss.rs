//! Pixel-wise supervision targets and the combined SmoothL1 + BCE objective.
//!
//! The intermediate map is supervised against a constant per-class target
//! (bona fide = 1, attack = 0) with SmoothL1, while the final binary output
//! is supervised with BCE. The two terms are blended as
//! `overall = lambda * smooth_l1 + (1 - lambda) * bce`, lambda defaulting
//! to 0.2.
//!
//! ```
//! use irispad::loss::{bce, overall_loss, smooth_l1};
//!
//! // |d| < 1: 0.5 d², at d = 0.5 → 0.125
//! assert!((smooth_l1(&[0.5], &[1.0]).unwrap() - 0.125).abs() < 1e-9);
//! // |d| ≥ 1: |d| − 0.5, at d = 2.5 → 2.0
//! assert!((smooth_l1(&[2.5], &[0.0]).unwrap() - 2.0).abs() < 1e-9);
//! assert!((bce(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
//! assert!(bce(1.0, 1.0).unwrap() < 1e-6); // confident and right → ~0
//!
//! let bundle = overall_loss(0.5, 1.0, 0.2).unwrap();
//! assert!((bundle.overall - 0.9).abs() < 1e-12); // 0.2·0.5 + 0.8·1.0
//! ```

use candle_core::Tensor;

use crate::data::Label;
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Default weight on the SmoothL1 term.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Constant binary target map for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub size: usize,
    pub value: f32,
    pub label: Label,
}

impl TargetMap {
    pub fn values(&self) -> Vec<f32> {
        vec![self.value; self.size * self.size]
    }
}

/// Bona fide maps to an all-ones target, attack to all-zeros, so that higher
/// map responses (like higher scores) mean bona fide.
pub fn make_target_map(label: Label, map_size: usize) -> TargetMap {
    let value = match label {
        Label::BonaFide => 1.0,
        Label::Attack => 0.0,
    };
    TargetMap {
        size: map_size,
        value,
        label,
    }
}

/// Mean SmoothL1 over the map pixels.
///
/// Per pixel, with r = y - x: `r^2 / 2` when `|r| < 1`, else `|r| - 1/2`.
pub fn smooth_l1(map: &[f32], target: &[f32]) -> Result<f64> {
    if map.len() != target.len() || map.is_empty() {
        return Err(Error::Input(format!(
            "smooth_l1 shape mismatch: map has {} values, target {}",
            map.len(),
            target.len()
        )));
    }
    let sum: f64 = map
        .iter()
        .zip(target.iter())
        .map(|(&x, &y)| {
            let r = (y as f64) - (x as f64);
            if r.abs() < 1.0 {
                0.5 * r * r
            } else {
                r.abs() - 0.5
            }
        })
        .sum();
    Ok(sum / map.len() as f64)
}

/// Binary cross-entropy of a probability against a {0,1} label.
///
/// `p` is clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs; values outside
/// `[0,1]` are rejected rather than clamped.
pub fn bce(p: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Input(format!("probability {p} outside [0,1]")));
    }
    if y != 0.0 && y != 1.0 {
        return Err(Error::Input(format!("label {y} not in {{0,1}}")));
    }
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// The two loss components plus their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub smooth_l1: f64,
    pub bce: f64,
    pub overall: f64,
    pub lambda: f64,
}

pub fn overall_loss(smooth_l1: f64, bce: f64, lambda: f64) -> Result<LossBundle> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0,1]")));
    }
    Ok(LossBundle {
        smooth_l1,
        bce,
        overall: lambda * smooth_l1 + (1.0 - lambda) * bce,
        lambda,
    })
}

// ---- tensor-graph versions used by the trainer (differentiable) ----

/// SmoothL1 on a batched map tensor (N,1,H,W) against per-sample constant
/// targets, averaged over pixels and batch.
pub fn smooth_l1_t(map: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if map.dims() != targets.dims() {
        return Err(Error::Input(format!(
            "smooth_l1 shape mismatch: {:?} vs {:?}",
            map.dims(),
            targets.dims()
        )));
    }
    let r = (targets - map)?;
    let abs = r.abs()?;
    let quad = ((&r * &r)? * 0.5)?;
    let lin = (&abs - 0.5)?;
    let mask = abs.lt(1.0)?.to_dtype(map.dtype())?;
    let one = Tensor::ones_like(&mask)?;
    let z = ((&quad * &mask)? + (&lin * (one - &mask)?)?)?;
    Ok(z.mean_all()?)
}

/// BCE on batched probabilities against {0,1} targets, mean over the batch.
pub fn bce_t(probs: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let eps = BCE_EPS;
    let p = probs.clamp(eps, 1.0 - eps)?;
    let one_minus = (1.0 - &p)?;
    let t_one_minus = (1.0 - targets)?;
    let loss = ((targets * p.log()?)? + (t_one_minus * one_minus.log()?)?)?;
    Ok(loss.mean_all()?.neg()?)
}
