//! Heatmap cross-entropy plus masked offset regression.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::Prediction;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Logits are clipped to `[-LOGIT_CLIP, LOGIT_CLIP]` inside the
/// cross-entropy; the clipped region has zero gradient.
pub const LOGIT_CLIP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub heat: f64,
    pub offset: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heat: 1.0,
            offset: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean binary cross-entropy over all heatmap cells.
    pub heat: f64,
    /// Mean squared offset error over masked cells, in stride units.
    pub offset: f64,
}

/// Targets in the network's element type: heatmap and mask `n` channels,
/// offsets `2n` channels in input pixels.
pub struct TargetView<'a, T> {
    pub heatmap: &'a Tensor3<T>,
    pub offsets: &'a Tensor3<T>,
    pub mask: &'a Tensor3<T>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of logit `z` against target `t`, with the logit clipped.
pub fn bce_with_logit(z: f64, t: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLIP, LOGIT_CLIP);
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Loss value and, when `grad` is given, its gradient with respect to the
/// raw network outputs (heat logits and offsets in stride units).
pub fn loss_and_output_grad<T: Scalar>(
    pred: &Prediction<T>,
    targets: &TargetView<T>,
    weights: LossWeights,
    stride: usize,
    mut grad: Option<&mut Prediction<T>>,
) -> Result<LossBreakdown> {
    let (n, gh, gw) = pred.heat_logits.shape();
    if targets.heatmap.shape() != (n, gh, gw)
        || targets.mask.shape() != (n, gh, gw)
        || targets.offsets.shape() != (2 * n, gh, gw)
        || pred.offsets.shape() != (2 * n, gh, gw)
    {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs targets {:?}",
            pred.heat_logits.shape(),
            targets.heatmap.shape()
        )));
    }
    let cells = (n * gh * gw) as f64;
    let mut heat = 0.0;
    for (i, (&z, &t)) in pred.heat_logits.data.iter().zip(&targets.heatmap.data).enumerate() {
        let (z, t) = (z.as_f64(), t.as_f64());
        heat += bce_with_logit(z, t);
        if let Some(g) = grad.as_deref_mut() {
            let d = if z.abs() > LOGIT_CLIP {
                0.0
            } else {
                weights.heat * (sigmoid(z) - t) / cells
            };
            g.heat_logits.data[i] = T::of(d);
        }
    }
    heat /= cells;

    let plane = gh * gw;
    let inv_stride = 1.0 / stride as f64;
    let masked: usize = targets.mask.data.iter().filter(|&&m| m > T::zero()).count();
    let mut offset = 0.0;
    if let Some(g) = grad.as_deref_mut() {
        g.offsets.data.iter_mut().for_each(|v| *v = T::zero());
    }
    if masked > 0 {
        let denom = 2.0 * masked as f64;
        for j in 0..n {
            for c in 0..plane {
                if targets.mask.data[j * plane + c] <= T::zero() {
                    continue;
                }
                for comp in 0..2 {
                    let idx = (2 * j + comp) * plane + c;
                    let diff = pred.offsets.data[idx].as_f64() - targets.offsets.data[idx].as_f64() * inv_stride;
                    offset += diff * diff;
                    if let Some(g) = grad.as_deref_mut() {
                        g.offsets.data[idx] = T::of(weights.offset * 2.0 * diff / denom);
                    }
                }
            }
        }
        offset /= denom;
    }
    Ok(LossBreakdown {
        total: weights.heat * heat + weights.offset * offset,
        heat,
        offset,
    })
}
