//! Training objectives: pixel MSE for detection, L1 on decoded coordinates
//! for integral regression (raw or bias-compensated), the Laplacian
//! shrinkage regularizer, and the combined schedule-gated loss.

use serde::{Deserialize, Serialize};

use crate::decoding::debiased_decode;
use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, Joint2D, NormalizedHeatmap};

/// Sign of the 4-neighbor Laplacian kernel's center tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSign {
    /// `[0 1 0; 1 -4 1; 0 1 0]`
    #[default]
    CenterNegative,
    /// `[0 -1 0; -1 4 -1; 0 -1 0]`
    CenterPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub tau: f64,
    pub kernel_sign: KernelSign,
}

/// Step schedule for the auxiliary detection term: on for `t < t_o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_o: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { t_o: 120 }
    }
}

impl Schedule {
    pub fn new(t_o: u32) -> Result<Self> {
        if t_o == 0 {
            return Err(Error::InvalidParameter("schedule threshold must be >= 1".into()));
        }
        Ok(Self { t_o })
    }

    pub fn lambda(&self, epoch: u32) -> f64 {
        if epoch < self.t_o {
            1.0
        } else {
            0.0
        }
    }
}

/// `sum_p (h_gt_p - h_hat_p)^2`
pub fn detection_loss(h_hat: &Heatmap, h_gt: &Heatmap) -> Result<f64> {
    h_hat.same_shape(h_gt)?;
    Ok(h_hat
        .values()
        .iter()
        .zip(h_gt.values())
        .map(|(a, b)| (b - a) * (b - a))
        .sum())
}

pub fn regression_loss(j_hat: Joint2D, j_gt: Joint2D) -> f64 {
    j_hat.l1_distance(&j_gt)
}

/// L1 loss on the bias-compensated soft-argmax.
pub fn debiased_regression_loss(h: &Heatmap, beta: f64, j_gt: Joint2D) -> Result<f64> {
    Ok(regression_loss(debiased_decode(h, beta)?, j_gt))
}

/// 4-neighbor Laplacian at an interior pixel.
pub(crate) fn laplacian_at(nh: &NormalizedHeatmap, i: usize, j: usize, sign: KernelSign) -> f64 {
    let v = nh.get(i - 1, j) + nh.get(i + 1, j) + nh.get(i, j - 1) + nh.get(i, j + 1)
        - 4.0 * nh.get(i, j);
    match sign {
        KernelSign::CenterNegative => v,
        KernelSign::CenterPositive => -v,
    }
}

/// `sum (|L - tau| + L - tau)` over interior pixels, where `L` is the
/// Laplacian of the normalized heatmap. Only values above `tau` contribute.
pub fn shrinkage_regularizer(nh: &NormalizedHeatmap, cfg: &RegularizerConfig) -> Result<f64> {
    if nh.rows() < 3 || nh.cols() < 3 {
        return Err(Error::GridTooSmall {
            rows: nh.rows(),
            cols: nh.cols(),
            min_rows: 3,
            min_cols: 3,
        });
    }
    let mut total = 0.0;
    for i in 1..nh.rows() - 1 {
        for j in 1..nh.cols() - 1 {
            let d = laplacian_at(nh, i, j, cfg.kernel_sign) - cfg.tau;
            total += d.abs() + d;
        }
    }
    Ok(total)
}

/// Compensated regression loss plus the scheduled detection term.
pub fn bcir_loss(
    h: &Heatmap,
    beta: f64,
    j_gt: Joint2D,
    h_gt: &Heatmap,
    epoch: u32,
    sched: &Schedule,
) -> Result<f64> {
    let lambda = sched.lambda(epoch);
    let reg = debiased_regression_loss(h, beta, j_gt)?;
    if lambda == 0.0 {
        h.same_shape(h_gt)?;
        return Ok(reg);
    }
    Ok(reg + lambda * detection_loss(h, h_gt)?)
}
