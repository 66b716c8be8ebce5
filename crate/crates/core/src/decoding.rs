//! Detection and integral-regression decoders, and the closed-form removal
//! of the softmax-expectation bias.
//!
//! With a mostly-zero background every background pixel receives mass
//! `1 / C` after the softmax, where `C = sum_p exp(beta * h_p)`. Those pixels
//! average to the grid center `c = ((rows - 1) / 2, (cols - 1) / 2)`, so the
//! expectation of a blob centered at `x_o` lands at
//!
//! ```text
//! x_r = (1 - hw/C) * x_o + (hw/C) * c
//! ```
//!
//! [`compensate`] inverts this affine map. `C` is carried as `ln C` so that
//! `hw/C` stays representable for any `beta`.

use crate::error::{Error, Result};
use crate::heatmap::{softmax_normalize, Heatmap, Joint2D};

/// Softmax partition value of a decoded heatmap, plus the grid shape the
/// bias model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    /// `ln C`.
    pub log_c: f64,
    pub rows: usize,
    pub cols: usize,
    pub beta: f64,
}

impl BiasModel {
    /// `C` itself; `inf` once `ln C` exceeds ~709.
    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }

    /// Background share `hw / C`.
    pub fn background_ratio(&self) -> f64 {
        (((self.rows * self.cols) as f64).ln() - self.log_c).exp()
    }

    /// Fixed point of the bias map.
    pub fn center(&self) -> Joint2D {
        Joint2D::new((self.rows as f64 - 1.0) / 2.0, (self.cols as f64 - 1.0) / 2.0)
    }

    /// Forward bias map: where an unbiased coordinate `j_o` is pulled to by
    /// the uniform background.
    pub fn apply(&self, j_o: Joint2D) -> Joint2D {
        let r = self.background_ratio();
        let c = self.center();
        Joint2D::new((1.0 - r) * j_o.x + r * c.x, (1.0 - r) * j_o.y + r * c.y)
    }

    /// Scale `C / (C - hw)` of the inverse map.
    pub fn scale(&self) -> Result<f64> {
        let r = self.background_ratio();
        if !(r < 1.0) {
            return Err(Error::DegenerateBias { ratio: r });
        }
        Ok(1.0 / (1.0 - r))
    }
}

/// Integer location of the maximum; ties go to the first pixel in row-major
/// order.
pub fn argmax_decode(h: &Heatmap) -> Joint2D {
    let (i, j) = argmax_index(h);
    Joint2D::new(i as f64, j as f64)
}

pub(crate) fn argmax_index(h: &Heatmap) -> (usize, usize) {
    let mut best = 0;
    let values = h.values();
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    (best / h.cols(), best % h.cols())
}

pub const DEFAULT_SHIFT: f64 = 0.25;

/// Argmax moved `shift` pixels along each axis toward the larger of its two
/// neighbors on that axis. Equal neighbors leave the axis unshifted; a
/// neighbor outside the grid never wins.
pub fn argmax_decode_shifted(h: &Heatmap, shift: f64) -> Result<Joint2D> {
    if !(0.0..0.5).contains(&shift) {
        return Err(Error::InvalidParameter(format!(
            "sub-pixel shift must lie in [0, 0.5), got {shift}"
        )));
    }
    let (i, j) = argmax_index(h);
    let at = |r: Option<usize>, c: Option<usize>| match (r, c) {
        (Some(r), Some(c)) if r < h.rows() && c < h.cols() => h.get(r, c),
        _ => f64::NEG_INFINITY,
    };
    let direction = |prev: f64, next: f64| {
        if next > prev {
            1.0
        } else if prev > next {
            -1.0
        } else {
            0.0
        }
    };
    let dx = direction(at(i.checked_sub(1), Some(j)), at(Some(i + 1), Some(j)));
    let dy = direction(at(Some(i), j.checked_sub(1)), at(Some(i), Some(j + 1)));
    let x = (i as f64 + shift * dx).clamp(0.0, (h.rows() - 1) as f64);
    let y = (j as f64 + shift * dy).clamp(0.0, (h.cols() - 1) as f64);
    Ok(Joint2D::new(x, y))
}

/// Softmax expectation together with the partition value needed to undo its
/// bias.
pub fn soft_argmax_decode(h: &Heatmap, beta: f64) -> Result<(Joint2D, BiasModel)> {
    let nh = softmax_normalize(h, beta)?;
    let bm = BiasModel {
        log_c: nh.log_partition(),
        rows: h.rows(),
        cols: h.cols(),
        beta,
    };
    Ok((nh.expectation(), bm))
}

/// Inverse of the forward bias map:
/// `x_o = C/(C-hw) * x_r - hw * c_x / (C-hw)`, likewise for `y`.
///
/// Fails with [`Error::DegenerateBias`] when `C <= hw`.
pub fn compensate(j_re: Joint2D, bm: &BiasModel) -> Result<Joint2D> {
    let scale = bm.scale()?;
    let r = bm.background_ratio();
    let c = bm.center();
    Ok(Joint2D::new(
        scale * (j_re.x - r * c.x),
        scale * (j_re.y - r * c.y),
    ))
}

/// Soft-argmax followed by compensation.
pub fn debiased_decode(h: &Heatmap, beta: f64) -> Result<Joint2D> {
    let (j, bm) = soft_argmax_decode(h, beta)?;
    compensate(j, &bm)
}
