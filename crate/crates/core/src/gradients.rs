//! Analytic per-pixel gradients of the training losses and a central
//! finite-difference checker.
//!
//! The integral-regression gradient factors into a value part (the
//! normalized activation `h_p`) and a location part that is affine in the
//! pixel position:
//!
//! ```text
//! grad_p = beta * h_p * (s(Jx - Gx) (i - Jx) + s(Jy - Gy) (j - Jy))
//! ```
//!
//! with `s` the sign function and `s(0) = 0`.

use crate::decoding::compensate;
use crate::error::{Error, Result};
use crate::heatmap::{softmax_normalize, Heatmap, Joint2D};

/// Per-pixel gradient, optionally with its value/location factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub value_factor: Option<Vec<f64>>,
    pub location_factor: Option<Vec<f64>>,
}

impl GradientField {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pixel with the largest `|grad|`; first in row-major order on ties.
    pub fn argmax_abs(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if v.abs() > self.values[best].abs() {
                best = k;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sign with `s(0) = 0`.
#[inline]
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `2 (h_hat_p - h_gt_p)`
pub fn detection_gradient(h_hat: &Heatmap, h_gt: &Heatmap) -> Result<GradientField> {
    h_hat.same_shape(h_gt)?;
    let values = h_hat
        .values()
        .iter()
        .zip(h_gt.values())
        .map(|(a, b)| 2.0 * (a - b))
        .collect();
    Ok(GradientField {
        rows: h_hat.rows(),
        cols: h_hat.cols(),
        values,
        value_factor: None,
        location_factor: None,
    })
}

/// Gradient of `|J - J_gt|_1` through the uncompensated soft-argmax, with
/// both factor grids populated.
pub fn regression_gradient(h: &Heatmap, beta: f64, j_gt: Joint2D) -> Result<GradientField> {
    let nh = softmax_normalize(h, beta)?;
    let j = nh.expectation();
    let sx = sign0(j.x - j_gt.x);
    let sy = sign0(j.y - j_gt.y);
    let (rows, cols) = (h.rows(), h.cols());
    let mut values = Vec::with_capacity(rows * cols);
    let mut location = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for jj in 0..cols {
            let loc = sx * (i as f64 - j.x) + sy * (jj as f64 - j.y);
            location.push(loc);
            values.push(beta * nh.get(i, jj) * loc);
        }
    }
    Ok(GradientField {
        rows,
        cols,
        values,
        value_factor: Some(nh.values().to_vec()),
        location_factor: Some(location),
    })
}

/// Gradient of `|J_ro - J_gt|_1` where `J_ro` is the compensated
/// soft-argmax.
///
/// With `r = hw / C`, `J_ro = (J - r c) / (1 - r)`, `dJ/dh_p = beta h_p (p - J)`
/// and `dr/dh_p = -beta r h_p`, the derivative per axis is
/// `beta h_p [ (p - J) / (1 - r) - r (J - c) / (1 - r)^2 ]`.
pub fn debiased_regression_gradient(h: &Heatmap, beta: f64, j_gt: Joint2D) -> Result<GradientField> {
    let nh = softmax_normalize(h, beta)?;
    let j = nh.expectation();
    let bm = crate::decoding::BiasModel {
        log_c: nh.log_partition(),
        rows: h.rows(),
        cols: h.cols(),
        beta,
    };
    let j_ro = compensate(j, &bm)?;
    let r = bm.background_ratio();
    let c = bm.center();
    let inv = 1.0 / (1.0 - r);
    let sx = sign0(j_ro.x - j_gt.x);
    let sy = sign0(j_ro.y - j_gt.y);
    let off_x = r * (j.x - c.x) * inv * inv;
    let off_y = r * (j.y - c.y) * inv * inv;
    let (rows, cols) = (h.rows(), h.cols());
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for jj in 0..cols {
            let gx = (i as f64 - j.x) * inv - off_x;
            let gy = (jj as f64 - j.y) * inv - off_y;
            values.push(beta * nh.get(i, jj) * (sx * gx + sy * gy));
        }
    }
    Ok(GradientField {
        rows,
        cols,
        values,
        value_factor: None,
        location_factor: None,
    })
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_abs_err: f64,
    /// `|a - n| / max(|a|, |n|, 1)`, so tiny gradients are judged on their
    /// absolute error.
    pub max_rel_err: f64,
    pub worst_pixel: (usize, usize),
    pub pass: bool,
}

/// Central differences `(L(h + e_p) - L(h - e_p)) / 2 step` for every pixel.
/// Passes when the relative error stays below `tol` everywhere.
pub fn finite_difference_check<F>(
    loss: F,
    h: &Heatmap,
    analytic: &GradientField,
    step: f64,
    tol: f64,
) -> Result<FdReport>
where
    F: Fn(&Heatmap) -> Result<f64>,
{
    if analytic.rows != h.rows() || analytic.cols != h.cols() {
        return Err(Error::DimensionMismatch {
            left_rows: h.rows(),
            left_cols: h.cols(),
            right_rows: analytic.rows,
            right_cols: analytic.cols,
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("finite-difference step {step}")));
    }
    let mut max_abs_err: f64 = 0.0;
    let mut max_rel_err: f64 = 0.0;
    let mut worst_pixel = (0, 0);
    for i in 0..h.rows() {
        for j in 0..h.cols() {
            let v = h.get(i, j);
            let plus = loss(&h.with_value(i, j, v + step)?)?;
            let minus = loss(&h.with_value(i, j, v - step)?)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(i, j);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1.0);
            max_abs_err = max_abs_err.max(abs);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_pixel = (i, j);
            }
        }
    }
    Ok(FdReport {
        max_abs_err,
        max_rel_err,
        worst_pixel,
        pass: max_rel_err < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::soft_argmax_decode;
    use crate::heatmap::{gaussian_heatmap, GaussianSpec};
    use crate::losses::{debiased_regression_loss, detection_loss, regression_loss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_heatmap(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Heatmap {
        Heatmap::from_fn(rows, cols, |_, _| rng.gen::<f64>()).unwrap()
    }

    fn reg_loss(beta: f64, gt: Joint2D) -> impl Fn(&Heatmap) -> Result<f64> {
        move |h| Ok(regression_loss(soft_argmax_decode(h, beta)?.0, gt))
    }

    /// Target at least `margin` away from the decode on both axes so central
    /// differences do not straddle the L1 kink.
    fn target_off_kink(rng: &mut ChaCha8Rng, j: Joint2D, rows: usize, cols: usize) -> Joint2D {
        loop {
            let gt = Joint2D::new(
                rng.gen_range(0.0..rows as f64 - 1.0),
                rng.gen_range(0.0..cols as f64 - 1.0),
            );
            if (gt.x - j.x).abs() > 0.01 && (gt.y - j.y).abs() > 0.01 {
                return gt;
            }
        }
    }

    #[test]
    fn detection_gradient_cases() {
        let a = Heatmap::new(1, 3, vec![1.0, 0.0, 0.5]).unwrap();
        let b = Heatmap::new(1, 3, vec![0.0, 0.0, 0.5]).unwrap();
        let g = detection_gradient(&a, &b).unwrap();
        assert_eq!(g.values, vec![2.0, 0.0, 0.0]);
        assert!(g.value_factor.is_none() && g.location_factor.is_none());
        assert!(detection_gradient(&a, &a).unwrap().values.iter().all(|v| *v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_heatmap(&mut rng, 6, 5);
        let gt = random_heatmap(&mut rng, 6, 5);
        let g = detection_gradient(&h, &gt).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                assert!((g.get(i, j) - 2.0 * (h.get(i, j) - gt.get(i, j))).abs() < 1e-15);
            }
        }
        let report = finite_difference_check(|x| detection_loss(x, &gt), &h, &g, 1e-6, 1e-6).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn regression_gradient_zero_at_exact_match() {
        let h = gaussian_heatmap(9, 7, GaussianSpec::new(Joint2D::new(4.0, 3.0), 1.0)).unwrap();
        let (j, _) = soft_argmax_decode(&h, 10.0).unwrap();
        let g = regression_gradient(&h, 10.0, j).unwrap();
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn regression_gradient_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_heatmap(&mut rng, 8, 6);
        let g = regression_gradient(&h, 10.0, Joint2D::new(6.3, 1.2)).unwrap();
        let vf = g.value_factor.as_ref().unwrap();
        let lf = g.location_factor.as_ref().unwrap();
        for k in 0..g.values.len() {
            assert!((g.values[k] - 10.0 * vf[k] * lf[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_heatmap(&mut rng, 8, 6);
        let (j, _) = soft_argmax_decode(&h, 10.0).unwrap();
        let gt = target_off_kink(&mut rng, j, 8, 6);
        let g = regression_gradient(&h, 10.0, gt).unwrap();
        let report = finite_difference_check(reg_loss(10.0, gt), &h, &g, 1e-6, 1e-5).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn regression_gradient_nonpositive_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let h = random_heatmap(&mut rng, 8, 6);
            let gi = rng.gen_range(0..8);
            let gj = rng.gen_range(0..6);
            let gt = Joint2D::new(gi as f64, gj as f64);
            let g = regression_gradient(&h, 10.0, gt).unwrap();
            let (j, _) = soft_argmax_decode(&h, 10.0).unwrap();
            let vf = g.value_factor.as_ref().unwrap()[gi * 6 + gj];
            let want = -10.0 * vf * j.l1_distance(&gt);
            assert!(g.get(gi, gj) <= 0.0);
            assert!((g.get(gi, gj) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn debiased_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for beta in [1.0, 10.0, 20.0] {
            let h = random_heatmap(&mut rng, 8, 6);
            let bm = soft_argmax_decode(&h, beta).unwrap();
            let j_ro = compensate(bm.0, &bm.1).unwrap();
            let gt = target_off_kink(&mut rng, j_ro, 8, 6);
            let g = debiased_regression_gradient(&h, beta, gt).unwrap();
            assert!(g.value_factor.is_none());
            let loss = |x: &Heatmap| debiased_regression_loss(x, beta, gt);
            let report = finite_difference_check(loss, &h, &g, 1e-6, 1e-5).unwrap();
            assert!(report.pass, "beta {beta}: {report:?}");
        }
    }

    #[test]
    fn debiased_gradient_zero_on_symmetric_match() {
        let h = gaussian_heatmap(9, 7, GaussianSpec::new(Joint2D::new(4.0, 3.0), 1.0)).unwrap();
        let (j, bm) = soft_argmax_decode(&h, 10.0).unwrap();
        let g = debiased_regression_gradient(&h, 10.0, compensate(j, &bm).unwrap()).unwrap();
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fd_check_trivial_functions() {
        let h = Heatmap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let zero = GradientField { rows: 2, cols: 2, values: vec![0.0; 4], value_factor: None, location_factor: None };
        let r = finite_difference_check(|_| Ok(0.0), &h, &zero, 1e-6, 1e-12).unwrap();
        assert!(r.pass && r.max_abs_err == 0.0);

        let coeffs = [1.5, -2.0, 0.25, 3.0];
        let lin = GradientField { rows: 2, cols: 2, values: coeffs.to_vec(), value_factor: None, location_factor: None };
        let f = |x: &Heatmap| Ok(x.values().iter().zip(coeffs).map(|(v, c)| v * c).sum());
        let r = finite_difference_check(f, &h, &lin, 1e-3, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");

        let wrong = GradientField { rows: 1, cols: 4, values: vec![0.0; 4], value_factor: None, location_factor: None };
        assert!(finite_difference_check(|_| Ok(0.0), &h, &wrong, 1e-6, 1e-6).is_err());
        assert!(finite_difference_check(|_| Ok(0.0), &h, &zero, 0.0, 1e-6).is_err());
    }

    #[test]
    fn fd_check_flags_wrong_gradient() {
        let h = Heatmap::new(1, 2, vec![0.5, 0.5]).unwrap();
        let bad = GradientField { rows: 1, cols: 2, values: vec![1.0, 0.0], value_factor: None, location_factor: None };
        let r = finite_difference_check(|x| Ok(x.values()[0] * 3.0), &h, &bad, 1e-6, 1e-5).unwrap();
        assert!(!r.pass);
        assert!((r.max_abs_err - 2.0).abs() < 1e-6);
    }
}
