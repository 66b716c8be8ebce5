//! Grid types, softmax normalization, Gaussian synthesis and the
//! localized-support statistics.
//!
//! All reductions accumulate in row-major order so results are reproducible
//! bit-for-bit regardless of how callers batch heatmaps across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous keypoint coordinate in heatmap pixels.
///
/// `x` runs along rows, `y` along columns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Joint2D {
    pub x: f64,
    pub y: f64,
}

impl Joint2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Joint2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn l1_distance(&self, other: &Joint2D) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    /// Nearest integer pixel, ties rounded away from zero.
    pub fn rounded(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyGrid { rows, cols });
    }
    if rows * cols != len {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            got: len,
        });
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Raw network-style activations on a `rows x cols` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len())?;
        check_finite(&values)?;
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Returns a copy with one pixel replaced.
    pub fn with_value(&self, i: usize, j: usize, value: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values[i * self.cols + j] = value;
        Self::new(self.rows, self.cols, values)
    }

    /// Elementwise `self + scale * delta`.
    pub fn add_scaled(&self, delta: &[f64], scale: f64) -> Result<Self> {
        if delta.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                got: delta.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(delta)
            .map(|(v, d)| v + scale * d)
            .collect();
        Self::new(self.rows, self.cols, values)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_shape(&self, other: &Heatmap) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    /// Unvalidated constructor for values produced by internal arithmetic
    /// that cannot leave the finite range.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self { rows, cols, values }
    }
}

/// Softmax-normalized heatmap: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHeatmap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    beta: f64,
    log_partition: f64,
}

impl NormalizedHeatmap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ln C` where `C = sum_p exp(beta * h_p)` of the source heatmap.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Spatial expectation `sum_p p * h_p` over the full grid.
    pub fn expectation(&self) -> Joint2D {
        let mut x = 0.0;
        let mut y = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let w = self.get(i, j);
                x += w * i as f64;
                y += w * j as f64;
            }
        }
        Joint2D::new(x, y)
    }

    /// Wraps an arbitrary distribution. The values are rescaled to sum to
    /// one; `beta` and the log-partition are recorded as given.
    pub fn from_distribution(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len())?;
        check_finite(&values)?;
        if let Some(index) = values.iter().position(|v| *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distribution entry {index} is negative"
            )));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("distribution has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / total).collect();
        Ok(Self {
            rows,
            cols,
            values,
            beta: 1.0,
            log_partition: total.ln(),
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// `h_p = exp(beta * a_p) / sum_q exp(beta * a_q)`, evaluated with the
/// maximum subtracted so large `beta` cannot overflow.
///
/// Entries can underflow to zero when `beta * (max - a_p)` exceeds ~745.
pub fn softmax_normalize(h: &Heatmap, beta: f64) -> Result<NormalizedHeatmap> {
    check_beta(beta)?;
    let shift = beta * h.max_value();
    let mut values: Vec<f64> = h.values().iter().map(|v| (beta * v - shift).exp()).collect();
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= total;
    }
    Ok(NormalizedHeatmap {
        rows: h.rows(),
        cols: h.cols(),
        values,
        beta,
        log_partition: shift + total.ln(),
    })
}

/// Isotropic Gaussian annotation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Joint2D,
    pub sigma: f64,
}

impl GaussianSpec {
    pub fn new(mean: Joint2D, sigma: f64) -> Self {
        Self { mean, sigma }
    }
}

/// Unnormalized Gaussian bump `exp(-|p - mean|^2 / (2 sigma^2))`.
pub fn gaussian_heatmap(rows: usize, cols: usize, spec: GaussianSpec) -> Result<Heatmap> {
    if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
        return Err(Error::InvalidSigma(spec.sigma));
    }
    if !spec.mean.is_finite() {
        return Err(Error::InvalidParameter("gaussian mean must be finite".into()));
    }
    let denom = 2.0 * spec.sigma * spec.sigma;
    Heatmap::from_fn(rows, cols, |i, j| {
        let dx = i as f64 - spec.mean.x;
        let dy = j as f64 - spec.mean.y;
        (-(dx * dx + dy * dy) / denom).exp()
    })
}

/// Clipped square window `[c - s, c + s]` around a rounded center, as
/// inclusive row and column ranges. `None` when the window misses the grid.
pub(crate) fn window(
    rows: usize,
    cols: usize,
    center: Joint2D,
    s: usize,
) -> Option<(std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>)> {
    let (ci, cj) = center.rounded();
    let s = s as i64;
    let r0 = (ci - s).max(0);
    let r1 = (ci + s).min(rows as i64 - 1);
    let c0 = (cj - s).max(0);
    let c1 = (cj + s).min(cols as i64 - 1);
    if r0 > r1 || c0 > c1 {
        return None;
    }
    Some((r0 as usize..=r1 as usize, c0 as usize..=c1 as usize))
}

/// Normalized mass inside the `(2s+1)^2` window around `center`.
///
/// The center is rounded to the nearest pixel; pixels of the window that fall
/// outside the grid are dropped.
pub fn activation_sum(nh: &NormalizedHeatmap, center: Joint2D, s: usize) -> f64 {
    let Some((rows, cols)) = window(nh.rows(), nh.cols(), center, s) else {
        return 0.0;
    };
    if *rows.start() == 0
        && *rows.end() == nh.rows() - 1
        && *cols.start() == 0
        && *cols.end() == nh.cols() - 1
    {
        return 1.0;
    }
    let mut total = 0.0;
    for i in rows {
        for j in cols.clone() {
            total += nh.get(i, j);
        }
    }
    total.min(1.0)
}

/// Localized-support parameters: the square of half-width `half_width`
/// centered on `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportRegion {
    pub center: Joint2D,
    pub half_width: usize,
}

impl SupportRegion {
    pub fn new(center: Joint2D, half_width: usize) -> Self {
        Self { center, half_width }
    }

    /// Whether the rounded square overlaps a `rows x cols` grid.
    pub fn intersects(&self, rows: usize, cols: usize) -> bool {
        window(rows, cols, self.center, self.half_width).is_some()
    }
}

/// Support centered on the expectation, with the smallest half-width whose
/// window holds at least `threshold` of the mass.
pub fn fit_support(nh: &NormalizedHeatmap, threshold: f64) -> Result<SupportRegion> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "support threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let center = nh.expectation();
    let limit = nh.rows().max(nh.cols());
    for s in 0..=limit {
        if activation_sum(nh, center, s) >= threshold {
            return Ok(SupportRegion::new(center, s));
        }
    }
    // The expectation lies inside the grid, so s = max(rows, cols) always
    // covers it and the loop returns.
    unreachable!("window of half-width {limit} covers the grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(rows: usize, cols: usize, x: f64, y: f64, sigma: f64) -> Heatmap {
        gaussian_heatmap(rows, cols, GaussianSpec::new(Joint2D::new(x, y), sigma)).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(Heatmap::new(0, 3, vec![]), Err(Error::EmptyGrid { .. })));
        assert!(matches!(
            Heatmap::new(2, 2, vec![0.0; 3]),
            Err(Error::LengthMismatch { expected: 4, got: 3 })
        ));
        assert!(matches!(
            Heatmap::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(Heatmap::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let h = Heatmap::zeros(3, 3).unwrap();
        let nh = softmax_normalize(&h, 10.0).unwrap();
        for v in nh.values() {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_hand_evaluated() {
        let h = Heatmap::new(2, 2, vec![0.0, 2f64.ln(), 0.0, 0.0]).unwrap();
        let nh = softmax_normalize(&h, 1.0).unwrap();
        let want = [0.2, 0.4, 0.2, 0.2];
        for (v, w) in nh.values().iter().zip(want) {
            assert!((v - w).abs() < 1e-15, "{v} vs {w}");
        }
        assert!((nh.log_partition() - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_nonpositive_beta() {
        let h = Heatmap::zeros(2, 2).unwrap();
        assert!(matches!(softmax_normalize(&h, 0.0), Err(Error::InvalidBeta(_))));
        assert!(softmax_normalize(&h, -1.0).is_err());
        assert!(softmax_normalize(&h, f64::NAN).is_err());
    }

    #[test]
    fn softmax_survives_large_beta() {
        let h = Heatmap::new(1, 3, vec![1.0, 0.5, 0.0]).unwrap();
        let nh = softmax_normalize(&h, 1000.0).unwrap();
        assert!(nh.values().iter().all(|v| v.is_finite()));
        assert!((nh.values()[0] - 1.0).abs() < 1e-12);
        assert!((nh.log_partition() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_unit_offset() {
        let h = gauss(5, 5, 2.0, 2.0, 1.0);
        assert_eq!(h.get(2, 2), 1.0);
        assert!((h.get(2, 3) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((h.get(2, 3) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn gaussian_corner_peak() {
        let h = gauss(8, 8, 0.0, 0.0, 2.0);
        assert_eq!(h.max_value(), h.get(0, 0));
    }

    #[test]
    fn gaussian_mass_matches_continuous_integral() {
        let h = gauss(64, 48, 32.0, 24.0, 2.0);
        let mut total = 0.0;
        for i in 0..64 {
            for j in 0..48 {
                total += h.get(i, j);
            }
        }
        let want = 2.0 * std::f64::consts::PI * 4.0;
        assert!((total - want).abs() / want < 0.01, "{total}");
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        let spec = GaussianSpec::new(Joint2D::new(0.0, 0.0), 0.0);
        assert!(matches!(gaussian_heatmap(3, 3, spec), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn activation_sum_cases() {
        let h = gauss(64, 48, 32.0, 24.0, 2.0);
        let nh = softmax_normalize(&h, 10.0).unwrap();
        let c = Joint2D::new(32.0, 24.0);
        let a9 = activation_sum(&nh, c, 9);
        assert!(a9 >= 0.95, "{a9}");
        let a0 = activation_sum(&nh, c, 0);
        let a1 = activation_sum(&nh, c, 1);
        assert!((a0 - nh.get(32, 24)).abs() < 1e-15);
        assert!(a0 < a1);
        assert_eq!(activation_sum(&nh, c, 64), 1.0);
    }

    #[test]
    fn activation_sum_window_off_grid() {
        let nh = softmax_normalize(&Heatmap::zeros(4, 4).unwrap(), 1.0).unwrap();
        assert_eq!(activation_sum(&nh, Joint2D::new(-10.0, -10.0), 2), 0.0);
        // Clipped at the corner: 2x2 of 16 pixels.
        let a = activation_sum(&nh, Joint2D::new(0.0, 0.0), 1);
        assert!((a - 4.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn fit_support_gaussian() {
        let h = gauss(64, 48, 32.0, 24.0, 2.0);
        let nh = softmax_normalize(&h, 10.0).unwrap();
        let region = fit_support(&nh, 0.8).unwrap();
        assert!(region.center.distance(&Joint2D::new(32.0, 24.0)) < 0.05);
        assert!(region.half_width <= 9);
        assert!(region.intersects(64, 48));
    }

    #[test]
    fn fit_support_uniform_spans_grid() {
        let nh = softmax_normalize(&Heatmap::zeros(64, 48).unwrap(), 10.0).unwrap();
        let region = fit_support(&nh, 1.0).unwrap();
        // Expectation (31.5, 23.5) rounds to (32, 24); rows 0..=63 need s = 32.
        assert_eq!(region.half_width, 32);
        assert!(fit_support(&nh, 0.0).is_err());
        assert!(fit_support(&nh, 1.5).is_err());
    }
}
