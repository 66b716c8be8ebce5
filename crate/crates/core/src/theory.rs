//! Localized-heatmap statistics: expected end-point error of the two
//! decoders, the Bhattacharyya distance between annotation noise and
//! predicted spread, its minimizing spread, and chi-square template matching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{window, Joint2D, NormalizedHeatmap, SupportRegion};

/// Distribution of the argmax over a support square, stored as a
/// `(2s+1) x (2s+1)` grid of offsets from the support center.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxDistribution {
    support: SupportRegion,
    weights: Vec<f64>,
}

impl ArgmaxDistribution {
    /// Validates centrosymmetry (`w(mu + d) == w(mu - d)`) and normalizes
    /// the weights to sum to one.
    pub fn new(support: SupportRegion, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * support.half_width + 1;
        if weights.len() != side * side {
            return Err(Error::LengthMismatch {
                expected: side * side,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("argmax weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("argmax weights have zero mass".into()));
        }
        let n = weights.len();
        for k in 0..n / 2 {
            let (a, b) = (weights[k], weights[n - 1 - k]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "argmax weights are not centrosymmetric at offset index {k}"
                )));
            }
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { support, weights })
    }

    /// Random centrosymmetric weights with every entry positive.
    pub fn random<R: Rng>(rng: &mut R, center: Joint2D, half_width: usize) -> Self {
        let side = 2 * half_width + 1;
        let n = side * side;
        let mut weights = vec![0.0; n];
        for k in 0..=n / 2 {
            let w = rng.gen_range(1e-3..1.0);
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        Self::new(SupportRegion::new(center, half_width), weights)
            .expect("mirrored weights are centrosymmetric")
    }

    pub fn support(&self) -> SupportRegion {
        self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(point, weight)` pairs over the support.
    pub fn points(&self) -> impl Iterator<Item = (Joint2D, f64)> + '_ {
        let s = self.support.half_width as i64;
        let side = (2 * s + 1) as usize;
        let mu = self.support.center;
        self.weights.iter().enumerate().map(move |(k, w)| {
            let di = (k / side) as i64 - s;
            let dj = (k % side) as i64 - s;
            (Joint2D::new(mu.x + di as f64, mu.y + dj as f64), *w)
        })
    }
}

/// `sum_p w(p) |j_gt - p|`
pub fn expected_epe_detection(w: &ArgmaxDistribution, j_gt: Joint2D) -> f64 {
    w.points().map(|(p, wp)| wp * j_gt.distance(&p)).sum()
}

/// `|j_gt - mu|`: the expectation of a centrosymmetric distribution is its
/// center.
pub fn expected_epe_regression(mu: Joint2D, j_gt: Joint2D) -> f64 {
    j_gt.distance(&mu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpeTrialSummary {
    pub half_width: usize,
    pub trials: usize,
    pub violations: usize,
    pub strict: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpeInequalityReport {
    pub per_half_width: Vec<EpeTrialSummary>,
}

impl EpeInequalityReport {
    pub fn violations(&self) -> usize {
        self.per_half_width.iter().map(|s| s.violations).sum()
    }

    pub fn trials(&self) -> usize {
        self.per_half_width.iter().map(|s| s.trials).sum()
    }
}

/// Samples `trials` random centrosymmetric distributions per half-width and
/// checks `E_detection >= E_regression` for a random target.
///
/// Each half-width draws from its own stream derived from `seed`, so the
/// summaries do not depend on the order of `s_values`.
pub fn verify_epe_inequality(trials: usize, s_values: &[usize], seed: u64) -> EpeInequalityReport {
    let per_half_width = s_values
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(s as u64 + 1)));
            let mut violations = 0;
            let mut strict = 0;
            let mut min_slack = f64::INFINITY;
            let mut slack_sum = 0.0;
            for _ in 0..trials {
                let mu = Joint2D::new(rng.gen_range(8.0..56.0), rng.gen_range(8.0..40.0));
                let w = ArgmaxDistribution::random(&mut rng, mu, s);
                let reach = 2.0 * s as f64 + 1.0;
                let gt = Joint2D::new(
                    mu.x + rng.gen_range(-reach..reach),
                    mu.y + rng.gen_range(-reach..reach),
                );
                let slack = expected_epe_detection(&w, gt) - expected_epe_regression(mu, gt);
                if slack < 0.0 {
                    violations += 1;
                }
                if slack > 0.0 {
                    strict += 1;
                }
                min_slack = min_slack.min(slack);
                slack_sum += slack;
            }
            EpeTrialSummary {
                half_width: s,
                trials,
                violations,
                strict,
                min_slack,
                mean_slack: if trials > 0 { slack_sum / trials as f64 } else { 0.0 },
            }
        })
        .collect();
    EpeInequalityReport { per_half_width }
}

/// Annotation noise `N(mu_true, sigma_true)` versus predicted spread
/// `N(mu_hat, sigma_hat)`, both isotropic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationModel {
    pub mu_true: Joint2D,
    pub sigma_true: f64,
    pub mu_hat: Joint2D,
    pub sigma_hat: f64,
}

/// Squared displacement enters as the squared Euclidean norm.
pub fn bhattacharyya(am: &AnnotationModel) -> f64 {
    let d = am.mu_hat.distance(&am.mu_true);
    bhattacharyya_1d(am.sigma_true, am.sigma_hat, d)
}

/// Bhattacharyya distance as a function of the predicted spread, for a
/// displacement of magnitude `delta_mu`.
pub fn bhattacharyya_1d(sigma_true: f64, sigma_hat: f64, delta_mu: f64) -> f64 {
    let a = sigma_true * sigma_true;
    let v = sigma_hat * sigma_hat;
    0.25 * (0.25 * (a / v + v / a + 2.0)).ln() + 0.25 * delta_mu * delta_mu / (a + v)
}

/// `d D_B / d sigma_hat`.
pub fn bhattacharyya_derivative(sigma_true: f64, sigma_hat: f64, delta_mu: f64) -> f64 {
    let a = sigma_true * sigma_true;
    let v = sigma_hat * sigma_hat;
    let dlog = (1.0 / a - a / (v * v)) / (a / v + v / a + 2.0);
    let dshift = delta_mu * delta_mu / ((a + v) * (a + v));
    // Chain rule through v = sigma_hat^2.
    0.25 * (dlog - dshift) * 2.0 * sigma_hat
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Predicted spread minimizing the Bhattacharyya distance to the annotation
/// noise, searched on `[sigma_true, 100 sigma_true]`.
pub fn optimal_sigma(sigma_true: f64, delta_mu: f64) -> Result<f64> {
    if !(sigma_true > 0.0 && sigma_true.is_finite()) {
        return Err(Error::InvalidSigma(sigma_true));
    }
    if !(delta_mu >= 0.0 && delta_mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "displacement must be nonnegative, got {delta_mu}"
        )));
    }
    if delta_mu == 0.0 {
        // D_B' vanishes exactly at sigma_true when the means coincide.
        return Ok(sigma_true);
    }
    let f = |s: f64| bhattacharyya_1d(sigma_true, s, delta_mu);
    Ok(golden_section_min(f, sigma_true, 100.0 * sigma_true, 1e-8))
}

/// Pearson statistic of each Gaussian template against the heatmap window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareFit {
    pub sigmas: Vec<f64>,
    pub statistics: Vec<f64>,
    pub best_sigma: f64,
    pub best_statistic: f64,
}

/// Floor applied to template probabilities before dividing.
pub const TEMPLATE_FLOOR: f64 = 1e-300;

/// Compares the `(2s+1)^2` window of `nh` around `center` with Gaussian
/// templates of each spread in `sigma_grid`. Both sides are renormalized over
/// the (grid-clipped) window. Returns the full table and its argmin.
pub fn chi_square_best_sigma(
    nh: &NormalizedHeatmap,
    center: Joint2D,
    s: usize,
    sigma_grid: &[f64],
) -> Result<ChiSquareFit> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("sigma grid is empty".into()));
    }
    if let Some(bad) = sigma_grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidSigma(*bad));
    }
    let (rows, cols) = window(nh.rows(), nh.cols(), center, s)
        .ok_or_else(|| Error::InvalidParameter("chi-square window misses the grid".into()))?;
    let mut observed = Vec::new();
    let mut offsets = Vec::new();
    for i in rows {
        for j in cols.clone() {
            observed.push(nh.get(i, j));
            offsets.push((i as f64 - center.x, j as f64 - center.y));
        }
    }
    let mass: f64 = observed.iter().sum();
    if mass <= 0.0 {
        return Err(Error::InvalidParameter("heatmap window has zero mass".into()));
    }
    for o in &mut observed {
        *o /= mass;
    }

    let mut statistics = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let denom = 2.0 * sigma * sigma;
        let mut template: Vec<f64> = offsets
            .iter()
            .map(|(dx, dy)| (-(dx * dx + dy * dy) / denom).exp())
            .collect();
        let t_mass: f64 = template.iter().sum();
        for t in &mut template {
            *t = (*t / t_mass).max(TEMPLATE_FLOOR);
        }
        let stat: f64 = observed
            .iter()
            .zip(&template)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        statistics.push(stat);
    }
    let mut best = 0;
    for (k, v) in statistics.iter().enumerate() {
        if *v < statistics[best] {
            best = k;
        }
    }
    Ok(ChiSquareFit {
        sigmas: sigma_grid.to_vec(),
        best_sigma: sigma_grid[best],
        best_statistic: statistics[best],
        statistics,
    })
}
