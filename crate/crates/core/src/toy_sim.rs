//! Toy simulator of heatmap updates under gradient descent.
//!
//! The heatmap is treated as the free parameter and updated directly:
//! `h <- h - gamma * grad`, with the gradient of the selected loss. Four
//! characteristic starting heatmaps are provided.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{argmax_decode, compensate, BiasModel};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::gradients::{
    debiased_regression_gradient, detection_gradient, regression_gradient, GradientField,
};
use crate::heatmap::{
    activation_sum, gaussian_heatmap, softmax_normalize, GaussianSpec, Heatmap, Joint2D,
};
use crate::losses::{detection_loss, regression_loss, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Regression,
    DebiasedRegression,
    Detection,
    Bcir,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Regression,
        LossKind::DebiasedRegression,
        LossKind::Detection,
        LossKind::Bcir,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Regression => "regression",
            LossKind::DebiasedRegression => "debiased_regression",
            LossKind::Detection => "detection",
            LossKind::Bcir => "bcir",
        }
    }

    fn compensated(&self) -> bool {
        matches!(self, LossKind::DebiasedRegression | LossKind::Bcir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCase {
    /// Small i.i.d. uniform noise.
    Case1Random,
    /// Gaussian far from the target, in the upper-left quadrant.
    Case2FarGaussian,
    /// Linear ramp confined to the lower-right quadrant, peaking at the
    /// grid corner.
    Case3CornerPlane,
    /// Gaussian centered on the target.
    Case4NearGaussian,
}

impl InitCase {
    pub const ALL: [InitCase; 4] = [
        InitCase::Case1Random,
        InitCase::Case2FarGaussian,
        InitCase::Case3CornerPlane,
        InitCase::Case4NearGaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InitCase::Case1Random => "case1_random",
            InitCase::Case2FarGaussian => "case2_far_gaussian",
            InitCase::Case3CornerPlane => "case3_corner_plane",
            InitCase::Case4NearGaussian => "case4_near_gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub gamma: f64,
    pub beta: f64,
    pub iterations: usize,
    pub loss_kind: LossKind,
    pub init_case: InitCase,
    pub j_gt: Joint2D,
    pub seed: u64,
    /// Spread of the Gaussian used as detection target and for case 4.
    pub target_sigma: f64,
    /// Amplitude of the case-1 noise. Keep `beta * amplitude` small so the
    /// softmax of the noise is close to uniform.
    pub case1_amplitude: f64,
    pub schedule: Schedule,
    /// Iterations per schedule epoch.
    pub epoch_length: usize,
    pub snapshot_iters: Vec<usize>,
    pub divergence_limit: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 48,
            gamma: 0.5,
            beta: 10.0,
            iterations: 200,
            loss_kind: LossKind::Regression,
            init_case: InitCase::Case1Random,
            j_gt: Joint2D::new(48.0, 36.0),
            seed: 0,
            target_sigma: 2.0,
            case1_amplitude: 1e-3,
            schedule: Schedule::default(),
            epoch_length: 1,
            snapshot_iters: vec![0, 5, 10, 15, 20],
            divergence_limit: 1e6,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.epoch_length == 0 {
            return bad("epoch_length must be >= 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidBeta(self.beta));
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence_limit must be positive".into());
        }
        if self.schedule.t_o == 0 {
            return bad("schedule threshold must be >= 1".into());
        }
        if !self.j_gt.is_finite() {
            return bad("j_gt must be finite".into());
        }
        Ok(())
    }

    fn quadrant_origin(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    /// Cases 2 and 3 are laid out for a target in the lower-right quadrant.
    pub fn quadrant_warning(&self) -> Option<String> {
        let (r0, c0) = self.quadrant_origin();
        let in_lower_right = self.j_gt.x >= r0 as f64 && self.j_gt.y >= c0 as f64;
        let assumes = matches!(
            self.init_case,
            InitCase::Case2FarGaussian | InitCase::Case3CornerPlane
        );
        (assumes && !in_lower_right).then(|| {
            format!(
                "{} assumes the target is in the lower-right quadrant; got ({}, {})",
                self.init_case.name(),
                self.j_gt.x,
                self.j_gt.y
            )
        })
    }

    pub fn target_heatmap(&self) -> Result<Heatmap> {
        gaussian_heatmap(self.rows, self.cols, GaussianSpec::new(self.j_gt, self.target_sigma))
    }
}

/// Starting heatmap for the configured case.
pub fn init_case(cfg: &SimConfig) -> Result<Heatmap> {
    let (rows, cols) = (cfg.rows, cfg.cols);
    match cfg.init_case {
        InitCase::Case1Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let amp = cfg.case1_amplitude;
            Heatmap::from_fn(rows, cols, |_, _| amp * rng.gen::<f64>())
        }
        InitCase::Case2FarGaussian => {
            let mean = Joint2D::new(rows as f64 / 4.0, cols as f64 / 4.0);
            gaussian_heatmap(rows, cols, GaussianSpec::new(mean, cfg.target_sigma))
        }
        InitCase::Case3CornerPlane => {
            let (r0, c0) = cfg.quadrant_origin();
            let span = ((rows - 1 - r0) + (cols - 1 - c0)).max(1) as f64;
            Heatmap::from_fn(rows, cols, |i, j| {
                if i >= r0 && j >= c0 {
                    ((i - r0) + (j - c0)) as f64 / span
                } else {
                    0.0
                }
            })
        }
        InitCase::Case4NearGaussian => cfg.target_heatmap(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRecord {
    pub iter: usize,
    /// Integral-regression output the loss acts on: compensated for the
    /// debiased and BCIR losses, raw soft-argmax otherwise.
    pub soft: Joint2D,
    pub raw_soft: Joint2D,
    pub argmax: Joint2D,
    pub loss: f64,
    /// Normalized mass in the 5x5 window at the target.
    pub a_s2: f64,
    pub grad_max: f64,
    pub grad_argmax: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Halt {
    /// `max |h|` exceeded the configured limit at this iteration.
    Diverged { iteration: usize, max_abs: f64 },
    /// Compensation impossible because `C <= hw`.
    DegenerateBias { iteration: usize, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub config: SimConfig,
    pub records: Vec<SimRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_heatmap: Heatmap,
    pub halted: Option<Halt>,
    pub warnings: Vec<String>,
}

impl SimTrace {
    /// First iteration whose integral decode is within `eps` (L1) of the
    /// target.
    pub fn first_soft_within(&self, eps: f64) -> Option<usize> {
        let gt = self.config.j_gt;
        self.records
            .iter()
            .find(|r| r.soft.l1_distance(&gt) <= eps)
            .map(|r| r.iter)
    }

    /// First iteration whose argmax is the target pixel.
    pub fn first_argmax_hit(&self) -> Option<usize> {
        let gt = self.config.j_gt;
        self.records
            .iter()
            .find(|r| r.argmax == gt)
            .map(|r| r.iter)
    }

    pub fn last(&self) -> &SimRecord {
        self.records.last().expect("trace holds the initial state")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,jx_soft,jy_soft,jx_argmax,jy_argmax,loss,a_s2,grad_max\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iter,
                fmt_f64(r.soft.x),
                fmt_f64(r.soft.y),
                fmt_f64(r.argmax.x),
                fmt_f64(r.argmax.y),
                fmt_f64(r.loss),
                fmt_f64(r.a_s2),
                fmt_f64(r.grad_max),
            ));
        }
        out
    }
}

struct Evaluation {
    record: SimRecord,
    gradient: GradientField,
}

fn evaluate(cfg: &SimConfig, h: &Heatmap, h_gt: &Heatmap, iter: usize) -> Result<Evaluation> {
    let nh = softmax_normalize(h, cfg.beta)?;
    let raw = nh.expectation();
    let bm = BiasModel {
        log_c: nh.log_partition(),
        rows: h.rows(),
        cols: h.cols(),
        beta: cfg.beta,
    };
    let soft = if cfg.loss_kind.compensated() {
        compensate(raw, &bm)?
    } else {
        raw
    };
    let epoch = (iter / cfg.epoch_length) as u32;
    let (loss, gradient) = match cfg.loss_kind {
        LossKind::Regression => (
            regression_loss(soft, cfg.j_gt),
            regression_gradient(h, cfg.beta, cfg.j_gt)?,
        ),
        LossKind::DebiasedRegression => (
            regression_loss(soft, cfg.j_gt),
            debiased_regression_gradient(h, cfg.beta, cfg.j_gt)?,
        ),
        LossKind::Detection => (detection_loss(h, h_gt)?, detection_gradient(h, h_gt)?),
        LossKind::Bcir => {
            let lambda = cfg.schedule.lambda(epoch);
            let mut g = debiased_regression_gradient(h, cfg.beta, cfg.j_gt)?;
            let mut loss = regression_loss(soft, cfg.j_gt);
            if lambda != 0.0 {
                let d = detection_gradient(h, h_gt)?;
                for (a, b) in g.values.iter_mut().zip(&d.values) {
                    *a += lambda * b;
                }
                loss += lambda * detection_loss(h, h_gt)?;
            }
            (loss, g)
        }
    };
    let record = SimRecord {
        iter,
        soft,
        raw_soft: raw,
        argmax: argmax_decode(h),
        loss,
        a_s2: activation_sum(&nh, cfg.j_gt, 2),
        grad_max: gradient.max_abs(),
        grad_argmax: gradient.argmax_abs(),
    };
    Ok(Evaluation { record, gradient })
}

/// One update `h - gamma * grad` at iteration `iter`.
pub fn step(cfg: &SimConfig, h: &Heatmap, iter: usize) -> Result<Heatmap> {
    let h_gt = cfg.target_heatmap()?;
    let eval = evaluate(cfg, h, &h_gt, iter)?;
    h.add_scaled(&eval.gradient.values, -cfg.gamma)
}

/// Runs `cfg.iterations` updates and records the state before each update
/// and after the last one.
pub fn run(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let h_gt = cfg.target_heatmap()?;
    let mut h = init_case(cfg)?;
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut snapshots = Vec::new();
    let mut halted = None;
    let warnings = cfg.quadrant_warning().into_iter().collect();

    for iter in 0..=cfg.iterations {
        let eval = match evaluate(cfg, &h, &h_gt, iter) {
            Ok(e) => e,
            Err(Error::DegenerateBias { ratio }) => {
                halted = Some(Halt::DegenerateBias { iteration: iter, ratio });
                break;
            }
            Err(e) => return Err(e),
        };
        records.push(eval.record);
        if cfg.snapshot_iters.contains(&iter) {
            snapshots.push(Snapshot { iter, heatmap: h.clone() });
        }
        if iter == cfg.iterations {
            break;
        }
        let next: Vec<f64> = h
            .values()
            .iter()
            .zip(&eval.gradient.values)
            .map(|(v, g)| v - cfg.gamma * g)
            .collect();
        let max_abs = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(max_abs <= cfg.divergence_limit) {
            halted = Some(Halt::Diverged { iteration: iter + 1, max_abs });
            break;
        }
        h = Heatmap::from_parts(h.rows(), h.cols(), next);
    }

    Ok(SimTrace {
        config: cfg.clone(),
        records,
        snapshots,
        final_heatmap: h,
        halted,
        warnings,
    })
}
