use anyhow::Result;
use hdl_core::format::fmt_f64;
use hdl_core::{
    compensate, debiased_regression_gradient, debiased_regression_loss, finite_difference_check,
    regression_gradient, regression_loss, soft_argmax_decode, FdReport, Heatmap, Joint2D,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::config;
use crate::output::OutDir;
use crate::{Common, VerificationFailure};

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub min_rows: usize,
    pub min_cols: usize,
    pub max_rows: usize,
    pub max_cols: usize,
    pub betas: Vec<f64>,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            min_rows: 8,
            min_cols: 6,
            max_rows: 64,
            max_cols: 48,
            betas: vec![1.0, 10.0, 20.0],
            step: 1e-6,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

struct Case {
    trial: usize,
    beta: f64,
    h: Heatmap,
    raw_target: Joint2D,
    comp_target: Joint2D,
}

/// Random target at least 0.01 from `decoded` on each axis, away from the
/// L1 kink.
fn target_near(rng: &mut ChaCha8Rng, decoded: Joint2D, rows: usize, cols: usize) -> Joint2D {
    loop {
        let t = Joint2D::new(
            rng.gen_range(0.0..(rows - 1) as f64),
            rng.gen_range(0.0..(cols - 1) as f64),
        );
        if (t.x - decoded.x).abs() > 0.01 && (t.y - decoded.y).abs() > 0.01 {
            return t;
        }
    }
}

fn make_cases(cfg: &GradCheckConfig) -> Result<Vec<Case>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let rows = rng.gen_range(cfg.min_rows..=cfg.max_rows);
        let cols = rng.gen_range(cfg.min_cols..=cfg.max_cols);
        let beta = cfg.betas[trial % cfg.betas.len()];
        let h = Heatmap::from_fn(rows, cols, |_, _| rng.gen::<f64>())?;
        let (j_re, bm) = soft_argmax_decode(&h, beta)?;
        let j_ro = compensate(j_re, &bm)?;
        let raw_target = target_near(&mut rng, j_re, rows, cols);
        let comp_target = target_near(&mut rng, j_ro, rows, cols);
        cases.push(Case { trial, beta, h, raw_target, comp_target });
    }
    Ok(cases)
}

fn check(cfg: &GradCheckConfig, c: &Case) -> Result<(FdReport, FdReport)> {
    let (beta, raw_t, comp_t) = (c.beta, c.raw_target, c.comp_target);
    let g = regression_gradient(&c.h, beta, raw_t)?;
    let raw = finite_difference_check(
        |x| Ok(regression_loss(soft_argmax_decode(x, beta)?.0, raw_t)),
        &c.h,
        &g,
        cfg.step,
        cfg.tolerance,
    )?;
    let g = debiased_regression_gradient(&c.h, beta, comp_t)?;
    let comp = finite_difference_check(
        |x| debiased_regression_loss(x, beta, comp_t),
        &c.h,
        &g,
        cfg.step,
        cfg.tolerance,
    )?;
    Ok((raw, comp))
}

pub fn run(common: &Common, seed: Option<u64>, beta: Option<f64>, trials: Option<usize>) -> Result<()> {
    let mut cfg = config::load::<GradCheckConfig>(common.config.as_deref())?.value;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.trials = trials.unwrap_or(cfg.trials);
    if let Some(b) = beta {
        cfg.betas = vec![b];
    }
    if cfg.betas.is_empty() || cfg.min_rows > cfg.max_rows || cfg.min_cols > cfg.max_cols || cfg.min_rows < 2 || cfg.min_cols < 2 {
        anyhow::bail!("grad-check needs betas and a valid size range (at least 2x2)");
    }

    let cases = make_cases(&cfg)?;
    let reports: Vec<(FdReport, FdReport)> = cases.par_iter().map(|c| check(&cfg, c)).collect::<Result<_>>()?;

    let mut csv = String::from("trial,rows,cols,beta,gradient,max_abs_err,max_rel_err,pass\n");
    let mut failed = 0;
    for (c, (raw, comp)) in cases.iter().zip(&reports) {
        for (name, r) in [("regression", raw), ("debiased_regression", comp)] {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.trial,
                c.h.rows(),
                c.h.cols(),
                fmt_f64(c.beta),
                name,
                fmt_f64(r.max_abs_err),
                fmt_f64(r.max_rel_err),
                r.pass
            ));
            if !r.pass {
                failed += 1;
            }
        }
    }
    let out = OutDir::create(&common.out)?;
    out.write_str("grad_check.csv", &csv)?;
    let worst = reports
        .iter()
        .flat_map(|(a, b)| [a.max_rel_err, b.max_rel_err])
        .fold(0.0, f64::max);
    println!("{} checks, {} failed, worst relative error {}", 2 * reports.len(), failed, fmt_f64(worst));
    if failed > 0 {
        return Err(VerificationFailure(format!("{failed} gradient checks exceeded tolerance")).into());
    }
    Ok(())
}
