use anyhow::Result;
use hdl_core::format::fmt_f64;
use hdl_core::{compensate, gaussian_heatmap, soft_argmax_decode, GaussianSpec, Joint2D};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config;
use crate::output::OutDir;
use crate::svg::{Plot, Series};
use crate::{Common, VerificationFailure};

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSweepConfig {
    pub rows: usize,
    pub cols: usize,
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Blob centers are every pair from `xs` and `ys`. Off the half-pixel
    /// lattice the sampled blob is asymmetric and its mean is not `mu`.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Slack allowed on `compensated <= raw` for rounding.
    pub tolerance: f64,
}

impl Default for BiasSweepConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 48,
            betas: vec![1.0, 5.0, 10.0, 20.0],
            sigmas: vec![0.5, 1.0, 2.0],
            xs: vec![8.0, 14.5, 22.0, 40.5, 50.0, 55.0],
            ys: vec![8.0, 11.5, 17.0, 30.5, 38.0, 40.0],
            tolerance: 1e-9,
        }
    }
}

struct Cell {
    beta: f64,
    sigma: f64,
    mu: Joint2D,
    raw: f64,
    comp: f64,
}

fn evaluate(cfg: &BiasSweepConfig, beta: f64, sigma: f64, mu: Joint2D) -> Result<Cell> {
    let h = gaussian_heatmap(cfg.rows, cfg.cols, GaussianSpec::new(mu, sigma))?;
    let (j_re, bm) = soft_argmax_decode(&h, beta)?;
    let j_ro = compensate(j_re, &bm)?;
    Ok(Cell {
        beta,
        sigma,
        mu,
        raw: j_re.distance(&mu),
        comp: j_ro.distance(&mu),
    })
}

pub fn run(common: &Common, beta: Option<f64>) -> Result<()> {
    let mut cfg = config::load::<BiasSweepConfig>(common.config.as_deref())?.value;
    if let Some(b) = beta {
        cfg.betas = vec![b];
    }
    if cfg.betas.is_empty() || cfg.sigmas.is_empty() || cfg.xs.is_empty() || cfg.ys.is_empty() {
        anyhow::bail!("bias-sweep needs nonempty betas, sigmas, xs and ys");
    }

    let mut jobs = Vec::new();
    for &b in &cfg.betas {
        for &s in &cfg.sigmas {
            for &x in &cfg.xs {
                for &y in &cfg.ys {
                    jobs.push((b, s, Joint2D::new(x, y)));
                }
            }
        }
    }
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(b, s, mu)| evaluate(&cfg, b, s, mu))
        .collect::<Result<_>>()?;

    let mut csv = String::from("beta,sigma,mu_x,mu_y,raw_error,compensated_error\n");
    let mut failures = Vec::new();
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(c.beta),
            fmt_f64(c.sigma),
            fmt_f64(c.mu.x),
            fmt_f64(c.mu.y),
            fmt_f64(c.raw),
            fmt_f64(c.comp)
        ));
        if c.comp > c.raw + cfg.tolerance {
            failures.push(format!(
                "beta {} sigma {} at ({}, {}): compensated {} > raw {}",
                c.beta, c.sigma, c.mu.x, c.mu.y, c.comp, c.raw
            ));
        }
    }

    let mut mean_csv = String::from("beta,sigma,mean_raw_error,mean_compensated_error\n");
    let mut series = Vec::new();
    for &s in &cfg.sigmas {
        let mut raw_pts = Vec::new();
        let mut comp_pts = Vec::new();
        for &b in &cfg.betas {
            let sel: Vec<&Cell> = cells.iter().filter(|c| c.beta == b && c.sigma == s).collect();
            let n = sel.len() as f64;
            let raw = sel.iter().map(|c| c.raw).sum::<f64>() / n;
            let comp = sel.iter().map(|c| c.comp).sum::<f64>() / n;
            mean_csv.push_str(&format!("{},{},{},{}\n", fmt_f64(b), fmt_f64(s), fmt_f64(raw), fmt_f64(comp)));
            raw_pts.push((b, raw));
            comp_pts.push((b, comp));
        }
        series.push(Series { name: format!("raw sigma={s}"), points: raw_pts });
        series.push(Series { name: format!("comp sigma={s}"), points: comp_pts });
    }

    let out = OutDir::create(&common.out)?;
    out.write_str("bias_sweep.csv", &csv)?;
    out.write_str("bias_sweep_mean.csv", &mean_csv)?;
    let plot = Plot {
        title: "soft-argmax error vs beta",
        x_label: "beta",
        y_label: "mean error (px)",
        invert_y: false,
        x_range: None,
        y_range: None,
    };
    out.write_str("bias_sweep.svg", &plot.render(&series))?;
    print!("{mean_csv}");
    if !failures.is_empty() {
        return Err(VerificationFailure(format!(
            "{} cells where compensation did not help; first: {}",
            failures.len(),
            failures[0]
        ))
        .into());
    }
    Ok(())
}
