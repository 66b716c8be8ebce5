use std::path::PathBuf;

use anyhow::{Context, Result};
use hdl_core::format::{fmt_f64, read_any};
use hdl_core::theory::chi_square_best_sigma;
use hdl_core::{argmax_decode, softmax_normalize, Joint2D};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config;
use crate::output::OutDir;
use crate::Common;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Chi2Config {
    /// Heatmap files, CSV or binary; relative to the config file.
    pub heatmaps: Vec<PathBuf>,
    pub beta: f64,
    /// Window center; the argmax when absent.
    pub center: Option<Joint2D>,
    pub half_widths: Vec<usize>,
    pub sigmas: Vec<f64>,
    /// Statistics above this are printed as `-`.
    pub display_limit: f64,
}

impl Default for Chi2Config {
    fn default() -> Self {
        Self {
            heatmaps: Vec::new(),
            beta: 1.0,
            center: None,
            half_widths: vec![1, 2, 3, 4, 5],
            sigmas: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            display_limit: 1000.0,
        }
    }
}

fn table(cfg: &Chi2Config, path: &PathBuf) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading heatmap {}", path.display()))?;
    let h = read_any(&bytes).with_context(|| format!("parsing heatmap {}", path.display()))?;
    let nh = softmax_normalize(&h, cfg.beta)?;
    let center = cfg.center.unwrap_or_else(|| argmax_decode(&h));
    let mut out = String::from("s");
    for sigma in &cfg.sigmas {
        out.push_str(&format!(",sigma={}", fmt_f64(*sigma)));
    }
    out.push_str(",best_sigma\n");
    for &s in &cfg.half_widths {
        let fit = chi_square_best_sigma(&nh, center, s, &cfg.sigmas)?;
        out.push_str(&s.to_string());
        for v in &fit.statistics {
            if *v > cfg.display_limit {
                out.push_str(",-");
            } else {
                out.push_str(&format!(",{}", fmt_f64(*v)));
            }
        }
        out.push_str(&format!(",{}\n", fmt_f64(fit.best_sigma)));
    }
    Ok(out)
}

pub fn run(common: &Common, beta: Option<f64>, heatmaps: Vec<PathBuf>) -> Result<()> {
    let loaded = config::load::<Chi2Config>(common.config.as_deref())?;
    let mut paths: Vec<PathBuf> = loaded.value.heatmaps.iter().map(|p| loaded.resolve(p)).collect();
    let mut cfg = loaded.value;
    if !heatmaps.is_empty() {
        paths = heatmaps;
    }
    if let Some(b) = beta {
        cfg.beta = b;
    }
    if paths.is_empty() {
        anyhow::bail!("chi2 needs at least one heatmap file");
    }
    let tables: Vec<String> = paths.par_iter().map(|p| table(&cfg, p)).collect::<Result<_>>()?;

    let out = OutDir::create(&common.out)?;
    for (path, t) in paths.iter().zip(&tables) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
        out.write_str(&format!("chi2_{stem}.csv"), t)?;
        println!("# {}", path.display());
        print!("{t}");
    }
    Ok(())
}
