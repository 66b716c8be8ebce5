use anyhow::Result;
use hdl_core::format::fmt_f64;
use hdl_core::theory::{bhattacharyya_1d, bhattacharyya_derivative, optimal_sigma};
use serde::Deserialize;

use crate::config;
use crate::output::OutDir;
use crate::svg::{Plot, Series};
use crate::{Common, VerificationFailure};

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaLabConfig {
    pub sigma_true: Vec<f64>,
    pub delta_mu: Vec<f64>,
    /// Displacements for which full D_B curves are written.
    pub curve_delta_mu: Vec<f64>,
    /// Curve range as multiples of `sigma_true`.
    pub curve_from: f64,
    pub curve_to: f64,
    pub curve_points: usize,
}

impl Default for SigmaLabConfig {
    fn default() -> Self {
        Self {
            sigma_true: vec![1.0, 2.0, 4.0],
            delta_mu: (0..=12).map(|k| k as f64 * 0.25).collect(),
            curve_delta_mu: vec![0.0, 0.5, 1.0, 2.0],
            curve_from: 0.25,
            curve_to: 4.0,
            curve_points: 200,
        }
    }
}

pub fn run(common: &Common) -> Result<()> {
    let cfg = config::load::<SigmaLabConfig>(common.config.as_deref())?.value;
    if cfg.curve_points < 2 || !(cfg.curve_from > 0.0 && cfg.curve_to > cfg.curve_from) {
        anyhow::bail!("sigma-lab needs curve_points >= 2 and 0 < curve_from < curve_to");
    }

    let mut star_csv = String::from("sigma_true,delta_mu,sigma_star,residual\n");
    let mut star_series = Vec::new();
    let mut failures = Vec::new();
    for &st in &cfg.sigma_true {
        let mut pts = Vec::new();
        for &d in &cfg.delta_mu {
            let s = optimal_sigma(st, d)?;
            let r = bhattacharyya_derivative(st, s, d);
            star_csv.push_str(&format!("{},{},{},{}\n", fmt_f64(st), fmt_f64(d), fmt_f64(s), fmt_f64(r)));
            let ok = if d == 0.0 { s == st } else { s > st };
            if !ok {
                failures.push(format!("sigma_true {st} delta {d}: sigma* = {s}"));
            }
            pts.push((d, s));
        }
        star_series.push(Series { name: format!("sigma_true={st}"), points: pts });
    }

    let mut curve_csv = String::from("sigma_true,delta_mu,sigma_hat,d_b\n");
    let mut curve_series = Vec::new();
    for &st in &cfg.sigma_true {
        for &d in &cfg.curve_delta_mu {
            let mut pts = Vec::new();
            for k in 0..cfg.curve_points {
                let t = k as f64 / (cfg.curve_points - 1) as f64;
                let sh = st * (cfg.curve_from + t * (cfg.curve_to - cfg.curve_from));
                let v = bhattacharyya_1d(st, sh, d);
                curve_csv.push_str(&format!("{},{},{},{}\n", fmt_f64(st), fmt_f64(d), fmt_f64(sh), fmt_f64(v)));
                pts.push((sh, v));
            }
            curve_series.push(Series { name: format!("st={st} dmu={d}"), points: pts });
        }
    }

    let out = OutDir::create(&common.out)?;
    out.write_str("sigma_star.csv", &star_csv)?;
    out.write_str("bhattacharyya_curves.csv", &curve_csv)?;
    let star_plot = Plot {
        title: "optimal predicted spread",
        x_label: "displacement",
        y_label: "sigma*",
        invert_y: false,
        x_range: None,
        y_range: None,
    };
    out.write_str("sigma_star.svg", &star_plot.render(&star_series))?;
    let curve_plot = Plot {
        title: "Bhattacharyya distance",
        x_label: "sigma_hat",
        y_label: "D_B",
        invert_y: false,
        x_range: None,
        y_range: None,
    };
    out.write_str("bhattacharyya_curves.svg", &curve_plot.render(&curve_series))?;
    print!("{star_csv}");
    if !failures.is_empty() {
        return Err(VerificationFailure(failures.join("; ")).into());
    }
    Ok(())
}
