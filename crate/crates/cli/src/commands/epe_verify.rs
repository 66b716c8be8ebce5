use anyhow::Result;
use hdl_core::format::fmt_f64;
use hdl_core::theory::verify_epe_inequality;
use serde::Deserialize;

use crate::config;
use crate::output::OutDir;
use crate::{Common, VerificationFailure};

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpeVerifyConfig {
    /// Trials per half-width.
    pub trials: usize,
    pub half_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for EpeVerifyConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            half_widths: vec![1, 2, 3],
            seed: 0,
        }
    }
}

pub fn run(common: &Common, seed: Option<u64>, trials: Option<usize>) -> Result<()> {
    let mut cfg = config::load::<EpeVerifyConfig>(common.config.as_deref())?.value;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.trials = trials.unwrap_or(cfg.trials);
    if cfg.half_widths.is_empty() {
        anyhow::bail!("epe-verify needs at least one half-width");
    }

    let report = verify_epe_inequality(cfg.trials, &cfg.half_widths, cfg.seed);
    let mut csv = String::from("half_width,trials,violations,strict,min_slack,mean_slack\n");
    for s in &report.per_half_width {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.half_width,
            s.trials,
            s.violations,
            s.strict,
            fmt_f64(s.min_slack),
            fmt_f64(s.mean_slack)
        ));
    }
    let out = OutDir::create(&common.out)?;
    out.write_str("epe_verify.csv", &csv)?;
    print!("{csv}");
    if report.violations() > 0 {
        return Err(VerificationFailure(format!(
            "{} of {} trials violate E_detection >= E_regression",
            report.violations(),
            report.trials()
        ))
        .into());
    }
    Ok(())
}
