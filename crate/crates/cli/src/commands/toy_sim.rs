use anyhow::Result;
use hdl_core::format::{fmt_f64, to_csv_string};
use hdl_core::toy_sim::{self, Halt, InitCase, LossKind, SimConfig, SimTrace};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config;
use crate::output::{cell, OutDir};
use crate::svg::{heat_tiles, Plot, Series};
use crate::Common;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySimConfig {
    pub losses: Vec<LossKind>,
    pub cases: Vec<InitCase>,
    /// Shared simulator settings; `loss_kind` and `init_case` are set per run.
    pub sim: SimConfig,
}

impl Default for ToySimConfig {
    fn default() -> Self {
        Self {
            losses: vec![LossKind::Regression, LossKind::Detection],
            cases: InitCase::ALL.to_vec(),
            sim: SimConfig::default(),
        }
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub iterations: Option<usize>,
}

fn halt_text(h: &Option<Halt>) -> String {
    match h {
        None => "-".into(),
        Some(Halt::Diverged { iteration, .. }) => format!("diverged@{iteration}"),
        Some(Halt::DegenerateBias { iteration, .. }) => format!("degenerate_bias@{iteration}"),
    }
}

fn summary_csv(traces: &[SimTrace]) -> String {
    let mut out = String::from(
        "loss,case,iterations,first_argmax_hit,first_soft_within_1px,final_epe_soft,final_a_s2,halted\n",
    );
    for t in traces {
        let last = t.last();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            t.config.loss_kind.name(),
            t.config.init_case.name(),
            last.iter,
            cell(t.first_argmax_hit().map(|v| v as f64)),
            cell(t.first_soft_within(1.0).map(|v| v as f64)),
            fmt_f64(last.soft.distance(&t.config.j_gt)),
            fmt_f64(last.a_s2),
            halt_text(&t.halted),
        ));
    }
    out
}

pub fn run(common: &Common, ov: Overrides) -> Result<()> {
    let loaded = config::load::<ToySimConfig>(common.config.as_deref())?;
    let mut cfg = loaded.value;
    if let Some(v) = ov.seed {
        cfg.sim.seed = v;
    }
    if let Some(v) = ov.beta {
        cfg.sim.beta = v;
    }
    if let Some(v) = ov.gamma {
        cfg.sim.gamma = v;
    }
    if let Some(v) = ov.iterations {
        cfg.sim.iterations = v;
    }
    if cfg.losses.is_empty() || cfg.cases.is_empty() {
        anyhow::bail!("toy-sim needs at least one loss and one case");
    }

    let runs: Vec<SimConfig> = cfg
        .losses
        .iter()
        .flat_map(|&loss| {
            let base = cfg.sim.clone();
            cfg.cases.iter().map(move |&case| SimConfig {
                loss_kind: loss,
                init_case: case,
                ..base.clone()
            })
        })
        .collect();
    let traces: Vec<SimTrace> = runs
        .par_iter()
        .map(toy_sim::run)
        .collect::<hdl_core::Result<_>>()?;

    let out = OutDir::create(&common.out)?;
    let mut series = Vec::new();
    for t in &traces {
        let tag = format!("{}_{}", t.config.loss_kind.name(), t.config.init_case.name());
        for w in &t.warnings {
            eprintln!("warning [{tag}]: {w}");
        }
        out.write_str(&format!("trace_{tag}.csv"), &t.to_csv())?;
        for snap in &t.snapshots {
            out.write_str(&format!("snapshot_{tag}_{:04}.csv", snap.iter), &to_csv_string(&snap.heatmap))?;
        }
        out.write_str(&format!("final_{tag}.svg"), &heat_tiles(&t.final_heatmap, &tag, 6.0))?;
        series.push(Series {
            name: tag,
            points: t.records.iter().map(|r| (r.soft.y, r.soft.x)).collect(),
        });
    }
    let (rows, cols) = (cfg.sim.rows as f64, cfg.sim.cols as f64);
    let plot = Plot {
        title: "integral prediction path",
        x_label: "column (y)",
        y_label: "row (x)",
        invert_y: true,
        x_range: Some((0.0, cols - 1.0)),
        y_range: Some((0.0, rows - 1.0)),
    };
    out.write_str("trajectory.svg", &plot.render(&series))?;
    let summary = summary_csv(&traces);
    out.write_str("summary.csv", &summary)?;
    print!("{summary}");
    Ok(())
}
