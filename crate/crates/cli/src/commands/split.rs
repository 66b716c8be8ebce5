use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hdl_core::format::fmt_f64;
use hdl_core::metrics::{difficulty, parse_predictions, parse_records, AnnotationRecord, Difficulty, DifficultyLabels};
use hdl_core::Joint2D;
use serde::Deserialize;

use crate::config;
use crate::output::{cell, OutDir};
use crate::Common;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Line-delimited JSON annotation records.
    pub annotations: Option<PathBuf>,
    /// One JSON array of `[x, y]` per record, aligned with its joints.
    pub predictions: Option<PathBuf>,
}

const LABELS: [Difficulty; 4] = [
    Difficulty::Easy,
    Difficulty::Medium,
    Difficulty::Hard,
    Difficulty::Unclassified,
];

fn index(d: Difficulty) -> usize {
    LABELS.iter().position(|l| *l == d).expect("every label is listed")
}

/// Per-cell accumulator over a 4x4 grid of labels.
#[derive(Default, Clone, Copy)]
struct Acc {
    records: usize,
    joints: usize,
    epe_sum: f64,
}

struct Matrix {
    cells: [[Acc; 4]; 4],
}

impl Matrix {
    fn new() -> Self {
        Self { cells: [[Acc::default(); 4]; 4] }
    }

    fn add(&mut self, r: Difficulty, c: Difficulty, epes: Option<&[f64]>) {
        let a = &mut self.cells[index(r)][index(c)];
        a.records += 1;
        if let Some(e) = epes {
            a.joints += e.len();
            a.epe_sum += e.iter().sum::<f64>();
        }
    }

    fn render(&self, corner: &str, value: impl Fn(&Acc) -> String) -> String {
        let mut out = String::from(corner);
        for l in LABELS {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (r, row) in self.cells.iter().enumerate() {
            out.push_str(LABELS[r].name());
            for a in row {
                out.push(',');
                out.push_str(&value(a));
            }
            out.push('\n');
        }
        out
    }
}

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))
}

/// EPE of each present joint, or an error on misaligned predictions.
fn record_epes(k: usize, ar: &AnnotationRecord, pred: &[Joint2D]) -> Result<Vec<f64>> {
    if pred.len() != ar.joints.len() {
        anyhow::bail!(
            "record {k}: {} predictions for {} joints",
            pred.len(),
            ar.joints.len()
        );
    }
    Ok(ar
        .joints
        .iter()
        .zip(pred)
        .filter(|(j, _)| j.present)
        .map(|(j, p)| p.distance(&j.position()))
        .collect())
}

pub fn run(common: &Common, annotations: Option<PathBuf>, predictions: Option<PathBuf>) -> Result<()> {
    let loaded = config::load::<SplitConfig>(common.config.as_deref())?;
    let ann_path = annotations
        .or_else(|| loaded.value.annotations.as_ref().map(|p| loaded.resolve(p)))
        .context("split needs an annotation file (--annotations or `annotations` in the config)")?;
    let pred_path = predictions.or_else(|| loaded.value.predictions.as_ref().map(|p| loaded.resolve(p)));

    let records = parse_records(&read(&ann_path, "annotations")?)?;
    let preds = match &pred_path {
        Some(p) => {
            let v = parse_predictions(&read(p, "predictions")?)?;
            if v.len() != records.len() {
                anyhow::bail!("{} prediction lines for {} records", v.len(), records.len());
            }
            Some(v)
        }
        None => None,
    };

    let mut by_size = Matrix::new();
    let mut by_occ = Matrix::new();
    let mut per_record = String::from(
        "record,present,occlusion_ratio,size,joints_bin,occlusion_bin,size_bin,combined,mean_epe\n",
    );
    for (k, ar) in records.iter().enumerate() {
        let labels: DifficultyLabels = difficulty(ar);
        let epes = match &preds {
            Some(p) => Some(record_epes(k, ar, &p[k])?),
            None => None,
        };
        by_size.add(labels.joints, labels.size, epes.as_deref());
        by_occ.add(labels.joints, labels.occlusion, epes.as_deref());
        let mean = epes
            .as_ref()
            .filter(|e| !e.is_empty())
            .map(|e| e.iter().sum::<f64>() / e.len() as f64);
        per_record.push_str(&format!(
            "{k},{},{},{},{},{},{},{},{}\n",
            ar.present_count(),
            fmt_f64(ar.occlusion_ratio()),
            fmt_f64(ar.input_size()),
            labels.joints,
            labels.occlusion,
            labels.size,
            labels.combined,
            cell(mean)
        ));
    }

    let out = OutDir::create(&common.out)?;
    let counts = |a: &Acc| a.records.to_string();
    let epe = |a: &Acc| cell((a.joints > 0).then(|| a.epe_sum / a.joints as f64));
    let size_counts = by_size.render("joints\\size", counts);
    out.write_str("counts_joints_size.csv", &size_counts)?;
    out.write_str("counts_joints_occlusion.csv", &by_occ.render("joints\\occlusion", counts))?;
    out.write_str("records.csv", &per_record)?;
    if preds.is_some() {
        out.write_str("epe_joints_size.csv", &by_size.render("joints\\size", epe))?;
        out.write_str("epe_joints_occlusion.csv", &by_occ.render("joints\\occlusion", epe))?;
    }
    print!("{size_counts}");
    Ok(())
}
