//! Ablation variants and hyperparameter sweeps.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::Result;
use crate::mdfd::PerturbationMethod;
use crate::metrics::Metrics;

use super::config::TrainConfig;
use super::train::{kfold_evaluate, MetricReport};

/// One evaluated setting of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub setting: String,
    pub report: MetricReport,
}

fn evaluate(ds: &Dataset, setting: String, cfg: &TrainConfig, jobs: usize) -> Result<StudyRow> {
    Ok(StudyRow {
        setting,
        report: kfold_evaluate(ds, cfg, jobs)?.report,
    })
}

/// Full model followed by the three single-module ablations.
pub fn run_ablation(ds: &Dataset, cfg: &TrainConfig, jobs: usize) -> Result<Vec<StudyRow>> {
    let base = TrainConfig {
        disable_mdfd: false,
        disable_magcs: false,
        disable_hfdan: false,
        ..cfg.clone()
    };
    let variants = [
        ("full", base.clone()),
        (
            "w/o MDFD",
            TrainConfig {
                disable_mdfd: true,
                ..base.clone()
            },
        ),
        (
            "w/o MAGCS",
            TrainConfig {
                disable_magcs: true,
                ..base.clone()
            },
        ),
        (
            "w/o HFDAN",
            TrainConfig {
                disable_hfdan: true,
                ..base
            },
        ),
    ];
    variants
        .into_iter()
        .map(|(name, c)| evaluate(ds, name.to_string(), &c, jobs))
        .collect()
}

pub fn perturbation_sweep(ds: &Dataset, cfg: &TrainConfig, jobs: usize) -> Result<Vec<StudyRow>> {
    PerturbationMethod::ALL
        .iter()
        .map(|&p| {
            let c = TrainConfig {
                perturbation: p,
                ..cfg.clone()
            };
            evaluate(ds, p.to_string(), &c, jobs)
        })
        .collect()
}

pub fn paf_sweep(ds: &Dataset, cfg: &TrainConfig, pafs: &[f64], jobs: usize) -> Result<Vec<StudyRow>> {
    pafs.iter()
        .map(|&paf| {
            let c = TrainConfig { paf, ..cfg.clone() };
            // Rounded so that e.g. 0.07 prints as 7% rather than 7.000000000000001%.
            let pct = (paf * 1e6).round() / 1e4;
            evaluate(ds, format!("{pct}%"), &c, jobs)
        })
        .collect()
}

/// One CSV line per setting with the mean of every metric.
pub fn render_table(first_column: &str, rows: &[StudyRow]) -> String {
    let mut s = format!("{first_column},{}\n", Metrics::NAMES.join(","));
    for r in rows {
        s.push_str(&r.setting);
        for v in r.report.mean.values() {
            write!(s, ",{v:.4}").unwrap();
        }
        s.push('\n');
    }
    s
}
