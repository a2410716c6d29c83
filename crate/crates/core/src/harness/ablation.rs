use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::MemeSample;
use crate::error::{Error, Result};
use crate::harness::{train_on, TrainConfig};
use crate::metrics::MetricsReport;
use crate::model::VariantSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: String,
    pub seed: u64,
    pub test: MetricsReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub exact_match: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

impl AblationTable {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Plain-text table, one row per variant, values as mean ± std in percent.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.variant.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$} | {:>13} | {:>13} | {:>13} | {:>13} | {:>13}",
            "Model", "Acc.", "F1", "Prec.", "Rec.", "E-M"
        );
        let _ = writeln!(s, "{}", "-".repeat(width + 5 * 16));
        let cell = |m: MeanStd| format!("{:5.2} ± {:5.2}", 100.0 * m.mean, 100.0 * m.std);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$} | {} | {} | {} | {} | {}",
                r.variant,
                cell(r.accuracy),
                cell(r.f1),
                cell(r.precision),
                cell(r.recall),
                cell(r.exact_match)
            );
        }
        s
    }
}

/// Trains every variant under every seed and scores the selected
/// parameters on `test`. All other settings come from `base`.
pub fn ablation_sweep(
    base: &TrainConfig,
    variants: &[(String, VariantSpec)],
    seeds: &[u64],
    train: &[MemeSample],
    val: &[MemeSample],
    test: &[MemeSample],
) -> Result<AblationTable> {
    if test.is_empty() {
        return Err(Error::Config("ablation needs a test corpus".into()));
    }
    if seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config(
            "ablation needs at least one variant and one seed".into(),
        ));
    }
    // Runs are independent; train them concurrently and keep sweep order.
    let jobs: Vec<(&String, VariantSpec, u64)> = variants
        .iter()
        .flat_map(|(name, spec)| seeds.iter().map(move |&seed| (name, *spec, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(name, spec, seed)| {
            let cfg = TrainConfig {
                seed,
                variant: spec,
                checkpoint: None,
                ..base.clone()
            };
            let out = train_on(&cfg, train, val, test)?;
            Ok(AblationRun {
                variant: name.clone(),
                seed,
                test: out.report.test.expect("test corpus is non-empty"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = variants
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&MetricsReport> = runs
                .iter()
                .filter(|r| &r.variant == name)
                .map(|r| &r.test)
                .collect();
            let col = |f: fn(&MetricsReport) -> f64| {
                MeanStd::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            AblationRow {
                variant: name.clone(),
                accuracy: col(|r| r.accuracy),
                f1: col(|r| r.f1),
                precision: col(|r| r.precision),
                recall: col(|r| r.recall),
                exact_match: col(|r| r.exact_match),
            }
        })
        .collect();
    Ok(AblationTable { rows, runs })
}

/// Resolves preset names into labelled variants.
pub fn presets(names: &[&str]) -> Result<Vec<(String, VariantSpec)>> {
    names
        .iter()
        .map(|n| VariantSpec::preset(n).map(|v| (n.to_string(), v)))
        .collect()
}
