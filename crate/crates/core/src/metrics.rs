//! Per-case evidence metrics and their corpus averages.
//!
//! Precision, recall and F1 are computed on the evidence (positive) class
//! for each case separately and then averaged over cases. Conventions for
//! empty sets:
//!
//! | predicted positives | gold positives | P | R | F1 |
//! |---------------------|----------------|---|---|----|
//! | none                | none           | 1 | 1 | 1  |
//! | none                | some           | 0 | 0 | 0  |
//! | some                | none           | 0 | 0 | 0  |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// 1 when the predicted evidence set equals the gold set, else 0.
    pub exact_match: f64,
    pub sentences: usize,
    pub correct: usize,
}

pub fn case_metrics(pred: &[bool], gold: &[bool]) -> Result<CaseMetrics> {
    if pred.len() != gold.len() {
        return Err(Error::dim("case_metrics", &[pred.len()], &[gold.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Contract("case_metrics on an empty case".into()));
    }
    let mut tp = 0usize;
    let mut pp = 0usize;
    let mut gp = 0usize;
    let mut correct = 0usize;
    for (&p, &g) in pred.iter().zip(gold) {
        tp += (p && g) as usize;
        pp += p as usize;
        gp += g as usize;
        correct += (p == g) as usize;
    }
    let (precision, recall) = match (pp, gp) {
        (0, 0) => (1.0, 1.0),
        (0, _) | (_, 0) => (0.0, 0.0),
        _ => (tp as f64 / pp as f64, tp as f64 / gp as f64),
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let n = pred.len();
    Ok(CaseMetrics {
        precision,
        recall,
        f1,
        accuracy: correct as f64 / n as f64,
        exact_match: if correct == n { 1.0 } else { 0.0 },
        sentences: n,
        correct,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub exact_match: f64,
    /// Correct sentences over all sentences, pooled across cases.
    pub sentence_accuracy: f64,
    pub cases: usize,
    pub per_case: Vec<CaseMetrics>,
}

pub fn aggregate(cases: &[CaseMetrics]) -> Result<MetricsReport> {
    if cases.is_empty() {
        return Err(Error::Contract("aggregate over zero cases".into()));
    }
    let n = cases.len() as f64;
    let mean = |f: fn(&CaseMetrics) -> f64| cases.iter().map(f).sum::<f64>() / n;
    let sentences: usize = cases.iter().map(|c| c.sentences).sum();
    let correct: usize = cases.iter().map(|c| c.correct).sum();
    Ok(MetricsReport {
        accuracy: mean(|c| c.accuracy),
        f1: mean(|c| c.f1),
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        exact_match: mean(|c| c.exact_match),
        sentence_accuracy: correct as f64 / sentences.max(1) as f64,
        cases: cases.len(),
        per_case: cases.to_vec(),
    })
}

/// Scores paired prediction/gold label vectors.
pub fn evaluate_labels(pairs: &[(Vec<bool>, Vec<bool>)]) -> Result<MetricsReport> {
    let cases = pairs
        .iter()
        .map(|(p, g)| case_metrics(p, g))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&cases)
}

impl MetricsReport {
    /// Machine-readable form, without the per-case breakdown.
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "exact_match": self.exact_match,
            "sentence_accuracy": self.sentence_accuracy,
            "cases": self.cases,
        })
        .to_string()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy: {:.4}", self.accuracy)?;
        writeln!(f, "f1: {:.4}", self.f1)?;
        writeln!(f, "precision: {:.4}", self.precision)?;
        writeln!(f, "recall: {:.4}", self.recall)?;
        writeln!(f, "exact_match: {:.4}", self.exact_match)?;
        writeln!(f, "sentence_accuracy: {:.4}", self.sentence_accuracy)?;
        write!(f, "cases: {}", self.cases)
    }
}
