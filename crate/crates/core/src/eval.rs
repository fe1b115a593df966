//! Empirical fairness and accuracy measurement, wall-clock comparison of
//! training runs, and CSV emission of benchmark results and per-epoch
//! curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{forward_into, predict, ForwardTrace, NetworkSpec, Parameters};
use crate::train::EpochStats;

/// Prediction agreement across the full sensitive domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub total: usize,
    /// Samples whose prediction changes under some sensitive value swap.
    pub discriminatory: usize,
    /// `100 * (total - discriminatory) / total`; exactly 100.0 iff no
    /// sample flips.
    pub fairness_pct: f64,
}

/// Counts samples whose predicted class differs between any two sensitive
/// values, with the non-sensitive features held fixed.
pub fn empirical_fairness(
    spec: &NetworkSpec,
    params: &Parameters,
    dataset: &Dataset,
) -> Result<FairnessReport> {
    if dataset.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let encodings: Vec<Vec<f64>> =
        (0..dataset.sensitive.len()).map(|s| dataset.sensitive.encode(s)).collect::<Result<_>>()?;
    let mut trace = ForwardTrace::empty(spec);
    let mut discriminatory = 0;
    for sample in &dataset.samples {
        let mut first = None;
        for enc in &encodings {
            forward_into(spec, params, &sample.x, enc, &mut trace)?;
            let label = predict(spec, &trace);
            match first {
                None => first = Some(label),
                Some(l) if l != label => {
                    discriminatory += 1;
                    break;
                }
                Some(_) => {}
            }
        }
    }
    let total = dataset.len();
    Ok(FairnessReport {
        total,
        discriminatory,
        fairness_pct: 100.0 * (total - discriminatory) as f64 / total as f64,
    })
}

/// Percentage of samples whose prediction at the true sensitive value
/// matches the label.
pub fn accuracy(spec: &NetworkSpec, params: &Parameters, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut trace = ForwardTrace::empty(spec);
    let mut correct = 0;
    for sample in &dataset.samples {
        let enc = dataset.sensitive.encode(sample.s)?;
        forward_into(spec, params, &sample.x, &enc, &mut trace)?;
        if predict(spec, &trace) == sample.y {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

/// Total wall-clock of one run over another, from the final cumulative
/// entries of their epoch stats.
pub fn timing_ratio(numerator: &[EpochStats], denominator: &[EpochStats]) -> Result<f64> {
    let total = |stats: &[EpochStats]| -> Result<f64> {
        let last = stats.last().ok_or_else(|| Error::Data("empty stats".into()))?;
        Ok(last.cumulative_seconds)
    };
    let denom = total(denominator)?;
    if denom <= 0.0 {
        return Err(Error::Data("zero-duration baseline run".into()));
    }
    Ok(total(numerator)? / denom)
}

/// Largest per-epoch duration divided by the median per-epoch duration.
pub fn epoch_time_dispersion(stats: &[EpochStats]) -> Result<f64> {
    if stats.len() < 2 {
        return Err(Error::Data("need at least one trained epoch".into()));
    }
    let mut durations: Vec<f64> = stats
        .windows(2)
        .map(|w| w[1].cumulative_seconds - w[0].cumulative_seconds)
        .collect();
    durations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = *durations.last().unwrap();
    let median = durations[durations.len() / 2];
    if median <= 0.0 {
        return Err(Error::Data("median epoch duration is zero".into()));
    }
    Ok(max / median)
}

/// One benchmark result line in the fixed report layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub attribute: String,
    pub method: String,
    pub fairness_pct: f64,
    pub discriminatory_count: usize,
    pub accuracy_pct: f64,
    pub total_seconds: f64,
    pub steps_per_sec: f64,
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "dataset",
    "attribute",
    "method",
    "fairness_pct",
    "discriminatory_count",
    "accuracy_pct",
    "total_seconds",
    "steps_per_sec",
];

/// Writes result rows as CSV with the fixed column set.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Writes per-epoch training curves (one row per entry, epoch 0 included).
pub fn write_curves(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in stats {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<Vec<EpochStats>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
