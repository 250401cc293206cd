//! Per-item rater variability: standard deviations (MSTD/STDD) for binary
//! and interval data, and the index of qualitative variation (IQV) for
//! nominal data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationValue, Repetition, ValueKind, ValueSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Medium,
    High,
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Band::Low => write!(f, "low"),
            Band::Medium => write!(f, "medium"),
            Band::High => write!(f, "high"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Boxplot statistics over a non-empty sample, with linear-interpolation
/// quartiles.
pub fn five_number_summary(values: &[f64]) -> Option<FiveNumberSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            sorted[lo]
        } else {
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    };
    Some(FiveNumberSummary {
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        q3: quantile(0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    /// Per-item standard deviation (binary/interval schemas only).
    pub per_item_std: BTreeMap<String, f64>,
    /// Per-item IQV (nominal schemas only).
    pub per_item_iqv: BTreeMap<String, f64>,
    pub mstd: Option<f64>,
    pub stdd: Option<f64>,
    pub iqv_summary: Option<FiveNumberSummary>,
    /// Items skipped because they had too few ratings.
    pub n_items_excluded: usize,
}

fn numeric_ratings(
    rep: &Repetition,
    item: &str,
    schema: &ValueSchema,
) -> Result<Vec<f64>> {
    let ratings = rep
        .item_ratings(item)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::NoRatings(item.to_string()))?;
    ratings
        .values()
        .map(|v| {
            v.numeric(schema).ok_or_else(|| {
                Error::InvalidInput(
                    "standard deviation requires interval or binary-nominal ratings".into(),
                )
            })
        })
        .collect()
}

/// Population standard deviation of an item's ratings.
pub fn item_std(rep: &Repetition, item: &str, schema: &ValueSchema) -> Result<f64> {
    let values = numeric_ratings(rep, item, schema)?;
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "item '{item}' has fewer than 2 ratings"
        )));
    }
    Ok(population_std(&values))
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// (mean, population std) of the per-item standard deviations. Items with
/// fewer than two ratings are excluded and counted.
pub fn mstd_stdd(rep: &Repetition, schema: &ValueSchema) -> Result<(f64, f64, usize)> {
    let mut stds = Vec::new();
    let mut excluded = 0usize;
    for item in rep.items() {
        match item_std(rep, item, schema) {
            Ok(std) => stds.push(std),
            Err(Error::InvalidInput(_)) if rep.item_ratings(item).map_or(0, |m| m.len()) < 2 => {
                excluded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if stds.is_empty() {
        return Err(Error::InvalidInput("no item eligible for std".into()));
    }
    let mstd = stds.iter().sum::<f64>() / stds.len() as f64;
    let stdd = population_std(&stds);
    Ok((mstd, stdd, excluded))
}

/// Index of qualitative variation for one item:
/// (K / (K - 1)) * (1 - sum of squared category fractions), with K the
/// schema category count.
pub fn iqv(rep: &Repetition, item: &str, schema: &ValueSchema) -> Result<f64> {
    let k = schema.categories.len();
    if k < 2 {
        return Err(Error::InvalidInput("IQV requires at least 2 categories".into()));
    }
    let ratings = rep
        .item_ratings(item)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::NoRatings(item.to_string()))?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for value in ratings.values() {
        match value {
            AnnotationValue::Nominal(c) => *counts.entry(c).or_insert(0) += 1,
            _ => {
                return Err(Error::InvalidInput(
                    "IQV requires nominal ratings".into(),
                ))
            }
        }
    }
    let n = ratings.len() as f64;
    let sum_sq: f64 = counts.values().map(|&c| (c as f64 / n).powi(2)).sum();
    Ok(k as f64 / (k as f64 - 1.0) * (1.0 - sum_sq))
}

/// Band boundaries as stated for IQV: <= 0.33 low, >= 0.66 high.
pub fn iqv_band(v: f64) -> Result<Band> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidInput(format!("IQV {v} outside [0, 1]")));
    }
    Ok(if v <= 0.33 {
        Band::Low
    } else if v >= 0.66 {
        Band::High
    } else {
        Band::Medium
    })
}

/// Full variability report for one repetition.
pub fn variability_report(rep: &Repetition, schema: &ValueSchema) -> Result<VariabilityReport> {
    let mut report = VariabilityReport {
        per_item_std: BTreeMap::new(),
        per_item_iqv: BTreeMap::new(),
        mstd: None,
        stdd: None,
        iqv_summary: None,
        n_items_excluded: 0,
    };

    let numeric = matches!(schema.kind, ValueKind::Interval)
        || (schema.kind == ValueKind::Nominal && schema.categories.len() == 2);
    if numeric {
        let (mstd, stdd, excluded) = mstd_stdd(rep, schema)?;
        report.mstd = Some(mstd);
        report.stdd = Some(stdd);
        report.n_items_excluded = excluded;
        for item in rep.items() {
            if let Ok(std) = item_std(rep, item, schema) {
                report.per_item_std.insert(item.clone(), std);
            }
        }
    }
    if schema.kind == ValueKind::Nominal && schema.categories.len() >= 2 {
        for item in rep.items() {
            if let Ok(v) = iqv(rep, item, schema) {
                report.per_item_iqv.insert(item.clone(), v);
            }
        }
        let values: Vec<f64> = report.per_item_iqv.values().copied().collect();
        report.iqv_summary = five_number_summary(&values);
    }
    if schema.kind == ValueKind::LabelSet {
        // per-category binarized std, as used for select-all-that-apply tasks
        let binary = ValueSchema::nominal(["0", "1"]);
        let mut stds = Vec::new();
        let mut excluded = 0usize;
        for category in &schema.categories {
            let mut bin_rep = Repetition::new(rep.id.clone());
            for (item, ratings) in &rep.ratings {
                for (rater, value) in ratings {
                    if let AnnotationValue::LabelSet(set) = value {
                        let chosen = set.contains(category);
                        bin_rep.insert(
                            item.clone(),
                            rater.clone(),
                            AnnotationValue::Nominal(if chosen { "1" } else { "0" }.into()),
                        );
                    }
                }
            }
            for item in bin_rep.items() {
                match item_std(&bin_rep, item, &binary) {
                    Ok(std) => stds.push(std),
                    Err(_) => excluded += 1,
                }
            }
        }
        if !stds.is_empty() {
            report.mstd = Some(stds.iter().sum::<f64>() / stds.len() as f64);
            report.stdd = Some(population_std(&stds));
            report.n_items_excluded = excluded;
        }
    }
    Ok(report)
}
