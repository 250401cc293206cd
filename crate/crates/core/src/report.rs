//! End-to-end analysis pipeline and the machine-readable report it emits:
//! per-repetition reliability, pairwise reproducibility, power analysis,
//! and the banded scorecard, plus CSV/JSON exports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agreement::{
    krippendorff_alpha, per_category_alpha, weighted_cohen_kappa, AgreementResult,
    DistanceFunction,
};
use crate::dataset::{
    majority_vote_seeded, mean_score, AnnotationDataset, AnnotationValue, Repetition,
    ValueKind, ValueSchema,
};
use crate::error::{Error, Result};
use crate::power::{optimal_raters, PowerAnalysisResult};
use crate::reproducibility::{
    chi2_independence, normalized_xrr, spearman, xrr, PairwiseStability, StabilityMethod,
    XrrResult,
};
use crate::scorecard::{
    assemble, classify, BandConfig, Cell, MetricKind, PairScore, RepetitionScore, Scorecard,
};
use crate::variability::{five_number_summary, variability_report, VariabilityReport};

/// Bumped whenever the JSON report layout changes.
pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub seed: u64,
    pub runs: usize,
    pub sigma0: f64,
    pub significance: f64,
    /// Override for the schema-derived distance function.
    pub distance: Option<DistanceFunction>,
    pub bands: BandConfig,
    /// Bootstrap power analysis is the expensive step; callers can skip it.
    pub with_power: bool,
    /// Pairwise stability/xRR across repetitions.
    pub with_pairs: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: crate::power::DEFAULT_RUNS,
            sigma0: crate::power::DEFAULT_SIGMA0,
            significance: crate::power::DEFAULT_SIGNIFICANCE,
            distance: None,
            bands: BandConfig::default(),
            with_power: true,
            with_pairs: true,
        }
    }
}

/// Per-category agreement either computed or explained away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CategoryAlpha {
    Ok(AgreementResult),
    Degenerate { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub id: String,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_ratings: usize,
    /// None when the repetition is degenerate (constant data).
    pub alpha: Option<AgreementResult>,
    /// Weighted kappa over exactly-two-rating items (label-set schemas).
    pub kappa: Option<AgreementResult>,
    pub per_category_alpha: BTreeMap<String, CategoryAlpha>,
    pub variability: VariabilityReport,
    pub power: Option<PowerAnalysisResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: (String, String),
    pub stability: Option<PairwiseStability>,
    pub xrr: Option<XrrResult>,
    pub normalized_xrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub runs: usize,
    pub sigma0: f64,
    pub significance: f64,
    pub distance: String,
    pub bands: BandConfig,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub study: String,
    pub schema: ValueSchema,
    pub repetitions: Vec<RepetitionReport>,
    pub pairs: Vec<PairReport>,
    pub scorecard: Scorecard,
    /// Human-readable notes on anything skipped or degraded.
    pub diagnostics: Vec<String>,
    pub config: ReportConfig,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// True when no chance-corrected statistic could be computed anywhere:
    /// every repetition's agreement is degenerate and every pairwise
    /// comparison was skipped.
    pub fn degenerate_only(&self) -> bool {
        self.repetitions.iter().all(|r| r.alpha.is_none())
            && self
                .pairs
                .iter()
                .all(|p| p.stability.is_none() && p.xrr.is_none())
    }
}

/// Per-item score used for pairwise stability, chosen by schema kind:
/// means for interval data, positive ratios for binary data, and per-category
/// membership ratios for label sets. Nominal data with more than two
/// categories uses majority votes and the chi-squared path instead.
fn stability_scores(
    rep: &Repetition,
    shared: &[&String],
    schema: &ValueSchema,
) -> Result<Vec<f64>> {
    let mut scores = Vec::new();
    match schema.kind {
        ValueKind::Interval | ValueKind::Ordinal => {
            for item in shared {
                scores.push(item_mean(rep, item, schema)?);
            }
        }
        ValueKind::Nominal => {
            // binary: ratio of the second category
            let positive = &schema.categories[1];
            for item in shared {
                scores.push(crate::dataset::positive_ratio(rep, item, positive)?);
            }
        }
        ValueKind::LabelSet => {
            for item in shared {
                let ratings = rep
                    .item_ratings(item)
                    .ok_or_else(|| Error::NoRatings((*item).clone()))?;
                for category in &schema.categories {
                    let hits = ratings
                        .values()
                        .filter(|v| matches!(v, AnnotationValue::LabelSet(s) if s.contains(category)))
                        .count();
                    scores.push(hits as f64 / ratings.len() as f64);
                }
            }
        }
    }
    Ok(scores)
}

/// Mean item score; ordinal categories are scored by rank index.
fn item_mean(rep: &Repetition, item: &str, schema: &ValueSchema) -> Result<f64> {
    match schema.kind {
        ValueKind::Interval => mean_score(rep, item),
        ValueKind::Ordinal => {
            let ratings = rep
                .item_ratings(item)
                .filter(|m| !m.is_empty())
                .ok_or_else(|| Error::NoRatings(item.to_string()))?;
            let mut sum = 0.0;
            for value in ratings.values() {
                let category = match value {
                    AnnotationValue::Ordinal(c) | AnnotationValue::Nominal(c) => c,
                    _ => {
                        return Err(Error::InvalidInput(
                            "ordinal schema with non-categorical value".into(),
                        ))
                    }
                };
                sum += schema
                    .category_index(category)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown category '{category}'")))?
                    as f64;
            }
            Ok(sum / ratings.len() as f64)
        }
        _ => Err(Error::InvalidInput("mean requires interval or ordinal data".into())),
    }
}

fn shared_items<'a>(a: &'a Repetition, b: &Repetition) -> Vec<&'a String> {
    a.ratings
        .keys()
        .filter(|item| {
            !a.ratings[*item].is_empty()
                && b.item_ratings(item).is_some_and(|m| !m.is_empty())
        })
        .collect()
}

fn pairwise_stability(
    a: &Repetition,
    b: &Repetition,
    schema: &ValueSchema,
    seed: u64,
) -> Result<PairwiseStability> {
    let shared = shared_items(a, b);
    if shared.is_empty() {
        return Err(Error::InvalidInput("no shared items between repetitions".into()));
    }
    let use_chi2 = schema.kind == ValueKind::Nominal && schema.categories.len() > 2;
    if use_chi2 {
        let votes = |rep: &Repetition| -> Result<BTreeMap<String, String>> {
            shared
                .iter()
                .map(|item| Ok(((*item).clone(), majority_vote_seeded(rep, item, seed)?)))
                .collect()
        };
        let (statistic, df, p, warn) = chi2_independence(&votes(a)?, &votes(b)?)?;
        Ok(PairwiseStability {
            pair: (a.id.clone(), b.id.clone()),
            method: StabilityMethod::Chi2Independence,
            statistic,
            df: Some(df),
            p,
            n: shared.len(),
            low_expected_count_warning: warn,
        })
    } else {
        let xs = stability_scores(a, &shared, schema)?;
        let ys = stability_scores(b, &shared, schema)?;
        let (rho, p) = spearman(&xs, &ys)?;
        Ok(PairwiseStability {
            pair: (a.id.clone(), b.id.clone()),
            method: StabilityMethod::Spearman,
            statistic: rho,
            df: None,
            p,
            n: xs.len(),
            low_expected_count_warning: false,
        })
    }
}

fn variability_cell(
    report: &VariabilityReport,
    bands: &BandConfig,
) -> Result<Cell> {
    if let Some(summary) = &report.iqv_summary {
        return Ok(Cell::Band(classify(summary.median, MetricKind::Iqv, bands)?));
    }
    if let Some(mstd) = report.mstd {
        return Ok(Cell::Band(classify(mstd, MetricKind::Mstd, bands)?));
    }
    Ok(Cell::NotComputed)
}

fn replicability_cell(
    pair: &PairReport,
    irr_a: Option<f64>,
    irr_b: Option<f64>,
    options: &AnalysisOptions,
) -> Cell {
    let (Some(x), Some(ia), Some(ib)) = (pair.xrr.as_ref(), irr_a, irr_b) else {
        return Cell::NotComputed;
    };
    let eps = options.bands.replicability_epsilon;
    let gap = ia.min(ib) - x.xrr;
    let mut band = if gap <= eps {
        crate::variability::Band::High
    } else if gap <= 3.0 * eps {
        crate::variability::Band::Medium
    } else {
        crate::variability::Band::Low
    };
    // For vote-based stability, a high band additionally requires the
    // independence test to reject at the configured significance level.
    if let Some(stab) = &pair.stability {
        if stab.method == StabilityMethod::Chi2Independence
            && stab.p.p >= options.significance
            && band == crate::variability::Band::High
        {
            band = crate::variability::Band::Medium;
        }
    }
    Cell::Band(band)
}

/// Runs the full pipeline on a validated dataset.
pub fn analyze(dataset: &AnnotationDataset, options: &AnalysisOptions) -> Result<AnalysisReport> {
    dataset.validate()?;
    options.bands.validate()?;
    let schema = &dataset.schema;
    let dist = options
        .distance
        .clone()
        .unwrap_or_else(|| DistanceFunction::for_schema(schema));

    let mut diagnostics = Vec::new();
    let mut repetitions = Vec::new();
    let mut rep_scores = Vec::new();
    let mut alphas: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut n_degenerate_reps = 0usize;

    for rep in &dataset.repetitions {
        let alpha = match krippendorff_alpha(rep, &dist) {
            Ok(result) => Some(result),
            Err(Error::Degenerate(reason)) => {
                diagnostics.push(format!("repetition '{}': alpha undefined: {reason}", rep.id));
                n_degenerate_reps += 1;
                None
            }
            Err(e) => return Err(e),
        };
        alphas.insert(rep.id.clone(), alpha.as_ref().map(|a| a.coefficient));

        let kappa = if schema.kind == ValueKind::LabelSet {
            match weighted_cohen_kappa(rep, &dist) {
                Ok(result) => Some(result),
                Err(Error::Degenerate(reason)) | Err(Error::InvalidInput(reason)) => {
                    diagnostics
                        .push(format!("repetition '{}': kappa skipped: {reason}", rep.id));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let mut per_category = BTreeMap::new();
        if matches!(schema.kind, ValueKind::Nominal | ValueKind::LabelSet) {
            for category in &schema.categories {
                let entry = match per_category_alpha(rep, category) {
                    Ok(result) => CategoryAlpha::Ok(result),
                    Err(Error::Degenerate(reason)) => CategoryAlpha::Degenerate { reason },
                    Err(e) => return Err(e),
                };
                per_category.insert(category.clone(), entry);
            }
        }

        let variability = variability_report(rep, schema)?;

        let power = if options.with_power {
            match optimal_raters(rep, &dist, options.runs, options.sigma0,
                                 options.significance, options.seed) {
                Ok(result) => Some(result),
                Err(Error::InvalidInput(reason)) | Err(Error::Degenerate(reason)) => {
                    diagnostics.push(format!(
                        "repetition '{}': power analysis skipped: {reason}",
                        rep.id
                    ));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let agreement_cell = match &alpha {
            Some(a) => Cell::Band(classify(a.coefficient, MetricKind::Agreement, &options.bands)?),
            None => Cell::Undefined,
        };
        rep_scores.push(RepetitionScore {
            repetition: rep.id.clone(),
            agreement: agreement_cell,
            variability: variability_cell(&variability, &options.bands)?,
            optimal_k: power.as_ref().and_then(|p| p.optimal_k),
        });

        repetitions.push(RepetitionReport {
            id: rep.id.clone(),
            n_items: rep.ratings.len(),
            n_raters: rep.raters().len(),
            n_ratings: rep.n_ratings(),
            alpha,
            kappa,
            per_category_alpha: per_category,
            variability,
            power,
        });
    }

    let mut pairs = Vec::new();
    let mut pair_scores = Vec::new();
    if options.with_pairs && dataset.repetitions.len() >= 2 {
        for i in 0..dataset.repetitions.len() {
            for j in (i + 1)..dataset.repetitions.len() {
                let (a, b) = (&dataset.repetitions[i], &dataset.repetitions[j]);
                let stability = match pairwise_stability(a, b, schema, options.seed) {
                    Ok(s) => Some(s),
                    Err(Error::Degenerate(reason)) | Err(Error::InvalidInput(reason)) => {
                        diagnostics.push(format!(
                            "pair ({}, {}): stability skipped: {reason}",
                            a.id, b.id
                        ));
                        None
                    }
                    Err(e) => return Err(e),
                };
                let (irr_a, irr_b) = (alphas[&a.id], alphas[&b.id]);
                let xrr_result = match xrr(a, b, &dist) {
                    Ok(mut x) => {
                        x.irr_a = irr_a;
                        x.irr_b = irr_b;
                        Some(x)
                    }
                    Err(Error::Degenerate(reason)) | Err(Error::InvalidInput(reason)) => {
                        diagnostics
                            .push(format!("pair ({}, {}): xRR skipped: {reason}", a.id, b.id));
                        None
                    }
                    Err(e) => return Err(e),
                };
                let normalized = xrr_result.as_ref().and_then(|x| normalized_xrr(x).ok());

                let pair_report = PairReport {
                    pair: (a.id.clone(), b.id.clone()),
                    stability,
                    xrr: xrr_result,
                    normalized_xrr: normalized,
                };

                let stability_cell = match &pair_report.stability {
                    Some(s) if s.method == StabilityMethod::Spearman => {
                        Cell::Band(classify(s.statistic, MetricKind::Stability, &options.bands)?)
                    }
                    Some(s) => Cell::Band(if s.p.p < options.significance {
                        crate::variability::Band::High
                    } else {
                        crate::variability::Band::Low
                    }),
                    None => Cell::Undefined,
                };
                let replicability = replicability_cell(&pair_report, irr_a, irr_b, options);
                pair_scores.push(PairScore {
                    pair: pair_report.pair.clone(),
                    stability: stability_cell,
                    replicability,
                });
                if let Some(s) = &pair_report.stability {
                    if s.low_expected_count_warning {
                        diagnostics.push(format!(
                            "pair ({}, {}): chi-squared expected counts below 5; \
                             p-value is approximate",
                            a.id, b.id
                        ));
                    }
                }
                pairs.push(pair_report);
            }
        }
    }

    if n_degenerate_reps == dataset.repetitions.len() {
        diagnostics.push(
            "every repetition is degenerate: agreement is undefined throughout".into(),
        );
    }

    let scorecard = assemble(&dataset.study_id, rep_scores, pair_scores, diagnostics.clone());

    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        study: dataset.study_id.clone(),
        schema: schema.clone(),
        repetitions,
        pairs,
        scorecard,
        diagnostics,
        config: ReportConfig {
            seed: options.seed,
            runs: options.runs,
            sigma0: options.sigma0,
            significance: options.significance,
            distance: dist.name().to_string(),
            bands: options.bands,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Per-item IQV table (`item_id,iqv`).
pub fn write_iqv_csv(rep: &RepetitionReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["item_id", "iqv"])?;
    for (item, iqv) in &rep.variability.per_item_iqv {
        w.write_record([item.as_str(), &format!("{iqv}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Boxplot-ready five-number summary of the per-item IQV distribution.
pub fn write_iqv_boxplot_json(rep: &RepetitionReport, mut writer: impl Write) -> Result<()> {
    let summary = rep
        .variability
        .iqv_summary
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no IQV distribution for this repetition".into()))?;
    let body = serde_json::json!({
        "repetition": rep.id,
        "metric": "iqv",
        "n_items": rep.variability.per_item_iqv.len(),
        "summary": summary,
    });
    writeln!(writer, "{}", serde_json::to_string_pretty(&body)?)?;
    Ok(())
}

/// Bootstrap distribution per rater count
/// (`k,min,q1,median,mean,q3,max,std,p_value,accepted`).
pub fn write_power_csv(power: &PowerAnalysisResult, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "k", "min", "q1", "median", "mean", "q3", "max", "std", "p_value", "accepted",
    ])?;
    for entry in &power.per_k {
        let valid: Vec<f64> = entry.alpha_samples.iter().flatten().copied().collect();
        let summary = five_number_summary(&valid)
            .ok_or_else(|| Error::InvalidInput(format!("no valid runs at k = {}", entry.k)))?;
        w.write_record([
            entry.k.to_string(),
            summary.min.to_string(),
            summary.q1.to_string(),
            summary.median.to_string(),
            entry.mean.to_string(),
            summary.q3.to_string(),
            summary.max.to_string(),
            entry.std.to_string(),
            entry.p_value.to_string(),
            entry.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Square cross-replication matrix: diagonal holds each repetition's own
/// agreement coefficient, off-diagonal cells hold pairwise xRR.
pub fn write_xrr_matrix_csv(report: &AnalysisReport, writer: impl Write) -> Result<()> {
    let ids: Vec<&String> = report.repetitions.iter().map(|r| &r.id).collect();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for pair in &report.pairs {
        if let Some(x) = &pair.xrr {
            cells.insert((pair.pair.0.clone(), pair.pair.1.clone()), x.xrr);
            cells.insert((pair.pair.1.clone(), pair.pair.0.clone()), x.xrr);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["repetition_id".to_string()];
    header.extend(ids.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (row_idx, row) in ids.iter().enumerate() {
        let mut record = vec![row.to_string()];
        for (col_idx, col) in ids.iter().enumerate() {
            let value = if row_idx == col_idx {
                report.repetitions[row_idx].alpha.as_ref().map(|a| a.coefficient)
            } else {
                cells.get(&((*row).clone(), (*col).clone())).copied()
            };
            record.push(value.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise stability table
/// (`repetition_a,repetition_b,method,statistic,df,p_value,log10_p,n`).
pub fn write_stability_csv(report: &AnalysisReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "repetition_a", "repetition_b", "method", "statistic", "df", "p_value", "log10_p", "n",
    ])?;
    for pair in &report.pairs {
        let Some(s) = &pair.stability else { continue };
        let method = match s.method {
            StabilityMethod::Spearman => "spearman",
            StabilityMethod::Chi2Independence => "chi2_independence",
        };
        w.write_record([
            pair.pair.0.clone(),
            pair.pair.1.clone(),
            method.to_string(),
            s.statistic.to_string(),
            s.df.map(|d| d.to_string()).unwrap_or_default(),
            s.p.p.to_string(),
            s.p.log10p.to_string(),
            s.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AnnotationValue;

    fn two_rep_dataset() -> AnnotationDataset {
        let schema = ValueSchema::interval(Some((0.0, 1.0)), None);
        let mut reps = Vec::new();
        for (rep_id, shift) in [("R1", 0.0), ("R2", 0.02)] {
            let mut rep = Repetition::new(rep_id);
            for i in 0..12 {
                let base = i as f64 / 12.0;
                for r in 0..4 {
                    let v = (base + shift + r as f64 * 0.01).clamp(0.0, 1.0);
                    rep.insert(format!("i{i:02}"), format!("p{r}"), AnnotationValue::interval(v));
                }
            }
            reps.push(rep);
        }
        let items = reps[0].ratings.keys().cloned().collect();
        AnnotationDataset {
            study_id: "demo".into(),
            schema,
            items,
            repetitions: reps,
        }
    }

    #[test]
    fn full_pipeline_interval() {
        let dataset = two_rep_dataset();
        let options = AnalysisOptions {
            runs: 10,
            ..AnalysisOptions::default()
        };
        let report = analyze(&dataset, &options).unwrap();
        assert_eq!(report.repetitions.len(), 2);
        assert_eq!(report.pairs.len(), 1);
        let pair = &report.pairs[0];
        let stab = pair.stability.as_ref().unwrap();
        assert_eq!(stab.method, StabilityMethod::Spearman);
        assert!(stab.statistic > 0.99, "rho = {}", stab.statistic);
        let x = pair.xrr.as_ref().unwrap();
        assert!(x.xrr > 0.9, "xrr = {}", x.xrr);
        assert!(report.repetitions[0].alpha.as_ref().unwrap().coefficient > 0.9);
        assert!(report.scorecard.per_pair[0].stability == Cell::Band(crate::variability::Band::High));
    }

    #[test]
    fn report_json_is_deterministic() {
        let dataset = two_rep_dataset();
        let options = AnalysisOptions {
            runs: 5,
            ..AnalysisOptions::default()
        };
        let a = analyze(&dataset, &options).unwrap().to_json();
        let b = analyze(&dataset, &options).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"schema_version\""));
    }

    #[test]
    fn degenerate_dataset_is_flagged() {
        let schema = ValueSchema::nominal(["a", "b"]);
        let mut rep = Repetition::new("R1");
        for i in 0..4 {
            for r in 0..3 {
                rep.insert(format!("i{i}"), format!("p{r}"), AnnotationValue::Nominal("a".into()));
            }
        }
        let items = rep.ratings.keys().cloned().collect();
        let dataset = AnnotationDataset {
            study_id: "const".into(),
            schema,
            items,
            repetitions: vec![rep],
        };
        let report = analyze(&dataset, &AnalysisOptions::default()).unwrap();
        assert!(report.degenerate_only());
        assert!(report.repetitions[0].alpha.is_none());
        assert_eq!(report.scorecard.per_repetition[0].agreement, Cell::Undefined);
        assert!(!report.diagnostics.is_empty());
    }

    #[test]
    fn xrr_matrix_is_square_and_symmetric() {
        let dataset = two_rep_dataset();
        let options = AnalysisOptions {
            with_power: false,
            ..AnalysisOptions::default()
        };
        let report = analyze(&dataset, &options).unwrap();
        let mut buf = Vec::new();
        write_xrr_matrix_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.trim().lines().collect();
        assert_eq!(rows.len(), 3); // header + 2 repetitions
        let r1: Vec<&str> = rows[1].split(',').collect();
        let r2: Vec<&str> = rows[2].split(',').collect();
        assert_eq!(r1[2], r2[1]); // symmetric off-diagonal
    }
}
