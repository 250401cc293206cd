//! Cross-repetition metrics: stability (Spearman rank correlation,
//! chi-squared test of independence over majority votes) and replicability
//! similarity (cross-replication reliability, xRR).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::DistanceFunction;
use crate::dataset::{AnnotationValue, Repetition};
use crate::error::{Error, Result};
use crate::numerics::{average_ranks, chi2_sf, student_t_sf_two_sided, TailProbability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    Spearman,
    Chi2Independence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStability {
    pub pair: (String, String),
    pub method: StabilityMethod,
    pub statistic: f64,
    /// Degrees of freedom (chi-squared method only).
    pub df: Option<u64>,
    pub p: TailProbability,
    /// Number of items compared.
    pub n: usize,
    /// Set when any expected cell count is below 5.
    pub low_expected_count_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrrResult {
    pub pair: (String, String),
    pub xrr: f64,
    pub cross_observed_disagreement: f64,
    pub cross_expected_disagreement: f64,
    /// Within-repetition agreement of each side, for side-by-side rendering.
    pub irr_a: Option<f64>,
    pub irr_b: Option<f64>,
}

/// Spearman's rank correlation with average ranks for ties; the p-value uses
/// the t-approximation with n - 2 degrees of freedom, two-sided, computed in
/// log space for extreme values.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, TailProbability)> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("spearman inputs differ in length".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput("spearman requires n >= 3".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (n as f64 + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "constant aggregate: zero rank variance".into(),
        ));
    }
    let rho = sxy / (sxx.sqrt() * syy.sqrt());
    let rho = rho.clamp(-1.0, 1.0);
    let p = if (1.0 - rho * rho) <= 0.0 {
        TailProbability { p: 0.0, log10p: f64::NEG_INFINITY }
    } else {
        let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        student_t_sf_two_sided(t, n as f64 - 2.0)?
    };
    Ok((rho, p))
}

/// Chi-squared test of independence over two per-item category vectors
/// (typically majority votes computed with the same master seed).
pub fn chi2_independence(
    votes_a: &BTreeMap<String, String>,
    votes_b: &BTreeMap<String, String>,
) -> Result<(f64, u64, TailProbability, bool)> {
    let shared: Vec<&String> = votes_a.keys().filter(|k| votes_b.contains_key(*k)).collect();
    if shared.is_empty() {
        return Err(Error::InvalidInput("no shared items".into()));
    }
    let mut row_labels: Vec<&String> = Vec::new();
    let mut col_labels: Vec<&String> = Vec::new();
    for item in &shared {
        let a = &votes_a[*item];
        let b = &votes_b[*item];
        if !row_labels.contains(&a) {
            row_labels.push(a);
        }
        if !col_labels.contains(&b) {
            col_labels.push(b);
        }
    }
    row_labels.sort();
    col_labels.sort();
    if row_labels.len() < 2 || col_labels.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than 2 observed categories in a vote vector".into(),
        ));
    }
    let (r, c) = (row_labels.len(), col_labels.len());
    let mut table = vec![vec![0.0f64; c]; r];
    for item in &shared {
        let i = row_labels.iter().position(|l| *l == &votes_a[*item]).expect("row");
        let j = col_labels.iter().position(|l| *l == &votes_b[*item]).expect("col");
        table[i][j] += 1.0;
    }
    let total = shared.len() as f64;
    let row_sums: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let mut stat = 0.0;
    let mut low_expected = false;
    for i in 0..r {
        for j in 0..c {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected < 5.0 {
                low_expected = true;
            }
            if expected > 0.0 {
                let diff = table[i][j] - expected;
                stat += diff * diff / expected;
            }
        }
    }
    let df = ((r - 1) * (c - 1)) as u64;
    let p = chi2_sf(stat, df)?;
    Ok((stat, df, p, low_expected))
}

/// Cross-replication reliability between two repetitions over their shared
/// items. Observed disagreement averages per-item mean cross distances with
/// equal item weights; expected disagreement averages over the full cross
/// product of the pooled value multisets.
pub fn xrr(
    rep_a: &Repetition,
    rep_b: &Repetition,
    dist: &DistanceFunction,
) -> Result<XrrResult> {
    let shared: Vec<&String> = rep_a
        .ratings
        .keys()
        .filter(|item| {
            rep_b.item_ratings(item).is_some_and(|m| !m.is_empty())
                && rep_a.item_ratings(item).is_some_and(|m| !m.is_empty())
        })
        .collect();
    if shared.is_empty() {
        return Err(Error::InvalidInput("no shared items between repetitions".into()));
    }

    let delta = pairwise_distance_fn(dist, rep_a, rep_b, &shared)?;

    let mut observed = 0.0;
    for item in &shared {
        let a_values: Vec<&AnnotationValue> =
            rep_a.item_ratings(item).expect("shared").values().collect();
        let b_values: Vec<&AnnotationValue> =
            rep_b.item_ratings(item).expect("shared").values().collect();
        let mut item_sum = 0.0;
        for a in &a_values {
            for b in &b_values {
                item_sum += delta(a, b)?;
            }
        }
        observed += item_sum / (a_values.len() * b_values.len()) as f64;
    }
    observed /= shared.len() as f64;

    // pooled cross product, grouped by distinct value for efficiency
    let pool = |rep: &Repetition| -> BTreeMap<AnnotationValue, f64> {
        let mut counts = BTreeMap::new();
        for item in &shared {
            if let Some(ratings) = rep.item_ratings(item) {
                for value in ratings.values() {
                    *counts.entry(value.clone()).or_insert(0.0) += 1.0;
                }
            }
        }
        counts
    };
    let pool_a = pool(rep_a);
    let pool_b = pool(rep_b);
    let total_a: f64 = pool_a.values().sum();
    let total_b: f64 = pool_b.values().sum();
    let mut expected = 0.0;
    for (a, ca) in &pool_a {
        for (b, cb) in &pool_b {
            expected += ca * cb * delta(a, b)?;
        }
    }
    expected /= total_a * total_b;

    if expected <= 0.0 {
        return Err(Error::Degenerate(
            "all cross values identical; expected disagreement is zero".into(),
        ));
    }

    Ok(XrrResult {
        pair: (rep_a.id.clone(), rep_b.id.clone()),
        xrr: 1.0 - observed / expected,
        cross_observed_disagreement: observed,
        cross_expected_disagreement: expected,
        irr_a: None,
        irr_b: None,
    })
}

/// Builds the pairwise distance closure; the ordinal variant pools rank
/// frequencies over both repetitions' shared-item values.
fn pairwise_distance_fn<'a>(
    dist: &'a DistanceFunction,
    rep_a: &Repetition,
    rep_b: &Repetition,
    shared: &[&String],
) -> Result<impl Fn(&AnnotationValue, &AnnotationValue) -> Result<f64> + 'a> {
    let rank_freqs: Option<Vec<f64>> = match dist {
        DistanceFunction::Ordinal(schema) => {
            let mut freqs = vec![0.0; schema.categories.len()];
            for rep in [rep_a, rep_b] {
                for item in shared {
                    if let Some(ratings) = rep.item_ratings(item) {
                        for value in ratings.values() {
                            if let AnnotationValue::Ordinal(c) | AnnotationValue::Nominal(c) =
                                value
                            {
                                if let Some(rank) = schema.category_index(c) {
                                    freqs[rank] += 1.0;
                                }
                            }
                        }
                    }
                }
            }
            Some(freqs)
        }
        _ => None,
    };
    Ok(move |a: &AnnotationValue, b: &AnnotationValue| -> Result<f64> {
        match dist {
            DistanceFunction::Nominal => Ok(if a == b { 0.0 } else { 1.0 }),
            DistanceFunction::Interval => match (a.interval_value(), b.interval_value()) {
                (Some(a), Some(b)) => Ok((a - b) * (a - b)),
                _ => Err(Error::InvalidInput(
                    "interval distance on non-interval values".into(),
                )),
            },
            DistanceFunction::Masi => match (a, b) {
                (AnnotationValue::LabelSet(a), AnnotationValue::LabelSet(b)) => {
                    crate::agreement::masi_distance(a, b)
                }
                _ => Err(Error::InvalidInput(
                    "masi distance on non-label-set values".into(),
                )),
            },
            DistanceFunction::Ordinal(schema) => {
                let freqs = rank_freqs.as_ref().expect("ordinal context");
                let rank = |v: &AnnotationValue| -> Result<usize> {
                    match v {
                        AnnotationValue::Ordinal(c) | AnnotationValue::Nominal(c) => schema
                            .category_index(c)
                            .ok_or_else(|| {
                                Error::InvalidInput(format!("category '{c}' not in schema"))
                            }),
                        other => Err(Error::InvalidInput(format!(
                            "ordinal distance on non-categorical value {other:?}"
                        ))),
                    }
                };
                let (ra, rb) = (rank(a)?, rank(b)?);
                let (lo, hi) = if ra <= rb { (ra, rb) } else { (rb, ra) };
                let cumulative: f64 = freqs[lo..=hi].iter().sum();
                let d = cumulative - (freqs[ra] + freqs[rb]) / 2.0;
                Ok(d * d)
            }
        }
    })
}

/// xRR scaled by the geometric mean of the two within-pool agreements.
pub fn normalized_xrr(x: &XrrResult) -> Result<f64> {
    match (x.irr_a, x.irr_b) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Ok(x.xrr / (a * b).sqrt()),
        _ => Err(Error::InvalidInput(
            "normalized xRR requires positive IRR values for both repetitions".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_perfect_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (rho, _) = spearman(&x, &y).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let (rho, _) = spearman(&x, &rev).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_rank_pearson_oracle_with_ties() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0];
        let (rho, _) = spearman(&x, &y).unwrap();
        // independent oracle: rank both, then Pearson on the ranks
        let rx = average_ranks(&x);
        let ry = average_ranks(&y);
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let da: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
        let db: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
        assert!((rho - num / (da * db)).abs() < 1e-12);
    }

    #[test]
    fn spearman_constant_vector_is_degenerate() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(spearman(&x, &y).unwrap_err(), Error::Degenerate(_)));
    }

    #[test]
    fn spearman_monotone_transform_invariance() {
        let x = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2];
        let y = [1.0, 3.0, 0.5, 2.0, 2.5, 0.8];
        let (rho, _) = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0).collect();
        let (rho2, _) = spearman(&tx, &ty).unwrap();
        assert!((rho - rho2).abs() < 1e-12);
    }

    fn votes(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(i, c)| (i.to_string(), c.to_string()))
            .collect()
    }

    #[test]
    fn chi2_diagonal_table() {
        // 20 items: 10 where both vote "a", 10 where both vote "b"
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..10 {
            a.push((format!("x{i}"), "a"));
            b.push((format!("x{i}"), "a"));
        }
        for i in 10..20 {
            a.push((format!("x{i}"), "b"));
            b.push((format!("x{i}"), "b"));
        }
        let va: BTreeMap<String, String> =
            a.into_iter().map(|(i, c)| (i, c.to_string())).collect();
        let vb: BTreeMap<String, String> =
            b.into_iter().map(|(i, c)| (i, c.to_string())).collect();
        let (stat, df, p, _) = chi2_independence(&va, &vb).unwrap();
        assert!((stat - 20.0).abs() < 1e-9);
        assert_eq!(df, 1);
        assert!((p.p - 7.74e-6).abs() / 7.74e-6 < 0.01, "p = {}", p.p);
    }

    #[test]
    fn chi2_exact_independence() {
        // [[5,5],[5,5]]
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..20 {
            a.push((format!("x{i:02}"), if i < 10 { "a" } else { "b" }));
            b.push((format!("x{i:02}"), if i % 2 == 0 { "a" } else { "b" }));
        }
        let va = votes(&a.iter().map(|(i, c)| (i.as_str(), *c)).collect::<Vec<_>>());
        let vb = votes(&b.iter().map(|(i, c)| (i.as_str(), *c)).collect::<Vec<_>>());
        let (stat, _, p, warn) = chi2_independence(&va, &vb).unwrap();
        assert!(stat.abs() < 1e-9);
        assert_eq!(p.p, 1.0);
        assert!(!warn); // every expected cell is exactly 5, not below
    }

    #[test]
    fn chi2_transpose_symmetry() {
        let va = votes(&[
            ("i1", "a"),
            ("i2", "b"),
            ("i3", "a"),
            ("i4", "c"),
            ("i5", "b"),
            ("i6", "a"),
        ]);
        let vb = votes(&[
            ("i1", "x"),
            ("i2", "y"),
            ("i3", "y"),
            ("i4", "x"),
            ("i5", "x"),
            ("i6", "y"),
        ]);
        let (s1, d1, _, _) = chi2_independence(&va, &vb).unwrap();
        let (s2, d2, _, _) = chi2_independence(&vb, &va).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        assert_eq!(d1, d2);
    }

    fn nominal_rep(id: &str, rows: &[(&str, &str, &str)]) -> Repetition {
        let mut rep = Repetition::new(id);
        for (item, rater, value) in rows {
            rep.insert(*item, *rater, AnnotationValue::Nominal((*value).into()));
        }
        rep
    }

    #[test]
    fn xrr_perfect_cross_agreement() {
        let a = nominal_rep("A", &[("i1", "p", "x"), ("i1", "q", "x"), ("i2", "p", "y"), ("i2", "q", "y")]);
        let b = nominal_rep("B", &[("i1", "r", "x"), ("i1", "s", "x"), ("i2", "r", "y"), ("i2", "s", "y")]);
        let result = xrr(&a, &b, &DistanceFunction::Nominal).unwrap();
        assert!((result.xrr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xrr_constant_data_degenerate() {
        let a = nominal_rep("A", &[("i1", "p", "x"), ("i2", "p", "x")]);
        let b = nominal_rep("B", &[("i1", "r", "x"), ("i2", "r", "x")]);
        assert!(matches!(
            xrr(&a, &b, &DistanceFunction::Nominal).unwrap_err(),
            Error::Degenerate(_)
        ));
    }

    #[test]
    fn xrr_is_symmetric() {
        let a = nominal_rep(
            "A",
            &[("i1", "p", "x"), ("i1", "q", "y"), ("i2", "p", "y"), ("i2", "q", "y"), ("i3", "p", "x")],
        );
        let b = nominal_rep(
            "B",
            &[("i1", "r", "y"), ("i2", "r", "x"), ("i2", "s", "y"), ("i3", "r", "x"), ("i3", "s", "x")],
        );
        let ab = xrr(&a, &b, &DistanceFunction::Nominal).unwrap();
        let ba = xrr(&b, &a, &DistanceFunction::Nominal).unwrap();
        assert_eq!(ab.xrr, ba.xrr);
        assert_eq!(ab.cross_observed_disagreement, ba.cross_observed_disagreement);
    }

    #[test]
    fn normalized_xrr_examples() {
        let mut result = XrrResult {
            pair: ("a".into(), "b".into()),
            xrr: 0.5,
            cross_observed_disagreement: 0.0,
            cross_expected_disagreement: 1.0,
            irr_a: Some(0.5),
            irr_b: Some(0.5),
        };
        assert!((normalized_xrr(&result).unwrap() - 1.0).abs() < 1e-12);
        result.xrr = 0.3;
        result.irr_a = Some(0.4);
        result.irr_b = Some(0.9);
        assert!((normalized_xrr(&result).unwrap() - 0.5).abs() < 1e-12);
        result.xrr = 0.0;
        assert_eq!(normalized_xrr(&result).unwrap(), 0.0);
        result.irr_a = Some(0.0);
        assert!(normalized_xrr(&result).is_err());
    }
}
