//! Distance functions and chance-corrected agreement coefficients.
//!
//! Krippendorff's alpha follows the coincidence-matrix convention: each
//! unit's within-unit pairs are weighted by 1/(m_u - 1), and the expected
//! disagreement pools all pairable values. A zero expected disagreement is
//! an explicit degenerate error, never alpha = 1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationValue, Repetition, ValueKind, ValueSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DistanceFunction {
    /// 0 if equal, 1 otherwise.
    Nominal,
    /// Squared cumulative-frequency distance between ranks; the schema
    /// supplies the rank order, frequencies are pooled per analysis.
    Ordinal(ValueSchema),
    /// Squared difference.
    Interval,
    /// 1 - Jaccard * monotonicity weight, for label sets.
    Masi,
}

impl DistanceFunction {
    /// Default distance for a schema kind.
    pub fn for_schema(schema: &ValueSchema) -> Self {
        match schema.kind {
            ValueKind::Nominal => DistanceFunction::Nominal,
            ValueKind::Ordinal => DistanceFunction::Ordinal(schema.clone()),
            ValueKind::Interval => DistanceFunction::Interval,
            ValueKind::LabelSet => DistanceFunction::Masi,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceFunction::Nominal => "nominal",
            DistanceFunction::Ordinal(_) => "ordinal",
            DistanceFunction::Interval => "interval",
            DistanceFunction::Masi => "masi",
        }
    }
}

/// MASI set distance: 1 - J(a,b) * M(a,b), where J is the Jaccard index and
/// M is 1 for equal sets, 2/3 for a strict subset, 1/3 for a partial
/// overlap, and 0 for disjoint sets.
pub fn masi_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("masi distance requires non-empty sets".into()));
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    let jaccard = intersection / union;
    let monotonicity = if a == b {
        1.0
    } else if a.is_subset(b) || b.is_subset(a) {
        2.0 / 3.0
    } else if intersection > 0.0 {
        1.0 / 3.0
    } else {
        0.0
    };
    Ok(1.0 - jaccard * monotonicity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    /// 1 - D_o / D_e.
    pub coefficient: f64,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    pub n_pairable_values: usize,
    pub n_units_used: usize,
    /// Units skipped because they had too few ratings (alpha: < 2,
    /// kappa: != 2).
    pub n_units_excluded: usize,
}

/// Distinct pairable values with pooled counts and a precomputed distance
/// matrix.
struct ValueTable {
    values: Vec<AnnotationValue>,
    counts: Vec<f64>,
    dist: Vec<Vec<f64>>,
}

impl ValueTable {
    fn build(counts: &BTreeMap<AnnotationValue, f64>, dist: &DistanceFunction) -> Result<Self> {
        let values: Vec<AnnotationValue> = counts.keys().cloned().collect();
        let pooled: Vec<f64> = counts.values().copied().collect();

        // Pooled frequency per rank for the ordinal distance.
        let rank_freqs: Option<(Vec<usize>, Vec<f64>)> = match dist {
            DistanceFunction::Ordinal(schema) => {
                let mut ranks = Vec::with_capacity(values.len());
                let mut freqs = vec![0.0; schema.categories.len()];
                for (value, &count) in values.iter().zip(&pooled) {
                    let category = match value {
                        AnnotationValue::Ordinal(c) | AnnotationValue::Nominal(c) => c,
                        other => {
                            return Err(Error::InvalidInput(format!(
                                "ordinal distance on non-categorical value {other:?}"
                            )))
                        }
                    };
                    let rank = schema.category_index(category).ok_or_else(|| {
                        Error::InvalidInput(format!("category '{category}' not in schema"))
                    })?;
                    ranks.push(rank);
                    freqs[rank] += count;
                }
                Some((ranks, freqs))
            }
            _ => None,
        };

        let n = values.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = match dist {
                    DistanceFunction::Nominal => {
                        if values[i] == values[j] {
                            0.0
                        } else {
                            1.0
                        }
                    }
                    DistanceFunction::Interval => {
                        let (a, b) = (
                            values[i].interval_value(),
                            values[j].interval_value(),
                        );
                        match (a, b) {
                            (Some(a), Some(b)) => (a - b) * (a - b),
                            _ => {
                                return Err(Error::InvalidInput(
                                    "interval distance on non-interval values".into(),
                                ))
                            }
                        }
                    }
                    DistanceFunction::Masi => {
                        let (a, b) = (&values[i], &values[j]);
                        match (a, b) {
                            (AnnotationValue::LabelSet(a), AnnotationValue::LabelSet(b)) => {
                                masi_distance(a, b)?
                            }
                            _ => {
                                return Err(Error::InvalidInput(
                                    "masi distance on non-label-set values".into(),
                                ))
                            }
                        }
                    }
                    DistanceFunction::Ordinal(_) => {
                        let (ranks, freqs) = rank_freqs.as_ref().expect("ordinal context");
                        let (lo, hi) = if ranks[i] <= ranks[j] {
                            (ranks[i], ranks[j])
                        } else {
                            (ranks[j], ranks[i])
                        };
                        let cumulative: f64 = freqs[lo..=hi].iter().sum();
                        let d = cumulative - (freqs[ranks[i]] + freqs[ranks[j]]) / 2.0;
                        d * d
                    }
                };
                matrix[i][j] = d;
                matrix[j][i] = d;
            }
        }
        Ok(Self {
            values,
            counts: pooled,
            dist: matrix,
        })
    }

    fn index_of(&self, value: &AnnotationValue) -> usize {
        self.values
            .binary_search_by(|v| v.cmp(value))
            .expect("value present in table")
    }
}

/// Krippendorff's alpha over one repetition.
pub fn krippendorff_alpha(rep: &Repetition, dist: &DistanceFunction) -> Result<AgreementResult> {
    // pairable units: >= 2 ratings
    let mut pooled: BTreeMap<AnnotationValue, f64> = BTreeMap::new();
    let mut units: Vec<&BTreeMap<String, AnnotationValue>> = Vec::new();
    let mut excluded = 0usize;
    for ratings in rep.ratings.values() {
        if ratings.len() >= 2 {
            for value in ratings.values() {
                *pooled.entry(value.clone()).or_insert(0.0) += 1.0;
            }
            units.push(ratings);
        } else {
            excluded += 1;
        }
    }
    if units.is_empty() {
        return Err(Error::InvalidInput(
            "no pairable unit: every item has fewer than 2 ratings".into(),
        ));
    }

    let table = ValueTable::build(&pooled, dist)?;
    let n_pairable: f64 = table.counts.iter().sum();

    // D_o: within-unit pairs, each unit weighted by 1/(m_u - 1)
    let mut observed = 0.0;
    for ratings in &units {
        let m = ratings.len() as f64;
        let mut unit_counts: BTreeMap<usize, f64> = BTreeMap::new();
        for value in ratings.values() {
            *unit_counts.entry(table.index_of(value)).or_insert(0.0) += 1.0;
        }
        let idx: Vec<(usize, f64)> = unit_counts.into_iter().collect();
        let mut unit_sum = 0.0;
        for (a, &(vi, ci)) in idx.iter().enumerate() {
            for &(vj, cj) in &idx[(a + 1)..] {
                unit_sum += 2.0 * ci * cj * table.dist[vi][vj];
            }
        }
        observed += unit_sum / (m - 1.0);
    }
    observed /= n_pairable;

    // D_e: all ordered pairs of distinct values in the pooled multiset
    let mut expected = 0.0;
    for i in 0..table.values.len() {
        for j in (i + 1)..table.values.len() {
            expected += 2.0 * table.counts[i] * table.counts[j] * table.dist[i][j];
        }
    }
    expected /= n_pairable * (n_pairable - 1.0);

    if expected <= 0.0 {
        return Err(Error::Degenerate(
            "all pairable values identical; expected disagreement is zero".into(),
        ));
    }

    Ok(AgreementResult {
        coefficient: 1.0 - observed / expected,
        observed_disagreement: observed,
        expected_disagreement: expected,
        n_pairable_values: n_pairable as usize,
        n_units_used: units.len(),
        n_units_excluded: excluded,
    })
}

/// Binarizes each rating to whether it equals/contains `category`, then
/// computes nominal alpha on the binary matrix.
pub fn per_category_alpha(rep: &Repetition, category: &str) -> Result<AgreementResult> {
    let mut binary = Repetition::new(rep.id.clone());
    for (item, ratings) in &rep.ratings {
        for (rater, value) in ratings {
            let chosen = match value {
                AnnotationValue::Nominal(c) | AnnotationValue::Ordinal(c) => c == category,
                AnnotationValue::LabelSet(set) => set.contains(category),
                AnnotationValue::Interval(_) => {
                    return Err(Error::InvalidInput(
                        "per-category alpha requires nominal or label-set ratings".into(),
                    ))
                }
            };
            binary.insert(
                item.clone(),
                rater.clone(),
                AnnotationValue::Nominal(if chosen { "1" } else { "0" }.into()),
            );
        }
    }
    krippendorff_alpha(&binary, &DistanceFunction::Nominal).map_err(|e| match e {
        Error::Degenerate(_) => Error::Degenerate(format!(
            "category '{category}' is constant across all pairable ratings"
        )),
        other => other,
    })
}

/// Distance-weighted Cohen's kappa for two raters per item. Items with a
/// rating count other than two are excluded and counted. Within an item the
/// rater with the lexicographically smaller id takes the first position.
pub fn weighted_cohen_kappa(rep: &Repetition, dist: &DistanceFunction) -> Result<AgreementResult> {
    let mut pairs: Vec<(&AnnotationValue, &AnnotationValue)> = Vec::new();
    let mut excluded = 0usize;
    for ratings in rep.ratings.values() {
        if ratings.len() == 2 {
            let mut it = ratings.values();
            let first = it.next().expect("two ratings");
            let second = it.next().expect("two ratings");
            pairs.push((first, second));
        } else {
            excluded += 1;
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "no unit with exactly two ratings".into(),
        ));
    }

    let mut pooled: BTreeMap<AnnotationValue, f64> = BTreeMap::new();
    for (a, b) in &pairs {
        *pooled.entry((*a).clone()).or_insert(0.0) += 1.0;
        *pooled.entry((*b).clone()).or_insert(0.0) += 1.0;
    }
    let table = ValueTable::build(&pooled, dist)?;

    let n = pairs.len() as f64;
    let observed: f64 = pairs
        .iter()
        .map(|(a, b)| table.dist[table.index_of(a)][table.index_of(b)])
        .sum::<f64>()
        / n;

    // marginal value multisets per rater position
    let mut first_counts: BTreeMap<usize, f64> = BTreeMap::new();
    let mut second_counts: BTreeMap<usize, f64> = BTreeMap::new();
    for (a, b) in &pairs {
        *first_counts.entry(table.index_of(a)).or_insert(0.0) += 1.0;
        *second_counts.entry(table.index_of(b)).or_insert(0.0) += 1.0;
    }
    let mut expected = 0.0;
    for (&vi, &ci) in &first_counts {
        for (&vj, &cj) in &second_counts {
            expected += ci * cj * table.dist[vi][vj];
        }
    }
    expected /= n * n;

    if expected <= 0.0 {
        return Err(Error::Degenerate(
            "both raters constant; expected disagreement is zero".into(),
        ));
    }

    Ok(AgreementResult {
        coefficient: 1.0 - observed / expected,
        observed_disagreement: observed,
        expected_disagreement: expected,
        n_pairable_values: 2 * pairs.len(),
        n_units_used: pairs.len(),
        n_units_excluded: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[&str]) -> BTreeSet<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn masi_examples() {
        assert_eq!(masi_distance(&set(&["x", "y"]), &set(&["x", "y"])).unwrap(), 0.0);
        assert_eq!(masi_distance(&set(&["x"]), &set(&["y"])).unwrap(), 1.0);
        let d = masi_distance(&set(&["x"]), &set(&["x", "y"])).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
        assert!(masi_distance(&set(&[]), &set(&["x"])).is_err());
    }

    #[test]
    fn masi_symmetry_and_range() {
        let pools = [set(&["a"]), set(&["a", "b"]), set(&["b", "c"]), set(&["d"])];
        for a in &pools {
            for b in &pools {
                let d = masi_distance(a, b).unwrap();
                let d2 = masi_distance(b, a).unwrap();
                assert_eq!(d, d2);
                assert!((0.0..=1.0).contains(&d));
                if a == b {
                    assert_eq!(d, 0.0);
                }
            }
        }
    }

    fn nominal_rep(rows: &[(&str, &str, &str)]) -> Repetition {
        let mut rep = Repetition::new("r1");
        for (item, rater, value) in rows {
            rep.insert(*item, *rater, AnnotationValue::Nominal((*value).into()));
        }
        rep
    }

    #[test]
    fn alpha_perfect_agreement() {
        let mut rows = Vec::new();
        for (i, value) in ["a", "b", "a", "b", "a"].iter().enumerate() {
            for rater in ["p", "q", "r"] {
                rows.push((format!("i{i}"), rater, *value));
            }
        }
        let mut rep = Repetition::new("r1");
        for (item, rater, value) in &rows {
            rep.insert(item.clone(), *rater, AnnotationValue::Nominal((*value).into()));
        }
        let result = krippendorff_alpha(&rep, &DistanceFunction::Nominal).unwrap();
        assert!((result.coefficient - 1.0).abs() < 1e-12);
        assert_eq!(result.n_units_used, 5);
    }

    #[test]
    fn alpha_constant_data_is_degenerate() {
        let rep = nominal_rep(&[
            ("i1", "p", "a"),
            ("i1", "q", "a"),
            ("i2", "p", "a"),
            ("i2", "q", "a"),
        ]);
        assert!(matches!(
            krippendorff_alpha(&rep, &DistanceFunction::Nominal).unwrap_err(),
            Error::Degenerate(_)
        ));
    }

    #[test]
    fn alpha_known_two_rater_value() {
        // Krippendorff's binary example: units with ratings
        // (0,0) (1,1) (0,1) (0,0) over two raters
        let rep = nominal_rep(&[
            ("i1", "p", "0"),
            ("i1", "q", "0"),
            ("i2", "p", "1"),
            ("i2", "q", "1"),
            ("i3", "p", "0"),
            ("i3", "q", "1"),
            ("i4", "p", "0"),
            ("i4", "q", "0"),
        ]);
        let result = krippendorff_alpha(&rep, &DistanceFunction::Nominal).unwrap();
        // D_o = 2/8; D_e = 2*5*3/(8*7)
        let expected = 1.0 - (2.0 / 8.0) / (30.0 / 56.0);
        assert!((result.coefficient - expected).abs() < 1e-12);
    }

    #[test]
    fn alpha_ignores_single_rating_units() {
        let base = nominal_rep(&[
            ("i1", "p", "a"),
            ("i1", "q", "b"),
            ("i2", "p", "a"),
            ("i2", "q", "a"),
        ]);
        let with_singleton = {
            let mut rep = base.clone();
            rep.insert("i3", "p", AnnotationValue::Nominal("b".into()));
            rep
        };
        let a = krippendorff_alpha(&base, &DistanceFunction::Nominal).unwrap();
        let b = krippendorff_alpha(&with_singleton, &DistanceFunction::Nominal).unwrap();
        assert!((a.coefficient - b.coefficient).abs() < 1e-12);
        assert_eq!(b.n_units_excluded, 1);
    }

    #[test]
    fn per_category_alpha_binarizes() {
        // category chosen by everyone on half the items, by no one on the rest
        let rep = nominal_rep(&[
            ("i1", "p", "x"),
            ("i1", "q", "x"),
            ("i2", "p", "y"),
            ("i2", "q", "y"),
        ]);
        let result = per_category_alpha(&rep, "x").unwrap();
        assert!((result.coefficient - 1.0).abs() < 1e-12);
        // never-chosen category is degenerate
        assert!(matches!(
            per_category_alpha(&rep, "z").unwrap_err(),
            Error::Degenerate(_)
        ));
    }

    #[test]
    fn kappa_identical_raters() {
        let mut rep = Repetition::new("r1");
        for (i, labels) in [["joy"], ["fear"], ["joy"]].iter().enumerate() {
            for rater in ["p", "q"] {
                rep.insert(
                    format!("i{i}"),
                    rater,
                    AnnotationValue::LabelSet(set(labels.as_slice())),
                );
            }
        }
        let result = weighted_cohen_kappa(&rep, &DistanceFunction::Masi).unwrap();
        assert!((result.coefficient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_constant_raters_degenerate() {
        let mut rep = Repetition::new("r1");
        for i in 0..4 {
            for rater in ["p", "q"] {
                rep.insert(
                    format!("i{i}"),
                    rater,
                    AnnotationValue::LabelSet(set(&["joy"])),
                );
            }
        }
        assert!(matches!(
            weighted_cohen_kappa(&rep, &DistanceFunction::Masi).unwrap_err(),
            Error::Degenerate(_)
        ));
    }

    #[test]
    fn kappa_excludes_non_pair_units() {
        let mut rep = Repetition::new("r1");
        rep.insert("i1", "p", AnnotationValue::LabelSet(set(&["joy"])));
        rep.insert("i1", "q", AnnotationValue::LabelSet(set(&["fear"])));
        rep.insert("i2", "p", AnnotationValue::LabelSet(set(&["joy"])));
        rep.insert("i2", "q", AnnotationValue::LabelSet(set(&["joy", "fear"])));
        rep.insert("i3", "p", AnnotationValue::LabelSet(set(&["joy"])));
        let result = weighted_cohen_kappa(&rep, &DistanceFunction::Masi).unwrap();
        assert_eq!(result.n_units_used, 2);
        assert_eq!(result.n_units_excluded, 1);
    }

    #[test]
    fn interval_alpha_affine_invariance() {
        let mut rep = Repetition::new("r1");
        let data = [
            ("i1", "p", 1.0),
            ("i1", "q", 2.0),
            ("i2", "p", 4.0),
            ("i2", "q", 4.5),
            ("i3", "p", 0.5),
            ("i3", "q", 1.5),
        ];
        for (item, rater, v) in data {
            rep.insert(item, rater, AnnotationValue::interval(v));
        }
        let base = krippendorff_alpha(&rep, &DistanceFunction::Interval).unwrap();
        let mut shifted = Repetition::new("r1");
        for (item, rater, v) in data {
            shifted.insert(item, rater, AnnotationValue::interval(3.0 * v - 7.0));
        }
        let transformed = krippendorff_alpha(&shifted, &DistanceFunction::Interval).unwrap();
        assert!((base.coefficient - transformed.coefficient).abs() < 1e-9);
    }
}
