//! Bootstrap power analysis: smallest rater count for which the sampling
//! variability of the agreement score passes a one-variance chi-squared
//! test against a threshold sigma0.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::agreement::{krippendorff_alpha, DistanceFunction};
use crate::dataset::Repetition;
use crate::error::{Error, Result};
use crate::numerics::chi2_sf;
use crate::seed;

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_SIGMA0: f64 = 0.01;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Fraction of degenerate bootstrap runs above which a rater count is
/// flagged unreliable.
const DEGENERATE_RUN_LIMIT: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRaterCount {
    pub k: usize,
    /// Alpha per run; None where the subsample was degenerate.
    pub alpha_samples: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
    pub chi2_stat: f64,
    pub p_value: f64,
    pub accepted: bool,
    pub n_degenerate_runs: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerParameters {
    pub runs: usize,
    pub sigma0: f64,
    pub significance: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAnalysisResult {
    pub per_k: Vec<PerRaterCount>,
    /// Smallest accepted rater count, if any.
    pub optimal_k: Option<usize>,
    pub parameters: PowerParameters,
}

/// One bootstrap distribution of alpha at rater count `k`. Per item and per
/// run, min(k, m_item) raters are sampled without replacement; degenerate
/// subsamples are reported as None. Per-run sub-seeds are derived from
/// (master, k, run index), so results do not depend on execution order.
pub fn bootstrap_alphas(
    rep: &Repetition,
    k: usize,
    runs: usize,
    dist: &DistanceFunction,
    master_seed: u64,
) -> Result<Vec<Option<f64>>> {
    if k < 3 {
        return Err(Error::InvalidInput("bootstrap requires k >= 3".into()));
    }
    if runs < 2 {
        return Err(Error::InvalidInput("bootstrap requires at least 2 runs".into()));
    }
    let mut samples = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut sub = Repetition::new(rep.id.clone());
        for (item, ratings) in &rep.ratings {
            let raters: Vec<&String> = ratings.keys().collect();
            let take = k.min(raters.len());
            if take == 0 {
                continue;
            }
            let mut rng = seed::rng_for(
                master_seed,
                &[
                    rep.id.as_bytes(),
                    &(k as u64).to_le_bytes(),
                    &(run as u64).to_le_bytes(),
                    item.as_bytes(),
                ],
            );
            for idx in sample(&mut rng, raters.len(), take) {
                let rater = raters[idx];
                sub.insert(item.clone(), rater.clone(), ratings[rater].clone());
            }
        }
        match krippendorff_alpha(&sub, dist) {
            Ok(result) => samples.push(Some(result.coefficient)),
            Err(Error::Degenerate(_)) => samples.push(None),
            Err(e) => return Err(e),
        }
    }
    if samples.iter().all(|s| s.is_none()) {
        return Err(Error::Degenerate(
            "every bootstrap run was degenerate".into(),
        ));
    }
    Ok(samples)
}

/// Right-tailed one-variance chi-squared test.
/// T = (n - 1) s^2 / sigma0^2 against chi-squared with n - 1 df;
/// accepted (H0 not rejected) iff p >= significance.
pub fn variance_test(
    samples: &[f64],
    sigma0: f64,
    significance: f64,
) -> Result<(f64, f64, bool)> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("variance test requires >= 2 samples".into()));
    }
    if sigma0 <= 0.0 {
        return Err(Error::InvalidInput("sigma0 must be positive".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sample_var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let stat = (n - 1.0) * sample_var / (sigma0 * sigma0);
    let p = chi2_sf(stat, samples.len() as u64 - 1)?.p;
    Ok((stat, p, p >= significance))
}

/// Bootstraps every rater count in [3 .. max raters per item] and returns
/// the smallest accepted one.
pub fn optimal_raters(
    rep: &Repetition,
    dist: &DistanceFunction,
    runs: usize,
    sigma0: f64,
    significance: f64,
    master_seed: u64,
) -> Result<PowerAnalysisResult> {
    let max_k = rep.max_raters_per_item();
    if max_k < 3 {
        return Err(Error::InvalidInput(
            "power analysis requires an item with at least 3 raters".into(),
        ));
    }
    let mut per_k = Vec::new();
    let mut optimal = None;
    for k in 3..=max_k {
        let samples = bootstrap_alphas(rep, k, runs, dist, master_seed)?;
        let valid: Vec<f64> = samples.iter().flatten().copied().collect();
        let n_degenerate = samples.len() - valid.len();
        let unreliable = n_degenerate as f64 / samples.len() as f64 > DEGENERATE_RUN_LIMIT;
        let (stat, p, accepted) = variance_test(&valid, sigma0, significance)?;
        let mean = valid.iter().sum::<f64>() / valid.len() as f64;
        let std = {
            let var = valid
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (valid.len() as f64 - 1.0);
            var.sqrt()
        };
        if accepted && !unreliable && optimal.is_none() {
            optimal = Some(k);
        }
        per_k.push(PerRaterCount {
            k,
            alpha_samples: samples,
            mean,
            std,
            chi2_stat: stat,
            p_value: p,
            accepted,
            n_degenerate_runs: n_degenerate,
            unreliable,
        });
    }
    Ok(PowerAnalysisResult {
        per_k,
        optimal_k: optimal,
        parameters: PowerParameters {
            runs,
            sigma0,
            significance,
            master_seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AnnotationValue;

    fn perfect_rep(n_items: usize, n_raters: usize) -> Repetition {
        let mut rep = Repetition::new("r1");
        for i in 0..n_items {
            let value = if i % 2 == 0 { "a" } else { "b" };
            for r in 0..n_raters {
                rep.insert(
                    format!("i{i}"),
                    format!("p{r}"),
                    AnnotationValue::Nominal(value.into()),
                );
            }
        }
        rep
    }

    #[test]
    fn perfect_agreement_samples_are_all_one() {
        let rep = perfect_rep(6, 5);
        let samples = bootstrap_alphas(&rep, 3, 10, &DistanceFunction::Nominal, 1).unwrap();
        for s in samples {
            assert!((s.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_k_reproduces_full_alpha() {
        // noisy data, but k >= max raters: every run sees the full matrix
        let mut rep = perfect_rep(6, 4);
        rep.insert("i0", "p0", AnnotationValue::Nominal("b".into()));
        let full = krippendorff_alpha(&rep, &DistanceFunction::Nominal).unwrap();
        let samples = bootstrap_alphas(&rep, 10, 5, &DistanceFunction::Nominal, 7).unwrap();
        for s in samples {
            assert!((s.unwrap() - full.coefficient).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let mut rep = perfect_rep(8, 6);
        rep.insert("i1", "p0", AnnotationValue::Nominal("a".into()));
        let a = bootstrap_alphas(&rep, 3, 20, &DistanceFunction::Nominal, 99).unwrap();
        let b = bootstrap_alphas(&rep, 3, 20, &DistanceFunction::Nominal, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_test_all_equal() {
        let samples = vec![0.5; 10];
        let (stat, p, accepted) = variance_test(&samples, 0.01, 0.05).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
        assert!(accepted);
    }

    #[test]
    fn variance_test_large_spread_rejected() {
        // n = 100, sample std 0.02 against sigma0 0.01 -> T = 396
        let samples = spread_samples(100, 0.02);
        let (stat, p, accepted) = variance_test(&samples, 0.01, 0.05).unwrap();
        assert!((stat - 396.0).abs() < 1e-6, "stat = {stat}");
        assert!(p < 1e-10);
        assert!(!accepted);
    }

    #[test]
    fn variance_test_at_sigma0_accepted() {
        // n = 100, sample std exactly sigma0 -> T = 99, p near 0.48
        let samples = spread_samples(100, 0.01);
        let (stat, p, accepted) = variance_test(&samples, 0.01, 0.05).unwrap();
        assert!((stat - 99.0).abs() < 1e-6);
        assert!(p > 0.4 && p < 0.6, "p = {p}");
        assert!(accepted);
    }

    /// n samples alternating around 0.5 with sample std (n-1 denominator)
    /// exactly `std`.
    fn spread_samples(n: usize, std: f64) -> Vec<f64> {
        let c = std * ((n as f64 - 1.0) / n as f64).sqrt();
        (0..n)
            .map(|i| if i % 2 == 0 { 0.5 + c } else { 0.5 - c })
            .collect()
    }

    #[test]
    fn optimal_k_is_three_for_perfect_data() {
        let rep = perfect_rep(6, 6);
        let result =
            optimal_raters(&rep, &DistanceFunction::Nominal, 10, 0.01, 0.05, 3).unwrap();
        assert_eq!(result.optimal_k, Some(3));
        for entry in &result.per_k {
            assert_eq!(entry.std, 0.0);
        }
    }
}
