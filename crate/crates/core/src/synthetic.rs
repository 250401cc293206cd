//! Seed-deterministic simulator of annotation campaigns: one latent true
//! value per item, raters report it through a noise model, optionally with
//! a systematic pool shift applied to selected repetitions.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    AnnotationDataset, AnnotationValue, Repetition, ValueKind, ValueSchema,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// With probability `flip_prob`, replace the true category by a uniform
    /// draw over the other K - 1 categories.
    NominalFlip { flip_prob: f64 },
    /// Add zero-mean gaussian noise, clamped to the schema bounds.
    IntervalGaussian { sigma: f64 },
    /// Flip each label's membership independently with `flip_prob`.
    LabelSetFlip { flip_prob: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolShiftEffect {
    /// Bijective category relabeling applied to reported values.
    CategoryPermutation(BTreeMap<String, String>),
    /// Additive offset on interval values.
    Offset(f64),
}

/// Systematic bias applied to whole repetitions (by zero-based index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolShift {
    pub repetitions: Vec<usize>,
    pub effect: PoolShiftEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_items: usize,
    pub n_raters: usize,
    pub schema: ValueSchema,
    pub noise: NoiseModel,
    #[serde(default)]
    pub pool_shift: Option<PoolShift>,
    #[serde(default)]
    pub missing_prob: f64,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.n_items == 0 || self.n_raters == 0 {
            return Err(Error::InvalidInput("n_items and n_raters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_prob) {
            return Err(Error::InvalidInput("missing_prob must be in [0, 1)".into()));
        }
        match &self.noise {
            NoiseModel::NominalFlip { flip_prob } | NoiseModel::LabelSetFlip { flip_prob } => {
                if !(0.0..=1.0).contains(flip_prob) {
                    return Err(Error::InvalidInput("flip_prob must be in [0, 1]".into()));
                }
            }
            NoiseModel::IntervalGaussian { sigma } => {
                if *sigma < 0.0 {
                    return Err(Error::InvalidInput("sigma must be >= 0".into()));
                }
            }
        }
        if self.schema.kind != ValueKind::Interval && self.schema.categories.len() < 2 {
            return Err(Error::InvalidInput(
                "degenerate schema: need at least 2 categories".into(),
            ));
        }
        if let Some(shift) = &self.pool_shift {
            if let PoolShiftEffect::CategoryPermutation(map) = &shift.effect {
                let domain: BTreeSet<&String> = map.keys().collect();
                let image: BTreeSet<&String> = map.values().collect();
                let categories: BTreeSet<&String> = self.schema.categories.iter().collect();
                if domain != categories || image != categories {
                    return Err(Error::InvalidInput(
                        "category permutation must be a bijection over the schema categories"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64) {
        self.schema.bounds.unwrap_or((0.0, 1.0))
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_truth(spec: &PopulationSpec, rng: &mut impl Rng) -> AnnotationValue {
    match spec.schema.kind {
        ValueKind::Nominal => {
            let idx = rng.random_range(0..spec.schema.categories.len());
            AnnotationValue::Nominal(spec.schema.categories[idx].clone())
        }
        ValueKind::Ordinal => {
            let idx = rng.random_range(0..spec.schema.categories.len());
            AnnotationValue::Ordinal(spec.schema.categories[idx].clone())
        }
        ValueKind::Interval => {
            let (min, max) = spec.bounds();
            let v = min + rng.random::<f64>() * (max - min);
            AnnotationValue::interval(snap(spec, v))
        }
        ValueKind::LabelSet => {
            let mut set = BTreeSet::new();
            for category in &spec.schema.categories {
                if rng.random_bool(0.5) {
                    set.insert(category.clone());
                }
            }
            if set.is_empty() {
                let idx = rng.random_range(0..spec.schema.categories.len());
                set.insert(spec.schema.categories[idx].clone());
            }
            AnnotationValue::LabelSet(set)
        }
    }
}

fn snap(spec: &PopulationSpec, v: f64) -> f64 {
    let (min, max) = spec.bounds();
    let v = v.clamp(min, max);
    match spec.schema.increment {
        Some(inc) => {
            let steps = ((v - min) / inc).round();
            (min + steps * inc).clamp(min, max)
        }
        None => v,
    }
}

fn corrupt(spec: &PopulationSpec, truth: &AnnotationValue, rng: &mut impl Rng) -> AnnotationValue {
    match (&spec.noise, truth) {
        (NoiseModel::NominalFlip { flip_prob }, AnnotationValue::Nominal(c))
        | (NoiseModel::NominalFlip { flip_prob }, AnnotationValue::Ordinal(c)) => {
            let categories = &spec.schema.categories;
            if *flip_prob > 0.0 && rng.random_bool(*flip_prob) {
                let current = spec.schema.category_index(c).expect("truth in schema");
                let other = {
                    let mut idx = rng.random_range(0..categories.len() - 1);
                    if idx >= current {
                        idx += 1;
                    }
                    idx
                };
                match truth {
                    AnnotationValue::Ordinal(_) => AnnotationValue::Ordinal(categories[other].clone()),
                    _ => AnnotationValue::Nominal(categories[other].clone()),
                }
            } else {
                truth.clone()
            }
        }
        (NoiseModel::IntervalGaussian { sigma }, AnnotationValue::Interval(_)) => {
            let v = truth.interval_value().expect("interval truth");
            AnnotationValue::interval(snap(spec, v + sigma * gaussian(rng)))
        }
        (NoiseModel::LabelSetFlip { flip_prob }, AnnotationValue::LabelSet(truth_set)) => {
            let mut set = BTreeSet::new();
            for category in &spec.schema.categories {
                let mut member = truth_set.contains(category);
                if *flip_prob > 0.0 && rng.random_bool(*flip_prob) {
                    member = !member;
                }
                if member {
                    set.insert(category.clone());
                }
            }
            if set.is_empty() {
                let idx = rng.random_range(0..spec.schema.categories.len());
                set.insert(spec.schema.categories[idx].clone());
            }
            AnnotationValue::LabelSet(set)
        }
        _ => truth.clone(),
    }
}

fn apply_shift(effect: &PoolShiftEffect, spec: &PopulationSpec, value: AnnotationValue) -> AnnotationValue {
    match (effect, value) {
        (PoolShiftEffect::CategoryPermutation(map), AnnotationValue::Nominal(c)) => {
            AnnotationValue::Nominal(map[&c].clone())
        }
        (PoolShiftEffect::CategoryPermutation(map), AnnotationValue::Ordinal(c)) => {
            AnnotationValue::Ordinal(map[&c].clone())
        }
        (PoolShiftEffect::CategoryPermutation(map), AnnotationValue::LabelSet(set)) => {
            AnnotationValue::LabelSet(set.into_iter().map(|c| map[&c].clone()).collect())
        }
        (PoolShiftEffect::Offset(offset), value @ AnnotationValue::Interval(_)) => {
            let v = value.interval_value().expect("interval value");
            AnnotationValue::interval(snap(spec, v + offset))
        }
        (_, value) => value,
    }
}

/// Generates a dataset with `n_repetitions` independent repetitions over a
/// single latent truth assignment. Deterministic per seed; seeds are derived
/// per (repetition, item, rater), so generation order is irrelevant.
pub fn generate(spec: &PopulationSpec, n_repetitions: usize) -> Result<AnnotationDataset> {
    spec.validate()?;
    if n_repetitions == 0 {
        return Err(Error::InvalidInput("need at least one repetition".into()));
    }

    let item_ids: Vec<String> = (0..spec.n_items).map(|i| format!("item{i:04}")).collect();
    let truths: Vec<AnnotationValue> = item_ids
        .iter()
        .map(|item| {
            let mut rng = seed::rng_for(spec.seed, &[b"truth", item.as_bytes()]);
            draw_truth(spec, &mut rng)
        })
        .collect();

    let mut repetitions = Vec::with_capacity(n_repetitions);
    for rep_index in 0..n_repetitions {
        let rep_id = format!("R{}", rep_index + 1);
        let shift = spec.pool_shift.as_ref().filter(|s| s.repetitions.contains(&rep_index));
        let mut rep = Repetition::new(rep_id.clone());
        for (item, truth) in item_ids.iter().zip(&truths) {
            for r in 0..spec.n_raters {
                let rater = format!("rater{r:03}");
                let mut rng = seed::rng_for(
                    spec.seed,
                    &[b"rating", rep_id.as_bytes(), item.as_bytes(), rater.as_bytes()],
                );
                if spec.missing_prob > 0.0 && rng.random_bool(spec.missing_prob) {
                    continue;
                }
                let mut value = corrupt(spec, truth, &mut rng);
                if let Some(shift) = shift {
                    value = apply_shift(&shift.effect, spec, value);
                }
                rep.insert(item.clone(), rater.clone(), value);
            }
        }
        repetitions.push(rep);
    }

    let dataset = AnnotationDataset {
        study_id: "synthetic".into(),
        schema: spec.schema.clone(),
        items: item_ids.into_iter().collect(),
        repetitions,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn load_spec(path: &std::path::Path) -> Result<PopulationSpec> {
    let text = std::fs::read_to_string(path)?;
    let spec: PopulationSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}
