//! Domain types, long-format CSV ingestion, and answer aggregation.
//!
//! A study is an [`AnnotationDataset`]: one [`ValueSchema`] shared by one or
//! more [`Repetition`]s over a common item set. Missing data is
//! representational absence; a rater that did not rate an item simply has no
//! entry.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const CSV_HEADER: [&str; 4] = ["repetition_id", "item_id", "rater_id", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Nominal,
    Ordinal,
    Interval,
    LabelSet,
}

/// Declares the value domain of a study and selects the default agreement
/// distance function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSchema {
    pub kind: ValueKind,
    /// Ordered category ids; empty for interval schemas. For ordinal
    /// schemas the list order defines the rank order.
    #[serde(default)]
    pub categories: Vec<String>,
    /// Optional inclusive [min, max] bounds for interval values.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
    /// Optional step size, e.g. 0.25 for a 0-10 similarity scale.
    #[serde(default)]
    pub increment: Option<f64>,
}

impl ValueSchema {
    pub fn nominal<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind: ValueKind::Nominal,
            categories: categories.into_iter().map(Into::into).collect(),
            bounds: None,
            increment: None,
        }
    }

    pub fn ordinal<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind: ValueKind::Ordinal,
            categories: categories.into_iter().map(Into::into).collect(),
            bounds: None,
            increment: None,
        }
    }

    pub fn interval(bounds: Option<(f64, f64)>, increment: Option<f64>) -> Self {
        Self {
            kind: ValueKind::Interval,
            categories: Vec::new(),
            bounds,
            increment,
        }
    }

    pub fn label_set<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind: ValueKind::LabelSet,
            categories: categories.into_iter().map(Into::into).collect(),
            bounds: None,
            increment: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ValueKind::Interval => {
                if !self.categories.is_empty() {
                    return Err(Error::InvalidSchema(
                        "interval schema must not declare categories".into(),
                    ));
                }
            }
            _ => {
                if self.categories.is_empty() {
                    return Err(Error::InvalidSchema(
                        "non-interval schema requires categories".into(),
                    ));
                }
                let unique: BTreeSet<&String> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::InvalidSchema("duplicate category ids".into()));
                }
                if self.categories.iter().any(|c| c.contains('|')) {
                    return Err(Error::InvalidSchema(
                        "category ids must not contain '|'".into(),
                    ));
                }
            }
        }
        if let Some((min, max)) = self.bounds {
            if !(min < max) {
                return Err(Error::InvalidSchema(format!(
                    "bounds must satisfy min < max, got [{min}, {max}]"
                )));
            }
            if let Some(inc) = self.increment {
                if inc <= 0.0 {
                    return Err(Error::InvalidSchema("increment must be positive".into()));
                }
                let steps = (max - min) / inc;
                if (steps - steps.round()).abs() > 1e-9 {
                    return Err(Error::InvalidSchema(format!(
                        "increment {inc} does not divide range {} exactly",
                        max - min
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    fn unknown_category(&self, category: &str) -> String {
        format!(
            "category '{category}' not in schema {{{}}}",
            self.categories.join(",")
        )
    }

    /// Parses one CSV `value` cell according to the schema.
    pub fn parse_value(&self, cell: &str) -> std::result::Result<AnnotationValue, String> {
        match self.kind {
            ValueKind::Nominal | ValueKind::Ordinal => {
                if self.category_index(cell).is_none() {
                    return Err(self.unknown_category(cell));
                }
                Ok(if self.kind == ValueKind::Nominal {
                    AnnotationValue::Nominal(cell.to_string())
                } else {
                    AnnotationValue::Ordinal(cell.to_string())
                })
            }
            ValueKind::Interval => {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| format!("'{cell}' is not a decimal literal"))?;
                if !v.is_finite() {
                    return Err(format!("'{cell}' is not finite"));
                }
                if let Some((min, max)) = self.bounds {
                    if v < min || v > max {
                        return Err(format!("value {v} outside bounds [{min}, {max}]"));
                    }
                }
                Ok(AnnotationValue::interval(v))
            }
            ValueKind::LabelSet => {
                let mut set = BTreeSet::new();
                for label in cell.split('|') {
                    if label.is_empty() {
                        return Err("empty label in label set".into());
                    }
                    if self.category_index(label).is_none() {
                        return Err(self.unknown_category(label));
                    }
                    set.insert(label.to_string());
                }
                if set.is_empty() {
                    return Err("label set is empty".into());
                }
                Ok(AnnotationValue::LabelSet(set))
            }
        }
    }

    pub fn check_value(&self, value: &AnnotationValue) -> std::result::Result<(), String> {
        match (self.kind, value) {
            (ValueKind::Nominal, AnnotationValue::Nominal(c))
            | (ValueKind::Ordinal, AnnotationValue::Ordinal(c)) => {
                if self.category_index(c).is_none() {
                    Err(self.unknown_category(c))
                } else {
                    Ok(())
                }
            }
            (ValueKind::Interval, AnnotationValue::Interval(OrderedValue(v))) => {
                if let Some((min, max)) = self.bounds {
                    if *v < min || *v > max {
                        return Err(format!("value {v} outside bounds [{min}, {max}]"));
                    }
                }
                Ok(())
            }
            (ValueKind::LabelSet, AnnotationValue::LabelSet(set)) => {
                if set.is_empty() {
                    return Err("label set is empty".into());
                }
                for label in set {
                    if self.category_index(label).is_none() {
                        return Err(self.unknown_category(label));
                    }
                }
                Ok(())
            }
            (kind, value) => Err(format!("value {value:?} does not match schema kind {kind:?}")),
        }
    }
}

/// A single rating. Ordinal values store the category id; the rank is its
/// index in the schema's category list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AnnotationValue {
    Nominal(String),
    Ordinal(String),
    LabelSet(BTreeSet<String>),
    Interval(OrderedValue),
}

/// f64 wrapper with total ordering; interval ratings are always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedValue(pub f64);

impl Eq for OrderedValue {}
impl Ord for OrderedValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl PartialOrd for OrderedValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl AnnotationValue {
    pub fn interval(v: f64) -> Self {
        AnnotationValue::Interval(OrderedValue(v))
    }

    pub fn interval_value(&self) -> Option<f64> {
        match self {
            AnnotationValue::Interval(OrderedValue(v)) => Some(*v),
            _ => None,
        }
    }

    /// Canonical CSV cell rendering.
    pub fn to_cell(&self) -> String {
        match self {
            AnnotationValue::Nominal(c) | AnnotationValue::Ordinal(c) => c.clone(),
            AnnotationValue::LabelSet(set) => {
                set.iter().cloned().collect::<Vec<_>>().join("|")
            }
            AnnotationValue::Interval(OrderedValue(v)) => format_decimal(*v),
        }
    }

    /// Numeric view used by the variability metrics: interval values as-is,
    /// binary-nominal values as their category index (0 or 1).
    pub fn numeric(&self, schema: &ValueSchema) -> Option<f64> {
        match self {
            AnnotationValue::Interval(OrderedValue(v)) => Some(*v),
            AnnotationValue::Nominal(c) if schema.categories.len() == 2 => {
                schema.category_index(c).map(|i| i as f64)
            }
            _ => None,
        }
    }
}

/// Renders a float without scientific notation and without trailing noise.
fn format_decimal(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let s = format!("{v}");
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collected_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform: Option<String>,
}

/// One annotation campaign: a sparse item x rater matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub id: String,
    /// item id -> rater id -> rating
    pub ratings: BTreeMap<String, BTreeMap<String, AnnotationValue>>,
    pub metadata: RepetitionMeta,
}

impl Repetition {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ratings: BTreeMap::new(),
            metadata: RepetitionMeta::default(),
        }
    }

    /// Inserts a rating; returns false if the (item, rater) pair was already
    /// rated (the existing rating is kept).
    pub fn insert(
        &mut self,
        item: impl Into<String>,
        rater: impl Into<String>,
        value: AnnotationValue,
    ) -> bool {
        let entry = self.ratings.entry(item.into()).or_default();
        match entry.entry(rater.into()) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(value);
                true
            }
        }
    }

    pub fn item_ratings(&self, item: &str) -> Option<&BTreeMap<String, AnnotationValue>> {
        self.ratings.get(item)
    }

    pub fn items(&self) -> impl Iterator<Item = &String> {
        self.ratings.keys()
    }

    pub fn raters(&self) -> BTreeSet<&String> {
        self.ratings.values().flat_map(|m| m.keys()).collect()
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.values().map(|m| m.len()).sum()
    }

    /// Maximum number of raters on any single item.
    pub fn max_raters_per_item(&self) -> usize {
        self.ratings.values().map(|m| m.len()).max().unwrap_or(0)
    }
}

/// A named study: schema + item set + ordered repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDataset {
    pub study_id: String,
    pub schema: ValueSchema,
    pub items: BTreeSet<String>,
    pub repetitions: Vec<Repetition>,
}

impl AnnotationDataset {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.repetitions.is_empty() {
            return Err(Error::InvalidInput("dataset has no repetitions".into()));
        }
        for rep in &self.repetitions {
            for (item, raters) in &rep.ratings {
                if !self.items.contains(item) {
                    return Err(Error::InvalidInput(format!(
                        "repetition '{}' rates unknown item '{item}'",
                        rep.id
                    )));
                }
                for value in raters.values() {
                    self.schema
                        .check_value(value)
                        .map_err(|msg| Error::InvalidInput(format!(
                            "repetition '{}', item '{item}': {msg}",
                            rep.id
                        )))?;
                }
            }
        }
        Ok(())
    }

    pub fn repetition(&self, id: &str) -> Option<&Repetition> {
        self.repetitions.iter().find(|r| r.id == id)
    }
}

/// Loads the canonical long-format CSV (`repetition_id,item_id,rater_id,value`).
pub fn load_dataset(path: &Path, schema: &ValueSchema) -> Result<AnnotationDataset> {
    let file = std::fs::File::open(path)?;
    let study_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "study".into());
    read_dataset(file, schema, &study_id)
}

pub fn read_dataset(
    reader: impl Read,
    schema: &ValueSchema,
    study_id: &str,
) -> Result<AnnotationDataset> {
    schema.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    {
        let headers = csv_reader
            .headers()
            .map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::Parse {
                row: 1,
                msg: format!(
                    "expected header '{}', got '{}'",
                    CSV_HEADER.join(","),
                    got.join(",")
                ),
            });
        }
    }

    let mut repetitions: Vec<Repetition> = Vec::new();
    let mut rep_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut items = BTreeSet::new();

    for (i, record) in csv_reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let (rep_id, item, rater, cell) = (&record[0], &record[1], &record[2], &record[3]);
        if rep_id.is_empty() || item.is_empty() || rater.is_empty() {
            return Err(Error::Parse {
                row,
                msg: "repetition_id, item_id and rater_id must be non-empty".into(),
            });
        }
        let value = schema
            .parse_value(cell)
            .map_err(|msg| Error::SchemaViolation { row, msg })?;
        let idx = *rep_index.entry(rep_id.to_string()).or_insert_with(|| {
            repetitions.push(Repetition::new(rep_id));
            repetitions.len() - 1
        });
        if !repetitions[idx].insert(item, rater, value) {
            return Err(Error::DuplicateRating {
                row,
                repetition: rep_id.to_string(),
                item: item.to_string(),
                rater: rater.to_string(),
            });
        }
        items.insert(item.to_string());
    }

    let dataset = AnnotationDataset {
        study_id: study_id.to_string(),
        schema: schema.clone(),
        items,
        repetitions,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Canonical export: same CSV format, rows sorted by
/// (repetition_id, item_id, rater_id).
pub fn write_dataset(dataset: &AnnotationDataset, writer: impl Write) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer
        .write_record(CSV_HEADER)
        .map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?;
    let mut reps: Vec<&Repetition> = dataset.repetitions.iter().collect();
    reps.sort_by(|a, b| a.id.cmp(&b.id));
    for rep in reps {
        for (item, raters) in &rep.ratings {
            for (rater, value) in raters {
                csv_writer
                    .write_record([rep.id.as_str(), item, rater, &value.to_cell()])
                    .map_err(|e| Error::Parse { row: 0, msg: e.to_string() })?;
            }
        }
    }
    csv_writer
        .flush()
        .map_err(|e| Error::Io(e))?;
    Ok(())
}

pub fn load_schema(path: &Path) -> Result<ValueSchema> {
    let text = std::fs::read_to_string(path)?;
    let schema: ValueSchema = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidSchema(format!("{}: {e}", path.display())))?;
    schema.validate()?;
    Ok(schema)
}

/// Per-item aggregate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateValue {
    RatioOfPositive(f64),
    Mean(f64),
    MajorityCategory(String),
}

pub type AggregatedScores = BTreeMap<String, AggregateValue>;

/// Majority category for one item; ties are broken uniformly at random.
pub fn majority_vote(rep: &Repetition, item: &str, rng: &mut impl Rng) -> Result<String> {
    let ratings = rep
        .item_ratings(item)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::NoRatings(item.to_string()))?;
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for value in ratings.values() {
        match value {
            AnnotationValue::Nominal(c) => *counts.entry(c).or_insert(0) += 1,
            _ => {
                return Err(Error::InvalidInput(
                    "majority vote requires nominal ratings".into(),
                ))
            }
        }
    }
    let max = *counts.values().max().expect("non-empty counts");
    let tied: Vec<&String> = counts
        .iter()
        .filter(|(_, &n)| n == max)
        .map(|(c, _)| *c)
        .collect();
    let pick = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    };
    Ok(pick.clone())
}

/// Majority vote with the per-(repetition, item) sub-seed derivation, so the
/// outcome does not depend on the order items are visited in.
pub fn majority_vote_seeded(rep: &Repetition, item: &str, master_seed: u64) -> Result<String> {
    let mut rng = seed::rng_for(master_seed, &[rep.id.as_bytes(), item.as_bytes()]);
    majority_vote(rep, item, &mut rng)
}

/// Fraction of the item's raters whose rating is (or contains) `positive`.
pub fn positive_ratio(rep: &Repetition, item: &str, positive: &str) -> Result<f64> {
    let ratings = rep
        .item_ratings(item)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::NoRatings(item.to_string()))?;
    let picked = ratings
        .values()
        .filter(|value| match value {
            AnnotationValue::Nominal(c) | AnnotationValue::Ordinal(c) => c == positive,
            AnnotationValue::LabelSet(set) => set.contains(positive),
            AnnotationValue::Interval(_) => false,
        })
        .count();
    Ok(picked as f64 / ratings.len() as f64)
}

/// Arithmetic mean of an item's interval ratings.
pub fn mean_score(rep: &Repetition, item: &str) -> Result<f64> {
    let ratings = rep
        .item_ratings(item)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::NoRatings(item.to_string()))?;
    let mut sum = 0.0;
    for value in ratings.values() {
        match value.interval_value() {
            Some(v) => sum += v,
            None => {
                return Err(Error::InvalidInput(
                    "mean score requires interval ratings".into(),
                ))
            }
        }
    }
    Ok(sum / ratings.len() as f64)
}
