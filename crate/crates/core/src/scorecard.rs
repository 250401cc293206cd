//! Band classification and scorecard assembly: a low/medium/high summary of
//! agreement, variability, power, stability, and replicability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variability::Band;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    /// Agreement cutoffs: below `agreement_low` is low, at or above
    /// `agreement_high` is high.
    pub agreement_low: f64,
    pub agreement_high: f64,
    /// IQV cutoffs (<= low is low, >= high is high).
    pub iqv_low: f64,
    pub iqv_high: f64,
    /// Stability cutoffs on Spearman's rho.
    pub stability_low: f64,
    pub stability_high: f64,
    /// Variability cutoffs on MSTD for binary/interval tasks.
    pub mstd_low: f64,
    pub mstd_high: f64,
    /// Replicability: xRR within this distance of min(IRR) is high.
    pub replicability_epsilon: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            agreement_low: 0.4,
            agreement_high: 0.67,
            iqv_low: 0.33,
            iqv_high: 0.66,
            stability_low: 0.6,
            stability_high: 0.8,
            mstd_low: 0.15,
            mstd_high: 0.25,
            replicability_epsilon: 0.05,
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, low, high) in [
            ("agreement", self.agreement_low, self.agreement_high),
            ("iqv", self.iqv_low, self.iqv_high),
            ("stability", self.stability_low, self.stability_high),
            ("mstd", self.mstd_low, self.mstd_high),
        ] {
            if !(0.0 < low && low < high && high < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} cutoffs must satisfy 0 < low < high < 1, got ({low}, {high})"
                )));
            }
        }
        if self.replicability_epsilon <= 0.0 {
            return Err(Error::InvalidInput("replicability epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Chance-corrected agreement coefficients (alpha, kappa, xRR).
    Agreement,
    /// Spearman's rho.
    Stability,
    /// Index of qualitative variation.
    Iqv,
    /// Mean per-item standard deviation.
    Mstd,
}

/// Deterministic band per config; boundary values go to the higher band for
/// agreement/stability, and follow the <=/>= reading for IQV.
pub fn classify(value: f64, kind: MetricKind, cfg: &BandConfig) -> Result<Band> {
    let band = |low: f64, high: f64| {
        if value >= high {
            Band::High
        } else if value < low {
            Band::Low
        } else {
            Band::Medium
        }
    };
    match kind {
        MetricKind::Agreement => {
            if value > 1.0 + 1e-9 {
                return Err(Error::InvalidInput(format!("agreement {value} exceeds 1")));
            }
            Ok(band(cfg.agreement_low, cfg.agreement_high))
        }
        MetricKind::Stability => {
            if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&value) {
                return Err(Error::InvalidInput(format!("rho {value} outside [-1, 1]")));
            }
            Ok(band(cfg.stability_low, cfg.stability_high))
        }
        MetricKind::Iqv => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidInput(format!("IQV {value} outside [0, 1]")));
            }
            Ok(if value <= cfg.iqv_low {
                Band::Low
            } else if value >= cfg.iqv_high {
                Band::High
            } else {
                Band::Medium
            })
        }
        MetricKind::Mstd => {
            if value < 0.0 {
                return Err(Error::InvalidInput(format!("MSTD {value} is negative")));
            }
            Ok(band(cfg.mstd_low, cfg.mstd_high))
        }
    }
}

/// One scorecard cell; never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Cell {
    Band(Band),
    Range(Band, Band),
    /// Optimal rater counts (power column).
    Raters(usize, usize),
    Undefined,
    NotComputed,
}

impl Cell {
    pub fn from_bands(bands: &[Band]) -> Cell {
        match (bands.iter().min(), bands.iter().max()) {
            (Some(&min), Some(&max)) if min == max => Cell::Band(min),
            (Some(&min), Some(&max)) => Cell::Range(min, max),
            _ => Cell::NotComputed,
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Band(b) => write!(f, "{b}"),
            Cell::Range(lo, hi) => write!(f, "{lo} to {hi}"),
            Cell::Raters(min, max) if min == max => write!(f, "{min} raters"),
            Cell::Raters(min, max) => write!(f, "{min}-{max} raters"),
            Cell::Undefined => write!(f, "undefined (constant data)"),
            Cell::NotComputed => write!(f, "not computed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionScore {
    pub repetition: String,
    pub agreement: Cell,
    pub variability: Cell,
    pub optimal_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair: (String, String),
    pub stability: Cell,
    pub replicability: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub agreement: Cell,
    pub variability: Cell,
    pub power: Cell,
    pub stability: Cell,
    pub replicability: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub study: String,
    pub per_repetition: Vec<RepetitionScore>,
    pub per_pair: Vec<PairScore>,
    pub overall: OverallRow,
    pub diagnostics: Vec<String>,
}

/// Min-max band range over a list of cells; Undefined/NotComputed cells are
/// skipped, and the result degrades to NotComputed when nothing is banded.
fn overall_cell(cells: &[&Cell]) -> Cell {
    let mut bands = Vec::new();
    for cell in cells {
        match cell {
            Cell::Band(b) => bands.push(*b),
            Cell::Range(lo, hi) => {
                bands.push(*lo);
                bands.push(*hi);
            }
            _ => {}
        }
    }
    if bands.is_empty() {
        if cells.iter().any(|c| matches!(c, Cell::Undefined)) {
            Cell::Undefined
        } else {
            Cell::NotComputed
        }
    } else {
        Cell::from_bands(&bands)
    }
}

fn power_cell(scores: &[RepetitionScore]) -> Cell {
    let ks: Vec<usize> = scores.iter().filter_map(|s| s.optimal_k).collect();
    match (ks.iter().min(), ks.iter().max()) {
        (Some(&min), Some(&max)) => Cell::Raters(min, max),
        _ => Cell::NotComputed,
    }
}

/// Assembles the overall row from per-repetition and per-pair scores.
pub fn assemble(
    study: &str,
    per_repetition: Vec<RepetitionScore>,
    per_pair: Vec<PairScore>,
    diagnostics: Vec<String>,
) -> Scorecard {
    let agreement = overall_cell(&per_repetition.iter().map(|s| &s.agreement).collect::<Vec<_>>());
    let variability =
        overall_cell(&per_repetition.iter().map(|s| &s.variability).collect::<Vec<_>>());
    let power = power_cell(&per_repetition);
    let stability = overall_cell(&per_pair.iter().map(|s| &s.stability).collect::<Vec<_>>());
    let replicability =
        overall_cell(&per_pair.iter().map(|s| &s.replicability).collect::<Vec<_>>());
    Scorecard {
        study: study.to_string(),
        per_repetition,
        per_pair,
        overall: OverallRow {
            agreement,
            variability,
            power,
            stability,
            replicability,
        },
        diagnostics,
    }
}

pub const TEXT_COLUMNS: [&str; 5] = [
    "Agreement",
    "Variability",
    "Power",
    "Stability",
    "Replicability",
];

/// Fixed-width text rendering with the five metric columns.
pub fn render_text(sc: &Scorecard) -> String {
    let mut out = String::new();
    let width = 26usize;
    let label_width = 18usize;
    out.push_str(&format!("Scorecard: {}\n", sc.study));
    out.push_str(&format!("{:label_width$}", ""));
    for column in TEXT_COLUMNS {
        out.push_str(&format!("{column:width$}"));
    }
    out.push('\n');
    for rep in &sc.per_repetition {
        out.push_str(&format!("{:label_width$}", rep.repetition));
        out.push_str(&format!("{:width$}", rep.agreement.to_string()));
        out.push_str(&format!("{:width$}", rep.variability.to_string()));
        let power = rep
            .optimal_k
            .map(|k| format!("{k} raters"))
            .unwrap_or_else(|| "not computed".into());
        out.push_str(&format!("{power:width$}"));
        out.push_str(&format!("{:width$}", "-"));
        out.push_str(&format!("{:width$}", "-"));
        out.push('\n');
    }
    for pair in &sc.per_pair {
        let label = format!("{} & {}", pair.pair.0, pair.pair.1);
        out.push_str(&format!("{label:label_width$}"));
        out.push_str(&format!("{:width$}", "-"));
        out.push_str(&format!("{:width$}", "-"));
        out.push_str(&format!("{:width$}", "-"));
        out.push_str(&format!("{:width$}", pair.stability.to_string()));
        out.push_str(&format!("{:width$}", pair.replicability.to_string()));
        out.push('\n');
    }
    out.push_str(&format!("{:label_width$}", "overall"));
    out.push_str(&format!("{:width$}", sc.overall.agreement.to_string()));
    out.push_str(&format!("{:width$}", sc.overall.variability.to_string()));
    out.push_str(&format!("{:width$}", sc.overall.power.to_string()));
    out.push_str(&format!("{:width$}", sc.overall.stability.to_string()));
    out.push_str(&format!("{:width$}", sc.overall.replicability.to_string()));
    out.push('\n');
    if !sc.diagnostics.is_empty() {
        out.push_str("diagnostics:\n");
        for d in &sc.diagnostics {
            out.push_str(&format!("  - {d}\n"));
        }
    }
    out
}
