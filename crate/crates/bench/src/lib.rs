//! Shared fixtures for the criterion benchmarks.

use annostab_core::synthetic::{NoiseModel, PopulationSpec};
use annostab_core::{AnnotationDataset, ValueSchema};

/// A reproducible nominal dataset sized for benchmarking.
pub fn nominal_dataset(n_items: usize, n_raters: usize, n_repetitions: usize) -> AnnotationDataset {
    let spec = PopulationSpec {
        n_items,
        n_raters,
        schema: ValueSchema::nominal(["a", "b", "c", "d"]),
        noise: NoiseModel::NominalFlip { flip_prob: 0.2 },
        pool_shift: None,
        missing_prob: 0.0,
        seed: 17,
    };
    annostab_core::generate(&spec, n_repetitions).expect("valid benchmark spec")
}
