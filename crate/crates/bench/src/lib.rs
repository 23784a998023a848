//! Shared fixtures for the pipeline benchmarks.

use anaxnet_core::adjacency::{accumulate_stats, AdjacencyMatrix};
use anaxnet_core::data::{generate_synthetic, ImageRecord, SynthSpec};
use anaxnet_core::Matrix;

/// Deterministic desk-scale records plus their train-split adjacency.
pub fn fixture(images: usize, seed: u64) -> (SynthSpec, Vec<ImageRecord>, AdjacencyMatrix) {
    let spec = SynthSpec {
        train_images: images,
        val_images: 0,
        test_images: 0,
        ..SynthSpec::default_desk(seed)
    };
    let (_, records) = generate_synthetic(&spec).expect("generator accepts its own defaults");
    let labels: Vec<Matrix> = records.iter().map(|r| r.labels.clone()).collect();
    let stats = accumulate_stats(spec.regions, spec.label_count, labels.iter())
        .expect("labels share one shape");
    let adjacency = AdjacencyMatrix::from_stats(&stats, 0.5).expect("tau in range");
    (spec, records, adjacency)
}
