//! Fixtures shared by the benchmarks.

use metaeval_core::synth::generate;
use metaeval_core::{Dataset, GeneratorConfig};

/// Synthetic group with evenly spaced system means and one `oracle` metric.
pub fn fixture(systems: usize, segments: usize, judgments_per_segment: usize) -> Dataset {
    let mut cfg = GeneratorConfig::spaced(systems, 50.0, 0.5);
    cfg.n_segments = segments;
    cfg.judgments_per_segment = judgments_per_segment;
    cfg.seed = 1;
    generate(&cfg).expect("valid fixture config").0
}
