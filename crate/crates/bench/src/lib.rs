//! Fixtures shared by the benchmarks.

use nk3ml::data::synth_low_rank_noise;
use nk3ml::LabeledDataset;

/// `classes * per_class` samples in `dim` dimensions with a within-class
/// nullspace regardless of sample count.
pub fn fixture(classes: usize, per_class: usize, dim: usize) -> LabeledDataset {
    synth_low_rank_noise(classes, per_class, dim, 1.0, 20.0, (dim / 5).max(1), 0).expect("valid fixture sizes")
}
