//! Fixtures shared by the benchmarks.

use radlung_core::synth::{planted_table, synth_cohort, PlantedSpec, SynthSpec, SynthSubject};
use radlung_core::FeatureTable;

/// One synthetic subject on a grid of the given size.
pub fn phantom(dims: [usize; 3], seed: u64) -> SynthSubject {
    let spec = SynthSpec { n_subjects: 2, dims, seed, ..SynthSpec::default() };
    synth_cohort(&spec).expect("valid spec").subjects.swap_remove(0)
}

pub fn planted(n: usize, d: usize, seed: u64) -> FeatureTable {
    let spec = PlantedSpec { n_subjects: n, n_features: d, seed, ..PlantedSpec::default() };
    planted_table(&spec).expect("valid spec").0
}
