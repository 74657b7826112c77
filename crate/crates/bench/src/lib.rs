//! Shared data builders for the benchmark targets.

use splitdoor::panel::PairPeriod;
use splitdoor::synth::{generate_panel, GeneratorParams};
use splitdoor::{filter_constant_direct, slice_periods};

/// Synthetic periods shaped like the production workload: tau-day windows
/// with a mix of confounded and clean pairs.
pub fn bench_periods(n_pairs: usize, n_days: usize, tau: usize, seed: u64) -> Vec<PairPeriod> {
    let params = GeneratorParams {
        n_pairs,
        n_days,
        seed,
        ..Default::default()
    };
    let (panel, _) = generate_panel(&params).expect("generator params are valid");
    let periods = slice_periods(&panel, tau).expect("tau >= 2");
    filter_constant_direct(periods).0
}
