//! Fixtures shared by the benchmarks.

use sgpca::prelude::*;
use sgpca::sim::Setting;

/// Simulated data for `setting` with `n × p` overridden.
pub fn fixture(setting: Setting, family: Family, n: usize, p: usize, seed: u64) -> (MaskedMatrix, Truth) {
    let mut spec = SimSpec::setting(setting, family, seed);
    spec.n = n;
    spec.p = p;
    generate_data(&spec).expect("fixture settings are valid")
}

/// Solver configuration used for data from `setting`.
pub fn config(setting: Setting, family: Family) -> SolverConfig {
    let step = match family.universal_step() {
        Some(_) => StepPolicy::Universal,
        None => StepPolicy::LineSearch(AccelConfig::default()),
    };
    SolverConfig {
        step,
        ..SolverConfig::new(setting.rank(), setting.fit_sparsity(family))
    }
}
