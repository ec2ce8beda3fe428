//! Inputs shared by the benchmarks.

use qtomo::{fixtures, run_protocol, Dataset, ErrorModelSpec, ProtocolSpec, RngContext};

/// Counts from one static-tomography run on the target state.
pub fn static_dataset(n: u64, seed: u64) -> Dataset {
    run_protocol(
        &ProtocolSpec::Static,
        &fixtures::target_state(),
        n,
        &ErrorModelSpec::None,
        &RngContext::new(seed),
    )
    .expect("static budget is feasible")
    .dataset
}

/// Counts from one adaptive run; six distinct settings.
pub fn adaptive_dataset(n: u64, seed: u64) -> Dataset {
    run_protocol(
        &ProtocolSpec::Adaptive { alpha: 0.5 },
        &fixtures::target_state(),
        n,
        &ErrorModelSpec::None,
        &RngContext::new(seed),
    )
    .expect("adaptive budget is feasible")
    .dataset
}
