//! Shared fixtures for the benchmarks.

use bmmpp::simulate::simulate_trace;
use bmmpp::{BmmppModel, InitialPhase, RngSpec, Trace};

/// Two-state model with batch sizes up to 2.
pub fn model_k2() -> BmmppModel {
    BmmppModel::from_json(r#"{"K":2,"D0":[[-5,2],[5,-10]],"Dk":[[1,2],[2,3]]}"#).expect("fixture model is valid")
}

/// Stationary trace of `n` events from [`model_k2`].
pub fn trace_k2(n: usize) -> Trace {
    simulate_trace(&model_k2(), n, RngSpec::new(1, 0), InitialPhase::StationaryPhi).expect("fixture trace simulates")
}
