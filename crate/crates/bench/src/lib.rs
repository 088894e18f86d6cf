//! Fixture models shared by the benchmarks in `benches/`.

use mixflow_core::ness::chain_model;
use mixflow_core::{Family, Graph, Model, ModelSpec, ReservoirSpec, StateVector};

/// Sites of the benchmark chains.
pub const CHAIN_SITES: usize = 16;

/// Hidden harmonic chain between reservoirs 0 and 1.
pub fn hidden_harmonic_chain() -> Model {
    chain_model(Family::HiddenHarmonic, CHAIN_SITES, 1.0, 0.0, 1.0).expect("valid chain")
}

/// Driven chain with rate reservoirs at both ends.
pub fn driven_chain(family: Family) -> Model {
    let g = Graph::chain(CHAIN_SITES, 1.0).expect("valid chain");
    let spec = ModelSpec::new(family, 1.0)
        .with_reservoir("1", ReservoirSpec::rates(1.0, 2.0))
        .with_reservoir(CHAIN_SITES.to_string(), ReservoirSpec::rates(1.0, 3.0));
    Model::new(&g, spec).expect("valid model")
}

/// Closed discrete KMP chain without reservoirs.
pub fn closed_kmp_chain() -> Model {
    let g = Graph::chain(CHAIN_SITES, 0.0).expect("valid chain");
    Model::new(&g, ModelSpec::new(Family::KmpDiscrete, 1.0)).expect("valid model")
}

/// Midpoint start for parameter chains, unit start otherwise.
pub fn start_state(model: &Model) -> StateVector {
    let n = model.graph().len();
    match model.family().state_kind() {
        mixflow_core::StateKind::Counts => StateVector::Counts(vec![4; n]),
        mixflow_core::StateKind::Masses => StateVector::Masses(vec![1.0; n]),
        mixflow_core::StateKind::Thetas => StateVector::Thetas(vec![0.5; n]),
    }
}
