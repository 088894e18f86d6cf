//! Simulation and verification toolkit for KMP, harmonic, inclusion and
//! independent-walker mass-transport models and their hidden-parameter
//! companions.
//!
//! * [`model`]: graphs, reservoirs, model specifications, state vectors.
//! * [`sampling`]: probability laws, truncated jump measures, the ordered
//!   Dirichlet mixing law.
//! * [`generators`]: jump kernels, rates, drifts and vector fields.
//! * [`engine`]: Gillespie, thinned and Euler–Maruyama simulation, ODE flow.
//! * [`duality`]: duality functions and deterministic identity checks.
//! * [`ness`]: stationary-state experiments and statistical comparisons.

pub mod duality;
pub mod engine;
pub mod error;
pub mod generators;
pub mod model;
pub mod ness;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    build_graph, validate_model, DualIndex, Family, Graph, HarmonicReservoirKind, Model, ModelSpec, ReservoirSpec,
    StateKind, StateVector, VertexId,
};
pub use rng::RngStream;
