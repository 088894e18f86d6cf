//! Probability laws and jump measures used by the models.
//!
//! Samplers are pure given an [`RngStream`]; densities and pmfs use
//! log-Gamma arithmetic except where a short product is more accurate.

mod dist;
mod jump;
mod mixing;

pub use crate::rng::RngStream;
pub(crate) use dist::binomial_draw;
pub use dist::{
    beta_binomial_pmf, beta_binomial_sample, beta_cdf, beta_pdf, beta_sample, discrete_gamma_pmf,
    discrete_gamma_sample, discrete_harmonic_weights, gamma_sample, poisson_pmf, poisson_sample, BetaSampler, GammaLaw,
};
pub use jump::{harmonic_bulk_rate, truncated_jump_rate, truncated_jump_sample, JumpMeasure};
pub use mixing::{ordered_dirichlet_logdensity, ordered_dirichlet_sample, MixingLaw, DEFAULT_TERM_BUDGET};
