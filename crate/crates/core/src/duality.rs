//! Duality functions and deterministic checks of the duality and
//! intertwining identities.
//!
//! Every check evaluates both sides of an identity by independent routes
//! (closed forms, Gauss–Jacobi quadrature exact for the polynomial
//! integrands, adaptive quadrature) and reports the discrepancy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{ensemble_at, Numerics};
use crate::error::{check_epsilon, check_shape, Error, Result};
use crate::model::{DualIndex, Family, Model, StateVector};
use crate::quadrature::{integrate_adaptive, GaussRule, MAX_NODES};
use crate::rng::RngStream;
use crate::sampling::{beta_binomial_pmf, gamma_sample, harmonic_bulk_rate};
use crate::special::{binomial, digamma, ln_beta, ln_gamma, pochhammer, stable_sum};

/// Finite-difference step for the derivative in the creation check.
pub const FD_STEP: f64 = 1e-5;
/// Richardson levels applied to the central difference.
pub const RICHARDSON_LEVELS: u32 = 2;
/// Poisson sums stop once the remaining mass is below this.
pub const POISSON_TAIL_MASS: f64 = 1e-14;
const POISSON_MAX_TERMS: usize = 100_000;

/// Which duality function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "tag")]
pub enum DualityKind {
    /// `∏ I(ξ≤η) η!/(η-ξ)! Γ(2s)/Γ(2s+ξ)` on counts.
    Factorial { two_s: f64 },
    /// `∏ x^ξ Γ(2s)/Γ(2s+ξ)` on masses.
    Moment { two_s: f64 },
    /// `∏ θ^ξ` on parameters.
    Parameter,
    /// `∏ e^{θ ζ}` between parameters and masses.
    Exponential,
}

/// `Γ(2s)/Γ(2s+k)` as a product for small `k`, via log-Gamma beyond.
fn inv_rising(two_s: f64, k: u64) -> f64 {
    if k <= 64 {
        1.0 / pochhammer(two_s, k as u32)
    } else {
        (ln_gamma(two_s) - ln_gamma(two_s + k as f64)).exp()
    }
}

/// Falling factorial `n (n-1) … (n-k+1)`.
fn falling(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if k <= 64 {
        (0..k).fold(1.0, |acc, j| acc * (n - j) as f64)
    } else {
        (ln_gamma(n as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)).exp()
    }
}

/// Single-site factor `d_F(k, n)`.
pub fn factorial_factor(k: u64, n: u64, two_s: f64) -> f64 {
    falling(n, k) * inv_rising(two_s, k)
}

/// Single-site factor `d_m(k, x)`.
pub fn moment_factor(k: u64, x: f64, two_s: f64) -> f64 {
    x.powi(k as i32) * inv_rising(two_s, k)
}

fn kind_error(kind: DualityKind, dual: &StateVector, state: &StateVector) -> Error {
    Error::KindMismatch { expected: format!("{kind:?} pairing"), found: format!("({}, {})", dual.kind(), state.kind()) }
}

/// Evaluate a duality function. `dual` holds `ξ` (counts) for the
/// polynomial kinds and `θ` (thetas) for [`DualityKind::Exponential`].
pub fn eval_duality(kind: DualityKind, dual: &StateVector, state: &StateVector) -> Result<f64> {
    if dual.len() != state.len() {
        return Err(Error::InvalidParameter(format!("lengths differ: {} vs {}", dual.len(), state.len())));
    }
    match (kind, dual, state) {
        (DualityKind::Factorial { two_s }, StateVector::Counts(xi), StateVector::Counts(eta)) => {
            check_shape(two_s)?;
            Ok(xi.iter().zip(eta).map(|(&k, &n)| factorial_factor(k, n, two_s)).product())
        }
        (DualityKind::Moment { two_s }, StateVector::Counts(xi), StateVector::Masses(x)) => {
            check_shape(two_s)?;
            Ok(xi.iter().zip(x).map(|(&k, &v)| moment_factor(k, v, two_s)).product())
        }
        (DualityKind::Parameter, StateVector::Counts(xi), StateVector::Thetas(t)) => {
            Ok(xi.iter().zip(t).map(|(&k, &v)| v.powi(k as i32)).product())
        }
        (DualityKind::Exponential, StateVector::Thetas(t), StateVector::Masses(z)) => {
            Ok(t.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().exp())
        }
        _ => Err(kind_error(kind, dual, state)),
    }
}

/// Convenience: evaluate with a [`DualIndex`].
pub fn eval_duality_index(kind: DualityKind, xi: &DualIndex, state: &StateVector) -> Result<f64> {
    eval_duality(kind, &xi.as_state(), state)
}

/// How the error of an [`IdentityReport`] is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMeasure {
    Absolute,
    Relative,
}

/// Outcome of one identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub parameters: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub measure: ErrorMeasure,
    pub tolerance: f64,
    pub pass: bool,
    /// Numerical settings and auxiliary errors behind the verdict.
    pub numerics: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn new(
        identity: &str,
        parameters: &[(&str, f64)],
        lhs: f64,
        rhs: f64,
        measure: ErrorMeasure,
        tolerance: f64,
    ) -> Self {
        let abs_error = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel_error = if scale > 0.0 { abs_error / scale } else { abs_error };
        let mut r = IdentityReport {
            identity: identity.to_string(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs,
            rhs,
            abs_error,
            rel_error,
            measure,
            tolerance,
            pass: false,
            numerics: BTreeMap::new(),
        };
        r.pass = r.error() <= tolerance;
        r
    }

    /// The error compared against the tolerance.
    pub fn error(&self) -> f64 {
        match self.measure {
            ErrorMeasure::Absolute => self.abs_error,
            ErrorMeasure::Relative => self.rel_error,
        }
    }

    /// Attach an auxiliary number; names ending in `_error` also gate `pass`.
    pub fn with_numeric(mut self, key: &str, value: f64) -> Self {
        self.numerics.insert(key.to_string(), value);
        if key.ends_with("_error") {
            self.pass &= value <= self.tolerance;
        }
        self
    }

    /// Re-judge against a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        let aux_ok = self.numerics.iter().filter(|(k, _)| k.ends_with("_error")).all(|(_, v)| *v <= tolerance);
        self.pass = self.error() <= tolerance && aux_ok;
        self
    }
}

fn gauss_beta(n_nodes: usize, p: f64, q: f64) -> Result<GaussRule> {
    if n_nodes > MAX_NODES {
        return Err(Error::QuadratureDegree { degree: 2 * n_nodes - 1, budget: MAX_NODES });
    }
    GaussRule::beta(n_nodes, p, q)
}

/// Polynomial edge duality between the discrete KMP model and its hidden
/// parameter model, acting with both generators on `θ_i^{ξ_i} θ_j^{ξ_j}`.
pub fn check_kmp_edge_duality(xi: (u32, u32), theta: (f64, f64), two_s: f64, tol: f64) -> Result<IdentityReport> {
    check_shape(two_s)?;
    let n = (xi.0 + xi.1) as u64;
    let (ti, tj) = theta;
    let current = ti.powi(xi.0 as i32) * tj.powi(xi.1 as i32);
    let mut lhs_terms = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        lhs_terms.push(beta_binomial_pmf(n, k, two_s)? * ti.powi(k as i32) * tj.powi((n - k) as i32));
    }
    let lhs = stable_sum(lhs_terms) - current;
    let nodes = GaussRule::nodes_for_degree(n as usize);
    let rule = gauss_beta(nodes, two_s, two_s)?;
    let rhs = rule.integrate(|p| (p * ti + (1.0 - p) * tj).powi(n as i32)) - current;
    Ok(IdentityReport::new(
        "kmp_edge_duality",
        &[("two_s", two_s), ("xi_i", xi.0 as f64), ("xi_j", xi.1 as f64), ("theta_i", ti), ("theta_j", tj)],
        lhs,
        rhs,
        ErrorMeasure::Absolute,
        tol,
    )
    .with_numeric("quadrature_nodes", nodes as f64))
}

/// `∫_{ε_q}^1 u^{-1}(1-u)^{2s-1} g(u) du` after `v = (1-u)^{2s}`, which
/// removes the endpoint singularity at `u = 1`.
fn bulk_integral(two_s: f64, eps_q: f64, g: impl Fn(f64) -> f64, abs_tol: f64) -> f64 {
    let top = (1.0 - eps_q).powf(two_s);
    integrate_adaptive(
        |v| {
            let u = 1.0 - v.powf(1.0 / two_s);
            if u <= 0.0 {
                return 0.0;
            }
            g(u) / (two_s * u)
        },
        0.0,
        top,
        abs_tol,
        1e-14,
    )
    .value
}

/// Exponential duality of the mass-redistribution pair generator with its
/// hidden parameter generator, integrals truncated at `u ≥ eps_q` on both
/// sides.
pub fn check_mass_redistribution_duality(
    y: (f64, f64),
    theta: (f64, f64),
    two_s: f64,
    eps_q: f64,
    tol: f64,
) -> Result<IdentityReport> {
    check_shape(two_s)?;
    check_epsilon(eps_q)?;
    let (y1, y2) = y;
    let (t1, t2) = theta;
    let d = |a1: f64, a2: f64, b1: f64, b2: f64| (a1 * b1 + a2 * b2).exp();
    let base = d(t1, t2, y1, y2);
    let lhs = bulk_integral(
        two_s,
        eps_q,
        |u| d(t1, t2, y1 - u * y1, y2 + u * y1) + d(t1, t2, y1 + u * y2, y2 - u * y2) - 2.0 * base,
        1e-13,
    );
    let rhs = bulk_integral(
        two_s,
        eps_q,
        |u| d(t1 * (1.0 - u) + u * t2, t2, y1, y2) + d(t1, u * t1 + (1.0 - u) * t2, y1, y2) - 2.0 * base,
        1e-13,
    );
    Ok(IdentityReport::new(
        "mass_redistribution_duality",
        &[("two_s", two_s), ("y_1", y1), ("y_2", y2), ("theta_1", t1), ("theta_2", t2), ("eps_q", eps_q)],
        lhs,
        rhs,
        ErrorMeasure::Absolute,
        tol,
    ))
}

/// `R_m = Γ(2s+m)/Γ(2s)`.
pub fn harmonic_r(two_s: f64) -> impl Fn(u32) -> f64 {
    move |m| (ln_gamma(two_s + m as f64) - ln_gamma(two_s)).exp()
}

/// `∫ u^a (1-u)^b M(du) = B(a, b+2s)` for the harmonic bulk measure.
pub fn harmonic_measure_moments(two_s: f64) -> impl Fn(u32, u32) -> Result<f64> {
    move |a, b| {
        if a == 0 {
            return Err(Error::DivergentMoment);
        }
        Ok(ln_beta(a as f64, b as f64 + two_s).exp())
    }
}

/// Moment relation `R_{n-k} R_k ∫u^k M(du) = R_n ∫u^k (1-u)^{n-k} M(du)`,
/// judged by relative error.
pub fn check_moment_relation(
    n: u32,
    k: u32,
    moment_r: impl Fn(u32) -> f64,
    measure_moments: impl Fn(u32, u32) -> Result<f64>,
    tol: f64,
) -> Result<IdentityReport> {
    if k > n {
        return Err(Error::OutOfRange { k: k as u64, n: n as u64 });
    }
    let lhs = moment_r(n - k) * moment_r(k) * measure_moments(k, 0)?;
    let rhs = moment_r(n) * measure_moments(k, n - k)?;
    Ok(IdentityReport::new(
        "moment_relation",
        &[("n", n as f64), ("k", k as f64)],
        lhs,
        rhs,
        ErrorMeasure::Relative,
        tol,
    ))
}

/// Reservoir families with a closed-form intertwining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReservoirFamily {
    /// `x → (x+Y)B` against `θ → (1-U)θ + Uθ*`.
    Kmp,
    /// Exit/input pair against `θ → (1-u)θ + uθ*` under `u^{-1}(1-u)^{2s-1}du`.
    Harmonic,
}

/// `(1/(n+1)) Σ_k θ*^k θ^{n-k}`.
pub fn kmp_reservoir_average(n: u32, theta: f64, theta_star: f64) -> f64 {
    stable_sum((0..=n).map(|k| theta_star.powi(k as i32) * theta.powi((n - k) as i32))) / (n as f64 + 1.0)
}

/// Closed form of both sides for the harmonic reservoir:
/// `θ^n (ψ(2s) - ψ(2s+n)) + Σ_{k≥1} ℳ(k,n) θ^{n-k} θ*^k`.
pub fn harmonic_reservoir_closed_form(n: u32, theta: f64, theta_star: f64, two_s: f64) -> f64 {
    let exit = theta.powi(n as i32) * (digamma(two_s) - digamma(two_s + n as f64));
    let weights = crate::sampling::discrete_harmonic_weights(n as u64, two_s).unwrap_or_default();
    let input = stable_sum(
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * theta.powi((n as usize - i - 1) as i32) * theta_star.powi(i as i32 + 1)),
    );
    exit + input
}

/// Apply the particle reservoir generator then integrate against the
/// Gamma(2s, θ) law (left side), versus integrating first and applying the
/// hidden reservoir generator (right side), on `f(x) = x^n Γ(2s)/Γ(2s+n)`.
pub fn check_reservoir_intertwining(
    n: u32,
    theta: f64,
    theta_star: f64,
    two_s: f64,
    family: ReservoirFamily,
    tol: f64,
) -> Result<IdentityReport> {
    check_shape(two_s)?;
    if !(theta >= 0.0 && theta_star >= 0.0) {
        return Err(Error::InvalidParameter("reservoir parameters must be nonnegative".into()));
    }
    let nn = n as usize;
    let th_n = theta.powi(n as i32);
    let params = [("n", n as f64), ("theta", theta), ("theta_star", theta_star), ("two_s", two_s)];
    match family {
        ReservoirFamily::Kmp => {
            // E[(x+Y)^n] E[B^n] / (2s)_n - θ^n with Gamma and Beta moments.
            let sum = stable_sum((0..=n).map(|k| {
                binomial(n as u64, k as u64)
                    * theta.powi(k as i32)
                    * pochhammer(two_s, k)
                    * theta_star.powi((n - k) as i32)
                    * pochhammer(two_s, n - k)
            }));
            let beta_moment = pochhammer(two_s, n) / pochhammer(2.0 * two_s, n);
            let lhs = sum * beta_moment / pochhammer(two_s, n) - th_n;
            let rule = gauss_beta(GaussRule::nodes_for_degree(nn), two_s, two_s)?;
            let integral = rule.integrate(|u| ((1.0 - u) * theta + u * theta_star).powi(n as i32));
            let rhs = integral - th_n;
            let name = if two_s == 1.0 { "kmp_reservoir_intertwining_uniform" } else { "kmp_reservoir_intertwining" };
            let mut report = IdentityReport::new(name, &params, lhs, rhs, ErrorMeasure::Absolute, tol);
            if two_s == 1.0 {
                let avg = kmp_reservoir_average(n, theta, theta_star);
                report = report.with_numeric("average_form_error", (integral - avg).abs());
            }
            Ok(report)
        }
        ReservoirFamily::Harmonic => {
            if n == 0 {
                let r = IdentityReport::new(
                    "harmonic_reservoir_intertwining",
                    &params,
                    0.0,
                    0.0,
                    ErrorMeasure::Absolute,
                    tol,
                );
                return Ok(r);
            }
            let rule = gauss_beta(GaussRule::nodes_for_degree(nn - 1), 1.0, two_s)?;
            let mass = 1.0 / two_s;
            // ((1-u)^n - 1)/u = -Σ_{j<n} (1-u)^j
            let exit = -th_n * mass * rule.integrate(|u| stable_sum((0..n).map(|j| (1.0 - u).powi(j as i32))));
            let input = stable_sum((1..=n).map(|k| {
                let falling_k = (0..k).fold(1.0, |acc, j| acc * (n - j) as f64);
                falling_k / k as f64 * theta_star.powi(k as i32) * theta.powi((n - k) as i32) * pochhammer(two_s, n - k)
                    / pochhammer(two_s, n)
            }));
            let lhs = exit + input;
            // ((θ + u(θ*-θ))^n - θ^n)/u = (θ*-θ) Σ_j (θ + u(θ*-θ))^j θ^{n-1-j}
            let delta = theta_star - theta;
            let rhs = mass
                * rule.integrate(|u| {
                    let a = theta + u * delta;
                    delta * stable_sum((0..n).map(|j| a.powi(j as i32) * theta.powi((n - 1 - j) as i32)))
                });
            let name =
                if two_s == 1.0 { "exponential_reservoir_intertwining" } else { "harmonic_reservoir_intertwining" };
            let closed = harmonic_reservoir_closed_form(n, theta, theta_star, two_s);
            Ok(IdentityReport::new(name, &params, lhs, rhs, ErrorMeasure::Absolute, tol)
                .with_numeric("closed_form_error", (closed - rhs).abs()))
        }
    }
}

/// Poisson sum `Σ_n π_z(n) f(n)` truncated once the tail mass is negligible.
fn poisson_terms(z: f64) -> Result<Vec<f64>> {
    if z == 0.0 {
        return Ok(vec![1.0]);
    }
    let mut pmf = vec![(-z).exp()];
    let mut mass = pmf[0];
    let mut n = 0usize;
    loop {
        n += 1;
        let next = pmf[n - 1] * z / n as f64;
        pmf.push(next);
        mass += next;
        if n as f64 > 2.0 * z + 20.0 && 1.0 - mass < POISSON_TAIL_MASS && next < 1e-30 {
            return Ok(pmf);
        }
        if n >= POISSON_MAX_TERMS {
            return Err(Error::TruncationInsufficient(POISSON_MAX_TERMS));
        }
    }
}

/// Central difference of `z ↦ Σ π_z(n) f(n)` with the shifted weights
/// combined analytically to avoid cancellation:
/// `π_{z+h}(n) - π_{z-h}(n) = 2 π_z(n) (1-h²/z²)^{n/2} sinh(n atanh(h/z) - h)`.
fn poisson_central_difference(z: f64, h: f64, pmf: &[f64], f: &impl Fn(u64) -> f64) -> f64 {
    let r = h / z;
    let half_log = (-r * r).ln_1p() / 2.0;
    let at = r.atanh();
    stable_sum(pmf.iter().enumerate().map(|(n, p)| {
        let nf = n as f64;
        f(n as u64) * p * 2.0 * (nf * half_log).exp() * (nf * at - h).sinh()
    })) / (2.0 * h)
}

fn richardson_derivative(z: f64, pmf: &[f64], f: &impl Fn(u64) -> f64) -> f64 {
    let mut table: Vec<f64> =
        (0..RICHARDSON_LEVELS).map(|l| poisson_central_difference(z, FD_STEP / 2f64.powi(l as i32), pmf, f)).collect();
    let mut factor = 4.0;
    for _ in 1..RICHARDSON_LEVELS {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    table[0]
}

/// Which ladder operator the Poisson intertwiner is tested with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderOp {
    /// `a f(n) = n f(n-1)` against multiplication by `z`.
    Annihilation,
    /// `a† f(n) = f(n+1)` against `f' + f`.
    Creation,
}

/// One point of the Poisson intertwiner check on `f(n) = n^m`.
pub fn poisson_intertwiner_point(m: u32, z: f64, op: LadderOp, tol: f64) -> Result<IdentityReport> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("Poisson parameter must be nonnegative, got {z}")));
    }
    let pmf = poisson_terms(z)?;
    let f = |n: u64| (n as f64).powi(m as i32);
    let g = |h: &dyn Fn(u64) -> f64| stable_sum(pmf.iter().enumerate().map(|(n, p)| p * h(n as u64)));
    let params = [("m", m as f64), ("z", z)];
    let report = match op {
        LadderOp::Annihilation => {
            let lhs = g(&|n| if n == 0 { 0.0 } else { n as f64 * f(n - 1) });
            let rhs = z * g(&f);
            IdentityReport::new("poisson_intertwiner_annihilation", &params, lhs, rhs, ErrorMeasure::Absolute, tol)
        }
        LadderOp::Creation => {
            if z < 2.0 * FD_STEP {
                return Err(Error::InvalidParameter(format!("z = {z} is too close to 0 for the difference step")));
            }
            let lhs = g(&|n| f(n + 1));
            let rhs = richardson_derivative(z, &pmf, &f) + g(&f);
            IdentityReport::new("poisson_intertwiner_creation", &params, lhs, rhs, ErrorMeasure::Absolute, tol)
                .with_numeric("fd_step", FD_STEP)
                .with_numeric("richardson_levels", RICHARDSON_LEVELS as f64)
        }
    };
    Ok(report.with_numeric("poisson_terms", pmf.len() as f64))
}

/// Worst case of the Poisson intertwiner over monomials `m ≤ n_max`,
/// both ladder operators and the given `z` values.
pub fn check_poisson_intertwiner(n_max: u32, z_grid: &[f64], tol: f64) -> Result<IdentityReport> {
    let mut worst: Option<IdentityReport> = None;
    for op in [LadderOp::Annihilation, LadderOp::Creation] {
        for &z in z_grid {
            for m in 0..=n_max {
                let r = poisson_intertwiner_point(m, z, op, tol)?;
                if worst.as_ref().is_none_or(|w| r.abs_error > w.abs_error) {
                    worst = Some(r);
                }
            }
        }
    }
    let mut r = worst.ok_or_else(|| Error::InvalidParameter("empty z grid".into()))?;
    r.identity = "poisson_intertwiner".into();
    r.numerics.insert("n_max".into(), n_max as f64);
    r.numerics.insert("fd_step".into(), FD_STEP);
    r.numerics.insert("richardson_levels".into(), RICHARDSON_LEVELS as f64);
    Ok(r)
}

/// Monte Carlo comparison of the particle model and its hidden parameter
/// model at time `t`.
///
/// Discrete families run the particle dynamics from `ξ` and average
/// `∏ θ_init^{ξ(t)}`. Continuous families start from `⊗ Gamma(2s, θ_init)`
/// and average `D_m(ξ, ζ(t))`. The hidden side averages `∏ θ(t)^ξ`.
/// Passes when the difference is below three combined standard errors.
pub fn mc_mixture_duality(
    particle: &Model,
    xi: &DualIndex,
    theta_init: &[f64],
    t: f64,
    n_traj: usize,
    numerics: &Numerics,
    rng: &RngStream,
) -> Result<IdentityReport> {
    let n = particle.graph().len();
    if xi.0.len() != n || theta_init.len() != n {
        return Err(Error::InvalidParameter("ξ and θ must have one entry per vertex".into()));
    }
    let hidden_family = match particle.family() {
        Family::KmpDiscrete | Family::KmpContinuous => Family::HiddenKmp,
        Family::HarmonicDiscrete | Family::HarmonicContinuous => Family::HiddenHarmonic,
        f => return Err(Error::Unsupported(format!("no hidden parameter pairing for {f}"))),
    };
    let hidden = particle.with_family(hidden_family)?;
    let two_s = particle.two_s();
    let theta_state = StateVector::Thetas(theta_init.to_vec());
    let hidden_side = ensemble_at(
        &hidden,
        |_| theta_state.clone(),
        t,
        n_traj,
        "hidden_moment",
        |s| eval_duality_index(DualityKind::Parameter, xi, s).unwrap_or(f64::NAN),
        numerics,
        &rng.derive(0),
    )?;
    let particle_side = match particle.family() {
        Family::KmpDiscrete | Family::HarmonicDiscrete => {
            let start = xi.as_state();
            ensemble_at(
                particle,
                |_| start.clone(),
                t,
                n_traj,
                "dual_particle_moment",
                |s| eval_duality(DualityKind::Parameter, s, &theta_state).unwrap_or(f64::NAN),
                numerics,
                &rng.derive(1),
            )?
        }
        _ => ensemble_at(
            particle,
            |r| StateVector::Masses(theta_init.iter().map(|&th| gamma_sample(two_s, th, r)).collect()),
            t,
            n_traj,
            "mixture_moment",
            |s| eval_duality_index(DualityKind::Moment { two_s }, xi, s).unwrap_or(f64::NAN),
            numerics,
            &rng.derive(1),
        )?,
    };
    let se = (hidden_side.se.powi(2) + particle_side.se.powi(2)).sqrt();
    let mut params: Vec<(String, f64)> =
        vec![("t".into(), t), ("n_traj".into(), n_traj as f64), ("two_s".into(), two_s)];
    for (i, (&k, &th)) in xi.0.iter().zip(theta_init).enumerate() {
        params.push((format!("xi_{i}"), k as f64));
        params.push((format!("theta_{i}"), th));
    }
    let refs: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let name = format!("mixture_duality_{}", particle.family().name().to_lowercase());
    let report =
        IdentityReport::new(&name, &refs, particle_side.mean, hidden_side.mean, ErrorMeasure::Absolute, 3.0 * se)
            .with_numeric("combined_se", se)
            .with_numeric("epsilon", numerics.epsilon);
    Ok(report)
}

/// Relative error of the Beta rules on monomial moments up to `max_degree`,
/// against the Gamma-ratio closed form.
pub fn check_quadrature_moments(p: f64, q: f64, max_degree: u32, tol: f64) -> Result<IdentityReport> {
    let mut worst = (0.0f64, 0u32, 1.0, 1.0);
    for k in 0..=max_degree {
        let rule = gauss_beta(GaussRule::nodes_for_degree(k as usize), p, q)?;
        let approx = rule.integrate(|u| u.powi(k as i32));
        // B(p+k, q)/B(p, q) = Γ(p+k)Γ(p+q)/(Γ(p)Γ(p+q+k)) as a Pochhammer ratio.
        let exact = (0..k).fold(1.0, |acc, j| acc * (p + j as f64) / (p + q + j as f64));
        let rel = ((approx - exact) / exact).abs();
        if rel >= worst.0 {
            worst = (rel, k, approx, exact);
        }
    }
    Ok(IdentityReport::new(
        "quadrature_beta_moments",
        &[("p", p), ("q", q), ("max_degree", max_degree as f64), ("worst_degree", worst.1 as f64)],
        worst.2,
        worst.3,
        ErrorMeasure::Relative,
        tol,
    ))
}

/// Grids and tolerances of the deterministic identity suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    pub two_s_grid: Vec<f64>,
    pub kmp_max_order: u32,
    pub kmp_theta_grid: Vec<f64>,
    pub moment_max_n: u32,
    pub reservoir_max_n: u32,
    pub reservoir_theta_grid: Vec<f64>,
    pub redistribution_grid: Vec<f64>,
    pub redistribution_eps: f64,
    pub poisson_max_m: u32,
    pub poisson_z_grid: Vec<f64>,
    pub quadrature_max_degree: u32,
    pub tol_quadrature: f64,
    pub tol_kmp_edge: f64,
    pub tol_redistribution: f64,
    pub tol_moment: f64,
    pub tol_reservoir: f64,
    pub tol_poisson: f64,
    /// Replaces every tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            two_s_grid: vec![0.25, 0.5, 1.0, 2.0, 3.5, 4.0],
            kmp_max_order: 10,
            kmp_theta_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            moment_max_n: 20,
            reservoir_max_n: 40,
            reservoir_theta_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            redistribution_grid: vec![0.0, 0.4, 1.3],
            redistribution_eps: 1e-2,
            poisson_max_m: 8,
            poisson_z_grid: vec![0.1, 1.0, 5.0],
            quadrature_max_degree: 60,
            tol_quadrature: 1e-13,
            tol_kmp_edge: 1e-10,
            tol_redistribution: 1e-9,
            tol_moment: 1e-10,
            tol_reservoir: 1e-10,
            tol_poisson: 1e-6,
            tolerance: None,
        }
    }
}

impl SuiteOptions {
    fn tol(&self, t: f64) -> f64 {
        self.tolerance.unwrap_or(t)
    }
}

/// Identity families of the suite, in run order.
pub const SUITE_FAMILIES: [&str; 7] = [
    "quadrature",
    "kmp_edge",
    "mass_redistribution",
    "moment_relation",
    "reservoir_kmp",
    "reservoir_harmonic",
    "poisson",
];

/// Reports of one identity family of the suite.
pub fn run_suite_family(family: &str, o: &SuiteOptions) -> Result<Vec<IdentityReport>> {
    let mut points: Vec<Box<dyn Fn() -> Result<IdentityReport> + Send + Sync>> = Vec::new();
    match family {
        "quadrature" => {
            for &ts in &o.two_s_grid {
                let (deg, tol) = (o.quadrature_max_degree, o.tol(o.tol_quadrature));
                points.push(Box::new(move || check_quadrature_moments(ts, ts, deg, tol)));
                points.push(Box::new(move || check_quadrature_moments(1.0, ts, deg, tol)));
            }
        }
        "kmp_edge" => {
            for &ts in &o.two_s_grid {
                for a in 0..=o.kmp_max_order {
                    for b in 0..=(o.kmp_max_order - a) {
                        for &ti in &o.kmp_theta_grid {
                            for &tj in &o.kmp_theta_grid {
                                let tol = o.tol(o.tol_kmp_edge);
                                points.push(Box::new(move || check_kmp_edge_duality((a, b), (ti, tj), ts, tol)));
                            }
                        }
                    }
                }
            }
        }
        "mass_redistribution" => {
            for &ts in &o.two_s_grid {
                for &y1 in &o.redistribution_grid {
                    for &y2 in &o.redistribution_grid {
                        for &(t1, t2) in &[(0.1, 0.1), (0.2, 0.7), (0.9, -0.3)] {
                            let (eps, tol) = (o.redistribution_eps, o.tol(o.tol_redistribution));
                            points.push(Box::new(move || {
                                check_mass_redistribution_duality((y1, y2), (t1, t2), ts, eps, tol)
                            }));
                        }
                    }
                }
            }
        }
        "moment_relation" => {
            for &ts in &o.two_s_grid {
                for n in 1..=o.moment_max_n {
                    for k in 1..=n {
                        let tol = o.tol(o.tol_moment);
                        points.push(Box::new(move || {
                            check_moment_relation(n, k, harmonic_r(ts), harmonic_measure_moments(ts), tol)
                                .map(|r| add_param(r, "two_s", ts))
                        }));
                    }
                }
            }
        }
        "reservoir_kmp" | "reservoir_harmonic" => {
            let fam = if family == "reservoir_kmp" { ReservoirFamily::Kmp } else { ReservoirFamily::Harmonic };
            for &ts in &o.two_s_grid {
                for n in 0..=o.reservoir_max_n {
                    for &th in &o.reservoir_theta_grid {
                        for &ths in &o.reservoir_theta_grid {
                            let tol = o.tol(o.tol_reservoir);
                            points.push(Box::new(move || check_reservoir_intertwining(n, th, ths, ts, fam, tol)));
                        }
                    }
                }
            }
        }
        "poisson" => {
            for op in [LadderOp::Annihilation, LadderOp::Creation] {
                for &z in &o.poisson_z_grid {
                    for m in 0..=o.poisson_max_m {
                        let tol = o.tol(o.tol_poisson);
                        points.push(Box::new(move || poisson_intertwiner_point(m, z, op, tol)));
                    }
                }
            }
        }
        other => return Err(Error::InvalidParameter(format!("unknown identity family `{other}`"))),
    }
    points.par_iter().map(|p| p()).collect()
}

fn add_param(mut r: IdentityReport, key: &str, v: f64) -> IdentityReport {
    r.parameters.insert(key.to_string(), v);
    r
}

/// The full deterministic suite; the quadrature self-check runs first.
pub fn run_identity_suite(o: &SuiteOptions) -> Result<Vec<IdentityReport>> {
    let mut out = Vec::new();
    for fam in SUITE_FAMILIES {
        out.extend(run_suite_family(fam, o)?);
    }
    Ok(out)
}

/// Per-identity summary: count, failures and worst error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub identity: String,
    pub checks: usize,
    pub failures: usize,
    pub worst_error: f64,
    pub tolerance: f64,
}

pub fn summarize(reports: &[IdentityReport]) -> Vec<SuiteSummary> {
    let mut map: BTreeMap<&str, SuiteSummary> = BTreeMap::new();
    for r in reports {
        let e = map.entry(&r.identity).or_insert_with(|| SuiteSummary {
            identity: r.identity.clone(),
            checks: 0,
            failures: 0,
            worst_error: 0.0,
            tolerance: r.tolerance,
        });
        e.checks += 1;
        e.failures += (!r.pass) as usize;
        let aux = r.numerics.iter().filter(|(k, _)| k.ends_with("_error")).map(|(_, v)| *v).fold(0.0, f64::max);
        e.worst_error = e.worst_error.max(r.error()).max(aux);
        e.tolerance = e.tolerance.max(r.tolerance);
    }
    map.into_values().collect()
}

/// Total rate `λ_ε` of the bulk measure, exposed for reports.
pub fn bulk_rate(two_s: f64, eps: f64) -> Result<f64> {
    harmonic_bulk_rate(two_s, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duality_function_values() {
        let zero = StateVector::Counts(vec![0, 0]);
        let eta = StateVector::Counts(vec![3, 1]);
        assert_eq!(eval_duality(DualityKind::Factorial { two_s: 0.7 }, &zero, &eta).unwrap(), 1.0);
        let xi = StateVector::Counts(vec![1, 0]);
        assert_eq!(eval_duality(DualityKind::Factorial { two_s: 1.0 }, &xi, &eta).unwrap(), 3.0);
        let xi = StateVector::Counts(vec![0, 2]);
        assert_eq!(eval_duality(DualityKind::Factorial { two_s: 1.0 }, &xi, &eta).unwrap(), 0.0);
        let th = StateVector::Thetas(vec![2.0, 0.5]);
        assert_eq!(eval_duality(DualityKind::Parameter, &StateVector::Counts(vec![3, 2]), &th).unwrap(), 2.0);
        let z = StateVector::Masses(vec![1.0, 2.0]);
        assert!((eval_duality(DualityKind::Exponential, &th, &z).unwrap() - 3f64.exp()).abs() < 1e-12);
        assert_eq!(
            eval_duality(DualityKind::Moment { two_s: 2.0 }, &StateVector::Counts(vec![1, 0]), &z).unwrap(),
            0.5
        );
        assert!(matches!(
            eval_duality(DualityKind::Factorial { two_s: 1.0 }, &xi, &z),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn kmp_edge_hand_case() {
        let r = check_kmp_edge_duality((1, 0), (0.3, 1.7), 1.0, 1e-12).unwrap();
        assert!((r.lhs - ((0.3 + 1.7) / 2.0 - 0.3)).abs() < 1e-14);
        assert!(r.pass);
        let r = check_kmp_edge_duality((0, 0), (0.3, 1.7), 0.5, 1e-12).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn moment_relation_cases() {
        let r = check_moment_relation(2, 1, harmonic_r(1.0), harmonic_measure_moments(1.0), 1e-12).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-14 && (r.rhs - 1.0).abs() < 1e-14);
        let r = check_moment_relation(5, 5, harmonic_r(0.5), harmonic_measure_moments(0.5), 1e-12).unwrap();
        assert!(r.pass);
        assert!(matches!(
            check_moment_relation(3, 0, harmonic_r(1.0), harmonic_measure_moments(1.0), 1e-12),
            Err(Error::DivergentMoment)
        ));
    }

    #[test]
    fn reservoir_cases() {
        for fam in [ReservoirFamily::Kmp, ReservoirFamily::Harmonic] {
            let r = check_reservoir_intertwining(0, 0.4, 0.9, 1.5, fam, 1e-12).unwrap();
            assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        }
        let r = check_reservoir_intertwining(1, 0.2, 0.8, 1.0, ReservoirFamily::Kmp, 1e-12).unwrap();
        assert!((r.rhs - (0.5 - 0.2)).abs() < 1e-15 && r.pass);
        let r = check_reservoir_intertwining(7, 0.6, 0.3, 0.25, ReservoirFamily::Harmonic, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn poisson_basic() {
        let r = poisson_intertwiner_point(0, 1.0, LadderOp::Annihilation, 1e-12).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-14);
        let r = poisson_intertwiner_point(0, 5.0, LadderOp::Creation, 1e-9).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-14 && r.pass);
        let r = check_poisson_intertwiner(8, &[0.1, 1.0, 5.0], 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn mass_redistribution_equal_thetas() {
        let r = check_mass_redistribution_duality((0.7, 1.1), (0.4, 0.4), 0.5, 1e-2, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn tighter_tolerance_never_passes_more() {
        let r = check_kmp_edge_duality((4, 3), (2.5, 0.5), 0.25, 1e-10).unwrap();
        assert!(r.pass);
        assert!(!r.clone().with_tolerance(0.0).pass || r.abs_error == 0.0);
        assert!(r.with_tolerance(1.0).pass);
    }
}
