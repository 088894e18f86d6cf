//! Stationary-state experiments: stationary sampling, exact oracles for the
//! known invariant laws, and statistical comparisons against them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{irw_fixed_point, BepSimulator, CoupledHarmonicSimulator, JumpSimulator, Numerics};
use crate::error::{Error, Result};
use crate::generators::reservoir_rate_sums;
use crate::model::{Family, Graph, HarmonicReservoirKind, Model, ModelSpec, ReservoirSpec, StateVector};
use crate::rng::RngStream;
use crate::sampling::{
    beta_cdf, discrete_gamma_pmf, gamma_sample, poisson_pmf, poisson_sample, MixingLaw, DEFAULT_TERM_BUDGET,
};
use crate::special::{binomial, pochhammer, stable_sum};
use crate::stats::{batch_means, ks_statistic, mean, tv_distance, BatchMeans, DEFAULT_BATCHES};

/// z threshold for moment tests.
pub const Z_THRESHOLD: f64 = 3.0;
/// KS threshold for single-site laws.
pub const KS_THRESHOLD: f64 = 0.01;
/// TV threshold for discrete laws.
pub const TV_THRESHOLD: f64 = 0.02;
/// Mass covered by the explicit TV window; the rest is one tail bin.
pub const TV_WINDOW_MASS: f64 = 1.0 - 1e-6;
/// Allowed deviation of the index of dispersion from 1.
pub const DISPERSION_TOLERANCE: f64 = 0.03;
/// Relative change allowed between consecutive sweep levels.
pub const SWEEP_RELATIVE: f64 = 0.01;
/// Monte Carlo sample size for mixing moments beyond the term budget.
pub const ORACLE_MC_SAMPLES: usize = 10_000_000;
/// Standard deviation of the limiting Kolmogorov law.
const KOLMOGOROV_SD: f64 = 0.2603;

/// Known invariant laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "kind")]
pub enum StationaryOracle {
    Uniform { theta_left: f64, theta_right: f64 },
    BetaRescaled { two_s: f64, theta_left: f64, theta_right: f64 },
    OrderedDirichlet(MixingLaw),
    DiscreteGamma { two_s: f64, theta: f64 },
    Gamma { two_s: f64, theta: f64 },
    PoissonProduct { z: Vec<f64> },
}

fn rescaled_beta_moment(k: u32, p: f64, q: f64, lo: f64, width: f64) -> f64 {
    stable_sum((0..=k).map(|j| {
        binomial(k as u64, j as u64) * lo.powi((k - j) as i32) * width.powi(j as i32) * pochhammer(p, j)
            / pochhammer(p + q, j)
    }))
}

/// `Σ_n pmf(n) n^k` until the remaining mass is negligible.
fn discrete_raw_moment(k: u32, pmf: impl Fn(u64) -> f64, mean_hint: f64) -> f64 {
    let mut terms = Vec::new();
    let mut mass = 0.0;
    let mut n = 0u64;
    loop {
        let p = pmf(n);
        mass += p;
        terms.push(p * (n as f64).powi(k as i32));
        n += 1;
        if n as f64 > 2.0 * mean_hint + 30.0 && 1.0 - mass < 1e-15 && p < 1e-18 {
            break;
        }
        if n > 1_000_000 {
            break;
        }
    }
    stable_sum(terms)
}

impl StationaryOracle {
    pub fn dim(&self) -> usize {
        match self {
            StationaryOracle::OrderedDirichlet(l) => l.n_sites,
            StationaryOracle::PoissonProduct { z } => z.len(),
            _ => 1,
        }
    }

    /// `E[∏ x_i^{ξ_i}]`.
    pub fn moment(&self, xi: &[u32]) -> Result<f64> {
        if xi.len() != self.dim() {
            return Err(Error::InvalidParameter(format!("expected {} exponents", self.dim())));
        }
        Ok(match self {
            StationaryOracle::Uniform { theta_left, theta_right } => {
                rescaled_beta_moment(xi[0], 1.0, 1.0, *theta_left, theta_right - theta_left)
            }
            StationaryOracle::BetaRescaled { two_s, theta_left, theta_right } => {
                rescaled_beta_moment(xi[0], *two_s, *two_s, *theta_left, theta_right - theta_left)
            }
            StationaryOracle::OrderedDirichlet(law) => law.moment(xi, DEFAULT_TERM_BUDGET)?,
            StationaryOracle::Gamma { two_s, theta } => theta.powi(xi[0] as i32) * pochhammer(*two_s, xi[0]),
            StationaryOracle::DiscreteGamma { two_s, theta } => discrete_raw_moment(
                xi[0],
                |n| discrete_gamma_pmf(n, *theta, *two_s).unwrap_or(0.0),
                two_s * theta * (1.0 + theta),
            ),
            StationaryOracle::PoissonProduct { z } => z
                .iter()
                .zip(xi)
                .map(|(&zi, &k)| discrete_raw_moment(k, |n| poisson_pmf(n, zi).unwrap_or(0.0), zi))
                .product(),
        })
    }

    /// Distribution function of a one-dimensional continuous oracle.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            StationaryOracle::Uniform { theta_left, theta_right } => {
                Some(((x - theta_left) / (theta_right - theta_left)).clamp(0.0, 1.0))
            }
            StationaryOracle::BetaRescaled { two_s, theta_left, theta_right } => {
                let u = ((x - theta_left) / (theta_right - theta_left)).clamp(0.0, 1.0);
                Some(beta_cdf(*two_s, *two_s, u))
            }
            StationaryOracle::Gamma { two_s, theta } => {
                crate::sampling::GammaLaw::new(*two_s, *theta).ok().map(|g| g.cdf(x))
            }
            StationaryOracle::OrderedDirichlet(law) if law.n_sites == 1 => StationaryOracle::BetaRescaled {
                two_s: law.two_s,
                theta_left: law.theta_left,
                theta_right: law.theta_right,
            }
            .cdf(x),
            _ => None,
        }
    }

    /// Mass function of a one-dimensional discrete oracle.
    pub fn pmf(&self, n: u64) -> Option<f64> {
        match self {
            StationaryOracle::DiscreteGamma { two_s, theta } => discrete_gamma_pmf(n, *theta, *two_s).ok(),
            StationaryOracle::PoissonProduct { z } if z.len() == 1 => poisson_pmf(n, z[0]).ok(),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok(match self {
            StationaryOracle::Uniform { theta_left, theta_right } => {
                vec![theta_left + (theta_right - theta_left) * rng.uniform()]
            }
            StationaryOracle::BetaRescaled { two_s, theta_left, theta_right } => {
                vec![theta_left + (theta_right - theta_left) * crate::sampling::beta_sample(*two_s, rng)?]
            }
            StationaryOracle::OrderedDirichlet(law) => law.sample(rng),
            StationaryOracle::Gamma { two_s, theta } => vec![gamma_sample(*two_s, *theta, rng)],
            StationaryOracle::DiscreteGamma { two_s, theta } => {
                vec![crate::sampling::discrete_gamma_sample(*theta, *two_s, rng)? as f64]
            }
            StationaryOracle::PoissonProduct { z } => {
                z.iter().map(|&zi| poisson_sample(zi, rng).map(|n| n as f64)).collect::<Result<_>>()?
            }
        })
    }
}

/// A mixing moment, exact unless `se` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMoment {
    pub value: f64,
    pub se: Option<f64>,
}

/// `E_Λ[∏ θ_i^{ξ_i}]`, exact by Dirichlet-increment expansion. Beyond the
/// term budget a Monte Carlo estimate is used when `fallback` is given.
pub fn mixing_oracle_moments(law: &MixingLaw, xi: &[u32], fallback: Option<&RngStream>) -> Result<OracleMoment> {
    if xi.iter().sum::<u32>() > 8 {
        return Err(Error::InvalidParameter("mixing moments are supported up to total order 8".into()));
    }
    match law.moment(xi, DEFAULT_TERM_BUDGET) {
        Ok(value) => Ok(OracleMoment { value, se: None }),
        Err(Error::TermBudget(b)) => {
            let rng = fallback.ok_or(Error::TermBudget(b))?;
            let chunks = 64u64;
            let per = ORACLE_MC_SAMPLES as u64 / chunks;
            let vals: Vec<f64> = (0..chunks)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let mut r = rng.derive(c);
                    (0..per)
                        .map(|_| {
                            let th = law.sample(&mut r);
                            th.iter().zip(xi).map(|(t, &k)| t.powi(k as i32)).product::<f64>()
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            Ok(OracleMoment { value: mean(&vals), se: Some(crate::stats::standard_error(&vals)) })
        }
        Err(e) => Err(e),
    }
}

/// Test statistic of a [`ComparisonReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestKind {
    /// Kolmogorov–Smirnov distance.
    Ks,
    /// `|estimate - target| / se`.
    MomentZ,
    ChiSquare,
    /// Total-variation distance.
    Tv,
    /// `|estimate/target - 1|`.
    Relative,
    /// `|Var/Mean - 1|`.
    Dispersion,
    /// Change between consecutive sweep levels, in units of the allowed change.
    Sweep,
}

/// Run settings every comparison carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub epsilon: Option<f64>,
    pub dt: Option<f64>,
    pub burn_in: f64,
    pub thinning: f64,
    pub chains: usize,
}

impl RunMetadata {
    pub fn validate(&self) -> Result<()> {
        let ok = self.burn_in.is_finite()
            && self.burn_in >= 0.0
            && self.thinning.is_finite()
            && self.thinning >= 0.0
            && self.chains >= 1
            && self.epsilon.is_none_or(|e| e > 0.0 && e < 1.0)
            && self.dt.is_none_or(|d| d > 0.0 && d.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("incomplete run metadata {self:?}")))
        }
    }
}

/// Outcome of one statistical comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    pub test: TestKind,
    pub statistic: f64,
    pub threshold: f64,
    pub sample_size: usize,
    /// Effective sample size from batch means, when estimated.
    pub ess: Option<f64>,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    pub pass: bool,
    pub metadata: RunMetadata,
    pub flags: Vec<String>,
}

impl ComparisonReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        test: TestKind,
        statistic: f64,
        threshold: f64,
        sample_size: usize,
        estimate: f64,
        target: f64,
        se: f64,
        metadata: RunMetadata,
    ) -> Self {
        ComparisonReport {
            name: name.into(),
            test,
            statistic,
            threshold,
            sample_size,
            ess: None,
            estimate,
            target,
            se,
            pass: statistic <= threshold,
            metadata,
            flags: Vec::new(),
        }
    }

    /// z-test of a batch-means estimate against an exact target, with an
    /// optional oracle standard error added in quadrature.
    pub fn z_test(name: impl Into<String>, est: &BatchMeans, target: f64, target_se: f64, meta: RunMetadata) -> Self {
        let se = (est.se * est.se + target_se * target_se).sqrt();
        let z = crate::stats::z_score(est.mean, se, target).abs();
        let mut r = Self::new(name, TestKind::MomentZ, z, Z_THRESHOLD, est.n, est.mean, target, se, meta);
        r.ess = Some(est.ess);
        r
    }

    /// Two-sample z-test of independent batch-means estimates.
    pub fn two_sample(name: impl Into<String>, a: &BatchMeans, b: &BatchMeans, meta: RunMetadata) -> Self {
        let se = (a.se * a.se + b.se * b.se).sqrt();
        let z = crate::stats::z_score(a.mean - b.mean, se, 0.0).abs();
        let mut r = Self::new(name, TestKind::MomentZ, z, Z_THRESHOLD, a.n + b.n, a.mean, b.mean, se, meta);
        r.ess = Some(a.ess.min(b.ess));
        r
    }

    fn flag(mut self, f: impl Into<String>) -> Self {
        self.flags.push(f.into());
        self
    }
}

/// How stationary samples are collected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPlan {
    /// Time discarded at the start of every chain.
    pub burn_in: f64,
    pub n_samples: usize,
    /// Time between samples; `None` picks five mean per-site holding times.
    pub thinning: Option<f64>,
    /// Independent chains run in parallel; samples are stored chain by chain.
    pub chains: usize,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { burn_in: 50.0, n_samples: 20_000, thinning: None, chains: 8 }
    }
}

impl SamplingPlan {
    pub fn new(burn_in: f64, n_samples: usize, thinning: f64, chains: usize) -> Self {
        SamplingPlan { burn_in, n_samples, thinning: Some(thinning), chains }
    }

    fn check(&self) -> Result<()> {
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "burn-in must be finite and nonnegative, got {}",
                self.burn_in
            )));
        }
        if let Some(t) = self.thinning {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("thinning must be positive, got {t}")));
            }
        }
        if self.chains == 0 || self.n_samples == 0 {
            return Err(Error::InvalidParameter("need at least one chain and one sample".into()));
        }
        Ok(())
    }

    fn per_chain(&self, chain: usize) -> usize {
        let chains = self.chains.min(self.n_samples);
        self.n_samples / chains + usize::from(chain < self.n_samples % chains)
    }
}

/// Stationary samples with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRun {
    pub samples: Vec<StateVector>,
    pub metadata: RunMetadata,
    pub events: u64,
}

impl StationaryRun {
    /// Values of site `i` across samples.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(i)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        let n = self.samples.first().map_or(0, |s| s.len());
        (0..n).map(|i| self.column(i)).collect()
    }
}

fn relaxation_scale(model: &Model) -> f64 {
    let g = model.graph();
    let damping = reservoir_rate_sums(model).iter().map(|s| (s.1 - s.0).abs()).fold(0.0, f64::max);
    let degree = (0..g.len()).map(|i| g.degree_weight(i)).fold(0.0, f64::max);
    damping + degree
}

/// Five mean per-site holding times, measured on a pilot run of length
/// `burn_in` (at least 1).
fn default_thinning(
    model: &Model,
    init: &StateVector,
    burn_in: f64,
    numerics: &Numerics,
    rng: RngStream,
) -> Result<f64> {
    if model.family() == Family::Bep {
        let scale = relaxation_scale(model);
        return Ok(if scale > 0.0 { 5.0 / scale } else { 5.0 });
    }
    let eps = model.family().needs_epsilon().then_some(numerics.epsilon);
    let horizon = burn_in.max(1.0);
    let mut sim = JumpSimulator::new(model, init.clone(), eps, rng)?.with_rate_cap(numerics.rate_cap);
    sim.advance_to(horizon)?;
    let per_site = sim.events() as f64 / (horizon * model.graph().len() as f64);
    if per_site <= 0.0 {
        return Err(Error::InvalidParameter("no events during the pilot run; pass an explicit thinning".into()));
    }
    Ok(5.0 / per_site)
}

fn default_init(model: &Model) -> StateVector {
    StateVector::zeros(model.family().state_kind(), model.graph().len())
}

/// Run one chain, calling `on_sample` with every retained state.
#[allow(clippy::too_many_arguments)]
fn run_chain(
    model: &Model,
    init: StateVector,
    burn_in: f64,
    thinning: f64,
    count: usize,
    numerics: &Numerics,
    rng: RngStream,
    mut on_sample: impl FnMut(StateVector),
) -> Result<u64> {
    match model.family() {
        Family::Bep => {
            let mut sim = BepSimulator::new(model, init, numerics.dt, rng)?;
            sim.advance_to(burn_in);
            for k in 1..=count {
                sim.advance_to(burn_in + k as f64 * thinning);
                on_sample(sim.state());
            }
            Ok(sim.steps())
        }
        Family::IrwFlow => Err(Error::Unsupported("the walker flow is deterministic; use irw_fixed_point".into())),
        f => {
            let eps = f.needs_epsilon().then_some(numerics.epsilon);
            let mut sim = JumpSimulator::new(model, init, eps, rng)?.with_rate_cap(numerics.rate_cap);
            sim.advance_to(burn_in)?;
            for k in 1..=count {
                sim.advance_to(burn_in + k as f64 * thinning)?;
                on_sample(sim.state().clone());
            }
            Ok(sim.events())
        }
    }
}

/// Collect stationary samples after burn-in at fixed time intervals.
/// Chain `k` uses `rng.derive(k)`; the thinning pilot uses a separate child.
pub fn stationary_samples(
    model: &Model,
    init: Option<StateVector>,
    plan: &SamplingPlan,
    numerics: &Numerics,
    rng: &RngStream,
) -> Result<StationaryRun> {
    plan.check()?;
    if !model.has_reservoirs() {
        return Err(Error::InvalidParameter("stationary sampling needs at least one reservoir".into()));
    }
    let init = init.unwrap_or_else(|| default_init(model));
    init.expect_kind(model.family().state_kind(), model.graph().len())?;
    let thinning = match plan.thinning {
        Some(t) => t,
        None => default_thinning(model, &init, plan.burn_in, numerics, rng.derive(u64::MAX))?,
    };
    let chains = plan.chains.min(plan.n_samples);
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(plan.per_chain(c));
            let events = run_chain(
                model,
                init.clone(),
                plan.burn_in,
                thinning,
                plan.per_chain(c),
                numerics,
                rng.derive(c as u64),
                |s| out.push(s),
            )?;
            Ok((out, events))
        })
        .collect::<Result<Vec<_>>>()?;
    let events = runs.iter().map(|r| r.1).sum();
    let samples = runs.into_iter().flat_map(|r| r.0).collect();
    let family = model.family();
    let metadata = RunMetadata {
        epsilon: family.needs_epsilon().then_some(numerics.epsilon),
        dt: (family == Family::Bep).then_some(numerics.dt),
        burn_in: plan.burn_in,
        thinning,
        chains,
    };
    Ok(StationaryRun { samples, metadata, events })
}

/// Chain `1 … n` with unit bulk weights, coupling 1 at both ends and
/// reservoirs `θ_L` at site 1 and `θ_R` at site `n`.
pub fn chain_model(family: Family, n: usize, two_s: f64, theta_left: f64, theta_right: f64) -> Result<Model> {
    let g = Graph::chain(n, 1.0)?;
    let spec = ModelSpec::new(family, two_s)
        .with_reservoir("1", ReservoirSpec::theta(theta_left))
        .with_reservoir(n.to_string(), ReservoirSpec::theta(theta_right));
    Model::new(&g, spec)
}

fn centered_products(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect()
}

/// Stationary chain experiment for the hidden or the continuous harmonic
/// model against the ordered-Dirichlet mixing law.
///
/// Hidden family: site means and covariances of `θ`, plus a KS test against
/// the rescaled Beta law when `n = 1`. Continuous family: site moments
/// `E[ζ_i^k]`, `k ≤ 3`, against `R_k E_Λ[θ_i^k]`.
#[allow(clippy::too_many_arguments)]
pub fn ness_chain_experiment(
    family: Family,
    n: usize,
    two_s: f64,
    theta_left: f64,
    theta_right: f64,
    numerics: &Numerics,
    plan: &SamplingPlan,
    rng: &RngStream,
) -> Result<Vec<ComparisonReport>> {
    if !matches!(family, Family::HiddenHarmonic | Family::HarmonicContinuous) {
        return Err(Error::Unsupported(format!("chain experiment is defined for harmonic families, not {family}")));
    }
    let model = chain_model(family, n, two_s, theta_left, theta_right)?;
    let law = MixingLaw::new(n, two_s, theta_left, theta_right)?;
    let run = stationary_samples(&model, None, plan, numerics, rng)?;
    let meta = run.metadata;
    let cols = run.columns();
    let unit = |i: usize, k: u32| {
        let mut xi = vec![0u32; n];
        xi[i] += k;
        xi
    };
    let oracle_rng = rng.derive(u64::MAX - 1);
    let mut out = Vec::new();
    if family == Family::HiddenHarmonic {
        for (i, col) in cols.iter().enumerate() {
            let target = mixing_oracle_moments(&law, &unit(i, 1), Some(&oracle_rng))?;
            let est = batch_means(col, DEFAULT_BATCHES);
            out.push(ComparisonReport::z_test(
                format!("mean_theta_{}", i + 1),
                &est,
                target.value,
                target.se.unwrap_or(0.0),
                meta,
            ));
        }
        for i in 0..n {
            for j in i..n {
                let mut xi = unit(i, 1);
                xi[j] += 1;
                let second = law.moment(&xi, DEFAULT_TERM_BUDGET)?;
                let target = second
                    - law.moment(&unit(i, 1), DEFAULT_TERM_BUDGET)? * law.moment(&unit(j, 1), DEFAULT_TERM_BUDGET)?;
                let est = batch_means(&centered_products(&cols[i], &cols[j]), DEFAULT_BATCHES);
                out.push(ComparisonReport::z_test(format!("cov_theta_{}_{}", i + 1, j + 1), &est, target, 0.0, meta));
            }
        }
        if n == 1 {
            let oracle = StationaryOracle::BetaRescaled { two_s, theta_left, theta_right };
            let d = ks_statistic(&cols[0], |x| oracle.cdf(x).unwrap_or(f64::NAN));
            out.push(ComparisonReport::new(
                "ks_theta_1",
                TestKind::Ks,
                d,
                KS_THRESHOLD,
                cols[0].len(),
                d,
                0.0,
                KOLMOGOROV_SD / (cols[0].len() as f64).sqrt(),
                meta,
            ));
        }
    } else {
        for (i, col) in cols.iter().enumerate() {
            for k in 1..=3u32 {
                let r_k = pochhammer(two_s, k);
                let target = r_k * law.moment(&unit(i, k), DEFAULT_TERM_BUDGET)?;
                let powers: Vec<f64> = col.iter().map(|x| x.powi(k as i32)).collect();
                let est = batch_means(&powers, DEFAULT_BATCHES);
                out.push(ComparisonReport::z_test(format!("moment_zeta_{}_k{}", i + 1, k), &est, target, 0.0, meta));
            }
        }
    }
    Ok(out)
}

/// Compare the continuous harmonic chain under the standard and the
/// sampled reservoir variants through their site moments `k ≤ 2`.
#[allow(clippy::too_many_arguments)]
pub fn reservoir_variant_equivalence(
    n: usize,
    two_s: f64,
    theta_left: f64,
    theta_right: f64,
    numerics: &Numerics,
    plan: &SamplingPlan,
    rng: &RngStream,
) -> Result<Vec<ComparisonReport>> {
    let base = chain_model(Family::HarmonicContinuous, n, two_s, theta_left, theta_right)?;
    let variant = |kind: HarmonicReservoirKind| -> Result<Model> {
        let spec = base.spec().clone().with_kind(kind);
        Model::new(base.graph(), spec)
    };
    let standard = variant(HarmonicReservoirKind::Standard)?;
    let sampled = variant(HarmonicReservoirKind::Sampled)?;
    let a = stationary_samples(&standard, None, plan, numerics, &rng.derive(0))?;
    let b = stationary_samples(&sampled, None, plan, numerics, &rng.derive(1))?;
    let (ca, cb) = (a.columns(), b.columns());
    let mut out = Vec::new();
    for i in 0..n {
        for k in 1..=2 {
            let pa: Vec<f64> = ca[i].iter().map(|x| x.powi(k)).collect();
            let pb: Vec<f64> = cb[i].iter().map(|x| x.powi(k)).collect();
            out.push(ComparisonReport::two_sample(
                format!("variant_moment_zeta_{}_k{}", i + 1, k),
                &batch_means(&pa, DEFAULT_BATCHES),
                &batch_means(&pb, DEFAULT_BATCHES),
                a.metadata,
            ));
        }
    }
    Ok(out)
}

/// Time-weighted occupation law of site 0 over `n_events` events after
/// `burn_in` time.
pub fn occupation_pmf(
    model: &Model,
    burn_in: f64,
    n_events: u64,
    numerics: &Numerics,
    rng: RngStream,
) -> Result<Vec<f64>> {
    if model.family().state_kind() != crate::model::StateKind::Counts {
        return Err(Error::KindMismatch { expected: "COUNTS".into(), found: model.family().state_kind().to_string() });
    }
    let mut sim = JumpSimulator::new(model, default_init(model), None, rng)?.with_rate_cap(numerics.rate_cap);
    sim.advance_to(burn_in)?;
    let mut time_in: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for _ in 0..n_events {
        let n = sim.state().get(0) as usize;
        let Some(hold) = sim.step()? else { break };
        if n >= time_in.len() {
            time_in.resize(n + 1, 0.0);
        }
        time_in[n] += hold;
        total += hold;
    }
    if total <= 0.0 {
        return Err(Error::InvalidParameter("no events were observed".into()));
    }
    Ok(time_in.into_iter().map(|t| t / total).collect())
}

/// TV distance over the window holding [`TV_WINDOW_MASS`] of the oracle,
/// the remainder pooled into one tail bin.
pub fn windowed_tv(empirical: &[f64], oracle: impl Fn(u64) -> f64) -> f64 {
    let mut p = Vec::new();
    let mut mass = 0.0;
    let mut n = 0u64;
    while mass < TV_WINDOW_MASS && n < 1_000_000 {
        let v = oracle(n);
        p.push(v);
        mass += v;
        n += 1;
    }
    let w = p.len();
    let mut q: Vec<f64> = (0..w).map(|i| empirical.get(i).copied().unwrap_or(0.0)).collect();
    q.push(empirical.iter().skip(w).sum());
    p.push((1.0 - mass).max(0.0));
    tv_distance(&q, &p)
}

/// Budgets of the inclusion / energy-process experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SipBepBudget {
    /// Events for the occupation law of a single-site inclusion process.
    pub pmf_events: u64,
    pub sip: SamplingPlan,
    pub bep: SamplingPlan,
}

impl Default for SipBepBudget {
    fn default() -> Self {
        SipBepBudget {
            pmf_events: 1_000_000,
            sip: SamplingPlan::new(20.0, 100_000, 1.0, 8),
            bep: SamplingPlan::new(20.0, 100_000, 1.0, 16),
        }
    }
}

/// Inclusion process against the energy process at stationarity.
///
/// Single site: occupation pmf against the discrete Gamma law (TV) and the
/// energy-process mean against `2s α/(γ-α)`. Every site: factorial moments
/// `E[η(η-1)…(η-k+1)]` against `E[ζ^k]`, `k ≤ 3`.
pub fn sip_poisson_mixture_experiment(
    sip: &Model,
    budget: &SipBepBudget,
    numerics: &Numerics,
    rng: &RngStream,
) -> Result<Vec<ComparisonReport>> {
    if sip.family() != Family::Sip {
        return Err(Error::KindMismatch { expected: "SIP".into(), found: sip.family().to_string() });
    }
    let sums = reservoir_rate_sums(sip);
    if sums.iter().any(|(a, g)| (*a > 0.0 || *g > 0.0) && a >= g) {
        return Err(Error::InvalidParameter("every reservoir needs alpha < gamma".into()));
    }
    let bep = sip.with_family(Family::Bep)?;
    let two_s = sip.two_s();
    let n = sip.graph().len();
    let mut out = Vec::new();
    let a = stationary_samples(sip, None, &budget.sip, numerics, &rng.derive(1))?;
    let b = stationary_samples(&bep, None, &budget.bep, numerics, &rng.derive(2))?;
    if n == 1 {
        let (alpha, gamma) = sums[0];
        let theta = alpha / (gamma - alpha);
        let pmf = occupation_pmf(sip, budget.sip.burn_in, budget.pmf_events, numerics, rng.derive(0))?;
        let tv = windowed_tv(&pmf, |k| discrete_gamma_pmf(k, theta, two_s).unwrap_or(0.0));
        let pmf_meta = RunMetadata { epsilon: None, dt: None, burn_in: budget.sip.burn_in, thinning: 0.0, chains: 1 };
        out.push(
            ComparisonReport::new(
                "sip_pmf_tv",
                TestKind::Tv,
                tv,
                TV_THRESHOLD,
                budget.pmf_events as usize,
                tv,
                0.0,
                f64::NAN,
                pmf_meta,
            )
            .flag(format!("theta={theta}")),
        );
        let target = two_s * theta;
        let est = batch_means(&b.column(0), DEFAULT_BATCHES);
        let rel = (est.mean / target - 1.0).abs();
        let mut r = ComparisonReport::new(
            "bep_mean",
            TestKind::Relative,
            rel,
            0.02,
            est.n,
            est.mean,
            target,
            est.se,
            b.metadata,
        );
        r.ess = Some(est.ess);
        out.push(r);
    }
    for i in 0..n {
        let eta = a.column(i);
        let zeta = b.column(i);
        for k in 1..=3u32 {
            let fact: Vec<f64> = eta.iter().map(|&m| (0..k).map(|j| m - j as f64).product::<f64>().max(0.0)).collect();
            let pw: Vec<f64> = zeta.iter().map(|z| z.powi(k as i32)).collect();
            out.push(ComparisonReport::two_sample(
                format!("factorial_bridge_{}_k{}", i + 1, k),
                &batch_means(&fact, DEFAULT_BATCHES),
                &batch_means(&pw, DEFAULT_BATCHES),
                a.metadata,
            ));
        }
    }
    Ok(out)
}

/// Stationary independent walkers against the Poisson product with the
/// densities of the flow's fixed point.
pub fn irw_poisson_product_experiment(
    irw: &Model,
    plan: &SamplingPlan,
    numerics: &Numerics,
    rng: &RngStream,
) -> Result<Vec<ComparisonReport>> {
    if irw.family() != Family::Irw {
        return Err(Error::KindMismatch { expected: "IRW".into(), found: irw.family().to_string() });
    }
    let z = irw_fixed_point(irw)?.to_f64();
    let run = stationary_samples(irw, None, plan, numerics, rng)?;
    let meta = run.metadata;
    let cols = run.columns();
    let n = z.len();
    let mut out = Vec::new();
    for (i, col) in cols.iter().enumerate() {
        let est = batch_means(col, DEFAULT_BATCHES);
        out.push(ComparisonReport::z_test(format!("mean_{}", i + 1), &est, z[i], 0.0, meta));
    }
    for (i, col) in cols.iter().enumerate() {
        let d = dispersion(col, DEFAULT_BATCHES);
        let mut r = ComparisonReport::new(
            format!("dispersion_{}", i + 1),
            TestKind::Dispersion,
            (d.mean - 1.0).abs(),
            DISPERSION_TOLERANCE,
            d.n,
            d.mean,
            1.0,
            d.se,
            meta,
        );
        r.ess = Some(d.ess);
        out.push(r);
    }
    for i in 0..n {
        for j in i + 1..n {
            let est = batch_means(&centered_products(&cols[i], &cols[j]), DEFAULT_BATCHES);
            out.push(ComparisonReport::z_test(format!("cov_{}_{}", i + 1, j + 1), &est, 0.0, 0.0, meta));
        }
    }
    Ok(out)
}

/// Index of dispersion `Var/Mean` of the whole sample, with a standard
/// error from the spread across batches.
pub fn dispersion(x: &[f64], batches: usize) -> BatchMeans {
    let whole = crate::stats::variance(x) / mean(x);
    let b = batches.clamp(2, x.len().max(2));
    let size = x.len() / b;
    if size < 2 {
        return BatchMeans { mean: whole, se: f64::NAN, ess: f64::NAN, n: x.len(), batches: b };
    }
    let per: Vec<f64> = x[x.len() - size * b..].chunks(size).map(|c| crate::stats::variance(c) / mean(c)).collect();
    let se = crate::stats::standard_error(&per);
    BatchMeans { mean: whole, se, ess: f64::NAN, n: x.len(), batches: b }
}

/// Experiments covered by the truncation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SweepExperiment {
    /// Hidden harmonic chain; single sites also get a KS statistic.
    HiddenChain { n: usize, two_s: f64, theta_left: f64, theta_right: f64 },
}

/// Summary statistic of one truncation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub epsilon: f64,
    pub applied_events: u64,
    pub statistics: Vec<(String, f64, f64)>,
}

/// Run an experiment at every ε on shared noise and report the change of
/// each statistic between consecutive levels (sorted from coarse to fine).
/// A change passes when it is below 1% of the finer value or below one
/// standard error of the finer estimate. A level that applies fewer
/// events than samples is flagged `UNSTABLE` and fails.
pub fn epsilon_convergence_sweep(
    experiment: SweepExperiment,
    epsilons: &[f64],
    plan: &SamplingPlan,
    rng: &RngStream,
) -> Result<(Vec<SweepLevel>, Vec<ComparisonReport>)> {
    plan.check()?;
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    if eps.len() < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least two truncation levels".into()));
    }
    let SweepExperiment::HiddenChain { n, two_s, theta_left, theta_right } = experiment;
    let model = chain_model(Family::HiddenHarmonic, n, two_s, theta_left, theta_right)?;
    let law = MixingLaw::new(n, two_s, theta_left, theta_right)?;
    let thinning = plan.thinning.unwrap_or(5.0);
    let chains = plan.chains.min(plan.n_samples);
    let levels = eps.len();
    // per chain: samples[level][site] columns and applied counts
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| {
            let init = default_init(&model);
            let mut sim = CoupledHarmonicSimulator::new(&model, init, &eps, rng.derive(c as u64))?;
            sim.advance_to(plan.burn_in);
            let start: Vec<u64> = (0..levels).map(|r| sim.applied(r)).collect();
            let mut cols = vec![vec![Vec::new(); n]; levels];
            for k in 1..=plan.per_chain(c) {
                sim.advance_to(plan.burn_in + k as f64 * thinning);
                for (r, level) in cols.iter_mut().enumerate() {
                    for (i, col) in level.iter_mut().enumerate() {
                        col.push(sim.values(r)[i]);
                    }
                }
            }
            let applied: Vec<u64> = (0..levels).map(|r| sim.applied(r) - start[r]).collect();
            Ok((cols, applied))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec![vec![Vec::new(); n]; levels];
    let mut applied = vec![0u64; levels];
    for (c, a) in runs {
        for r in 0..levels {
            applied[r] += a[r];
            for i in 0..n {
                cols[r][i].extend_from_slice(&c[r][i]);
            }
        }
    }
    let total_samples = cols[0][0].len();
    let summaries: Vec<SweepLevel> = (0..levels)
        .map(|r| {
            let mut stats = Vec::new();
            for (i, col) in cols[r].iter().enumerate() {
                let b = batch_means(col, DEFAULT_BATCHES);
                stats.push((format!("mean_theta_{}", i + 1), b.mean, b.se));
            }
            for i in 0..n {
                for j in i..n {
                    let b = batch_means(&centered_products(&cols[r][i], &cols[r][j]), DEFAULT_BATCHES);
                    stats.push((format!("cov_theta_{}_{}", i + 1, j + 1), b.mean, b.se));
                }
            }
            if n == 1 {
                let oracle = StationaryOracle::OrderedDirichlet(law);
                let d = ks_statistic(&cols[r][0], |x| oracle.cdf(x).unwrap_or(f64::NAN));
                stats.push(("ks_theta_1".into(), d, KOLMOGOROV_SD / (total_samples as f64).sqrt()));
            }
            SweepLevel { epsilon: eps[r], applied_events: applied[r], statistics: stats }
        })
        .collect();
    let mut reports = Vec::new();
    for w in summaries.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let meta = RunMetadata { epsilon: Some(fine.epsilon), dt: None, burn_in: plan.burn_in, thinning, chains };
        let unstable = |l: &SweepLevel| l.applied_events < total_samples as u64;
        for ((name, a, _), (_, b, se)) in coarse.statistics.iter().zip(&fine.statistics) {
            let change = (a - b).abs();
            let allowed = (SWEEP_RELATIVE * b.abs()).max(*se);
            let mut r = ComparisonReport::new(
                format!("sweep_{name}_{:e}_to_{:e}", coarse.epsilon, fine.epsilon),
                TestKind::Sweep,
                if allowed > 0.0 {
                    change / allowed
                } else if change == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                },
                1.0,
                total_samples,
                *b,
                *a,
                *se,
                meta,
            );
            if unstable(coarse) || unstable(fine) {
                r.pass = false;
                r = r.flag("UNSTABLE");
            }
            reports.push(r);
        }
    }
    Ok((summaries, reports))
}

/// Stationary means of the energy process at steps `dt` and `dt/2` on
/// shared Brownian increments, with the relative change of each site mean.
pub fn bep_dt_halving(model: &Model, plan: &SamplingPlan, dt: f64, rng: &RngStream) -> Result<Vec<ComparisonReport>> {
    plan.check()?;
    if model.family() != Family::Bep {
        return Err(Error::KindMismatch { expected: "BEP".into(), found: model.family().to_string() });
    }
    let n = model.graph().len();
    let thinning = plan.thinning.unwrap_or(1.0);
    let chains = plan.chains.min(plan.n_samples);
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.derive(c as u64);
            let init = default_init(model);
            let mut coarse = BepSimulator::new(model, init.clone(), dt, r.derive(0))?;
            let mut fine = BepSimulator::new(model, init, dt / 2.0, r.derive(1))?;
            let d = coarse.noise_dim();
            let (mut z1, mut z2, mut zc) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
            let steps_per = (thinning / dt).round().max(1.0) as u64;
            let burn = (plan.burn_in / dt).round() as u64;
            let mut step = |coarse: &mut BepSimulator, fine: &mut BepSimulator, r: &mut RngStream| {
                for k in 0..d {
                    z1[k] = r.sample::<f64, _>(StandardNormal);
                    z2[k] = r.sample::<f64, _>(StandardNormal);
                    zc[k] = (z1[k] + z2[k]) / std::f64::consts::SQRT_2;
                }
                fine.step_with_noise(dt / 2.0, &z1);
                fine.step_with_noise(dt / 2.0, &z2);
                coarse.step_with_noise(dt, &zc);
            };
            for _ in 0..burn {
                step(&mut coarse, &mut fine, &mut r);
            }
            let mut out = vec![(Vec::new(), Vec::new()); n];
            for _ in 0..plan.per_chain(c) {
                for _ in 0..steps_per {
                    step(&mut coarse, &mut fine, &mut r);
                }
                for (i, o) in out.iter_mut().enumerate() {
                    o.0.push(coarse.values()[i]);
                    o.1.push(fine.values()[i]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = RunMetadata { epsilon: None, dt: Some(dt), burn_in: plan.burn_in, thinning, chains };
    let mut reports = Vec::new();
    for i in 0..n {
        let coarse: Vec<f64> = runs.iter().flat_map(|r| r[i].0.iter().copied()).collect();
        let fine: Vec<f64> = runs.iter().flat_map(|r| r[i].1.iter().copied()).collect();
        let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a - b).collect();
        let (mc, mf) = (mean(&coarse), mean(&fine));
        let se = batch_means(&diff, DEFAULT_BATCHES).se;
        let rel = ((mc - mf) / mf).abs();
        reports.push(ComparisonReport::new(
            format!("dt_halving_mean_{}", i + 1),
            TestKind::Relative,
            rel,
            SWEEP_RELATIVE,
            coarse.len(),
            mc,
            mf,
            se,
            meta,
        ));
    }
    Ok(reports)
}
