//! Jump kernels, rates, drift/diffusion coefficients and vector fields.
//!
//! Kernels are pure functions of `(state, parameters, stream)`. Edge sums in
//! every generator run over unordered edges with weight `p(i, j)`.

use crate::error::{check_epsilon, check_shape, Error, Result};
use crate::model::{Family, HarmonicReservoirKind, Model};
use crate::rng::RngStream;
use crate::sampling::{discrete_harmonic_weights, gamma_sample, BetaSampler, JumpMeasure};

/// Redistribution of `x + y` particles: `x' ~ BetaBinomial(x+y, 2s, 2s)`.
pub fn kmp_discrete_edge_apply(x: u64, y: u64, two_s: f64, rng: &mut RngStream) -> Result<(u64, u64)> {
    let beta = BetaSampler::new(two_s)?;
    Ok(kmp_discrete_split(x + y, &beta, rng))
}

pub(crate) fn kmp_discrete_split(total: u64, beta: &BetaSampler, rng: &mut RngStream) -> (u64, u64) {
    if total == 0 {
        return (0, 0);
    }
    let p = beta.sample(rng);
    let k = crate::sampling::binomial_draw(total, p, rng);
    (k, total - k)
}

/// Split of `x + y` mass by a Beta(2s, 2s) fraction.
pub fn kmp_continuous_edge_apply(x: f64, y: f64, two_s: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    let beta = BetaSampler::new(two_s)?;
    Ok(kmp_continuous_split(x + y, &beta, rng))
}

pub(crate) fn kmp_continuous_split(total: f64, beta: &BetaSampler, rng: &mut RngStream) -> (f64, f64) {
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let u = beta.sample(rng);
    let x = u * total;
    (x, total - x)
}

/// Both parameters become the same Beta-weighted convex combination.
pub fn kmp_hidden_edge_apply(theta_i: f64, theta_j: f64, two_s: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    let beta = BetaSampler::new(two_s)?;
    let t = kmp_hidden_mix(theta_i, theta_j, &beta, rng);
    Ok((t, t))
}

pub(crate) fn kmp_hidden_mix(theta_i: f64, theta_j: f64, beta: &BetaSampler, rng: &mut RngStream) -> f64 {
    if theta_i == theta_j {
        return theta_i;
    }
    let u = beta.sample(rng);
    (theta_j + u * (theta_i - theta_j)).clamp(theta_i.min(theta_j), theta_i.max(theta_j))
}

/// KMP reservoir on masses: `x' = (x + Y) B`, `Y ~ Gamma(2s, θ*)`.
pub fn kmp_reservoir_apply(x: f64, theta_star: f64, two_s: f64, rng: &mut RngStream) -> Result<f64> {
    let beta = BetaSampler::new(two_s)?;
    Ok(kmp_reservoir_mass(x, theta_star, two_s, &beta, rng))
}

pub(crate) fn kmp_reservoir_mass(x: f64, theta_star: f64, two_s: f64, beta: &BetaSampler, rng: &mut RngStream) -> f64 {
    let y = gamma_sample(two_s, theta_star, rng);
    (x + y) * beta.sample(rng)
}

/// KMP reservoir on counts: `x' ~ BetaBinomial(x + Y)`, `Y` discrete Gamma(θ*).
pub fn kmp_discrete_reservoir_apply(x: u64, theta_star: f64, two_s: f64, rng: &mut RngStream) -> Result<u64> {
    let beta = BetaSampler::new(two_s)?;
    kmp_reservoir_count(x, theta_star, two_s, &beta, rng)
}

pub(crate) fn kmp_reservoir_count(
    x: u64,
    theta_star: f64,
    two_s: f64,
    beta: &BetaSampler,
    rng: &mut RngStream,
) -> Result<u64> {
    let y = crate::sampling::discrete_gamma_sample(theta_star, two_s, rng)?;
    Ok(kmp_discrete_split(x + y, beta, rng).0)
}

/// Hidden KMP reservoir: `θ' = (1-U) θ + U θ*`.
pub fn kmp_hidden_reservoir_apply(theta: f64, theta_star: f64, two_s: f64, rng: &mut RngStream) -> Result<f64> {
    let beta = BetaSampler::new(two_s)?;
    Ok(kmp_hidden_mix(theta_star, theta, &beta, rng))
}

/// Direction of an asymmetric harmonic move: `Forward` takes from the first
/// site of the pair, `Backward` from the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// State of the two endpoints of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairState {
    Counts(u64, u64),
    Masses(f64, f64),
    Thetas(f64, f64),
}

/// Continuous move of a fraction `u` of the source mass to the target.
pub fn harmonic_mass_move(source: f64, target: f64, u: f64) -> (f64, f64) {
    let moved = u * source;
    (source - moved, target + moved)
}

/// Hidden move: the source parameter moves a fraction `u` towards the target.
pub fn harmonic_theta_move(source: f64, target: f64, u: f64) -> f64 {
    source + u * (target - source)
}

/// Per-`n` tables of `Σ_k ℳ(k, n)` and cumulative weights, filled on demand.
#[derive(Debug, Clone)]
pub struct HarmonicWeightCache {
    two_s: f64,
    tables: Vec<Option<(f64, Vec<f64>)>>,
}

impl HarmonicWeightCache {
    pub fn new(two_s: f64) -> Result<Self> {
        check_shape(two_s)?;
        Ok(HarmonicWeightCache { two_s, tables: Vec::new() })
    }

    fn table(&mut self, n: u64) -> &(f64, Vec<f64>) {
        let idx = n as usize;
        if self.tables.len() <= idx {
            self.tables.resize(idx + 1, None);
        }
        if self.tables[idx].is_none() {
            let w = discrete_harmonic_weights(n, self.two_s).expect("validated shape");
            let mut acc = 0.0;
            let cum: Vec<f64> = w
                .iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect();
            self.tables[idx] = Some((acc, cum));
        }
        self.tables[idx].as_ref().expect("filled above")
    }

    /// Total transfer rate `Σ_k ℳ(k, n)` out of a site holding `n` particles.
    pub fn total(&mut self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.table(n).0
    }

    /// Number of particles to move, `k ∝ ℳ(k, n)`.
    pub fn sample_k(&mut self, n: u64, rng: &mut RngStream) -> u64 {
        let r = rng.uniform();
        let (total, cum) = self.table(n);
        let target = r * total;
        let k = cum.partition_point(|&c| c <= target);
        (k as u64 + 1).min(n)
    }
}

/// One asymmetric harmonic edge event.
///
/// Continuous and hidden pairs need the truncated bulk measure `measure`;
/// discrete pairs draw `k ∝ ℳ(k, n_source)`.
pub fn harmonic_edge_apply(
    pair: PairState,
    two_s: f64,
    measure: Option<&JumpMeasure>,
    direction: Direction,
    rng: &mut RngStream,
) -> Result<PairState> {
    check_shape(two_s)?;
    let fwd = direction == Direction::Forward;
    match pair {
        PairState::Counts(a, b) => {
            let (src, dst) = if fwd { (a, b) } else { (b, a) };
            if src == 0 {
                return Ok(pair);
            }
            let k = HarmonicWeightCache::new(two_s)?.sample_k(src, rng);
            let (s, d) = (src - k, dst + k);
            Ok(if fwd { PairState::Counts(s, d) } else { PairState::Counts(d, s) })
        }
        PairState::Masses(a, b) => {
            let u = measure.ok_or(Error::BadEpsilon(0.0))?.sample(rng);
            Ok(if fwd {
                let (s, d) = harmonic_mass_move(a, b, u);
                PairState::Masses(s, d)
            } else {
                let (s, d) = harmonic_mass_move(b, a, u);
                PairState::Masses(d, s)
            })
        }
        PairState::Thetas(a, b) => {
            let u = measure.ok_or(Error::BadEpsilon(0.0))?.sample(rng);
            Ok(if fwd {
                PairState::Thetas(harmonic_theta_move(a, b, u), b)
            } else {
                PairState::Thetas(a, harmonic_theta_move(b, a, u))
            })
        }
    }
}

/// Sub-event of a harmonic reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarmonicReservoirPart {
    /// `x → (1-u) x`, `u` from the bulk measure.
    Exit,
    /// `x → x + u θ*`, `u` from `u^{-1} e^{-u} du`.
    InputStandard,
    /// `x → x + u Y`, `Y ~ Gamma(2s, θ*)`, `u` from the bulk measure.
    InputSampled,
    /// `θ → (1-u) θ + u θ*`, `u` from the bulk measure.
    Hidden,
}

/// Rate multiplier `λ_ε` of a reservoir sub-event (to be scaled by `c(i)`).
pub fn harmonic_reservoir_rate(part: HarmonicReservoirPart, two_s: f64, epsilon: f64) -> Result<f64> {
    Ok(match part {
        HarmonicReservoirPart::InputStandard => JumpMeasure::reservoir_input(epsilon)?.rate(),
        _ => JumpMeasure::harmonic_bulk(two_s, epsilon)?.rate(),
    })
}

/// Apply one harmonic reservoir sub-event.
pub fn harmonic_reservoir_apply(
    value: f64,
    theta_star: f64,
    two_s: f64,
    epsilon: f64,
    part: HarmonicReservoirPart,
    rng: &mut RngStream,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    let bulk = JumpMeasure::harmonic_bulk(two_s, epsilon)?;
    let input = JumpMeasure::reservoir_input(epsilon)?;
    Ok(harmonic_reservoir_with(value, theta_star, two_s, part, &bulk, &input, rng))
}

pub(crate) fn harmonic_reservoir_with(
    value: f64,
    theta_star: f64,
    two_s: f64,
    part: HarmonicReservoirPart,
    bulk: &JumpMeasure,
    input: &JumpMeasure,
    rng: &mut RngStream,
) -> f64 {
    match part {
        HarmonicReservoirPart::Exit => (1.0 - bulk.sample(rng)) * value,
        HarmonicReservoirPart::InputStandard => value + input.sample(rng) * theta_star,
        HarmonicReservoirPart::InputSampled => {
            let y = gamma_sample(two_s, theta_star, rng);
            value + bulk.sample(rng) * y
        }
        HarmonicReservoirPart::Hidden => harmonic_theta_move(value, theta_star, bulk.sample(rng)),
    }
}

/// The input sub-event matching a reservoir kind.
pub fn input_part(kind: HarmonicReservoirKind) -> HarmonicReservoirPart {
    match kind {
        HarmonicReservoirKind::Standard => HarmonicReservoirPart::InputStandard,
        HarmonicReservoirKind::Sampled => HarmonicReservoirPart::InputSampled,
    }
}

/// Event of a particle system with unit moves (SIP, IRW).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleEvent {
    Hop { from: usize, to: usize },
    Birth { site: usize, reservoir: usize },
    Death { site: usize, reservoir: usize },
}

impl ParticleEvent {
    /// Apply to a count vector; a death at an empty site is a no-op.
    pub fn apply(&self, eta: &mut [u64]) {
        match *self {
            ParticleEvent::Hop { from, to } => {
                if eta[from] > 0 {
                    eta[from] -= 1;
                    eta[to] += 1;
                }
            }
            ParticleEvent::Birth { site, .. } => eta[site] += 1,
            ParticleEvent::Death { site, .. } => eta[site] = eta[site].saturating_sub(1),
        }
    }
}

fn rate_reservoirs(model: &Model, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    model.reservoirs_at(i).iter().enumerate().filter_map(|(r, spec)| spec.alpha_gamma().map(|(a, g)| (r, a, g)))
}

/// All SIP events with their rates in state `eta`.
pub fn sip_rates(eta: &[u64], model: &Model) -> Result<Vec<(ParticleEvent, f64)>> {
    if model.family() != Family::Sip {
        return Err(Error::KindMismatch { expected: "SIP".into(), found: model.family().to_string() });
    }
    if eta.len() != model.graph().len() {
        return Err(Error::InvalidParameter(format!(
            "state has {} sites, graph has {}",
            eta.len(),
            model.graph().len()
        )));
    }
    let two_s = model.two_s();
    let g = model.graph();
    let mut out = Vec::new();
    for e in g.active_edges() {
        let (a, b) = (e.a, e.b);
        out.push((ParticleEvent::Hop { from: a, to: b }, e.weight * eta[a] as f64 * (two_s + eta[b] as f64)));
        out.push((ParticleEvent::Hop { from: b, to: a }, e.weight * eta[b] as f64 * (two_s + eta[a] as f64)));
    }
    for (i, &n_i) in eta.iter().enumerate() {
        let c = g.coupling(i);
        for (r, alpha, gamma) in rate_reservoirs(model, i) {
            out.push((ParticleEvent::Birth { site: i, reservoir: r }, c * alpha * (two_s + n_i as f64)));
            out.push((ParticleEvent::Death { site: i, reservoir: r }, c * gamma * n_i as f64));
        }
    }
    Ok(out)
}

/// All IRW events with their rates in state `eta`.
pub fn irw_rates(eta: &[u64], model: &Model) -> Result<Vec<(ParticleEvent, f64)>> {
    if !matches!(model.family(), Family::Irw | Family::IrwFlow) {
        return Err(Error::KindMismatch { expected: "IRW".into(), found: model.family().to_string() });
    }
    if eta.len() != model.graph().len() {
        return Err(Error::InvalidParameter(format!(
            "state has {} sites, graph has {}",
            eta.len(),
            model.graph().len()
        )));
    }
    let g = model.graph();
    let mut out = Vec::new();
    for e in g.active_edges() {
        out.push((ParticleEvent::Hop { from: e.a, to: e.b }, e.weight * eta[e.a] as f64));
        out.push((ParticleEvent::Hop { from: e.b, to: e.a }, e.weight * eta[e.b] as f64));
    }
    for (i, &n_i) in eta.iter().enumerate() {
        let c = g.coupling(i);
        for (r, alpha, gamma) in rate_reservoirs(model, i) {
            out.push((ParticleEvent::Birth { site: i, reservoir: r }, c * alpha));
            out.push((ParticleEvent::Death { site: i, reservoir: r }, c * gamma * n_i as f64));
        }
    }
    Ok(out)
}

/// Drift and noise coefficients of the BEP.
///
/// Each active edge `(a, b)` carries one noise increment with variance rate
/// `edge_variance`, added to `a` and subtracted from `b`; each reservoir
/// site carries its own noise with variance rate `site_variance`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_variance: Vec<f64>,
    pub site_variance: Vec<f64>,
}

/// Per-site reservoir sums `(Σ c α, Σ c γ)`.
pub(crate) fn reservoir_rate_sums(model: &Model) -> Vec<(f64, f64)> {
    (0..model.graph().len())
        .map(|i| {
            let c = model.graph().coupling(i);
            rate_reservoirs(model, i).fold((0.0, 0.0), |s, (_, a, g)| (s.0 + c * a, s.1 + c * g))
        })
        .collect()
}

pub fn bep_drift_diffusion(zeta: &[f64], model: &Model) -> Result<DriftDiffusion> {
    if let Some(i) = zeta.iter().position(|z| !(*z >= 0.0 && z.is_finite())) {
        return Err(Error::NegativeState(i));
    }
    let two_s = model.two_s();
    let g = model.graph();
    let mut drift = vec![0.0; g.len()];
    let mut edges = Vec::new();
    let mut edge_variance = Vec::new();
    for e in g.active_edges() {
        let d = two_s * (zeta[e.a] - zeta[e.b]) * e.weight;
        drift[e.a] -= d;
        drift[e.b] += d;
        edges.push((e.a, e.b));
        edge_variance.push(2.0 * zeta[e.a] * zeta[e.b] * e.weight);
    }
    let sums = reservoir_rate_sums(model);
    let mut site_variance = vec![0.0; g.len()];
    for (i, &(ca, cg)) in sums.iter().enumerate() {
        drift[i] += two_s * ca - (cg - ca) * zeta[i];
        site_variance[i] = 2.0 * ca * zeta[i];
    }
    Ok(DriftDiffusion { drift, edges, edge_variance, site_variance })
}

/// `dz_i/dt = Σ_j p(i,j)(z_j - z_i) + Σ_r c(i)(α_r - γ_r z_i)`.
pub fn irw_vector_field(z: &[f64], model: &Model) -> Result<Vec<f64>> {
    if let Some(i) = z.iter().position(|x| !x.is_finite()) {
        return Err(Error::NegativeState(i));
    }
    let g = model.graph();
    let sums = reservoir_rate_sums(model);
    Ok((0..g.len())
        .map(|i| {
            let bulk: f64 = g.neighbors(i).iter().map(|&(j, w)| w * (z[j] - z[i])).sum();
            bulk + sums[i].0 - sums[i].1 * z[i]
        })
        .collect())
}
