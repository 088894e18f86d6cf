//! Event-driven simulation of the jump families.

use super::fenwick::RateTable;
use crate::error::{check_epsilon, Error, Result};
use crate::generators::{
    harmonic_mass_move, harmonic_reservoir_with, harmonic_theta_move, input_part, kmp_continuous_split,
    kmp_discrete_split, kmp_hidden_mix, kmp_reservoir_count, kmp_reservoir_mass, HarmonicReservoirPart,
    HarmonicWeightCache,
};
use crate::model::{Family, Model, StateVector};
use crate::rng::RngStream;
use crate::sampling::{BetaSampler, JumpMeasure};

/// Default cap on the total event rate.
pub const DEFAULT_RATE_CAP: f64 = 1e9;

#[derive(Debug, Clone, Copy)]
enum ReservoirPart {
    Kmp,
    Harmonic(HarmonicReservoirPart),
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    /// Symmetric KMP redistribution over an edge.
    Redistribute {
        a: usize,
        b: usize,
        weight: f64,
    },
    /// Directed transfer from `src` to `dst`.
    Transfer {
        src: usize,
        dst: usize,
        weight: f64,
    },
    Reservoir {
        site: usize,
        coupling: f64,
        theta_star: f64,
        part: ReservoirPart,
    },
    Birth {
        site: usize,
        coupling: f64,
        alpha: f64,
    },
    Death {
        site: usize,
        coupling: f64,
        gamma: f64,
    },
}

/// Exact Gillespie simulator over the (possibly ε-truncated) event set.
#[derive(Debug, Clone)]
pub struct JumpSimulator<'m> {
    model: &'m Model,
    family: Family,
    state: StateVector,
    time: f64,
    events: u64,
    rng: RngStream,
    slots: Vec<Slot>,
    table: RateTable,
    dependents: Vec<Vec<usize>>,
    beta: Option<BetaSampler>,
    bulk: Option<JumpMeasure>,
    input: Option<JumpMeasure>,
    cache: Option<HarmonicWeightCache>,
    rate_cap: f64,
    epsilon: Option<f64>,
}

impl<'m> JumpSimulator<'m> {
    /// `epsilon` is required for the infinite-activity harmonic families and
    /// ignored otherwise.
    pub fn new(model: &'m Model, init: StateVector, epsilon: Option<f64>, rng: RngStream) -> Result<Self> {
        let family = model.family();
        if !family.is_jump_process() {
            return Err(Error::Unsupported(format!("{family} is not a jump process")));
        }
        let n = model.graph().len();
        init.expect_kind(family.state_kind(), n)?;
        let two_s = model.two_s();
        let epsilon = if family.needs_epsilon() {
            let e = epsilon.ok_or(Error::BadEpsilon(0.0))?;
            check_epsilon(e)?;
            Some(e)
        } else {
            None
        };
        let (bulk, input) = match epsilon {
            Some(e) => (Some(JumpMeasure::harmonic_bulk(two_s, e)?), Some(JumpMeasure::reservoir_input(e)?)),
            None => (None, None),
        };
        let beta = match family {
            Family::KmpDiscrete | Family::KmpContinuous | Family::HiddenKmp => Some(BetaSampler::new(two_s)?),
            _ => None,
        };
        let cache = (family == Family::HarmonicDiscrete).then(|| HarmonicWeightCache::new(two_s)).transpose()?;

        let g = model.graph();
        let mut slots = Vec::new();
        for e in g.active_edges() {
            match family {
                Family::KmpDiscrete | Family::KmpContinuous | Family::HiddenKmp => {
                    slots.push(Slot::Redistribute { a: e.a, b: e.b, weight: e.weight })
                }
                _ => {
                    slots.push(Slot::Transfer { src: e.a, dst: e.b, weight: e.weight });
                    slots.push(Slot::Transfer { src: e.b, dst: e.a, weight: e.weight });
                }
            }
        }
        for i in 0..n {
            let coupling = g.coupling(i);
            for spec in model.reservoirs_at(i) {
                if let Some((alpha, gamma)) = spec.alpha_gamma() {
                    slots.push(Slot::Birth { site: i, coupling, alpha });
                    slots.push(Slot::Death { site: i, coupling, gamma });
                    continue;
                }
                let theta_star = spec.theta_star().unwrap_or(0.0);
                let mut push = |part| slots.push(Slot::Reservoir { site: i, coupling, theta_star, part });
                match family {
                    Family::HarmonicContinuous => {
                        push(ReservoirPart::Harmonic(HarmonicReservoirPart::Exit));
                        push(ReservoirPart::Harmonic(input_part(model.harmonic_reservoir_kind())));
                    }
                    Family::HiddenHarmonic => push(ReservoirPart::Harmonic(HarmonicReservoirPart::Hidden)),
                    _ => push(ReservoirPart::Kmp),
                }
            }
        }

        let dynamic = matches!(family, Family::HarmonicDiscrete | Family::Sip | Family::Irw);
        let mut dependents = vec![Vec::new(); n];
        if dynamic {
            for (k, s) in slots.iter().enumerate() {
                match *s {
                    Slot::Transfer { src, dst, .. } => {
                        dependents[src].push(k);
                        if family == Family::Sip {
                            dependents[dst].push(k);
                        }
                    }
                    Slot::Birth { site, .. } | Slot::Death { site, .. } => dependents[site].push(k),
                    _ => {}
                }
            }
        }

        let mut sim = JumpSimulator {
            model,
            family,
            state: init,
            time: 0.0,
            events: 0,
            rng,
            table: RateTable::new(vec![0.0; slots.len()]),
            slots,
            dependents,
            beta,
            bulk,
            input,
            cache,
            rate_cap: DEFAULT_RATE_CAP,
            epsilon,
        };
        let rates: Vec<f64> = (0..sim.slots.len()).map(|k| sim.slot_rate(k)).collect();
        sim.table = RateTable::new(rates);
        Ok(sim)
    }

    pub fn with_rate_cap(mut self, cap: f64) -> Self {
        self.rate_cap = cap;
        self
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn total_rate(&self) -> f64 {
        self.table.total()
    }

    fn counts(&self) -> &[u64] {
        match &self.state {
            StateVector::Counts(v) => v,
            _ => unreachable!("count families hold counts"),
        }
    }

    fn slot_rate(&mut self, k: usize) -> f64 {
        let two_s = self.model.two_s();
        match self.slots[k] {
            Slot::Redistribute { weight, .. } => weight,
            Slot::Transfer { src, dst, weight } => match self.family {
                Family::HarmonicContinuous | Family::HiddenHarmonic => {
                    weight * self.bulk.as_ref().expect("epsilon families").rate()
                }
                Family::HarmonicDiscrete => {
                    let n = self.counts()[src];
                    weight * self.cache.as_mut().expect("discrete harmonic").total(n)
                }
                Family::Sip => {
                    let eta = self.counts();
                    weight * eta[src] as f64 * (two_s + eta[dst] as f64)
                }
                Family::Irw => weight * self.counts()[src] as f64,
                _ => 0.0,
            },
            Slot::Reservoir { coupling, part, .. } => match part {
                ReservoirPart::Kmp => coupling,
                ReservoirPart::Harmonic(HarmonicReservoirPart::InputStandard) => {
                    coupling * self.input.as_ref().expect("epsilon families").rate()
                }
                ReservoirPart::Harmonic(_) => coupling * self.bulk.as_ref().expect("epsilon families").rate(),
            },
            Slot::Birth { site, coupling, alpha } => match self.family {
                Family::Sip => coupling * alpha * (two_s + self.counts()[site] as f64),
                _ => coupling * alpha,
            },
            Slot::Death { site, coupling, gamma } => coupling * gamma * self.counts()[site] as f64,
        }
    }

    /// Apply slot `k`; returns the sites whose values may have changed.
    fn fire(&mut self, k: usize) -> Result<(usize, Option<usize>)> {
        let two_s = self.model.two_s();
        let rng = &mut self.rng;
        match self.slots[k] {
            Slot::Redistribute { a, b, .. } => {
                let beta = self.beta.as_ref().expect("KMP families");
                match &mut self.state {
                    StateVector::Counts(v) => (v[a], v[b]) = kmp_discrete_split(v[a] + v[b], beta, rng),
                    StateVector::Masses(v) => (v[a], v[b]) = kmp_continuous_split(v[a] + v[b], beta, rng),
                    StateVector::Thetas(v) => {
                        let t = kmp_hidden_mix(v[a], v[b], beta, rng);
                        v[a] = t;
                        v[b] = t;
                    }
                }
                Ok((a, Some(b)))
            }
            Slot::Transfer { src, dst, .. } => {
                match (&mut self.state, self.family) {
                    (StateVector::Counts(v), Family::HarmonicDiscrete) => {
                        if v[src] > 0 {
                            let kk = self.cache.as_mut().expect("discrete harmonic").sample_k(v[src], rng);
                            v[src] -= kk;
                            v[dst] += kk;
                        }
                    }
                    (StateVector::Counts(v), _) => {
                        if v[src] > 0 {
                            v[src] -= 1;
                            v[dst] += 1;
                        }
                    }
                    (StateVector::Masses(v), _) => {
                        let u = self.bulk.as_ref().expect("epsilon families").sample(rng);
                        (v[src], v[dst]) = harmonic_mass_move(v[src], v[dst], u);
                    }
                    (StateVector::Thetas(v), _) => {
                        let u = self.bulk.as_ref().expect("epsilon families").sample(rng);
                        v[src] = harmonic_theta_move(v[src], v[dst], u);
                    }
                }
                Ok((src, Some(dst)))
            }
            Slot::Reservoir { site, theta_star, part, .. } => {
                match (part, &mut self.state) {
                    (ReservoirPart::Kmp, StateVector::Counts(v)) => {
                        let beta = self.beta.as_ref().expect("KMP families");
                        v[site] = kmp_reservoir_count(v[site], theta_star, two_s, beta, rng)?;
                    }
                    (ReservoirPart::Kmp, StateVector::Masses(v)) => {
                        let beta = self.beta.as_ref().expect("KMP families");
                        v[site] = kmp_reservoir_mass(v[site], theta_star, two_s, beta, rng);
                    }
                    (ReservoirPart::Kmp, StateVector::Thetas(v)) => {
                        let beta = self.beta.as_ref().expect("KMP families");
                        v[site] = kmp_hidden_mix(theta_star, v[site], beta, rng);
                    }
                    (ReservoirPart::Harmonic(p), StateVector::Masses(v) | StateVector::Thetas(v)) => {
                        let bulk = self.bulk.as_ref().expect("epsilon families");
                        let input = self.input.as_ref().expect("epsilon families");
                        v[site] = harmonic_reservoir_with(v[site], theta_star, two_s, p, bulk, input, rng);
                    }
                    (ReservoirPart::Harmonic(_), StateVector::Counts(_)) => {
                        return Err(Error::Unsupported("harmonic reservoir on counts".into()))
                    }
                }
                Ok((site, None))
            }
            Slot::Birth { site, .. } => {
                if let StateVector::Counts(v) = &mut self.state {
                    v[site] += 1;
                }
                Ok((site, None))
            }
            Slot::Death { site, .. } => {
                if let StateVector::Counts(v) = &mut self.state {
                    v[site] = v[site].saturating_sub(1);
                }
                Ok((site, None))
            }
        }
    }

    fn refresh(&mut self, site: usize) {
        for idx in 0..self.dependents[site].len() {
            let k = self.dependents[site][idx];
            let r = self.slot_rate(k);
            self.table.set(k, r);
        }
    }

    fn check_cap(&self, total: f64) -> Result<()> {
        if total > self.rate_cap || !total.is_finite() {
            Err(Error::RateOverflow { rate: total, cap: self.rate_cap })
        } else {
            Ok(())
        }
    }

    fn fire_next(&mut self, total: f64) -> Result<()> {
        let k = self.table.find(self.rng.uniform() * total);
        let (a, b) = self.fire(k)?;
        self.events += 1;
        if !self.dependents.is_empty() && !self.dependents[a].is_empty() {
            self.refresh(a);
        }
        if let Some(b) = b {
            if !self.dependents[b].is_empty() {
                self.refresh(b);
            }
        }
        Ok(())
    }

    /// Perform one event. Returns the holding time spent in the previous
    /// state, or `None` when no event can ever occur.
    pub fn step(&mut self) -> Result<Option<f64>> {
        let total = self.table.total();
        if total <= 0.0 {
            return Ok(None);
        }
        self.check_cap(total)?;
        let dt = self.rng.exp(total);
        self.time += dt;
        self.fire_next(total)?;
        Ok(Some(dt))
    }

    /// Run until `t_target`, calling `on_event(t, state)` after every event.
    pub fn advance_to_with(&mut self, t_target: f64, mut on_event: impl FnMut(f64, &StateVector)) -> Result<()> {
        loop {
            let total = self.table.total();
            if total <= 0.0 {
                self.time = self.time.max(t_target);
                return Ok(());
            }
            self.check_cap(total)?;
            let dt = self.rng.exp(total);
            if self.time + dt > t_target {
                self.time = self.time.max(t_target);
                return Ok(());
            }
            self.time += dt;
            self.fire_next(total)?;
            on_event(self.time, &self.state);
        }
    }

    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        self.advance_to_with(t_target, |_, _| {})
    }

    pub fn into_state(self) -> StateVector {
        self.state
    }
}
