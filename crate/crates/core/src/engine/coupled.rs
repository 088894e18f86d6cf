//! Several truncation levels of one harmonic model driven by shared noise.
//!
//! Events are generated at the smallest ε. A replica with level `ε_r`
//! applies an event only when its fraction `u ≥ ε_r`, which thins the
//! shared stream down to exactly its own truncated event set.

use crate::error::{check_epsilon, Error, Result};
use crate::generators::{harmonic_mass_move, harmonic_theta_move, input_part, HarmonicReservoirPart};
use crate::model::{Family, Model, StateKind, StateVector};
use crate::rng::RngStream;
use crate::sampling::{gamma_sample, JumpMeasure};

#[derive(Debug, Clone, Copy)]
enum CoupledSlot {
    Transfer { src: usize, dst: usize },
    Reservoir { site: usize, theta_star: f64, part: HarmonicReservoirPart },
}

/// Replicas of a continuous or hidden harmonic model at several ε.
#[derive(Debug, Clone)]
pub struct CoupledHarmonicSimulator<'m> {
    model: &'m Model,
    epsilons: Vec<f64>,
    states: Vec<Vec<f64>>,
    kind: StateKind,
    time: f64,
    events: u64,
    applied: Vec<u64>,
    rng: RngStream,
    slots: Vec<CoupledSlot>,
    cumulative: Vec<f64>,
    bulk: JumpMeasure,
    input: JumpMeasure,
}

impl<'m> CoupledHarmonicSimulator<'m> {
    pub fn new(model: &'m Model, init: StateVector, epsilons: &[f64], rng: RngStream) -> Result<Self> {
        let family = model.family();
        if !family.needs_epsilon() {
            return Err(Error::Unsupported(format!("{family} has finite jump activity")));
        }
        if epsilons.is_empty() {
            return Err(Error::InvalidParameter("no truncation levels given".into()));
        }
        for &e in epsilons {
            check_epsilon(e)?;
        }
        let n = model.graph().len();
        init.expect_kind(family.state_kind(), n)?;
        let eps_min = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
        let two_s = model.two_s();
        let bulk = JumpMeasure::harmonic_bulk(two_s, eps_min)?;
        let input = JumpMeasure::reservoir_input(eps_min)?;

        let g = model.graph();
        let mut slots = Vec::new();
        let mut rates = Vec::new();
        for e in g.active_edges() {
            slots.push(CoupledSlot::Transfer { src: e.a, dst: e.b });
            slots.push(CoupledSlot::Transfer { src: e.b, dst: e.a });
            rates.extend([e.weight * bulk.rate(); 2]);
        }
        for i in 0..n {
            let c = g.coupling(i);
            for spec in model.reservoirs_at(i) {
                let theta_star = spec.theta_star().unwrap_or(0.0);
                let parts: Vec<HarmonicReservoirPart> = if family == Family::HiddenHarmonic {
                    vec![HarmonicReservoirPart::Hidden]
                } else {
                    vec![HarmonicReservoirPart::Exit, input_part(model.harmonic_reservoir_kind())]
                };
                for part in parts {
                    let lam = match part {
                        HarmonicReservoirPart::InputStandard => input.rate(),
                        _ => bulk.rate(),
                    };
                    slots.push(CoupledSlot::Reservoir { site: i, theta_star, part });
                    rates.push(c * lam);
                }
            }
        }
        let mut acc = 0.0;
        let cumulative = rates
            .iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect();
        let start = init.to_f64();
        Ok(CoupledHarmonicSimulator {
            model,
            epsilons: epsilons.to_vec(),
            states: vec![start; epsilons.len()],
            kind: family.state_kind(),
            time: 0.0,
            events: 0,
            applied: vec![0; epsilons.len()],
            rng,
            slots,
            cumulative,
            bulk,
            input,
        })
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Events that changed replica `r`.
    pub fn applied(&self, r: usize) -> u64 {
        self.applied[r]
    }

    /// Current values of replica `r`.
    pub fn values(&self, r: usize) -> &[f64] {
        &self.states[r]
    }

    pub fn state(&self, r: usize) -> StateVector {
        match self.kind {
            StateKind::Thetas => StateVector::Thetas(self.states[r].clone()),
            _ => StateVector::Masses(self.states[r].clone()),
        }
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn fire(&mut self) {
        let target = self.rng.uniform() * self.total();
        let k = self.cumulative.partition_point(|&c| c <= target).min(self.slots.len() - 1);
        let two_s = self.model.two_s();
        match self.slots[k] {
            CoupledSlot::Transfer { src, dst } => {
                let u = self.bulk.sample(&mut self.rng);
                for ((eps, v), hits) in self.epsilons.iter().zip(self.states.iter_mut()).zip(self.applied.iter_mut()) {
                    if u < *eps {
                        continue;
                    }
                    *hits += 1;
                    match self.kind {
                        StateKind::Thetas => v[src] = harmonic_theta_move(v[src], v[dst], u),
                        _ => (v[src], v[dst]) = harmonic_mass_move(v[src], v[dst], u),
                    }
                }
            }
            CoupledSlot::Reservoir { site, theta_star, part } => {
                let (u, y) = match part {
                    HarmonicReservoirPart::InputStandard => (self.input.sample(&mut self.rng), theta_star),
                    HarmonicReservoirPart::InputSampled => {
                        let y = gamma_sample(two_s, theta_star, &mut self.rng);
                        (self.bulk.sample(&mut self.rng), y)
                    }
                    _ => (self.bulk.sample(&mut self.rng), theta_star),
                };
                for ((eps, v), hits) in self.epsilons.iter().zip(self.states.iter_mut()).zip(self.applied.iter_mut()) {
                    if u < *eps {
                        continue;
                    }
                    *hits += 1;
                    v[site] = match part {
                        HarmonicReservoirPart::Exit => (1.0 - u) * v[site],
                        HarmonicReservoirPart::InputStandard | HarmonicReservoirPart::InputSampled => v[site] + u * y,
                        HarmonicReservoirPart::Hidden => harmonic_theta_move(v[site], theta_star, u),
                    };
                }
            }
        }
        self.events += 1;
    }

    /// Run until `t_target`, calling `on_event(t, self)` after every event.
    pub fn advance_to_with(&mut self, t_target: f64, mut on_event: impl FnMut(f64, &Self)) {
        let total = self.total();
        if total <= 0.0 {
            self.time = self.time.max(t_target);
            return;
        }
        loop {
            let dt = self.rng.exp(total);
            if self.time + dt > t_target {
                self.time = self.time.max(t_target);
                return;
            }
            self.time += dt;
            self.fire();
            on_event(self.time, self);
        }
    }

    pub fn advance_to(&mut self, t_target: f64) {
        self.advance_to_with(t_target, |_, _| {})
    }
}
