//! Euler–Maruyama stepping of the Brownian energy process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::generators::reservoir_rate_sums;
use crate::model::{Family, Model, StateVector};
use crate::rng::RngStream;

/// Euler–Maruyama with negative components clamped to 0 after each step.
#[derive(Debug, Clone)]
pub struct BepSimulator<'m> {
    model: &'m Model,
    zeta: Vec<f64>,
    time: f64,
    dt: f64,
    steps: u64,
    clamped_steps: u64,
    rng: RngStream,
    edges: Vec<(usize, usize, f64)>,
    /// `(site, Σ c α, Σ c γ)` for reservoir sites.
    sites: Vec<(usize, f64, f64)>,
    noise: Vec<f64>,
}

impl<'m> BepSimulator<'m> {
    pub fn new(model: &'m Model, init: StateVector, dt: f64, rng: RngStream) -> Result<Self> {
        if model.family() != Family::Bep {
            return Err(Error::KindMismatch { expected: "BEP".into(), found: model.family().to_string() });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::BadDt(dt));
        }
        init.expect_kind(Family::Bep.state_kind(), model.graph().len())?;
        let edges = model.graph().active_edges().map(|e| (e.a, e.b, e.weight)).collect();
        let sites: Vec<(usize, f64, f64)> = reservoir_rate_sums(model)
            .into_iter()
            .enumerate()
            .filter(|(_, (ca, cg))| *ca > 0.0 || *cg > 0.0)
            .map(|(i, (ca, cg))| (i, ca, cg))
            .collect();
        Ok(BepSimulator {
            model,
            zeta: init.to_f64(),
            time: 0.0,
            dt,
            steps: 0,
            clamped_steps: 0,
            rng,
            edges,
            sites,
            noise: Vec::new(),
        })
    }

    /// Number of standard normals consumed per step.
    pub fn noise_dim(&self) -> usize {
        self.edges.len() + self.sites.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.zeta
    }

    pub fn state(&self) -> StateVector {
        StateVector::Masses(self.zeta.clone())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Fraction of steps in which at least one component was clamped.
    pub fn clamped_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.clamped_steps as f64 / self.steps as f64
        }
    }

    /// One step of size `dt` driven by the given standard normals.
    pub fn step_with_noise(&mut self, dt: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.noise_dim());
        let two_s = self.model.two_s();
        let old = &self.zeta;
        let mut next = old.clone();
        for (k, &(a, b, w)) in self.edges.iter().enumerate() {
            let flow = two_s * (old[a] - old[b]) * w * dt;
            let kick = (2.0 * old[a] * old[b] * w * dt).sqrt() * z[k];
            next[a] += kick - flow;
            next[b] += flow - kick;
        }
        let off = self.edges.len();
        for (k, &(i, ca, cg)) in self.sites.iter().enumerate() {
            next[i] += (two_s * ca - (cg - ca) * old[i]) * dt + (2.0 * ca * old[i] * dt).sqrt() * z[off + k];
        }
        let mut clamped = false;
        for x in next.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
                clamped = true;
            }
        }
        self.zeta = next;
        self.time += dt;
        self.steps += 1;
        self.clamped_steps += clamped as u64;
    }

    pub fn step(&mut self) {
        let d = self.noise_dim();
        let mut z = std::mem::take(&mut self.noise);
        z.clear();
        z.extend((0..d).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
        self.step_with_noise(self.dt, &z);
        self.noise = z;
    }

    /// Step until the time reaches `t_target`; the last step is shortened
    /// to land exactly on it.
    pub fn advance_to(&mut self, t_target: f64) {
        while self.time < t_target {
            let remaining = t_target - self.time;
            if remaining < self.dt * (1.0 - 1e-9) {
                let d = self.noise_dim();
                let z: Vec<f64> = (0..d).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect();
                self.step_with_noise(remaining, &z);
                self.time = t_target;
            } else {
                self.step();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, ModelSpec, ReservoirSpec};

    #[test]
    fn rejects_bad_dt_and_family() {
        let g = build_graph(&["1"], &[] as &[(&str, &str, f64)], &[("1", 1.0)]).unwrap();
        let m = Model::new(&g, ModelSpec::new(Family::Bep, 1.0).with_reservoir("1", ReservoirSpec::rates(1.0, 2.0)))
            .unwrap();
        let init = StateVector::Masses(vec![1.0]);
        assert!(matches!(BepSimulator::new(&m, init.clone(), 0.0, RngStream::new(0, 0)), Err(Error::BadDt(_))));
        let sip = m.with_family(Family::Sip).unwrap();
        assert!(BepSimulator::new(&sip, init, 1e-3, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn single_site_mean_relaxes() {
        let g = build_graph(&["1"], &[] as &[(&str, &str, f64)], &[("1", 1.0)]).unwrap();
        let m = Model::new(&g, ModelSpec::new(Family::Bep, 1.0).with_reservoir("1", ReservoirSpec::rates(1.0, 2.0)))
            .unwrap();
        let mut sim = BepSimulator::new(&m, StateVector::Masses(vec![0.0]), 1e-2, RngStream::new(9, 0)).unwrap();
        sim.advance_to(20.0);
        let mut acc = 0.0;
        let n = 200_000;
        for _ in 0..n {
            sim.step();
            acc += sim.values()[0];
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.1);
        assert!(sim.values()[0] >= 0.0);
    }

    #[test]
    fn isolated_zero_noise_is_constant() {
        let g = build_graph(&["1", "2"], &[("1", "2", 1.0)], &[] as &[(&str, f64)]).unwrap();
        let m = Model::new(&g, ModelSpec::new(Family::Bep, 1.0)).unwrap();
        let mut sim = BepSimulator::new(&m, StateVector::Masses(vec![0.0, 0.0]), 1e-3, RngStream::new(0, 0)).unwrap();
        sim.advance_to(0.5);
        assert_eq!(sim.values(), &[0.0, 0.0]);
        let mut sim = BepSimulator::new(&m, StateVector::Masses(vec![0.7, 0.7]), 1e-3, RngStream::new(0, 0)).unwrap();
        sim.step_with_noise(1e-3, &[0.0]);
        assert_eq!(sim.values(), &[0.7, 0.7]);
    }
}
