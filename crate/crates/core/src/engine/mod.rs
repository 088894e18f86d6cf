//! Trajectory generation for every family.
//!
//! * [`JumpSimulator`]: exact Gillespie over the (ε-truncated) event set.
//! * [`CoupledHarmonicSimulator`]: several ε levels on shared noise.
//! * [`BepSimulator`]: Euler–Maruyama with clamping.
//! * [`integrate_flow`] / [`irw_fixed_point`]: the deterministic walker flow.

mod coupled;
mod fenwick;
mod flow;
mod jump;
mod sde;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use coupled::CoupledHarmonicSimulator;
pub use fenwick::RateTable;
pub use flow::{default_flow_dt, integrate_flow, irw_fixed_point, rk4_step};
pub use jump::{JumpSimulator, DEFAULT_RATE_CAP};
pub use sde::BepSimulator;

use crate::error::{Error, Result};
use crate::model::{Family, Model, StateVector, VertexId};
use crate::rng::RngStream;

/// Default truncation level for the infinite-activity families.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Default Euler–Maruyama step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Which states a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Every event (or every step for time-stepped families).
    Events,
    /// A fixed time grid with the given spacing.
    Grid(f64),
    /// Initial and terminal states only.
    Endpoints,
}

/// Numerical parameters shared by all runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub epsilon: f64,
    pub dt: f64,
    pub rate_cap: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { epsilon: DEFAULT_EPSILON, dt: DEFAULT_DT, rate_cap: DEFAULT_RATE_CAP }
    }
}

/// Run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub family: Family,
    pub epsilon: Option<f64>,
    pub dt: Option<f64>,
    pub events: u64,
    pub clamped_fraction: Option<f64>,
}

/// Recorded path: strictly increasing times starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vertices: Vec<VertexId>,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub terminal_time: f64,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    fn start(model: &Model, init: &StateVector, meta: TrajectoryMeta) -> Self {
        Trajectory {
            vertices: model.graph().vertices().to_vec(),
            times: vec![0.0],
            states: vec![init.clone()],
            terminal_time: 0.0,
            meta,
        }
    }

    fn push(&mut self, t: f64, state: &StateVector) {
        if t > *self.times.last().expect("starts non-empty") {
            self.times.push(t);
            self.states.push(state.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("starts non-empty")
    }

    /// CSV with header `t,<vertex ids...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for v in &self.vertices {
            out.push(',');
            out.push_str(v.as_str());
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for i in 0..s.len() {
                match s {
                    StateVector::Counts(c) => {
                        let _ = write!(out, ",{}", c[i]);
                    }
                    _ => {
                        let _ = write!(out, ",{}", s.get(i));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_horizon(t_end: f64) -> Result<()> {
    if t_end >= 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time horizon must be finite and nonnegative, got {t_end}")))
    }
}

fn run_jump(sim: &mut JumpSimulator<'_>, traj: &mut Trajectory, t_end: f64, recording: Recording) -> Result<()> {
    match recording {
        Recording::Events => sim.advance_to_with(t_end, |t, s| traj.push(t, s))?,
        Recording::Grid(h) => {
            check_grid(h)?;
            let mut k = 1u64;
            while (k as f64) * h < t_end {
                sim.advance_to(k as f64 * h)?;
                traj.push(k as f64 * h, sim.state());
                k += 1;
            }
            sim.advance_to(t_end)?;
        }
        Recording::Endpoints => sim.advance_to(t_end)?,
    }
    traj.push(t_end, sim.state());
    traj.terminal_time = t_end;
    traj.meta.events = sim.events();
    Ok(())
}

fn check_grid(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("grid spacing must be positive, got {h}")))
    }
}

/// Exact Gillespie run for the finite-activity jump families.
pub fn gillespie_run(
    model: &Model,
    init: StateVector,
    t_end: f64,
    rng: RngStream,
    recording: Recording,
    rate_cap: f64,
) -> Result<Trajectory> {
    check_horizon(t_end)?;
    if model.family().needs_epsilon() {
        return Err(Error::Unsupported(format!("{} needs a truncation level; use thinned_run", model.family())));
    }
    let meta = TrajectoryMeta { family: model.family(), epsilon: None, dt: None, events: 0, clamped_fraction: None };
    let mut traj = Trajectory::start(model, &init, meta);
    let mut sim = JumpSimulator::new(model, init, None, rng)?.with_rate_cap(rate_cap);
    run_jump(&mut sim, &mut traj, t_end, recording)?;
    Ok(traj)
}

/// Gillespie run over the ε-truncated event set of a harmonic model.
pub fn thinned_run(
    model: &Model,
    init: StateVector,
    t_end: f64,
    epsilon: f64,
    rng: RngStream,
    recording: Recording,
) -> Result<Trajectory> {
    check_horizon(t_end)?;
    crate::error::check_epsilon(epsilon)?;
    if !model.family().needs_epsilon() {
        return Err(Error::Unsupported(format!("{} has finite jump activity; use gillespie_run", model.family())));
    }
    let meta =
        TrajectoryMeta { family: model.family(), epsilon: Some(epsilon), dt: None, events: 0, clamped_fraction: None };
    let mut traj = Trajectory::start(model, &init, meta);
    let mut sim = JumpSimulator::new(model, init, Some(epsilon), rng)?;
    run_jump(&mut sim, &mut traj, t_end, recording)?;
    Ok(traj)
}

/// Euler–Maruyama run of the BEP.
pub fn em_run(
    model: &Model,
    init: StateVector,
    t_end: f64,
    dt: f64,
    rng: RngStream,
    recording: Recording,
) -> Result<Trajectory> {
    check_horizon(t_end)?;
    let meta =
        TrajectoryMeta { family: model.family(), epsilon: None, dt: Some(dt), events: 0, clamped_fraction: None };
    let mut traj = Trajectory::start(model, &init, meta);
    let mut sim = BepSimulator::new(model, init, dt, rng)?;
    match recording {
        Recording::Events => {
            while sim.time() < t_end {
                let next = (sim.time() + dt).min(t_end);
                sim.advance_to(next);
                traj.push(sim.time(), &sim.state());
            }
        }
        Recording::Grid(h) => {
            check_grid(h)?;
            let mut k = 1u64;
            while (k as f64) * h < t_end {
                sim.advance_to(k as f64 * h);
                traj.push(k as f64 * h, &sim.state());
                k += 1;
            }
        }
        Recording::Endpoints => {}
    }
    sim.advance_to(t_end);
    traj.push(t_end, &sim.state());
    traj.terminal_time = t_end;
    traj.meta.events = sim.steps();
    traj.meta.clamped_fraction = Some(sim.clamped_fraction());
    Ok(traj)
}

/// RK4 flow of the walker densities.
pub fn ode_flow(model: &Model, init: StateVector, t_end: f64, dt: f64, recording: Recording) -> Result<Trajectory> {
    check_horizon(t_end)?;
    let n = model.graph().len();
    if init.len() != n {
        return Err(Error::InvalidParameter(format!("state has {} components, graph has {}", init.len(), n)));
    }
    let meta =
        TrajectoryMeta { family: model.family(), epsilon: None, dt: Some(dt), events: 0, clamped_fraction: None };
    let mut traj = Trajectory::start(model, &init, meta);
    let grid = match recording {
        Recording::Grid(h) => {
            check_grid(h)?;
            Some(h)
        }
        _ => None,
    };
    let mut next_grid = grid.unwrap_or(f64::INFINITY);
    let mut steps = 0;
    let end = integrate_flow(model, &init.to_f64(), t_end, dt, |t, z| {
        steps += 1;
        match (recording, grid) {
            (Recording::Events, _) => traj.push(t, &StateVector::Masses(z.to_vec())),
            (_, Some(h)) if t + 1e-12 * h >= next_grid => {
                traj.push(t, &StateVector::Masses(z.to_vec()));
                while next_grid <= t + 1e-12 * h {
                    next_grid += h;
                }
            }
            _ => {}
        }
    })?;
    traj.push(t_end, &StateVector::Masses(end));
    traj.terminal_time = t_end;
    traj.meta.events = steps;
    Ok(traj)
}

/// Advance `init` by time `t` with the engine matching the model family.
pub fn simulate_state(
    model: &Model,
    init: StateVector,
    t: f64,
    numerics: &Numerics,
    rng: RngStream,
) -> Result<StateVector> {
    check_horizon(t)?;
    match model.family() {
        Family::Bep => {
            let mut sim = BepSimulator::new(model, init, numerics.dt, rng)?;
            sim.advance_to(t);
            Ok(sim.state())
        }
        Family::IrwFlow => {
            let dt = default_flow_dt(model);
            Ok(StateVector::Masses(integrate_flow(model, &init.to_f64(), t, dt, |_, _| {})?))
        }
        f => {
            let eps = f.needs_epsilon().then_some(numerics.epsilon);
            let mut sim = JumpSimulator::new(model, init, eps, rng)?.with_rate_cap(numerics.rate_cap);
            sim.advance_to(t)?;
            Ok(sim.into_state())
        }
    }
}

/// Per-trajectory observable values at a fixed horizon, with mean and SE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub observable: String,
    pub t: f64,
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl EnsembleSummary {
    pub fn from_values(observable: impl Into<String>, t: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = crate::stats::mean(&values);
        let se = crate::stats::standard_error(&values);
        EnsembleSummary { observable: observable.into(), t, values, mean, se, n }
    }

    /// `{observable, t, mean, se, n}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "observable": self.observable,
            "t": self.t,
            "mean": self.mean,
            "se": self.se,
            "n": self.n,
        })
    }
}

/// Run `n_traj` independent trajectories from sampled initial states and
/// summarize `observable` at time `t`. Trajectory `k` uses `rng.derive(k)`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_at<I, O>(
    model: &Model,
    init_sampler: I,
    t: f64,
    n_traj: usize,
    observable_name: &str,
    observable: O,
    numerics: &Numerics,
    rng: &RngStream,
) -> Result<EnsembleSummary>
where
    I: Fn(&mut RngStream) -> StateVector + Sync,
    O: Fn(&StateVector) -> f64 + Sync,
{
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("an ensemble needs at least 2 trajectories, got {n_traj}")));
    }
    let values = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let mut child = rng.derive(k);
            let init = init_sampler(&mut child);
            simulate_state(model, init, t, numerics, child).map(|s| observable(&s))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EnsembleSummary::from_values(observable_name, t, values))
}
