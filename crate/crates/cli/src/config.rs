//! Experiment configuration files.

use std::path::{Path, PathBuf};

use mixflow_core::duality::SuiteOptions;
use mixflow_core::engine::{Numerics, Recording};
use mixflow_core::ness::{SamplingPlan, SipBepBudget};
use mixflow_core::sampling::MixingLaw;
use mixflow_core::{Family, Model, StateKind, StateVector};
use serde::Deserialize;

use crate::exit::CliError;

/// Full configuration of one run. Each subcommand reads the blocks it needs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand the file is meant for; checked when present.
    pub command: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    /// Model in the core JSON form.
    pub model: Option<serde_json::Value>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub budgets: Budgets,
    /// Identity suite grids and tolerances.
    #[serde(default)]
    pub suite: SuiteOptions,
    /// Shorthand for `suite.tolerance`.
    pub tolerance: Option<f64>,
    /// Initial state for `simulate`; zeros when absent.
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_recording")]
    pub recording: Recording,
    pub experiment: Option<NessExperiment>,
    pub sweep: Option<SweepConfig>,
    pub mixing: Option<MixingLaw>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_recording() -> Recording {
    Recording::Events
}

/// Run lengths and sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub t_end: f64,
    /// Ensemble size for `simulate`; no ensemble when absent.
    pub n_traj: Option<usize>,
    pub n_samples: usize,
    pub burn_in: f64,
    /// Time between stationary samples; derived from the model when absent.
    pub thinning: Option<f64>,
    pub chains: usize,
    /// Events for occupation laws of single-site particle systems.
    pub pmf_events: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        let plan = SamplingPlan::default();
        Budgets {
            t_end: 10.0,
            n_traj: None,
            n_samples: plan.n_samples,
            burn_in: plan.burn_in,
            thinning: plan.thinning,
            chains: plan.chains,
            pmf_events: SipBepBudget::default().pmf_events,
        }
    }
}

impl Budgets {
    pub fn plan(&self) -> SamplingPlan {
        SamplingPlan { burn_in: self.burn_in, n_samples: self.n_samples, thinning: self.thinning, chains: self.chains }
    }
}

/// Stationary experiments run by `ness`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum NessExperiment {
    /// Harmonic chain with end reservoirs against the mixing law.
    Chain { family: Family, n: usize, two_s: f64, theta_left: f64, theta_right: f64 },
    /// Standard against sampled reservoir variants of the continuous chain.
    ReservoirVariants { n: usize, two_s: f64, theta_left: f64, theta_right: f64 },
    /// Inclusion process of the `model` block against its energy process.
    SipBep,
    /// Independent walkers of the `model` block against the Poisson product.
    IrwPoisson,
}

/// Convergence studies run by `sweep`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SweepConfig {
    /// Hidden harmonic chain over truncation levels.
    Epsilon { n: usize, two_s: f64, theta_left: f64, theta_right: f64, epsilons: Vec<f64> },
    /// Energy process of the `model` block at `dt` and `dt/2`.
    DtHalving { dt: f64 },
}

/// Where results go.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub report: Option<String>,
    pub trajectory: Option<String>,
    pub samples: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.check_numerics()?;
        Ok(cfg)
    }

    fn check_numerics(&self) -> Result<(), CliError> {
        let n = &self.numerics;
        if !(n.epsilon > 0.0 && n.epsilon < 1.0) {
            return Err(CliError::Config(format!("numerics.epsilon must lie in (0, 1), got {}", n.epsilon)));
        }
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return Err(CliError::Config(format!("numerics.dt must be positive, got {}", n.dt)));
        }
        if n.rate_cap.is_nan() || n.rate_cap <= 0.0 {
            return Err(CliError::Config(format!("numerics.rate_cap must be positive, got {}", n.rate_cap)));
        }
        Ok(())
    }

    pub fn check_command(&self, name: &str) -> Result<(), CliError> {
        match &self.command {
            Some(c) if c != name => Err(CliError::Config(format!("config is for `{c}`, not `{name}`"))),
            _ => Ok(()),
        }
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let value = self.model.as_ref().ok_or_else(|| CliError::Config("missing `model` block".into()))?;
        Model::from_json(&value.to_string()).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.output
            .dir
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: set `output.dir` or pass --out".into()))
    }

    pub fn report_path(&self) -> Result<PathBuf, CliError> {
        Ok(self.out_dir()?.join(self.output.report.as_deref().unwrap_or("report.json")))
    }

    /// Initial state for `model`, from `init` or all zeros.
    pub fn initial_state(&self, model: &Model) -> Result<StateVector, CliError> {
        let n = model.graph().len();
        let kind = model.family().state_kind();
        let Some(values) = &self.init else {
            return Ok(StateVector::zeros(kind, n));
        };
        if values.len() != n {
            return Err(CliError::Config(format!("`init` has {} entries, model has {n} vertices", values.len())));
        }
        let state = match kind {
            StateKind::Counts => {
                if let Some(v) = values.iter().find(|v| !(v.fract() == 0.0 && **v >= 0.0 && **v <= u64::MAX as f64)) {
                    return Err(CliError::Config(format!("`init` entry {v} is not a particle count")));
                }
                StateVector::Counts(values.iter().map(|v| *v as u64).collect())
            }
            StateKind::Masses => StateVector::Masses(values.clone()),
            StateKind::Thetas => StateVector::Thetas(values.clone()),
        };
        state.validate().map_err(|e| CliError::Config(format!("init: {e}")))?;
        Ok(state)
    }
}
