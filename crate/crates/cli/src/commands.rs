//! Subcommand bodies. Each writes its report and returns the summary line.

use std::fs;
use std::path::Path;

use mixflow_core::duality::{run_identity_suite, summarize, IdentityReport, SuiteSummary};
use mixflow_core::engine::{
    default_flow_dt, em_run, ensemble_at, gillespie_run, ode_flow, thinned_run, EnsembleSummary, Trajectory,
};
use mixflow_core::ness::{
    bep_dt_halving, epsilon_convergence_sweep, irw_poisson_product_experiment, mixing_oracle_moments,
    ness_chain_experiment, reservoir_variant_equivalence, sip_poisson_mixture_experiment, ComparisonReport,
    RunMetadata, SipBepBudget, SweepExperiment, SweepLevel,
};
use mixflow_core::sampling::MixingLaw;
use mixflow_core::stats::batch_means;
use mixflow_core::{Family, Model, RngStream, StateVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, NessExperiment, SweepConfig};
use crate::exit::CliError;

type Observable = Box<dyn Fn(&StateVector) -> f64 + Sync>;

/// Failing identity checks listed in full in a verify report.
const LISTED_FAILURES: usize = 100;
/// Mixing-law draws per parallel block.
const MIXING_BLOCK: usize = 10_000;
/// Batches for mixing-law sample means.
const MIXING_BATCHES: usize = 50;

fn rng(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.seed, cfg.stream_id)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_report<T: Serialize>(cfg: &ExperimentConfig, report: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(&cfg.report_path()?, &text)
}

fn verdict(pass: bool, summary: String) -> Result<String, CliError> {
    if pass {
        Ok(summary)
    } else {
        Err(CliError::Failed(summary))
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    pass: bool,
    checks: usize,
    failures: usize,
    families: Vec<SuiteSummary>,
    failed_checks: Vec<&'a IdentityReport>,
}

pub fn verify(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut opts = cfg.suite.clone();
    if cfg.tolerance.is_some() {
        opts.tolerance = cfg.tolerance;
    }
    if let Some(t) = opts.tolerance {
        if t.is_nan() || t < 0.0 {
            return Err(CliError::Config(format!("tolerance must be nonnegative, got {t}")));
        }
    }
    cfg.out_dir()?;
    let reports = run_identity_suite(&opts)?;
    let families = summarize(&reports);
    let failed: Vec<&IdentityReport> = reports.iter().filter(|r| !r.pass).collect();
    let report = VerifyReport {
        command: "verify",
        pass: failed.is_empty(),
        checks: reports.len(),
        failures: failed.len(),
        families,
        failed_checks: failed.iter().take(LISTED_FAILURES).copied().collect(),
    };
    write_report(cfg, &report)?;
    let worst = report.families.iter().map(|f| f.worst_error).fold(0.0, f64::max);
    verdict(
        report.pass,
        format!(
            "verify: {} identity families, {} checks, {} failed, worst error {worst:.3e}",
            report.families.len(),
            report.checks,
            report.failures
        ),
    )
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    family: Family,
    seed: u64,
    stream_id: u64,
    t_end: f64,
    rows: usize,
    events: u64,
    epsilon: Option<f64>,
    dt: Option<f64>,
    clamped_fraction: Option<f64>,
    final_state: Vec<f64>,
    ensemble: Vec<serde_json::Value>,
}

fn trajectory(cfg: &ExperimentConfig, model: &Model, init: StateVector) -> Result<Trajectory, CliError> {
    let (t, n) = (cfg.budgets.t_end, &cfg.numerics);
    let rng = rng(cfg);
    Ok(match model.family() {
        Family::Bep => em_run(model, init, t, n.dt, rng, cfg.recording)?,
        Family::IrwFlow => ode_flow(model, init, t, default_flow_dt(model), cfg.recording)?,
        f if f.needs_epsilon() => thinned_run(model, init, t, n.epsilon, rng, cfg.recording)?,
        _ => gillespie_run(model, init, t, rng, cfg.recording, n.rate_cap)?,
    })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let init = cfg.initial_state(&model)?;
    let t_end = cfg.budgets.t_end;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CliError::Config(format!("budgets.t_end must be finite and nonnegative, got {t_end}")));
    }
    let out = cfg.out_dir()?;
    let traj = trajectory(cfg, &model, init.clone())?;
    let csv_path = out.join(cfg.output.trajectory.as_deref().unwrap_or("trajectory.csv"));
    write_file(&csv_path, &traj.to_csv())?;

    let mut ensemble = Vec::new();
    if let Some(n_traj) = cfg.budgets.n_traj {
        // Ensembles draw from a child stream so the single path above is unchanged.
        let base = rng(cfg).derive(u64::MAX);
        let start = |_: &mut RngStream| init.clone();
        let mut observables: Vec<(String, Observable)> = vec![("total".into(), Box::new(|s: &StateVector| s.total()))];
        for (i, v) in model.graph().vertices().iter().enumerate() {
            observables.push((format!("site_{}", v.as_str()), Box::new(move |s: &StateVector| s.get(i))));
        }
        for (name, obs) in &observables {
            let summary: EnsembleSummary = ensemble_at(&model, start, t_end, n_traj, name, obs, &cfg.numerics, &base)?;
            ensemble.push(summary.to_json());
        }
    }
    let report = SimulateReport {
        command: "simulate",
        family: model.family(),
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        t_end,
        rows: traj.len(),
        events: traj.meta.events,
        epsilon: traj.meta.epsilon,
        dt: traj.meta.dt,
        clamped_fraction: traj.meta.clamped_fraction,
        final_state: traj.final_state().to_f64(),
        ensemble,
    };
    write_report(cfg, &report)?;
    Ok(format!(
        "simulate: {} to t={t_end}, {} rows, {} events -> {}",
        model.family(),
        report.rows,
        report.events,
        csv_path.display()
    ))
}

#[derive(Serialize)]
struct ComparisonsReport<'a, E: Serialize> {
    command: &'static str,
    seed: u64,
    stream_id: u64,
    experiment: E,
    pass: bool,
    comparisons: &'a [ComparisonReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<&'a [SweepLevel]>,
}

fn comparison_summary(command: &str, comps: &[ComparisonReport]) -> (bool, String) {
    let failed: Vec<&str> = comps.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let mut line = format!("{command}: {} comparisons, {} failed", comps.len(), failed.len());
    if !failed.is_empty() {
        line.push_str(&format!(" ({})", failed.join(", ")));
    }
    (failed.is_empty(), line)
}

pub fn ness(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let exp = cfg.experiment.as_ref().ok_or_else(|| CliError::Config("missing `experiment` block".into()))?;
    cfg.out_dir()?;
    let plan = cfg.budgets.plan();
    let rng = rng(cfg);
    let comps = match exp {
        NessExperiment::Chain { family, n, two_s, theta_left, theta_right } => {
            if !matches!(family, Family::HiddenHarmonic | Family::HarmonicContinuous) {
                return Err(CliError::Config(format!(
                    "chain experiment needs HIDDEN_HARMONIC or HARMONIC_CONTINUOUS, got {family}"
                )));
            }
            ness_chain_experiment(*family, *n, *two_s, *theta_left, *theta_right, &cfg.numerics, &plan, &rng)?
        }
        NessExperiment::ReservoirVariants { n, two_s, theta_left, theta_right } => {
            reservoir_variant_equivalence(*n, *two_s, *theta_left, *theta_right, &cfg.numerics, &plan, &rng)?
        }
        NessExperiment::SipBep => {
            let model = family_model(cfg, Family::Sip)?;
            let budget = SipBepBudget { pmf_events: cfg.budgets.pmf_events, sip: plan, bep: plan };
            sip_poisson_mixture_experiment(&model, &budget, &cfg.numerics, &rng)?
        }
        NessExperiment::IrwPoisson => {
            let model = family_model(cfg, Family::Irw)?;
            irw_poisson_product_experiment(&model, &plan, &cfg.numerics, &rng)?
        }
    };
    let (pass, line) = comparison_summary("ness", &comps);
    let report = ComparisonsReport {
        command: "ness",
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        experiment: experiment_json(exp),
        pass,
        comparisons: &comps,
        levels: None,
    };
    write_report(cfg, &report)?;
    verdict(pass, line)
}

fn experiment_json(exp: &NessExperiment) -> serde_json::Value {
    match exp {
        NessExperiment::Chain { family, n, two_s, theta_left, theta_right } => serde_json::json!({
            "kind": "chain", "family": family, "n": n, "two_s": two_s,
            "theta_left": theta_left, "theta_right": theta_right,
        }),
        NessExperiment::ReservoirVariants { n, two_s, theta_left, theta_right } => serde_json::json!({
            "kind": "reservoir_variants", "n": n, "two_s": two_s,
            "theta_left": theta_left, "theta_right": theta_right,
        }),
        NessExperiment::SipBep => serde_json::json!({ "kind": "sip_bep" }),
        NessExperiment::IrwPoisson => serde_json::json!({ "kind": "irw_poisson" }),
    }
}

fn family_model(cfg: &ExperimentConfig, family: Family) -> Result<Model, CliError> {
    let model = cfg.model()?;
    if model.family() != family {
        return Err(CliError::Config(format!("experiment needs a {family} model, got {}", model.family())));
    }
    Ok(model)
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing `sweep` block".into()))?;
    cfg.out_dir()?;
    let plan = cfg.budgets.plan();
    let rng = rng(cfg);
    let (levels, comps, experiment) = match sw {
        SweepConfig::Epsilon { n, two_s, theta_left, theta_right, epsilons } => {
            let exp = SweepExperiment::HiddenChain {
                n: *n,
                two_s: *two_s,
                theta_left: *theta_left,
                theta_right: *theta_right,
            };
            let (levels, comps) = epsilon_convergence_sweep(exp, epsilons, &plan, &rng)?;
            let json = serde_json::json!({
                "kind": "epsilon", "n": n, "two_s": two_s,
                "theta_left": theta_left, "theta_right": theta_right, "epsilons": epsilons,
            });
            (Some(levels), comps, json)
        }
        SweepConfig::DtHalving { dt } => {
            let model = family_model(cfg, Family::Bep)?;
            let comps = bep_dt_halving(&model, &plan, *dt, &rng)?;
            (None, comps, serde_json::json!({ "kind": "dt_halving", "dt": dt }))
        }
    };
    let (pass, line) = comparison_summary("sweep", &comps);
    let report = ComparisonsReport {
        command: "sweep",
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        experiment,
        pass,
        comparisons: &comps,
        levels: levels.as_deref(),
    };
    write_report(cfg, &report)?;
    verdict(pass, line)
}

#[derive(Serialize)]
struct MixingReport<'a> {
    command: &'static str,
    seed: u64,
    stream_id: u64,
    law: &'a MixingLaw,
    n_samples: usize,
    pass: bool,
    comparisons: Vec<ComparisonReport>,
}

pub fn sample_mixing(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let law = cfg.mixing.as_ref().ok_or_else(|| CliError::Config("missing `mixing` block".into()))?;
    let law = MixingLaw::new(law.n_sites, law.two_s, law.theta_left, law.theta_right)
        .map_err(|e| CliError::Config(format!("mixing: {e}")))?;
    let n = cfg.budgets.n_samples;
    if n < 2 * MIXING_BATCHES {
        return Err(CliError::Config(format!("budgets.n_samples must be at least {}", 2 * MIXING_BATCHES)));
    }
    let out = cfg.out_dir()?;
    let base = rng(cfg);
    let blocks = n.div_ceil(MIXING_BLOCK);
    let samples: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut r = base.derive(b as u64);
            let len = MIXING_BLOCK.min(n - b * MIXING_BLOCK);
            (0..len).map(move |_| law.sample(&mut r)).collect::<Vec<_>>()
        })
        .collect();

    let mut csv = (1..=law.n_sites).map(|i| format!("theta_{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for s in &samples {
        csv.push_str(&s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    let samples_path = out.join(cfg.output.samples.as_deref().unwrap_or("samples.csv"));
    write_file(&samples_path, &csv)?;

    let meta = RunMetadata { epsilon: None, dt: None, burn_in: 0.0, thinning: 0.0, chains: blocks };
    let mut comparisons = Vec::new();
    for i in 0..law.n_sites {
        let mut xi = vec![0; law.n_sites];
        xi[i] = 1;
        let target = mixing_oracle_moments(&law, &xi, Some(&base.derive(u64::MAX)))?;
        let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let est = batch_means(&col, MIXING_BATCHES);
        comparisons.push(ComparisonReport::z_test(
            format!("mean_theta_{}", i + 1),
            &est,
            target.value,
            target.se.unwrap_or(0.0),
            meta,
        ));
    }
    let (pass, line) = comparison_summary("sample-mixing", &comparisons);
    let report = MixingReport {
        command: "sample-mixing",
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        law: &law,
        n_samples: n,
        pass,
        comparisons,
    };
    write_report(cfg, &report)?;
    verdict(pass, format!("{line}; {n} samples -> {}", samples_path.display()))
}
