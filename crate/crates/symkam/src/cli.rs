//! Experiment orchestration behind the command-line surface: KAM runs,
//! sieves and order studies, with deterministic reports.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{scheme_from, ExperimentConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::kamcore::{TraceEntry, Verdict};
use crate::models::builtin_models;
use crate::report::OutputSink;
use crate::sieve::{self, SieveParams};
use crate::verify::{
    self, admissible_at, conjugacy_residual, flow_vs_algorithm, order_fit, torus_embedding,
    OrderFit, Scheme, VerifySetup,
};

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder
        .build()
        .map_err(|e| Error::Param(format!("cannot build worker pool: {e}")))
}

fn setup_from(cfg: &ExperimentConfig) -> Result<VerifySetup> {
    let mut setup = VerifySetup::new(cfg.schedule_params()?, cfg.run_config());
    setup.sieve_k_max = cfg.sieve.k_max;
    setup.oversample = cfg.kam.oversample;
    Ok(setup)
}

// ---------------------------------------------------------------------------
// run-kam
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunKamReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a ExperimentConfig,
    runs: Vec<RunEntry>,
}

#[derive(Serialize)]
struct RunEntry {
    xi: Vec<f64>,
    t: f64,
    skipped: bool,
    skip_reason: Option<String>,
    verdict: Option<Verdict>,
    converged: bool,
    omega: Option<Vec<f64>>,
    t_omega: Option<Vec<f64>>,
    conjugacy_residual: Option<f64>,
    embedding_fit_residual: Option<f64>,
    trace: Vec<TraceEntry>,
}

fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from(
        "v,e_norm,defect,f_ratio,gamma_v,k_v,r_v,n_modes,divisor_margin,k_fit,psi_d1,psi_d2,\
         extraction_recon,extraction_reproduction,discarded_quadratic,omega_shift,c4_used\n",
    );
    for e in trace {
        let s = e.step.as_ref();
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{},{:e},{},{},{},{},{},{},{},{},{},{}\n",
            e.v,
            e.e_norm,
            e.defect,
            e.f_ratio,
            e.gamma_v,
            e.k_v,
            e.r_v,
            e.n_modes,
            s.map(|x| format!("{:e}", x.divisor_margin)).unwrap_or_default(),
            s.map(|x| x.k_fit.to_string()).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.psi_d1)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.psi_d2)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.extraction_recon)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.extraction_reproduction)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.discarded_quadratic)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.omega_shift)).unwrap_or_default(),
            s.map(|x| format!("{:e}", x.c4_used)).unwrap_or_default(),
        ));
    }
    out
}

/// Execute the configured KAM runs; exit 0 means every requested run
/// converged or was explicitly skipped as non-admissible.
pub fn run_kam_cmd(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let model = cfg.resolve_model()?;
    let setup = setup_from(cfg)?;
    let scheme = scheme_from(&cfg.kam.scheme)?;
    let mut sink = OutputSink::new(out_dir)?;
    let jobs: Vec<(Vec<f64>, f64)> = cfg
        .kam
        .actions
        .iter()
        .flat_map(|xi| cfg.kam.step_sizes.iter().map(move |&t| (xi.clone(), t)))
        .collect();
    let worker_pool = pool(cfg.output.workers)?;
    let entries: Vec<Result<RunEntry>> = worker_pool.install(|| {
        jobs.par_iter()
            .map(|(xi, t)| run_one(cfg, &model, scheme, xi, *t, &setup))
            .collect()
    });
    let mut runs = Vec::with_capacity(entries.len());
    let mut all_ok = true;
    for entry in entries {
        let entry = entry?;
        if entry.skipped {
            sink.log(format!(
                "run xi={:?} t={}: skipped ({})",
                entry.xi,
                entry.t,
                entry.skip_reason.as_deref().unwrap_or("")
            ));
        } else {
            sink.log(format!(
                "run xi={:?} t={}: converged={} residual={:?}",
                entry.xi, entry.t, entry.converged, entry.conjugacy_residual
            ));
            all_ok &= entry.converged;
        }
        runs.push(entry);
    }
    for (i, entry) in runs.iter().enumerate() {
        sink.table(&format!("trace_{i}.csv"), &trace_csv(&entry.trace))?;
    }
    let report = RunKamReport {
        schema_version: SCHEMA_VERSION,
        command: "run-kam",
        config: cfg,
        runs,
    };
    sink.finish(&report)?;
    if all_ok {
        Ok(())
    } else {
        Err(Error::NonConvergence {
            context: "one or more KAM runs did not converge",
            residual: f64::NAN,
            iterations: 0,
        })
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    model: &crate::models::HamiltonianModel,
    scheme: Scheme,
    xi: &[f64],
    t: f64,
    setup: &VerifySetup,
) -> Result<RunEntry> {
    if cfg.kam.skip_inadmissible && !admissible_at(model, xi, t, setup)? {
        return Ok(RunEntry {
            xi: xi.to_vec(),
            t,
            skipped: true,
            skip_reason: Some("action not admissible at the configured gamma".into()),
            verdict: None,
            converged: false,
            omega: None,
            t_omega: None,
            conjugacy_residual: None,
            embedding_fit_residual: None,
            trace: Vec::new(),
        });
    }
    let result = verify::run_scheme_raw(model, scheme, xi, cfg.kam.epsilon, t, setup)?;
    let converged = result.converged();
    let (residual, fit_residual) = if converged {
        let emb = torus_embedding(&result, setup.embed_k, setup.oversample, "run-kam")?;
        let reference = verify::reference_map(model, scheme, cfg.kam.epsilon, t, setup.flow_tol);
        let r = conjugacy_residual(&emb, reference.as_ref(), &result.t_omega(), cfg.kam.residual_grid)?;
        (Some(r), Some(emb.fit_residual))
    } else {
        (None, None)
    };
    Ok(RunEntry {
        xi: xi.to_vec(),
        t,
        skipped: false,
        skip_reason: None,
        converged,
        omega: Some(result.omega.clone()),
        t_omega: Some(result.t_omega()),
        conjugacy_residual: residual,
        embedding_fit_residual: fit_residual,
        verdict: Some(result.verdict),
        trace: result.trace,
    })
}

// ---------------------------------------------------------------------------
// sieve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SieveMode {
    Actions,
    Steps,
    GammaSweep,
}

#[derive(Serialize)]
struct SieveSummary<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    actions: Option<sieve::SieveResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<sieve::StepSieve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_sweep: Option<sieve::GammaSweep>,
}

pub fn sieve_cmd(cfg: &ExperimentConfig, mode: SieveMode, out_dir: &Path) -> Result<()> {
    let model = cfg.resolve_model()?;
    let mut sink = OutputSink::new(out_dir)?;
    let worker_pool = pool(cfg.output.workers)?;
    let mut report = SieveSummary {
        schema_version: SCHEMA_VERSION,
        command: "sieve",
        config: cfg,
        actions: None,
        steps: None,
        gamma_sweep: None,
    };
    match mode {
        SieveMode::Actions => {
            let grid = cfg.sieve_grid(&model)?;
            let params = SieveParams {
                gamma: cfg.sieve.gamma,
                tau: cfg.sieve.tau,
                t: cfg.sieve.t,
                k_max: cfg.sieve.k_max,
            };
            let result = worker_pool
                .install(|| sieve::sieve_actions(|xi| model.frequency_raw(xi), grid, params));
            sink.log(format!(
                "actions: {} of {} cells excluded (fraction {:.3e})",
                result.excluded_count,
                result.grid.total(),
                result.excluded_fraction
            ));
            sink.table("cells.csv", &result.to_csv())?;
            report.actions = Some(result);
        }
        SieveMode::Steps => {
            let omega = model.frequency(&cfg.sieve.xi)?;
            let result = worker_pool.install(|| {
                sieve::sieve_steps(
                    &omega,
                    cfg.sieve.delta,
                    cfg.sieve.resolution,
                    cfg.sieve.gamma,
                    cfg.sieve.tau,
                    cfg.sieve.k_max,
                )
            })?;
            let mut density = String::from("delta_prime,density\n");
            for row in &result.densities {
                density.push_str(&format!("{},{}\n", row.delta_prime, row.density));
            }
            sink.table("step_density.csv", &density)?;
            let mut steps = String::from("t,admissible\n");
            for (i, adm) in result.admissible.iter().enumerate() {
                let t = result.delta * (i as f64 + 0.5) / result.resolution as f64;
                steps.push_str(&format!("{},{}\n", t, *adm as u8));
            }
            sink.table("steps.csv", &steps)?;
            sink.log(format!(
                "steps: admissible fraction {:.4} over (0, {}]",
                result.admissible_fraction, result.delta
            ));
            report.steps = Some(result);
        }
        SieveMode::GammaSweep => {
            if cfg.sieve.gammas.is_empty() {
                return Err(Error::Param("sieve.gammas must be set for a gamma sweep".into()));
            }
            let grid = cfg.sieve_grid(&model)?;
            let sweep = worker_pool.install(|| {
                sieve::measure_vs_gamma(
                    |xi| model.frequency_raw(xi),
                    &grid,
                    cfg.sieve.t,
                    cfg.sieve.tau,
                    cfg.sieve.k_max,
                    &cfg.sieve.gammas,
                )
            })?;
            let mut csv = String::from("gamma,excluded_fraction,excluded_measure\n");
            for row in &sweep.rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    row.gamma, row.excluded_fraction, row.excluded_measure
                ));
            }
            sink.table("gamma_sweep.csv", &csv)?;
            match &sweep.fit {
                Some(fit) => sink.log(format!(
                    "gamma sweep: slope {:.4}, intercept {:.4}, r2 {:.4}",
                    fit.slope, fit.intercept, fit.r2
                )),
                None => sink.log("gamma sweep: too few nonzero rows for a fit"),
            }
            report.gamma_sweep = Some(sweep);
        }
    }
    sink.finish(&report)
}

// ---------------------------------------------------------------------------
// order studies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMode {
    Euler,
    Midpoint,
    StepPairs,
}

#[derive(Serialize)]
struct OrderReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<DriftReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_pairs: Option<StepPairsReport>,
}

#[derive(Serialize)]
struct DriftReport {
    scheme: Scheme,
    records: Vec<verify::DriftRecord>,
    freq_fit: OrderFit,
    hausdorff_fit: OrderFit,
}

#[derive(Serialize)]
struct StepPairsReport {
    scheme: Scheme,
    records: Vec<verify::StepPairRecord>,
    /// max/min of the per-pair shape constants; the theorem predicts a
    /// stable constant.
    shape_ratio: f64,
}

pub fn order_cmd(cfg: &ExperimentConfig, mode: OrderMode, out_dir: &Path) -> Result<()> {
    let model = cfg.resolve_model()?;
    let setup = setup_from(cfg)?;
    let mut sink = OutputSink::new(out_dir)?;
    let worker_pool = pool(cfg.output.workers)?;
    let mut report = OrderReport {
        schema_version: SCHEMA_VERSION,
        command: "order",
        config: cfg,
        drift: None,
        step_pairs: None,
    };
    match mode {
        OrderMode::Euler | OrderMode::Midpoint => {
            let scheme = if mode == OrderMode::Euler {
                Scheme::SymplecticEuler
            } else {
                Scheme::Midpoint
            };
            if cfg.order.t_list.len() < 3 {
                return Err(Error::Param(
                    "order.t_list needs at least 3 step sizes for a fit".into(),
                ));
            }
            let records = worker_pool.install(|| {
                flow_vs_algorithm(
                    &model,
                    &cfg.order.xi,
                    cfg.order.epsilon,
                    &cfg.order.t_list,
                    scheme,
                    &setup,
                )
            })?;
            let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
            let freq: Vec<f64> = records.iter().map(|r| r.freq_gap).collect();
            let haus: Vec<f64> = records.iter().map(|r| r.hausdorff).collect();
            let freq_fit = order_fit(&ts, &freq)?;
            let hausdorff_fit = order_fit(&ts, &haus)?;
            sink.log(format!(
                "{scheme:?}: freq slope {:.3}, hausdorff slope {:.3}",
                freq_fit.slope, hausdorff_fit.slope
            ));
            let mut csv = String::from("t,freq_gap,hausdorff\n");
            for r in &records {
                csv.push_str(&format!("{},{},{}\n", r.t, r.freq_gap, r.hausdorff));
            }
            sink.table("drift.csv", &csv)?;
            report.drift = Some(DriftReport { scheme, records, freq_fit, hausdorff_fit });
        }
        OrderMode::StepPairs => {
            if cfg.order.pairs.is_empty() {
                return Err(Error::Param("order.pairs must not be empty".into()));
            }
            let scheme = scheme_from(&cfg.order.scheme)?;
            let records: Vec<verify::StepPairRecord> = worker_pool.install(|| {
                cfg.order
                    .pairs
                    .par_iter()
                    .map(|&(t1, t2)| {
                        verify::compare_step_sizes(
                            &model,
                            &cfg.order.xi,
                            cfg.order.epsilon,
                            t1,
                            t2,
                            scheme,
                            &setup,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let constants: Vec<f64> = records.iter().map(|r| r.shape_constant.abs()).collect();
            let lo = constants.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = constants.iter().cloned().fold(0.0f64, f64::max);
            let shape_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            sink.log(format!("step pairs: shape constants {constants:?}, ratio {shape_ratio:.3}"));
            let mut csv = String::from("t1,t2,phi_gap,omega_gap,shape_constant\n");
            for r in &records {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.t1, r.t2, r.phi_gap, r.omega_gap, r.shape_constant
                ));
            }
            sink.table("step_pairs.csv", &csv)?;
            report.step_pairs = Some(StepPairsReport { scheme, records, shape_ratio });
        }
    }
    sink.finish(&report)
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

pub fn models_list() -> String {
    let mut out = String::new();
    for m in builtin_models() {
        out.push_str(&format!(
            "{:14} dim {}  V {:?}  (r, s) = {:?}  M1 = {}\n",
            m.name, m.dim, m.action_domain, m.radii, m.m1_bound
        ));
    }
    out
}
