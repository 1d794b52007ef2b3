//! Independent verification: conjugacy residuals, orbit shadowing,
//! step-size comparisons, flow-vs-algorithm torus distances and order fits.
//!
//! Everything here consumes finished runs through their observable surface
//! (torus embeddings, drifted frequencies) and re-tests them against the
//! original maps, so a defect anywhere upstream shows up as a residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{fit_from_grid, mode_order, angle_grid_points, FourierTaylor, GridSamples};
use crate::gfmaps::{from_symplectic_euler, MidpointMap, ReferenceFlow, SymplecticMap};
use crate::kamcore::{run_kam, run_kam_on_map, ConjugacyResult, KamSchedule, RunConfig, ScheduleParams, Verdict};
use crate::models::HamiltonianModel;

const TAU: f64 = std::f64::consts::TAU;

/// Distance on the circle.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn phase_metric(pa: &[f64], qa: &[f64], pb: &[f64], qb: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in pa.iter().zip(pb.iter()) {
        s += (x - y) * (x - y);
    }
    for (x, y) in qa.iter().zip(qb.iter()) {
        let d = circle_dist(*x, *y);
        s += d * d;
    }
    s.sqrt()
}

/// Band-limited embedding of an invariant torus: theta -> (p(theta),
/// theta + u(theta)) with periodic corrections u.
#[derive(Debug, Clone, Serialize)]
pub struct TorusEmbedding {
    pub n: usize,
    pub t_omega: Vec<f64>,
    pub p_fit: Vec<FourierTaylor>,
    pub q_corr_fit: Vec<FourierTaylor>,
    pub fit_residual: f64,
    pub provenance: String,
}

impl TorusEmbedding {
    pub fn eval(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let anchor: Vec<f64> = self.p_fit[0].xi_star().to_vec();
        let p = self.p_fit.iter().map(|f| f.eval(&anchor, theta)).collect();
        let q = (0..self.n)
            .map(|j| theta[j] + self.q_corr_fit[j].eval(&anchor, theta))
            .collect();
        (p, q)
    }

    /// Shift the action components; test hook for corruption sensitivity.
    pub fn perturb_action(&self, delta: f64) -> TorusEmbedding {
        let mut out = self.clone();
        let n = self.n;
        let anchor = self.p_fit[0].xi_star().to_vec();
        let bump = FourierTaylor::from_modes(
            n,
            &anchor,
            0,
            0,
            self.p_fit[0].radii(),
            vec![(
                [0i32; crate::fourier::MAX_DIM],
                crate::fourier::ActionPoly::constant(n, num_complex::Complex64::new(delta, 0.0)),
            )],
        );
        out.p_fit = out.p_fit.iter().map(|f| f.add(&bump)).collect();
        out.provenance = format!("{} (action perturbed by {delta})", self.provenance);
        out
    }
}

/// Fit the torus embedding of a converged run on an oversampled angle grid.
pub fn torus_embedding(
    result: &ConjugacyResult,
    k_emb: usize,
    oversample: usize,
    provenance: &str,
) -> Result<TorusEmbedding> {
    let n = result.xi_star.len();
    let size = oversample.max(1) * (2 * k_emb + 1);
    let sizes = vec![size; n];
    let points = angle_grid_points(&sizes);
    let mut p_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(points.len()); n];
    let mut q_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(points.len()); n];
    for th in &points {
        let (p, q) = result.phi(th)?;
        for j in 0..n {
            p_rows[j].push(p[j]);
            q_rows[j].push(q[j] - th[j]);
        }
    }
    let radii = (0.0, 1.0);
    let action_nodes: Vec<Vec<f64>> = result.xi_star.iter().map(|&x| vec![x]).collect();
    let fit_component = |values: &Vec<f64>| -> Result<FourierTaylor> {
        let samples = GridSamples {
            n,
            angle_sizes: sizes.clone(),
            action_nodes: action_nodes.clone(),
            values: vec![values.clone()],
        };
        fit_from_grid(&samples, &result.xi_star, k_emb, 0, radii)
    };
    let p_fit: Vec<FourierTaylor> = p_rows.iter().map(&fit_component).collect::<Result<_>>()?;
    let q_corr_fit: Vec<FourierTaylor> = q_rows.iter().map(&fit_component).collect::<Result<_>>()?;
    // measure the fit residual back on the sample grid
    let mut fit_residual = 0.0f64;
    for j in 0..n {
        let vals = p_fit[j].eval_angle_grid(&result.xi_star, &sizes);
        for (a, b) in vals.iter().zip(p_rows[j].iter()) {
            fit_residual = fit_residual.max((a - b).abs());
        }
        let vals = q_corr_fit[j].eval_angle_grid(&result.xi_star, &sizes);
        for (a, b) in vals.iter().zip(q_rows[j].iter()) {
            fit_residual = fit_residual.max((a - b).abs());
        }
    }
    Ok(TorusEmbedding {
        n,
        t_omega: result.t_omega(),
        p_fit,
        q_corr_fit,
        fit_residual,
        provenance: provenance.to_string(),
    })
}

/// sup over a theta grid of |map(Phi(theta)) - Phi(theta + t w)| with the
/// circle metric on angle components.
pub fn conjugacy_residual(
    embedding: &TorusEmbedding,
    map: &dyn SymplecticMap,
    t_omega: &[f64],
    grid: usize,
) -> Result<f64> {
    let n = embedding.n;
    let sizes = vec![grid; n];
    let points = angle_grid_points(&sizes);
    let mut worst = 0.0f64;
    for th in &points {
        let (p, q) = embedding.eval(th);
        let (ph, qh) = map.apply(&p, &q)?;
        let shifted: Vec<f64> = th.iter().zip(t_omega.iter()).map(|(a, w)| a + w).collect();
        let (pt, qt) = embedding.eval(&shifted);
        worst = worst.max(phase_metric(&ph, &qh, &pt, &qt));
    }
    Ok(worst)
}

/// Iterate the map from Phi(theta0) and compare against the rotated
/// embedding Phi(theta0 + m t w).
#[derive(Debug, Clone, Serialize)]
pub struct ShadowingRecord {
    pub steps: usize,
    pub max_deviation: f64,
    /// (step, deviation) checkpoints.
    pub profile: Vec<(usize, f64)>,
}

pub fn orbit_shadowing(
    map: &dyn SymplecticMap,
    embedding: &TorusEmbedding,
    theta0: &[f64],
    n_steps: usize,
) -> Result<ShadowingRecord> {
    let (mut p, mut q) = embedding.eval(theta0);
    let stride = (n_steps / 256).max(1);
    let mut profile = Vec::new();
    let mut max_dev = 0.0f64;
    for m in 1..=n_steps {
        let (np, nq) = map.apply(&p, &q)?;
        p = np;
        // wrap at orbit level; unreduced angles would grow and bleed
        // rounding into deviations measured at 1e-12
        q = nq.iter().map(|x| x.rem_euclid(TAU)).collect();
        let shifted: Vec<f64> = theta0
            .iter()
            .zip(embedding.t_omega.iter())
            .map(|(a, w)| (a + m as f64 * w).rem_euclid(TAU))
            .collect();
        let (pt, qt) = embedding.eval(&shifted);
        let dev = phase_metric(&p, &q, &pt, &qt);
        max_dev = max_dev.max(dev);
        if m % stride == 0 || m == n_steps {
            profile.push((m, dev));
        }
    }
    Ok(ShadowingRecord {
        steps: n_steps,
        max_deviation: max_dev,
        profile,
    })
}

/// Newton inversion of the frequency map: xi with w(xi) = w*.
pub fn frequency_to_action(
    model: &HamiltonianModel,
    omega_target: &[f64],
    seed: &[f64],
) -> Result<Vec<f64>> {
    let n = model.dim;
    let mut xi = seed.to_vec();
    for _ in 0..100 {
        let w = model.frequency_raw(&xi);
        let err = w
            .iter()
            .zip(omega_target.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if err < 1e-12 {
            return Ok(xi);
        }
        let h = model.hessian(&xi);
        let mat = nalgebra::DMatrix::from_row_slice(n, n, &h);
        let rhs = nalgebra::DVector::from_iterator(
            n,
            w.iter().zip(omega_target.iter()).map(|(a, b)| a - b),
        );
        let delta = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular frequency Jacobian in Newton".into()))?;
        for j in 0..n {
            xi[j] -= delta[j];
        }
    }
    Err(Error::NonConvergence {
        context: "frequency inversion Newton",
        residual: f64::NAN,
        iterations: 100,
    })
}

/// Symmetric Hausdorff distance between two discretized tori.
pub fn hausdorff_distance(a: &TorusEmbedding, b: &TorusEmbedding, grid: usize) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::Param("embeddings must share a dimension".into()));
    }
    let sizes = vec![grid; a.n];
    let points = angle_grid_points(&sizes);
    let pa: Vec<(Vec<f64>, Vec<f64>)> = points.iter().map(|th| a.eval(th)).collect();
    let pb: Vec<(Vec<f64>, Vec<f64>)> = points.iter().map(|th| b.eval(th)).collect();
    let one_sided = |from: &[(Vec<f64>, Vec<f64>)], to: &[(Vec<f64>, Vec<f64>)]| -> f64 {
        from.iter()
            .map(|(p, q)| {
                to.iter()
                    .map(|(p2, q2)| phase_metric(p, q, p2, q2))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    Ok(one_sided(&pa, &pb).max(one_sided(&pb, &pa)))
}

/// Log-log least squares y = C x^slope.
#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn order_fit(xs: &[f64], ys: &[f64]) -> Result<OrderFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Fit(format!(
            "order fit needs at least 3 matched points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys.iter()).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Fit("order fit requires positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Fit("degenerate abscissae in order fit".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let mean_y = sy / m;
    let ss_tot: f64 = ly.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let pred = slope * x + intercept;
            (y - pred) * (y - pred)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(OrderFit { slope, intercept, r2 })
}

// ---------------------------------------------------------------------------
// run orchestration used by comparisons
// ---------------------------------------------------------------------------

/// Which one-step scheme to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SymplecticEuler,
    Midpoint,
    /// The reference flow, extracted like any other symplectic map.
    Flow,
}

impl Scheme {
    pub fn order(&self) -> u32 {
        match self {
            Scheme::SymplecticEuler => 1,
            Scheme::Midpoint => 2,
            Scheme::Flow => 8,
        }
    }
}

/// Shared knobs for verification runs.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySetup {
    pub schedule: ScheduleParams,
    pub run: RunConfig,
    pub flow_tol: f64,
    pub embed_k: usize,
    pub oversample: usize,
    pub sieve_k_max: usize,
    pub freq_match_tol: f64,
    pub hausdorff_grid: usize,
}

impl VerifySetup {
    pub fn new(schedule: ScheduleParams, run: RunConfig) -> Self {
        VerifySetup {
            schedule,
            run,
            flow_tol: 1e-13,
            embed_k: 32,
            oversample: 4,
            sieve_k_max: 100,
            freq_match_tol: 1e-9,
            hausdorff_grid: 512,
        }
    }
}

fn require_converged(result: ConjugacyResult) -> Result<ConjugacyResult> {
    match &result.verdict {
        Verdict::Converged { .. } => Ok(result),
        Verdict::SmallDivisor { k, value, floor, .. } => Err(Error::SkippedNotAdmissible(format!(
            "frequency hit the divisor floor at k={k:?} ({value:.3e} < {floor:.3e})"
        ))),
        other => Err(Error::NonConvergence {
            context: "kam run in comparison",
            residual: result.trace.last().map(|e| e.defect).unwrap_or(f64::NAN),
            iterations: matches!(other, Verdict::MaxIterations { .. }) as usize,
        }),
    }
}

/// Run the conjugation loop for one scheme at one (xi, eps, t); the
/// verdict is whatever the loop produced.
pub fn run_scheme_raw(
    model: &HamiltonianModel,
    scheme: Scheme,
    xi: &[f64],
    eps: f64,
    t: f64,
    setup: &VerifySetup,
) -> Result<ConjugacyResult> {
    let schedule = KamSchedule::new(setup.schedule.clone(), model.dim)?;
    let omega0 = model.frequency(xi)?;
    match scheme {
        Scheme::SymplecticEuler => {
            let k0 = setup.schedule.k0.max(model_wave_order(model)).max(4);
            let g = from_symplectic_euler(
                model,
                xi,
                eps,
                t,
                k0,
                setup.run.fit_degree,
                schedule.r_v(0),
                setup.oversample,
            )?;
            Ok(run_kam(g, schedule, &setup.run))
        }
        Scheme::Midpoint => {
            let map = MidpointMap::new(model.clone(), eps, t);
            run_kam_on_map(&map, &omega0, xi, schedule, &setup.run)
        }
        Scheme::Flow => {
            let map = ReferenceFlow::new(model.clone(), eps, t, setup.flow_tol);
            run_kam_on_map(&map, &omega0, xi, schedule, &setup.run)
        }
    }
}

/// As [`run_scheme_raw`] but treating non-convergence as an error.
pub fn run_scheme(
    model: &HamiltonianModel,
    scheme: Scheme,
    xi: &[f64],
    eps: f64,
    t: f64,
    setup: &VerifySetup,
) -> Result<ConjugacyResult> {
    require_converged(run_scheme_raw(model, scheme, xi, eps, t, setup)?)
}

/// The directly coded one-step map a scheme's run is verified against.
pub fn reference_map(
    model: &HamiltonianModel,
    scheme: Scheme,
    eps: f64,
    t: f64,
    flow_tol: f64,
) -> Box<dyn SymplecticMap> {
    match scheme {
        Scheme::SymplecticEuler => Box::new(crate::gfmaps::SymplecticEulerDirect::new(
            model.clone(),
            eps,
            t,
        )),
        Scheme::Midpoint => Box::new(MidpointMap::new(model.clone(), eps, t)),
        Scheme::Flow => Box::new(ReferenceFlow::new(model.clone(), eps, t, flow_tol)),
    }
}

fn model_wave_order(model: &HamiltonianModel) -> usize {
    model
        .h1
        .iter()
        .map(|t| t.wave.iter().map(|k| k.unsigned_abs() as usize).sum())
        .max()
        .unwrap_or(1)
}

/// Is the model frequency at xi admissible for the step t at the setup's
/// user-facing gamma?
pub fn admissible_at(model: &HamiltonianModel, xi: &[f64], t: f64, setup: &VerifySetup) -> Result<bool> {
    let omega = model.frequency(xi)?;
    let t_omega: Vec<f64> = omega.iter().map(|w| w * t).collect();
    let params = crate::sieve::SieveParams {
        gamma: setup.schedule.gamma,
        tau: setup.schedule.tau,
        t,
        k_max: setup.sieve_k_max,
    };
    Ok(crate::sieve::point_admissible(&t_omega, &params))
}

/// Theorem-shape comparison of one scheme at two step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct StepPairRecord {
    pub t1: f64,
    pub t2: f64,
    /// sup_theta |Phi_{t1} - Phi_{t2}|.
    pub phi_gap: f64,
    /// |omega_{eps,t1} - omega_{eps,t2}| (step factored out).
    pub omega_gap: f64,
    /// omega_gap / (t1^alpha - t2^alpha).
    pub shape_constant: f64,
}

pub fn compare_step_sizes(
    model: &HamiltonianModel,
    xi: &[f64],
    eps: f64,
    t1: f64,
    t2: f64,
    scheme: Scheme,
    setup: &VerifySetup,
) -> Result<StepPairRecord> {
    for t in [t1, t2] {
        if !admissible_at(model, xi, t, setup)? {
            return Err(Error::SkippedNotAdmissible(format!(
                "xi = {xi:?} is not admissible at t = {t}"
            )));
        }
    }
    let r1 = run_scheme(model, scheme, xi, eps, t1, setup)?;
    let r2 = run_scheme(model, scheme, xi, eps, t2, setup)?;
    let e1 = torus_embedding(&r1, setup.embed_k, setup.oversample, "step-pair t1")?;
    let e2 = torus_embedding(&r2, setup.embed_k, setup.oversample, "step-pair t2")?;
    let sizes = vec![setup.hausdorff_grid; model.dim];
    let points = angle_grid_points(&sizes);
    let mut phi_gap = 0.0f64;
    for th in &points {
        let (p1, q1) = e1.eval(th);
        let (p2, q2) = e2.eval(th);
        phi_gap = phi_gap.max(phase_metric(&p1, &q1, &p2, &q2));
    }
    let omega_gap = r1
        .omega
        .iter()
        .zip(r2.omega.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let alpha = scheme.order() as i32;
    let denom = t1.powi(alpha) - t2.powi(alpha);
    Ok(StepPairRecord {
        t1,
        t2,
        phi_gap,
        omega_gap,
        shape_constant: if denom != 0.0 { omega_gap / denom } else { 0.0 },
    })
}

/// Per-step drift of a scheme against the reference flow at the same step.
#[derive(Debug, Clone, Serialize)]
pub struct DriftRecord {
    pub t: f64,
    /// |omega_{eps,t} - omega_flow| at the same reference action.
    pub freq_gap: f64,
    /// Hausdorff distance between the scheme torus at the frequency-matched
    /// action and the flow torus.
    pub hausdorff: f64,
    /// Frequency-matched action found for the scheme.
    pub matched_action: Vec<f64>,
}

/// Drift study: for each t, compare the scheme's invariant torus and
/// drifted frequency against the reference flow, matching tori by
/// frequency (not by action).
pub fn flow_vs_algorithm(
    model: &HamiltonianModel,
    xi: &[f64],
    eps: f64,
    ts: &[f64],
    scheme: Scheme,
    setup: &VerifySetup,
) -> Result<Vec<DriftRecord>> {
    let n = model.dim;
    let mut records = Vec::with_capacity(ts.len());
    for &t in ts {
        if !admissible_at(model, xi, t, setup)? {
            return Err(Error::SkippedNotAdmissible(format!(
                "xi = {xi:?} is not admissible at t = {t}"
            )));
        }
        let flow_run = run_scheme(model, Scheme::Flow, xi, eps, t, setup)?;
        let flow_emb = torus_embedding(&flow_run, setup.embed_k, setup.oversample, "flow")?;
        let int_run = run_scheme(model, scheme, xi, eps, t, setup)?;
        let freq_gap = int_run
            .omega
            .iter()
            .zip(flow_run.omega.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        // frequency matching: Newton on full runs with the model Hessian as
        // the (first-order exact) Jacobian of the drifted frequency map
        let target = flow_run.omega.clone();
        let mut xi_m = xi.to_vec();
        let mut matched_run = int_run;
        for _ in 0..8 {
            let err: Vec<f64> = matched_run
                .omega
                .iter()
                .zip(target.iter())
                .map(|(a, b)| a - b)
                .collect();
            let worst = err.iter().map(|e| e.abs()).fold(0.0f64, f64::max);
            if worst < setup.freq_match_tol {
                break;
            }
            let h = model.hessian(&xi_m);
            let mat = nalgebra::DMatrix::from_row_slice(n, n, &h);
            let rhs = nalgebra::DVector::from_vec(err);
            let delta = mat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Degenerate("singular Hessian in frequency matching".into()))?;
            for j in 0..n {
                xi_m[j] -= delta[j];
            }
            matched_run = run_scheme(model, scheme, &xi_m, eps, t, setup)?;
        }
        let int_emb = torus_embedding(&matched_run, setup.embed_k, setup.oversample, "scheme")?;
        let hausdorff = hausdorff_distance(&int_emb, &flow_emb, setup.hausdorff_grid)?;
        records.push(DriftRecord {
            t,
            freq_gap,
            hausdorff,
            matched_action: xi_m,
        });
    }
    Ok(records)
}

/// Largest |k| carried by an embedding's spectra; a cheap band-limit probe.
pub fn embedding_support(e: &TorusEmbedding) -> usize {
    e.p_fit
        .iter()
        .chain(e.q_corr_fit.iter())
        .flat_map(|f| f.modes().map(|(k, _)| mode_order(k)))
        .max()
        .unwrap_or(0)
}
