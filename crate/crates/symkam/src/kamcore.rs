//! The constructive conjugation loop.
//!
//! Each step straightens the current generating-function map G_v one order:
//! truncate the perturbation, update the frequency from its mean gradient,
//! solve the homological equation for a generator psi_v, conjugate
//! numerically by the induced near-identity map Psi_v, and re-extract the
//! next perturbation on a shrunken annulus. The composition
//! Phi = Psi_0 o Psi_1 o ... restricted to I = xi* is the invariant-torus
//! embedding; the reference frequencies converge to the drifted rotation
//! number of the scheme.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::FourierTaylor;
use crate::gfmaps::{extract_generating, ExtractOptions, GFMap, SymplecticMap};
use crate::homological::{check_diophantine, solve_psi, DiophantineParams};

const ZETA2: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

/// Which non-degeneracy regime drives the gamma levels and the domain
/// contraction constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NondegMode {
    Ruessmann,
    Kolmogorov,
}

/// Base parameters of the iteration schedule.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleParams {
    pub s0: f64,
    pub r0: f64,
    pub k0: usize,
    pub gamma: f64,
    pub tau: f64,
    pub nbar: u32,
    pub mode: NondegMode,
}

/// Iteration-indexed parameters. Strip widths, cutoffs and gamma levels are
/// closed-form; the annulus contraction constant c4 is provisional (the
/// 0.05 floor) until the measured F_3 fixes it.
#[derive(Debug, Clone, Serialize)]
pub struct KamSchedule {
    pub params: ScheduleParams,
    pub n: usize,
    pub c4_floor: f64,
    /// c4 actually in use from step 3 on; equals the floor before that.
    pub c4: f64,
    /// Raw (unfloored) value computed from the measured F_3.
    pub c4_raw: Option<f64>,
    pub c4_floored: bool,
}

impl KamSchedule {
    pub fn new(params: ScheduleParams, n: usize) -> Result<Self> {
        if params.s0 <= 0.0 || params.r0 <= 0.0 {
            return Err(Error::Param(format!(
                "strip and annulus bases must be positive (s0={}, r0={})",
                params.s0, params.r0
            )));
        }
        if params.k0 == 0 {
            return Err(Error::Param("mode cutoff base K0 must be at least 1".into()));
        }
        if !(params.gamma > 0.0 && params.gamma < 1.0) {
            return Err(Error::Param(format!("gamma must lie in (0, 1), got {}", params.gamma)));
        }
        let tau_min = match params.mode {
            NondegMode::Kolmogorov => (n + 2) as f64,
            NondegMode::Ruessmann => ((n + 2) * (params.nbar as usize + 1)) as f64,
        };
        if params.tau < tau_min {
            return Err(Error::Param(format!(
                "tau = {} below the admissible minimum {} for this mode",
                params.tau, tau_min
            )));
        }
        Ok(KamSchedule {
            params,
            n,
            c4_floor: 0.05,
            c4: 0.05,
            c4_raw: None,
            c4_floored: false,
        })
    }

    /// tau_v = (sum_{j<=v} j^-2) / (2 sum_{j>=1} j^-2); increasing to 1/2.
    pub fn tau_v(&self, v: usize) -> f64 {
        let partial: f64 = (1..=v).map(|j| 1.0 / (j as f64 * j as f64)).sum();
        partial / (2.0 * ZETA2)
    }

    /// s_v = (1 - tau_v) s0 / 4; decreasing with limit s0 / 8.
    pub fn s_v(&self, v: usize) -> f64 {
        0.25 * (1.0 - self.tau_v(v)) * self.params.s0
    }

    pub fn sigma_v(&self, v: usize) -> f64 {
        0.25 * (self.s_v(v) - self.s_v(v + 1))
    }

    /// K_{v+1} = 4 K_v.
    pub fn k_v(&self, v: usize) -> usize {
        let mut k = self.params.k0;
        for _ in 0..v {
            k = k.saturating_mul(4);
        }
        k
    }

    /// gamma^{nbar+1} / 2^{(nbar+1)v} in Ruessmann mode, gamma / 2^v in
    /// Kolmogorov mode.
    pub fn gamma_v(&self, v: usize) -> f64 {
        match self.params.mode {
            NondegMode::Ruessmann => {
                let e = self.params.nbar as f64 + 1.0;
                self.params.gamma.powf(e) / 2f64.powf(e * v as f64)
            }
            NondegMode::Kolmogorov => self.params.gamma / 2f64.powi(v as i32),
        }
    }

    /// r_{v+1} = c4 r_v with the provisional constant through step 3 and the
    /// measured one afterwards.
    pub fn r_v(&self, v: usize) -> f64 {
        let early = v.min(3);
        let late = v.saturating_sub(3);
        self.params.r0 * self.c4_floor.powi(early as i32) * self.c4.powi(late as i32)
    }

    pub fn rho_v(&self, v: usize) -> f64 {
        0.25 * (self.r_v(v) - self.r_v(v + 1))
    }

    /// F_v = E_v / (gamma_v sigma_v^{tau+n+1} rho_v).
    pub fn f_ratio(&self, v: usize, e_v: f64) -> f64 {
        let denom = self.gamma_v(v)
            * self.sigma_v(v).powf(self.params.tau + self.n as f64 + 1.0)
            * self.rho_v(v);
        if denom > 0.0 {
            e_v / denom
        } else {
            f64::INFINITY
        }
    }

    /// Fix c4 = (1/3) 2^{-(tau + nbar + n + 4)} F_3^{1/3} (Ruessmann; the
    /// Kolmogorov variant drops nbar). The formula only produces a valid
    /// contraction rate when the measured F_3 is small; outside (floor, 1/2)
    /// the floor value is used and the raw value recorded.
    pub fn fix_c4(&mut self, f3: f64) {
        let expo = match self.params.mode {
            NondegMode::Ruessmann => self.params.tau + self.params.nbar as f64 + self.n as f64 + 4.0,
            NondegMode::Kolmogorov => self.params.tau + self.n as f64 + 4.0,
        };
        let raw = (1.0 / 3.0) * 2f64.powf(-expo) * f3.abs().powf(1.0 / 3.0);
        self.c4_raw = Some(raw);
        self.c4_floored = !(self.c4_floor..=0.5).contains(&raw);
        self.c4 = if self.c4_floored { self.c4_floor } else { raw };
    }

    /// Schedule-predicted F_v = F_3^{v/3} for v >= 3.
    pub fn predicted_f(&self, f3: f64, v: usize) -> f64 {
        f3.powf(v as f64 / 3.0)
    }
}

/// Per-state diagnostics; `step` describes the transition that produced the
/// state (absent for v = 0).
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub v: usize,
    pub omega: Vec<f64>,
    /// E_v: max sup-norm estimate of the W gradients on the annulus, /t.
    pub e_norm: f64,
    /// Torus defect: the zero-mean gradient data at I = xi*, /t.
    pub defect: f64,
    pub f_ratio: f64,
    pub gamma_v: f64,
    pub k_v: usize,
    pub r_v: f64,
    pub n_modes: usize,
    pub step: Option<StepRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    /// Worst divisor/floor ratio of the pre-step scan.
    pub divisor_margin: f64,
    pub scan_k_max: usize,
    pub k_fit: usize,
    pub psi_d1: f64,
    pub psi_d2: f64,
    pub extraction_recon: f64,
    pub extraction_reproduction: f64,
    pub discarded_quadratic: f64,
    pub omega_shift: f64,
    pub c4_used: f64,
}

/// Runtime knobs of the loop.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Convergence target on the torus defect.
    pub target_defect: f64,
    pub v_max: usize,
    /// Action degree of W tables (the per-step truncation to degree 1 is
    /// fixed); degree 2 keeps the twist inside the map representation.
    pub fit_degree: usize,
    /// Cap on the extraction mode cutoff; the schedule K_v keeps growing but
    /// coefficients far below the pruning floor carry nothing.
    pub k_fit_cap: usize,
    pub oversample: usize,
    pub contraction_tol: f64,
    pub max_iter: usize,
    /// Cap on the brute-force Diophantine scan per step.
    pub check_cap: usize,
    pub consistency_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            target_defect: 1e-11,
            v_max: 12,
            fit_degree: 2,
            k_fit_cap: 512,
            oversample: 4,
            contraction_tol: 1e-15,
            max_iter: 100,
            check_cap: 2048,
            consistency_tol: 1e-6,
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Converged { v: usize },
    MaxIterations { v_max: usize },
    SmallDivisor { k: Vec<i32>, value: f64, floor: f64, v: usize },
    ScheduleBlowup { v: usize, e_next: f64, e_prev: f64 },
    NonConvergence { context: String, residual: f64, v: usize },
}

impl Verdict {
    pub fn converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }
}

/// Mutable state of one run.
pub struct KamState {
    pub v: usize,
    pub t: f64,
    pub xi_star: Vec<f64>,
    pub omega: Vec<f64>,
    pub map: GFMap,
    pub psi_maps: Vec<GFMap>,
    pub schedule: KamSchedule,
    pub trace: Vec<TraceEntry>,
}

fn map_norms(map: &GFMap, radius: f64) -> (f64, f64) {
    let n = map.dim();
    let t = map.step();
    let w = map.w();
    let mut e = 0.0f64;
    let mut defect = 0.0f64;
    for j in 0..n {
        let d1 = w.derivative_action(j);
        let d2 = w.derivative_angle(j);
        e = e.max(d1.sup_norm_estimate(radius, 0.0)).max(d2.sup_norm_estimate(radius, 0.0));
        defect = defect
            .max(d1.tilde_part().sup_norm_estimate(0.0, 0.0))
            .max(d2.sup_norm_estimate(0.0, 0.0));
    }
    (e / t, defect / t)
}

/// Mean action gradient [d1 W](xi*) of the k = 0 mode.
fn mean_gradient(w: &FourierTaylor) -> Vec<f64> {
    let n = w.n();
    let mean = w.mean_part();
    (0..n).map(|j| mean.derivative(j).coeffs()[0].re).collect()
}

/// Largest |k| whose value at xi* sits above the floor. Only the
/// constant coefficient counts: higher action coefficients carry
/// quotient-amplified fit noise and must not widen the next grid.
fn significant_support(w: &FourierTaylor, floor: f64) -> usize {
    w.modes()
        .filter(|(_, poly)| poly.coeffs()[0].norm() >= floor)
        .map(|(k, _)| crate::fourier::mode_order(k))
        .max()
        .unwrap_or(0)
}

/// Twist matrix T_{jl} = d^2 [W] / dI_j dI_l at xi*, from the mean
/// quadratic data.
fn twist_matrix(w: &FourierTaylor) -> Vec<Vec<f64>> {
    let n = w.n();
    let mean = w.mean_part();
    let mut t = vec![vec![0.0; n]; n];
    for j in 0..n {
        let dj = mean.derivative(j);
        for l in 0..n {
            t[j][l] = dj.derivative(l).coeffs()[0].re;
        }
    }
    t
}

/// Generator of the step-v transformation. The homological system is
/// triangular in the action degree: the zero-degree part psi_a kills the
/// action-row defect, and the linear part picks up a twist counterterm
/// T (d2 psi_a - d2 a) so the twist's reaction to the action displacement
/// of Psi does not re-enter the angle row at first order.
fn solve_generator(
    w_star: &FourierTaylor,
    twist: &[Vec<f64>],
    t_omega: &[f64],
    dio: &DiophantineParams,
) -> Result<FourierTaylor> {
    let n = w_star.n();
    let w_tilde = w_star.tilde_part();
    let a_part = w_tilde.truncate_action(0);
    let psi_a = solve_psi(&a_part, t_omega, dio)?;
    if w_star.degree() == 0 {
        return Ok(psi_a);
    }
    let b_part = w_tilde.add(&a_part.scale(-1.0));
    let mut forcing = b_part;
    for j in 0..n {
        for l in 0..n {
            if twist[j][l] == 0.0 {
                continue;
            }
            let reaction = psi_a
                .derivative_angle(l)
                .add(&a_part.derivative_angle(l).scale(-1.0))
                .scale(twist[j][l]);
            forcing = forcing.add(&reaction.mul_action(j));
        }
    }
    let psi_b = solve_psi(&forcing, t_omega, dio)?;
    Ok(psi_a.add(&psi_b))
}

impl KamState {
    pub fn new(map: GFMap, schedule: KamSchedule, cfg: &RunConfig) -> Self {
        // evaluation errors of the current map feed every later spectrum;
        // run its contractions at the loop tolerance, not the map default
        let map = map.with_tolerance(cfg.contraction_tol, cfg.max_iter);
        let t = map.step();
        let omega: Vec<f64> = map.t_omega_ref().iter().map(|w| w / t).collect();
        let xi_star = map.w().xi_star().to_vec();
        let (e, defect) = map_norms(&map, schedule.r_v(0));
        let trace = vec![TraceEntry {
            v: 0,
            omega: omega.clone(),
            e_norm: e,
            defect,
            f_ratio: schedule.f_ratio(0, e),
            gamma_v: schedule.gamma_v(0),
            k_v: schedule.k_v(0),
            r_v: schedule.r_v(0),
            n_modes: map.w().n_modes(),
            step: None,
        }];
        KamState {
            v: 0,
            t,
            xi_star,
            omega,
            map,
            psi_maps: Vec::new(),
            schedule,
            trace,
        }
    }

    pub fn current(&self) -> &TraceEntry {
        self.trace.last().expect("trace never empty")
    }
}

/// The conjugation Psi^{-1} o G o Psi evaluated pointwise. With Psi the
/// near-identity map generated by psi (a GFMap at zero reference rotation),
/// Psi^{-1} is its forward application and Psi its inverse.
struct Conjugated<'a> {
    inner: &'a GFMap,
    psi: &'a GFMap,
}

impl SymplecticMap for Conjugated<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn step(&self) -> f64 {
        self.inner.step()
    }

    fn order(&self) -> u32 {
        self.inner.order()
    }

    fn apply(&self, i: &[f64], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (p, q) = self.psi.apply_inverse(i, theta)?;
        let (ph, qh) = self.inner.apply_map(&p, &q)?;
        self.psi.apply_map(&ph, &qh)
    }
}

/// One iteration: truncate, update the frequency, solve for the generator,
/// conjugate and re-extract on the shrunken annulus.
pub fn kam_step(state: &mut KamState, cfg: &RunConfig) -> Result<()> {
    let v = state.v;
    let n = state.map.dim();
    let t = state.t;
    let gamma_v = state.schedule.gamma_v(v);
    let k_v = state.schedule.k_v(v);
    let e_prev = state.current().e_norm;

    // the measured F_3 fixes the contraction constant from here on
    if v == 3 {
        let f3 = state.current().f_ratio;
        state.schedule.fix_c4(f3);
    }
    let r_next = state.schedule.r_v(v + 1);

    // (pre) the current frequency must clear the Diophantine floor
    let dio = DiophantineParams::new(gamma_v, state.schedule.params.tau, k_v, t)?;
    let scan_k_max = k_v.min(cfg.check_cap);
    let check = check_diophantine(state.map.t_omega_ref(), &dio, scan_k_max);
    if !check.pass {
        let floor = dio.floor(&check.worst_k);
        return Err(Error::SmallDivisorViolation {
            k: check.worst_k,
            value: check.worst_margin * floor,
            floor,
        });
    }

    // (a) truncate to mode cutoff K_v and action degree 1
    let w_star = state.map.w().truncate_modes(k_v).truncate_action(1);

    // (b) frequency update from the mean gradient, with the step factored out
    let grad = mean_gradient(&w_star);
    let omega_next: Vec<f64> = state
        .omega
        .iter()
        .zip(grad.iter())
        .map(|(w, g)| w + g / t)
        .collect();
    let omega_shift = grad.iter().map(|g| (g / t).abs()).fold(0.0, f64::max);

    // (c) homological equations at the current reference rotation; the
    // degree-1 stage carries the twist counterterm
    let twist = twist_matrix(state.map.w());
    let psi = solve_generator(&w_star, &twist, state.map.t_omega_ref(), &dio)?;
    let (r_v, _) = (state.schedule.r_v(v), ());
    let mut psi_d1 = 0.0f64;
    let mut psi_d2 = 0.0f64;
    for j in 0..n {
        psi_d1 = psi_d1.max(psi.derivative_action(j).sup_norm_estimate(r_v, 0.0));
        psi_d2 = psi_d2.max(psi.derivative_angle(j).sup_norm_estimate(r_v, 0.0));
    }

    // (d) the near-identity transformation generated by psi
    let psi_map = GFMap::new(t, vec![0.0; n], psi, state.map.order())
        .with_tolerance(cfg.contraction_tol, cfg.max_iter);

    // (e) conjugate numerically and re-extract at the updated rotation
    let conjugated = Conjugated { inner: &state.map, psi: &psi_map };
    let support = significant_support(state.map.w(), 1e-12);
    let k_fit = state
        .schedule
        .k_v(v + 1)
        .min(cfg.k_fit_cap)
        .min((4 * support + 16).max(32));
    let opts = ExtractOptions {
        k_max: k_fit,
        degree: cfg.fit_degree,
        radius: r_next,
        oversample: cfg.oversample,
        consistency_tol: cfg.consistency_tol,
        contraction_tol: cfg.contraction_tol,
        max_iter: cfg.max_iter,
        strip: state.schedule.s_v(v + 1),
    };
    let t_omega_next: Vec<f64> = omega_next.iter().map(|w| w * t).collect();
    let ext = extract_generating(&conjugated, &t_omega_next, &state.xi_star, &opts)?;
    let next_map = GFMap::new(t, t_omega_next, ext.w, state.map.order())
        .with_tolerance(cfg.contraction_tol, cfg.max_iter);

    // (f) norms of the new perturbation on the shrunken annulus
    let (e_next, defect_next) = map_norms(&next_map, r_next);
    if e_next > e_prev && defect_next > cfg.target_defect {
        return Err(Error::ScheduleBlowup { v, e_next, e_prev });
    }

    state.v = v + 1;
    state.omega = omega_next;
    state.map = next_map;
    state.psi_maps.push(psi_map);
    state.trace.push(TraceEntry {
        v: v + 1,
        omega: state.omega.clone(),
        e_norm: e_next,
        defect: defect_next,
        f_ratio: state.schedule.f_ratio(v + 1, e_next),
        gamma_v: state.schedule.gamma_v(v + 1),
        k_v: state.schedule.k_v(v + 1),
        r_v: r_next,
        n_modes: state.map.w().n_modes(),
        step: Some(StepRecord {
            divisor_margin: check.worst_margin,
            scan_k_max,
            k_fit,
            psi_d1,
            psi_d2,
            extraction_recon: ext.recon_residual,
            extraction_reproduction: ext.reproduction_residual,
            discarded_quadratic: ext.discarded_quadratic,
            omega_shift,
            c4_used: state.schedule.c4,
        }),
    });
    Ok(())
}

/// Outcome of a run: the conjugating transformation (as its generator
/// sequence), the drifted frequency and the full trace.
pub struct ConjugacyResult {
    pub verdict: Verdict,
    pub omega: Vec<f64>,
    pub t: f64,
    pub xi_star: Vec<f64>,
    pub psi_maps: Vec<GFMap>,
    pub trace: Vec<TraceEntry>,
    pub final_map: GFMap,
}

impl ConjugacyResult {
    pub fn converged(&self) -> bool {
        self.verdict.converged()
    }

    pub fn generators(&self) -> Vec<&FourierTaylor> {
        self.psi_maps.iter().map(|g| g.w()).collect()
    }

    /// The torus embedding theta -> Phi(xi*, theta).
    pub fn phi(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        compose_transform(&self.psi_maps, &self.xi_star, theta)
    }

    /// Per-step rotation t omega.
    pub fn t_omega(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w * self.t).collect()
    }
}

/// Run the loop on a generating-form map until the torus defect drops below
/// target. Non-convergence is a verdict, not an error.
pub fn run_kam(g0: GFMap, schedule: KamSchedule, cfg: &RunConfig) -> ConjugacyResult {
    let mut state = KamState::new(g0, schedule, cfg);
    loop {
        let entry = state.current();
        if entry.defect < cfg.target_defect {
            // absorb the leftover mean gradient into the reported frequency
            let grad = mean_gradient(state.map.w());
            let omega: Vec<f64> = state
                .omega
                .iter()
                .zip(grad.iter())
                .map(|(w, g)| w + g / state.t)
                .collect();
            let v = state.v;
            return ConjugacyResult {
                verdict: Verdict::Converged { v },
                omega,
                t: state.t,
                xi_star: state.xi_star.clone(),
                psi_maps: state.psi_maps,
                trace: state.trace,
                final_map: state.map,
            };
        }
        if state.v >= cfg.v_max {
            return ConjugacyResult {
                verdict: Verdict::MaxIterations { v_max: cfg.v_max },
                omega: state.omega.clone(),
                t: state.t,
                xi_star: state.xi_star.clone(),
                psi_maps: state.psi_maps,
                trace: state.trace,
                final_map: state.map,
            };
        }
        if let Err(err) = kam_step(&mut state, cfg) {
            let v = state.v;
            let verdict = match err {
                Error::SmallDivisorViolation { k, value, floor } => {
                    Verdict::SmallDivisor { k, value, floor, v }
                }
                Error::ScheduleBlowup { v, e_next, e_prev } => {
                    Verdict::ScheduleBlowup { v, e_next, e_prev }
                }
                Error::NonConvergence { context, residual, .. } => Verdict::NonConvergence {
                    context: context.to_string(),
                    residual,
                    v,
                },
                other => Verdict::NonConvergence {
                    context: other.to_string(),
                    residual: f64::NAN,
                    v,
                },
            };
            return ConjugacyResult {
                verdict,
                omega: state.omega.clone(),
                t: state.t,
                xi_star: state.xi_star.clone(),
                psi_maps: state.psi_maps,
                trace: state.trace,
                final_map: state.map,
            };
        }
    }
}

/// Run the loop on an opaque symplectic map: extract the initial generating
/// form first.
pub fn run_kam_on_map(
    map: &dyn SymplecticMap,
    omega0: &[f64],
    xi_star: &[f64],
    schedule: KamSchedule,
    cfg: &RunConfig,
) -> Result<ConjugacyResult> {
    let t = map.step();
    let t_omega: Vec<f64> = omega0.iter().map(|w| w * t).collect();
    let mut opts = ExtractOptions::new(
        schedule.k_v(0).max(16).min(cfg.k_fit_cap),
        cfg.fit_degree,
        schedule.r_v(0),
    );
    opts.oversample = cfg.oversample;
    opts.consistency_tol = cfg.consistency_tol;
    opts.contraction_tol = cfg.contraction_tol;
    opts.max_iter = cfg.max_iter;
    opts.strip = schedule.s_v(0);
    let ext = extract_generating(map, &t_omega, xi_star, &opts)?;
    let g0 = GFMap::new(t, t_omega, ext.w, map.order())
        .with_tolerance(cfg.contraction_tol, cfg.max_iter);
    Ok(run_kam(g0, schedule, cfg))
}

/// Apply Psi_{v-1}, ..., Psi_0 in the composition order Phi = Psi_0 o ... o
/// Psi_{v-1}.
pub fn compose_transform(
    psi_maps: &[GFMap],
    action: &[f64],
    angle: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p = action.to_vec();
    let mut q = angle.to_vec();
    for g in psi_maps.iter().rev() {
        let (np, nq) = g.apply_inverse(&p, &q)?;
        p = np;
        q = nq;
    }
    Ok((p, q))
}
