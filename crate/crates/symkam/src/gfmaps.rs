//! Symplectic one-step maps in implicit generating-function form
//!
//! ```text
//! p_hat = p - d2 W(p_hat, q),    q_hat = q + t w_ref + d1 W(p_hat, q),
//! ```
//!
//! their evaluation by contraction mapping, construction from concrete
//! integrators, numeric extraction of generating data from arbitrary
//! symplectic maps, and a high-accuracy reference flow.
//!
//! Maps work on the universal cover: angles are never reduced mod 2 pi here;
//! orbit-level consumers wrap when they need to.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::{
    self, angle_grid_points, collocation_nodes, exponents, fit_from_grid, mode_order, tensor_points,
    ActionPoly, FourierTaylor, GridSamples, Mode, MAX_DIM,
};
use crate::models::HamiltonianModel;

/// A one-step map of the annulus with a declared step size and order.
pub trait SymplecticMap: Sync {
    fn dim(&self) -> usize;
    fn step(&self) -> f64;
    /// Scheme order alpha: local defect against the flow is O(t^{alpha+1}).
    fn order(&self) -> u32;
    fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Residual below which a stalled fixed-point iteration counts as
/// converged at the machine plateau.
const PLATEAU_OK: f64 = 1e-12;

/// Drive x -> step(x) to its fixed point. Runs past the requested
/// tolerance down to the machine plateau so the leftover error is
/// rounding-random rather than a structured tolerance floor (structured
/// floors alias into broadband spectral noise during extraction).
pub(crate) fn fixed_point<F>(
    x0: Vec<f64>,
    mut step: F,
    tol: f64,
    max_iter: usize,
    context: &'static str,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0;
    let mut best = f64::INFINITY;
    let mut stagnant = 0usize;
    for it in 0..max_iter {
        let next = step(&x)?;
        let residual = next
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = next;
        if residual < tol {
            return Ok(x);
        }
        if residual >= 0.9 * best {
            stagnant += 1;
            if stagnant >= 3 {
                if best < PLATEAU_OK {
                    return Ok(x);
                }
                return Err(Error::NonConvergence {
                    context,
                    residual,
                    iterations: it + 1,
                });
            }
        } else {
            stagnant = 0;
        }
        best = best.min(residual);
    }
    if best < PLATEAU_OK {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            context,
            residual: best,
            iterations: max_iter,
        })
    }
}

/// Implicit symplectic map defined by a generating perturbation W around a
/// reference rotation t w_ref.
#[derive(Debug, Clone)]
pub struct GFMap {
    n: usize,
    t: f64,
    t_omega_ref: Vec<f64>,
    w: FourierTaylor,
    alpha: u32,
    /// d1[j] = dW/dp_j, d2[j] = dW/dq_j, cached at construction.
    d1: Vec<FourierTaylor>,
    d2: Vec<FourierTaylor>,
    /// Norm-estimate Lipschitz bound for the p_hat contraction.
    lipschitz: f64,
    pub contraction_tol: f64,
    pub max_iter: usize,
}

impl GFMap {
    pub fn new(t: f64, t_omega_ref: Vec<f64>, w: FourierTaylor, alpha: u32) -> Self {
        let n = w.n();
        assert_eq!(t_omega_ref.len(), n);
        let d1: Vec<FourierTaylor> = (0..n).map(|j| w.derivative_action(j)).collect();
        let d2: Vec<FourierTaylor> = (0..n).map(|j| w.derivative_angle(j)).collect();
        let (r, _) = w.radii();
        let mut lip = 0.0f64;
        for d in &d2 {
            for j in 0..n {
                lip = lip.max(d.derivative_action(j).sup_norm_estimate(r, 0.0));
            }
        }
        GFMap {
            n,
            t,
            t_omega_ref,
            w,
            alpha,
            d1,
            d2,
            lipschitz: (n as f64) * lip,
            contraction_tol: 1e-12,
            max_iter: 100,
        }
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Self {
        self.contraction_tol = tol;
        self.max_iter = max_iter;
        self
    }

    pub fn w(&self) -> &FourierTaylor {
        &self.w
    }

    pub fn t_omega_ref(&self) -> &[f64] {
        &self.t_omega_ref
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    /// Norm-estimate bound on the contraction constant of the p_hat solve.
    pub fn contraction_estimate(&self) -> f64 {
        self.lipschitz
    }

    fn eval_d1(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        self.d1.iter().map(|d| d.eval(p, q)).collect()
    }

    fn eval_d2(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        self.d2.iter().map(|d| d.eval(p, q)).collect()
    }

    /// Solve p_hat = p - d2 W(p_hat, q) by fixed-point contraction.
    pub fn solve_phat(&self, p: &[f64], q: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        fixed_point(
            p.to_vec(),
            |phat| {
                let g = self.eval_d2(phat, q);
                Ok((0..self.n).map(|j| p[j] - g[j]).collect())
            },
            tol,
            max_iter,
            "generating-function action solve",
        )
    }

    /// One forward step (p, q) -> (p_hat, q_hat), angles unreduced.
    pub fn apply_map(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let phat = self.solve_phat(p, q, self.contraction_tol, self.max_iter)?;
        let g1 = self.eval_d1(&phat, q);
        let qhat = (0..self.n)
            .map(|j| q[j] + self.t_omega_ref[j] + g1[j])
            .collect();
        Ok((phat, qhat))
    }

    /// Exact inverse step (p_hat, q_hat) -> (p, q): a contraction in q
    /// followed by an explicit action update.
    pub fn apply_inverse(&self, phat: &[f64], qhat: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let q0: Vec<f64> = (0..self.n).map(|j| qhat[j] - self.t_omega_ref[j]).collect();
        let q = fixed_point(
            q0,
            |q| {
                let g1 = self.eval_d1(phat, q);
                Ok((0..self.n)
                    .map(|j| qhat[j] - self.t_omega_ref[j] - g1[j])
                    .collect())
            },
            self.contraction_tol,
            self.max_iter,
            "generating-function angle inversion",
        )?;
        let g2 = self.eval_d2(phat, &q);
        let p = (0..self.n).map(|j| phat[j] + g2[j]).collect();
        Ok((p, q))
    }
}

impl SymplecticMap for GFMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn step(&self) -> f64 {
        self.t
    }

    fn order(&self) -> u32 {
        self.alpha
    }

    fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.apply_map(p, q)
    }
}

// ---------------------------------------------------------------------------
// concrete integrators
// ---------------------------------------------------------------------------

/// Plainly coded symplectic Euler step; the direct route the fitted
/// generating form is checked against.
#[derive(Clone)]
pub struct SymplecticEulerDirect {
    pub model: HamiltonianModel,
    pub eps: f64,
    pub t: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SymplecticEulerDirect {
    pub fn new(model: HamiltonianModel, eps: f64, t: f64) -> Self {
        SymplecticEulerDirect { model, eps, t, tol: 1e-15, max_iter: 100 }
    }
}

impl SymplecticMap for SymplecticEulerDirect {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn step(&self) -> f64 {
        self.t
    }

    fn order(&self) -> u32 {
        1
    }

    fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.model.dim;
        let phat = fixed_point(
            p.to_vec(),
            |phat| {
                let gq = self.model.h1_grad_q(phat, q);
                Ok((0..n).map(|j| p[j] - self.t * self.eps * gq[j]).collect())
            },
            self.tol,
            self.max_iter,
            "symplectic Euler implicit action",
        )?;
        let w = self.model.frequency_raw(&phat);
        let gp = self.model.h1_grad_p(&phat, q);
        let qhat = (0..n)
            .map(|j| q[j] + self.t * (w[j] + self.eps * gp[j]))
            .collect();
        Ok((phat, qhat))
    }
}

/// Implicit midpoint rule, order 2.
#[derive(Clone)]
pub struct MidpointMap {
    pub model: HamiltonianModel,
    pub eps: f64,
    pub t: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl MidpointMap {
    pub fn new(model: HamiltonianModel, eps: f64, t: f64) -> Self {
        MidpointMap { model, eps, t, tol: 1e-15, max_iter: 200 }
    }

    fn rhs(&self, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.model.dim;
        let w = self.model.frequency_raw(p);
        let (_, gp, gq) = self.model.perturbation_raw(p, q);
        let dp: Vec<f64> = (0..n).map(|j| -self.eps * gq[j]).collect();
        let dq: Vec<f64> = (0..n).map(|j| w[j] + self.eps * gp[j]).collect();
        (dp, dq)
    }
}

impl SymplecticMap for MidpointMap {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn step(&self) -> f64 {
        self.t
    }

    fn order(&self) -> u32 {
        2
    }

    fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.model.dim;
        let (dp0, dq0) = self.rhs(p, q);
        let mut z0 = Vec::with_capacity(2 * n);
        z0.extend((0..n).map(|j| p[j] + self.t * dp0[j]));
        z0.extend((0..n).map(|j| q[j] + self.t * dq0[j]));
        let z = fixed_point(
            z0,
            |z| {
                let pm: Vec<f64> = (0..n).map(|j| 0.5 * (p[j] + z[j])).collect();
                let qm: Vec<f64> = (0..n).map(|j| 0.5 * (q[j] + z[n + j])).collect();
                let (dp, dq) = self.rhs(&pm, &qm);
                let mut next = Vec::with_capacity(2 * n);
                next.extend((0..n).map(|j| p[j] + self.t * dp[j]));
                next.extend((0..n).map(|j| q[j] + self.t * dq[j]));
                Ok(next)
            },
            self.tol,
            self.max_iter,
            "implicit midpoint stage solve",
        )?;
        let (ph, qh) = z.split_at(n);
        Ok((ph.to_vec(), qh.to_vec()))
    }
}

/// Time-t flow of the Hamiltonian vector field, integrated by adaptive
/// step-doubled RK4 with local extrapolation. Serves as ground truth.
#[derive(Clone)]
pub struct ReferenceFlow {
    pub model: HamiltonianModel,
    pub eps: f64,
    pub t_total: f64,
    pub tol: f64,
}

impl ReferenceFlow {
    pub fn new(model: HamiltonianModel, eps: f64, t_total: f64, tol: f64) -> Self {
        ReferenceFlow { model, eps, t_total, tol: tol.max(1e-14) }
    }

    fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let n = self.model.dim;
        let (p, q) = y.split_at(n);
        let w = self.model.frequency_raw(p);
        let (_, gp, gq) = self.model.perturbation_raw(p, q);
        let mut dy = vec![0.0; 2 * n];
        for j in 0..n {
            dy[j] = -self.eps * gq[j];
            dy[n + j] = w[j] + self.eps * gp[j];
        }
        dy
    }

    fn rk4(&self, y: &[f64], h: f64) -> Vec<f64> {
        let k1 = self.rhs(y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = self.rhs(&y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = self.rhs(&y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = self.rhs(&y4);
        y.iter()
            .enumerate()
            .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }
}

impl SymplecticMap for ReferenceFlow {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn step(&self) -> f64 {
        self.t_total
    }

    fn order(&self) -> u32 {
        // effectively exact at the working tolerance
        8
    }

    fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.model.dim;
        let mut y: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
        let mut remaining = self.t_total;
        let mut h = self.t_total / 8.0;
        let mut steps = 0usize;
        while remaining > 0.0 {
            if h > remaining {
                h = remaining;
            }
            let full = self.rk4(&y, h);
            let half = self.rk4(&self.rk4(&y, 0.5 * h), 0.5 * h);
            let err = full
                .iter()
                .zip(half.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / 15.0;
            let local_tol = self.tol * (h / self.t_total).max(1e-6);
            if err <= local_tol {
                // fifth-order local extrapolation
                y = half
                    .iter()
                    .zip(full.iter())
                    .map(|(b, a)| b + (b - a) / 15.0)
                    .collect();
                remaining -= h;
            }
            let factor = if err > 0.0 {
                0.9 * (local_tol / err).powf(0.2)
            } else {
                5.0
            };
            h *= factor.clamp(0.2, 5.0);
            if h < 1e-12 * self.t_total {
                return Err(Error::NonConvergence {
                    context: "reference flow step-size control",
                    residual: err,
                    iterations: steps,
                });
            }
            steps += 1;
            if steps > 1_000_000 {
                return Err(Error::NonConvergence {
                    context: "reference flow step budget",
                    residual: err,
                    iterations: steps,
                });
            }
        }
        let (pp, qq) = y.split_at(n);
        Ok((pp.to_vec(), qq.to_vec()))
    }
}

// ---------------------------------------------------------------------------
// construction and extraction of generating data
// ---------------------------------------------------------------------------

/// Build the generating form of symplectic Euler around the reference
/// action xi: W(p_hat, q) = t [eps h1 + h0(p_hat) - h0(xi) - w(xi).(p_hat - xi)],
/// fitted as a Fourier-Taylor table. The twist part of h0 is folded into W.
pub fn from_symplectic_euler(
    model: &HamiltonianModel,
    xi: &[f64],
    eps: f64,
    t: f64,
    k_max: usize,
    degree: usize,
    radius: f64,
    oversample: usize,
) -> Result<GFMap> {
    if !model.contains(xi) {
        return Err(Error::Domain(format!(
            "reference action {:?} outside domain of {}",
            xi, model.name
        )));
    }
    if t <= 0.0 || eps < 0.0 {
        return Err(Error::Param(format!("need t > 0 and eps >= 0, got t={t}, eps={eps}")));
    }
    let n = model.dim;
    let omega = model.frequency_raw(xi);
    let h0_ref = model.h0_value(xi);
    let f = |p: &[f64], q: &[f64]| -> f64 {
        let mut v = eps * model.h1_value(p, q) + model.h0_value(p) - h0_ref;
        for j in 0..n {
            v -= omega[j] * (p[j] - xi[j]);
        }
        t * v
    };
    let w = fourier::fit_function(f, xi, k_max, degree, radius, oversample, (radius, model.radii.1))?;
    let t_omega: Vec<f64> = omega.iter().map(|w| w * t).collect();
    Ok(GFMap::new(t, t_omega, w, 1))
}

/// Options for [`extract_generating`].
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub k_max: usize,
    /// Action degree of the recovered W; 1 or 2.
    pub degree: usize,
    /// Annulus radius around xi* for the collocation nodes.
    pub radius: f64,
    /// Angle-grid oversampling over Nyquist.
    pub oversample: usize,
    /// Cross-component reconstruction residual above this is an error.
    pub consistency_tol: f64,
    pub contraction_tol: f64,
    pub max_iter: usize,
    /// Declared angular analyticity strip, bookkeeping only.
    pub strip: f64,
}

impl ExtractOptions {
    pub fn new(k_max: usize, degree: usize, radius: f64) -> Self {
        ExtractOptions {
            k_max,
            degree,
            radius,
            oversample: 4,
            consistency_tol: 1e-6,
            contraction_tol: 1e-15,
            max_iter: 100,
            strip: 1.0,
        }
    }
}

/// Result of a generating-data extraction.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub w: FourierTaylor,
    /// Cross-component consistency of the gradient reconstruction.
    pub recon_residual: f64,
    /// Sup distance between the induced map and the input map on probe points.
    pub reproduction_residual: f64,
    /// Size of the quadratic mean data a degree-1 table cannot hold.
    pub discarded_quadratic: f64,
}

/// Recover W from an opaque symplectic map: d2 W(p_hat, q) = p - p_hat and
/// d1 W(p_hat, q) = q_hat - q - t w_ref on a fit grid, then integrate the
/// gradients mode by mode.
pub fn extract_generating(
    map: &dyn SymplecticMap,
    t_omega_ref: &[f64],
    xi_star: &[f64],
    opts: &ExtractOptions,
) -> Result<Extraction> {
    let n = map.dim();
    assert!(n >= 1 && n <= MAX_DIM);
    assert!(opts.degree == 1 || opts.degree == 2, "extraction supports degree 1 or 2");

    let angle_size = opts.oversample.max(1) * (2 * opts.k_max + 1);
    let angle_sizes = vec![angle_size; n];
    let nodes = collocation_nodes(opts.degree, opts.radius);
    let action_nodes: Vec<Vec<f64>> = (0..n)
        .map(|j| nodes.iter().map(|&c| xi_star[j] + c).collect())
        .collect();
    let action_points = tensor_points(&action_nodes);
    let angle_points = angle_grid_points(&angle_sizes);

    // For each (target action, angle) knot: invert the action component of
    // the map, then read off both gradients of W.
    let mut grad_q: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); action_points.len()]; n];
    let mut grad_p: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); action_points.len()]; n];
    for (a, target) in action_points.iter().enumerate() {
        let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> = angle_points
            .par_iter()
            .map(|theta| -> Result<(Vec<f64>, Vec<f64>)> {
                let input = fixed_point(
                    target.clone(),
                    |i| {
                        let image = map.apply(i, theta)?;
                        Ok((0..n).map(|j| i[j] + target[j] - image.0[j]).collect())
                    },
                    opts.contraction_tol,
                    opts.max_iter,
                    "extraction action inversion",
                )?;
                let image = map.apply(&input, theta)?;
                let a_row: Vec<f64> = (0..n).map(|j| input[j] - target[j]).collect();
                let b_row: Vec<f64> = (0..n)
                    .map(|j| image.1[j] - theta[j] - t_omega_ref[j])
                    .collect();
                Ok((a_row, b_row))
            })
            .collect();
        let rows = rows?;
        for j in 0..n {
            grad_q[j][a] = rows.iter().map(|(ar, _)| ar[j]).collect();
            grad_p[j][a] = rows.iter().map(|(_, br)| br[j]).collect();
        }
    }

    let radii = (opts.radius, opts.strip);
    let fit_component = |values: &Vec<Vec<f64>>, degree: usize| -> Result<FourierTaylor> {
        let samples = GridSamples {
            n,
            angle_sizes: angle_sizes.clone(),
            action_nodes: action_nodes.clone(),
            values: values.clone(),
        };
        fit_from_grid(&samples, xi_star, opts.k_max, degree, radii)
    };
    let a_fit: Vec<FourierTaylor> = (0..n)
        .map(|j| fit_component(&grad_q[j], opts.degree))
        .collect::<Result<_>>()?;
    let b_fit: Vec<FourierTaylor> = (0..n)
        .map(|j| fit_component(&grad_p[j], 1))
        .collect::<Result<_>>()?;

    // k != 0 modes of W from the angle gradient; the largest |k_j| picks
    // the divisor i k_j. Consistency checks compare constant (at xi*)
    // coefficients only: higher action coefficients are quotients by the
    // collocation radius and carry amplified rounding noise.
    let mut entries: Vec<(Mode, ActionPoly)> = Vec::new();
    let mut recon_residual = 0.0f64;
    let mut keys: Vec<Mode> = Vec::new();
    for fa in &a_fit {
        for (k, _) in fa.modes() {
            if mode_order(k) > 0 && !keys.contains(k) {
                keys.push(*k);
            }
        }
    }
    for k in keys {
        let js: Vec<usize> = (0..n).filter(|&j| k[j] != 0).collect();
        let j_star = *js
            .iter()
            .max_by_key(|&&j| k[j].unsigned_abs())
            .expect("nonzero mode has a nonzero component");
        let poly = match a_fit[j_star].mode(&k) {
            Some(p) => p.scale(Complex64::new(0.0, -1.0 / k[j_star] as f64)),
            None => continue,
        };
        // cross-component agreement for multi-axis modes
        for &j in &js {
            if j == j_star {
                continue;
            }
            if let Some(other) = a_fit[j].mode(&k) {
                let alt = other.scale(Complex64::new(0.0, -1.0 / k[j] as f64));
                recon_residual = recon_residual.max((poly.coeffs()[0] - alt.coeffs()[0]).norm());
            }
        }
        // the fitted action gradient must match the derivative of W_k at xi*
        for j in 0..n {
            let pred = poly.derivative(j);
            let got = b_fit[j]
                .mode(&k)
                .map(|p| p.coeffs()[0])
                .unwrap_or(Complex64::ZERO);
            recon_residual = recon_residual.max((pred.coeffs()[0] - got).norm());
        }
        entries.push((k, poly));
    }

    // Mean part from the k = 0 mode of the action gradient. The mean of the
    // angle gradient must vanish at xi*; its size goes into the residual.
    for fa in &a_fit {
        recon_residual = recon_residual.max(fa.mean_part().coeffs()[0].norm());
    }
    let zero_mode = [0i32; MAX_DIM];
    let exps1 = exponents(n, 1);
    let mut mean_coeffs = vec![Complex64::ZERO; exponents(n, opts.degree).len()];
    let exps_d = exponents(n, opts.degree);
    let mut grad_const = vec![0.0; n];
    let mut grad_lin = vec![vec![0.0; n]; n];
    for j in 0..n {
        if let Some(p) = b_fit[j].mode(&zero_mode) {
            let c = p.coeffs();
            grad_const[j] = c[0].re;
            for (idx, e) in exps1.iter().enumerate().skip(1) {
                let axis = (0..n).find(|&x| e[x] == 1).expect("linear term");
                grad_lin[j][axis] = c[idx].re;
            }
        }
    }
    let mut discarded_quadratic = 0.0f64;
    if opts.degree < 2 {
        for j in 0..n {
            for l in 0..n {
                discarded_quadratic = discarded_quadratic.max(grad_lin[j][l].abs());
            }
        }
    }
    for (idx, e) in exps_d.iter().enumerate() {
        let total: u32 = e.iter().map(|x| *x as u32).sum();
        match total {
            0 => {}
            1 => {
                let axis = (0..n).find(|&x| e[x] == 1).unwrap();
                mean_coeffs[idx] = Complex64::new(grad_const[axis], 0.0);
            }
            2 if opts.degree >= 2 => {
                // symmetrized; the asymmetry is quotient-noise dominated and
                // stays out of the consistency residual
                let axes: Vec<usize> = (0..n).flat_map(|x| std::iter::repeat(x).take(e[x] as usize)).collect();
                let (a, b) = (axes[0], axes[1]);
                let sym = 0.5 * (grad_lin[a][b] + grad_lin[b][a]);
                mean_coeffs[idx] = if a == b {
                    Complex64::new(0.5 * sym, 0.0)
                } else {
                    Complex64::new(sym, 0.0)
                };
            }
            _ => {}
        }
    }
    let mean_poly = ActionPoly::from_coeffs(n, opts.degree, mean_coeffs);
    entries.push((zero_mode, mean_poly));

    let w = FourierTaylor::from_modes(n, xi_star, opts.k_max, opts.degree, radii, entries);
    if recon_residual > opts.consistency_tol {
        return Err(Error::InconsistentGradient {
            residual: recon_residual,
            tol: opts.consistency_tol,
        });
    }

    // Probe the induced map against the input on the reference circle
    // p = xi*. Off-center fidelity is limited by the action degree (the
    // discarded twist data is reported separately).
    let induced = GFMap::new(map.step(), t_omega_ref.to_vec(), w.clone(), map.order())
        .with_tolerance(opts.contraction_tol, opts.max_iter);
    let mut reproduction_residual = 0.0f64;
    let probe_angles = 16usize;
    for m in 0..probe_angles {
        let theta = vec![2.0 * std::f64::consts::PI * (m as f64 + 0.37) / probe_angles as f64; n];
        let got = induced.apply_map(xi_star, &theta)?;
        let want = map.apply(xi_star, &theta)?;
        for j in 0..n {
            reproduction_residual = reproduction_residual
                .max((got.0[j] - want.0[j]).abs())
                .max((got.1[j] - want.1[j]).abs());
        }
    }

    Ok(Extraction {
        w,
        recon_residual,
        reproduction_residual,
        discarded_quadratic,
    })
}

// ---------------------------------------------------------------------------
// symplecticity diagnostics
// ---------------------------------------------------------------------------

/// Max-norm defect of J^T J0 J = J0 with J the finite-difference Jacobian.
pub fn symplecticity_defect(map: &dyn SymplecticMap, p: &[f64], q: &[f64], h: f64) -> Result<f64> {
    let n = map.dim();
    let dim = 2 * n;
    let mut jac = vec![vec![0.0f64; dim]; dim];
    for col in 0..dim {
        let mut up = (p.to_vec(), q.to_vec());
        let mut dn = (p.to_vec(), q.to_vec());
        if col < n {
            up.0[col] += h;
            dn.0[col] -= h;
        } else {
            up.1[col - n] += h;
            dn.1[col - n] -= h;
        }
        let fu = map.apply(&up.0, &up.1)?;
        let fd = map.apply(&dn.0, &dn.1)?;
        for row in 0..dim {
            let (a, b) = if row < n {
                (fu.0[row], fd.0[row])
            } else {
                (fu.1[row - n], fd.1[row - n])
            };
            jac[row][col] = (a - b) / (2.0 * h);
        }
    }
    // J0 = [[0, -I], [I, 0]] acting on (p, q)
    let j0 = |row: usize, col: usize| -> f64 {
        if row < n && col == row + n {
            -1.0
        } else if row >= n && col == row - n {
            1.0
        } else {
            0.0
        }
    };
    let mut defect = 0.0f64;
    for a in 0..dim {
        for b in 0..dim {
            let mut sum = 0.0;
            for r in 0..dim {
                for s in 0..dim {
                    sum += jac[r][a] * j0(r, s) * jac[s][b];
                }
            }
            defect = defect.max((sum - j0(a, b)).abs());
        }
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;
    use num_complex::Complex64;
    use std::f64::consts::{PI, TAU};

    fn mode1(k: i32) -> Mode {
        let mut m = [0i32; MAX_DIM];
        m[0] = k;
        m
    }

    fn sin_w(c: f64, xi: f64) -> FourierTaylor {
        // c sin q = c/(2i) e^{iq} - c/(2i) e^{-iq}
        let half = Complex64::new(0.0, -0.5 * c);
        FourierTaylor::from_modes(
            1,
            &[xi],
            4,
            1,
            (0.2, 1.0),
            vec![
                (mode1(1), ActionPoly::constant(1, half)),
                (mode1(-1), ActionPoly::constant(1, half.conj())),
            ],
        )
    }

    #[test]
    fn zero_w_is_pure_rotation() {
        let w = FourierTaylor::zero(1, &[0.5], 4, 1, (0.2, 1.0));
        let map = GFMap::new(0.1, vec![0.05], w, 1);
        let (p, q) = map.apply_map(&[0.5], &[1.0]).unwrap();
        assert_eq!(p, vec![0.5]);
        assert!((q[0] - 1.05).abs() < 1e-15);
    }

    #[test]
    fn phat_with_angle_only_w() {
        // W = c sin q has no p_hat dependence; p_hat = p - c cos q
        let map = GFMap::new(0.1, vec![0.05], sin_w(0.01, 0.5), 1);
        let phat = map.solve_phat(&[0.5], &[0.0], 1e-12, 10).unwrap();
        assert!((phat[0] - 0.49).abs() < 1e-12, "phat = {}", phat[0]);
    }

    #[test]
    fn phat_linear_in_action_matches_closed_form() {
        // W = c (I - xi) sin q: p_hat = (p + c xi cos q) / (1 + c cos q)
        let c = 0.02;
        let xi = 0.5;
        let lin = Complex64::new(0.0, -0.5 * c);
        let w = FourierTaylor::from_modes(
            1,
            &[xi],
            4,
            1,
            (0.2, 1.0),
            vec![
                (mode1(1), ActionPoly::from_coeffs(1, 1, vec![Complex64::ZERO, lin])),
                (mode1(-1), ActionPoly::from_coeffs(1, 1, vec![Complex64::ZERO, lin.conj()])),
            ],
        );
        let map = GFMap::new(0.1, vec![0.05], w, 1);
        for &q in &[0.3, 1.7, 4.4] {
            let p = 0.53;
            let phat = map.solve_phat(&[p], &[q], 1e-14, 100).unwrap();
            let expect = (p + c * xi * q.cos()) / (1.0 + c * q.cos());
            assert!((phat[0] - expect).abs() < 1e-13, "q={q}: {} vs {expect}", phat[0]);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let model = builtin("twist1d").unwrap();
        let map = from_symplectic_euler(&model, &[0.618], 1e-3, 0.1, 8, 2, 0.05, 4).unwrap();
        let (p, q) = (0.62, 2.2);
        let (phat, qhat) = map.apply_map(&[p], &[q]).unwrap();
        let (p2, q2) = map.apply_inverse(&phat, &qhat).unwrap();
        assert!((p2[0] - p).abs() < 1e-12 && (q2[0] - q).abs() < 1e-12);
    }

    #[test]
    fn euler_gfmap_matches_direct_scheme_at_degree_two() {
        let model = builtin("twist1d").unwrap();
        // quadratic h0 is captured exactly at degree 2
        for &eps in &[0.0, 1e-3] {
            let gf = from_symplectic_euler(&model, &[0.618], eps, 0.1, 8, 2, 0.05, 4).unwrap()
                .with_tolerance(1e-15, 200);
            let direct = SymplecticEulerDirect::new(model.clone(), eps, 0.1);
            for i in 0..20 {
                let p = 0.58 + 0.004 * i as f64;
                let q = 0.31 * i as f64;
                let a = gf.apply_map(&[p], &[q]).unwrap();
                let b = direct.apply(&[p], &[q]).unwrap();
                assert!(
                    (a.0[0] - b.0[0]).abs() < 1e-12 && (a.1[0] - b.1[0]).abs() < 1e-12,
                    "eps={eps} i={i}: ({}, {}) vs ({}, {})",
                    a.0[0],
                    a.1[0],
                    b.0[0],
                    b.1[0]
                );
            }
        }
    }

    #[test]
    fn euler_w_has_expected_fourier_coefficient() {
        // eps cos q contributes t eps / 2 to the k = +-1 coefficients at p_hat = xi
        let model = builtin("twist1d").unwrap();
        let eps = 1e-3;
        let t = 0.1;
        let map = from_symplectic_euler(&model, &[0.618], eps, t, 8, 1, 0.05, 4).unwrap();
        let c = map.w().mode(&mode1(1)).unwrap().coeffs()[0];
        assert!((c - Complex64::new(t * eps / 2.0, 0.0)).norm() < 1e-12, "c = {c}");
        assert!((map.t_omega_ref()[0] - 0.0618).abs() < 1e-15);
    }

    #[test]
    fn integrable_orbit_stays_on_torus() {
        let model = builtin("twist1d").unwrap();
        let map = from_symplectic_euler(&model, &[0.618], 0.0, 0.1, 8, 2, 0.05, 4).unwrap();
        let mut p = vec![0.618];
        let mut q = vec![0.0];
        for _ in 0..1000 {
            let (np, nq) = map.apply_map(&p, &q).unwrap();
            p = np;
            q = nq;
        }
        assert!((p[0] - 0.618).abs() < 1e-12, "action drifted to {}", p[0]);
    }

    #[test]
    fn euler_action_band_over_long_orbit() {
        // oracle: directly coded symplectic Euler, independent of the fit
        let model = builtin("twist1d").unwrap();
        let eps = 1e-3;
        let gf = from_symplectic_euler(&model, &[0.618], eps, 0.1, 8, 2, 0.05, 4).unwrap();
        let direct = SymplecticEulerDirect::new(model.clone(), eps, 0.1);
        let mut state = (vec![0.618], vec![0.0]);
        let mut state_direct = state.clone();
        let mut band = 0.0f64;
        for _ in 0..10_000 {
            state = {
                let (p, q) = gf.apply_map(&state.0, &state.1).unwrap();
                (p, q)
            };
            state_direct = {
                let (p, q) = direct.apply(&state_direct.0, &state_direct.1).unwrap();
                (p, q)
            };
            band = band.max((state.0[0] - 0.618).abs());
        }
        assert!(band < 10.0 * eps, "action band {band} not O(eps)");
        assert!(
            (state.0[0] - state_direct.0[0]).abs() < 1e-6,
            "fit and direct orbits diverged: {} vs {}",
            state.0[0],
            state_direct.0[0]
        );
    }

    #[test]
    fn midpoint_conserves_action_when_integrable() {
        let model = builtin("twist1d").unwrap();
        let map = MidpointMap::new(model, 0.0, 0.1);
        let (p, q) = map.apply(&[0.7], &[1.3]).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-14);
        assert!((q[0] - (1.3 + 0.1 * 0.7)).abs() < 1e-13);
    }

    #[test]
    fn maps_are_symplectic() {
        let model = builtin("twist1d").unwrap();
        let eps = 1e-3;
        let gf = from_symplectic_euler(&model, &[0.618], eps, 0.1, 8, 2, 0.05, 4).unwrap()
            .with_tolerance(1e-14, 200);
        let mid = MidpointMap::new(model.clone(), eps, 0.1);
        let flow = ReferenceFlow::new(model.clone(), eps, 0.1, 1e-13);
        for i in 0..5 {
            let p = [0.6 + 0.01 * i as f64];
            let q = [0.9 * i as f64];
            assert!(symplecticity_defect(&gf, &p, &q, 1e-5).unwrap() < 1e-8);
            assert!(symplecticity_defect(&mid, &p, &q, 1e-5).unwrap() < 1e-8);
            assert!(symplecticity_defect(&flow, &p, &q, 1e-5).unwrap() < 1e-8);
        }
    }

    #[test]
    fn flow_is_exact_rotation_when_integrable() {
        let model = builtin("twist1d").unwrap();
        let flow = ReferenceFlow::new(model, 0.0, 0.37, 1e-13);
        let (p, q) = flow.apply(&[0.8], &[1.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-12);
        assert!((q[0] - (1.0 + 0.37 * 0.8)).abs() < 1e-12);
    }

    fn loglog_slope(ts: &[f64], errs: &[f64]) -> f64 {
        let n = ts.len() as f64;
        let sx: f64 = ts.iter().map(|t| t.ln()).sum();
        let sy: f64 = errs.iter().map(|e| e.ln()).sum();
        let sxx: f64 = ts.iter().map(|t| t.ln() * t.ln()).sum();
        let sxy: f64 = ts.iter().zip(errs).map(|(t, e)| t.ln() * e.ln()).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn euler_defect_against_flow_is_second_order() {
        let model = builtin("twist1d").unwrap();
        let eps = 1e-3;
        let ts = [0.2, 0.1, 0.05, 0.025];
        let mut errs = Vec::new();
        for &t in &ts {
            let euler = SymplecticEulerDirect::new(model.clone(), eps, t);
            let flow = ReferenceFlow::new(model.clone(), eps, t, 1e-13);
            let a = euler.apply(&[0.618], &[0.9]).unwrap();
            let b = flow.apply(&[0.618], &[0.9]).unwrap();
            errs.push(((a.0[0] - b.0[0]).powi(2) + (a.1[0] - b.1[0]).powi(2)).sqrt());
        }
        let slope = loglog_slope(&ts, &errs);
        assert!((slope - 2.0).abs() < 0.35, "one-step defect slope {slope}");
    }

    #[test]
    fn midpoint_defect_against_flow_is_third_order() {
        let model = builtin("twist1d").unwrap();
        let eps = 1e-3;
        let ts = [0.2, 0.1, 0.05, 0.025];
        let mut errs = Vec::new();
        for &t in &ts {
            let mid = MidpointMap::new(model.clone(), eps, t);
            let flow = ReferenceFlow::new(model.clone(), eps, t, 1e-13);
            let a = mid.apply(&[0.618], &[0.9]).unwrap();
            let b = flow.apply(&[0.618], &[0.9]).unwrap();
            errs.push(((a.0[0] - b.0[0]).powi(2) + (a.1[0] - b.1[0]).powi(2)).sqrt());
        }
        let slope = loglog_slope(&ts, &errs);
        assert!((slope - 3.0).abs() < 0.45, "one-step defect slope {slope}");
    }

    #[test]
    fn extraction_round_trips_known_w() {
        let model = builtin("twist1d").unwrap();
        let gf = from_symplectic_euler(&model, &[0.618], 1e-3, 0.1, 8, 2, 0.05, 4).unwrap()
            .with_tolerance(1e-14, 200);
        let opts = ExtractOptions::new(8, 2, 0.05);
        let ext = extract_generating(&gf, gf.t_omega_ref(), &[0.618], &opts).unwrap();
        // compare W tables coefficientwise
        for (k, poly) in gf.w().modes() {
            let other = ext.w.mode(k).cloned().unwrap_or_else(|| ActionPoly::zero(1, poly.degree()));
            let diff = poly.add(&other.scale(Complex64::new(-1.0, 0.0)));
            assert!(diff.max_coeff() < 1e-9, "mode {k:?} differs by {}", diff.max_coeff());
        }
        assert!(ext.reproduction_residual < 1e-9, "reproduction {}", ext.reproduction_residual);
    }

    #[test]
    fn extraction_of_pure_rotation_is_zero() {
        let w = FourierTaylor::zero(1, &[0.5], 4, 1, (0.1, 1.0));
        let rot = GFMap::new(0.1, vec![0.07], w, 1);
        let opts = ExtractOptions::new(4, 1, 0.03);
        let ext = extract_generating(&rot, &[0.07], &[0.5], &opts).unwrap();
        assert!(ext.w.is_zero(), "extracted {} modes", ext.w.n_modes());
    }

    #[test]
    fn extraction_reproduces_midpoint() {
        let model = builtin("twist1d").unwrap();
        let mid = MidpointMap::new(model.clone(), 1e-3, 0.1);
        let t_omega = [0.1 * 0.618];
        // degree 1 leaves the twist gradient t (p - xi) out of the table;
        // on the torus that costs ~ t * eps. Threshold frozen from the
        // first validated run (measured 9.8e-6).
        let opts = ExtractOptions::new(16, 1, 0.05);
        let ext = extract_generating(&mid, &t_omega, &[0.618], &opts).unwrap();
        assert!(
            ext.reproduction_residual <= 2e-5,
            "degree-1 midpoint reproduction residual {}",
            ext.reproduction_residual
        );
        // degree-1 extraction reports the twist data it cannot hold
        assert!(ext.discarded_quadratic > 1e-3, "twist diagnostic {}", ext.discarded_quadratic);
        // degree 2 captures the twist and reproduces the map on the torus
        let opts2 = ExtractOptions::new(16, 2, 0.05);
        let ext2 = extract_generating(&mid, &t_omega, &[0.618], &opts2).unwrap();
        assert!(
            ext2.reproduction_residual <= 1e-9,
            "degree-2 midpoint reproduction residual {}",
            ext2.reproduction_residual
        );
        assert_eq!(ext2.discarded_quadratic, 0.0);
    }

    #[test]
    fn extraction_flags_non_symplectic_input() {
        struct Skewed;
        impl SymplecticMap for Skewed {
            fn dim(&self) -> usize {
                1
            }
            fn step(&self) -> f64 {
                0.1
            }
            fn order(&self) -> u32 {
                1
            }
            fn apply(&self, p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
                // dissipative kick: not symplectic
                Ok((vec![p[0] * (1.0 - 0.02 * q[0].sin())], vec![q[0] + 0.0618 + 0.01 * q[0].cos()]))
            }
        }
        let mut opts = ExtractOptions::new(8, 1, 0.03);
        opts.consistency_tol = 1e-8;
        let err = extract_generating(&Skewed, &[0.0618], &[0.5], &opts).unwrap_err();
        assert!(matches!(err, Error::InconsistentGradient { .. }), "got {err}");
    }

    #[test]
    fn angle_grid_points_cover_torus() {
        let pts = angle_grid_points(&[4, 2]);
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert!((pts[1][1] - PI).abs() < 1e-15);
        assert!((pts[7][0] - 3.0 * TAU / 4.0).abs() < 1e-15);
    }
}
