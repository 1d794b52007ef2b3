//! Nearly integrable Hamiltonians H(p, q) = h0(p) + eps * h1(p, q).
//!
//! h0 is a polynomial in the actions; h1 is a finite sum of terms
//! c * p^m * cos/sin(<k, q>). Gradients and Hessians are differentiated
//! term by term, so frequency maps are exact for polynomial h0 and the
//! iteration never sees finite-difference noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::MAX_DIM;

/// One monomial c * prod_j xi_j^{e_j}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl PolyTerm {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let mut v = self.coeff;
        for (j, &e) in self.exponents.iter().enumerate() {
            for _ in 0..e {
                v *= xi[j];
            }
        }
        v
    }

    fn grad(&self, xi: &[f64], axis: usize) -> f64 {
        let e = self.exponents[axis];
        if e == 0 {
            return 0.0;
        }
        let mut v = self.coeff * e as f64;
        for (j, &ej) in self.exponents.iter().enumerate() {
            let pow = if j == axis { ej - 1 } else { ej };
            for _ in 0..pow {
                v *= xi[j];
            }
        }
        v
    }

    fn hess(&self, xi: &[f64], a: usize, b: usize) -> f64 {
        let ea = self.exponents[a];
        if ea == 0 {
            return 0.0;
        }
        let mut factor = ea as f64;
        let mut exps: Vec<u32> = self.exponents.clone();
        exps[a] -= 1;
        if exps[b] == 0 {
            return 0.0;
        }
        factor *= exps[b] as f64;
        exps[b] -= 1;
        let mut v = self.coeff * factor;
        for (j, &e) in exps.iter().enumerate() {
            for _ in 0..e {
                v *= xi[j];
            }
        }
        v
    }
}

/// Harmonic shape of a perturbation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

/// One perturbation term c * prod_j p_j^{e_j} * trig(<k, q>).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    pub exponents: Vec<u32>,
    pub wave: Vec<i32>,
    pub trig: Trig,
}

impl TrigTerm {
    fn phase(&self, q: &[f64]) -> f64 {
        self.wave.iter().zip(q.iter()).map(|(&k, &x)| k as f64 * x).sum()
    }

    fn amp(&self, p: &[f64]) -> f64 {
        let mut v = self.coeff;
        for (j, &e) in self.exponents.iter().enumerate() {
            for _ in 0..e {
                v *= p[j];
            }
        }
        v
    }

    fn amp_grad(&self, p: &[f64], axis: usize) -> f64 {
        let e = self.exponents[axis];
        if e == 0 {
            return 0.0;
        }
        let mut v = self.coeff * e as f64;
        for (j, &ej) in self.exponents.iter().enumerate() {
            let pow = if j == axis { ej - 1 } else { ej };
            for _ in 0..pow {
                v *= p[j];
            }
        }
        v
    }

    fn trig_val(&self, phase: f64) -> f64 {
        match self.trig {
            Trig::Cos => phase.cos(),
            Trig::Sin => phase.sin(),
        }
    }

    fn trig_deriv(&self, phase: f64) -> f64 {
        match self.trig {
            Trig::Cos => -phase.sin(),
            Trig::Sin => phase.cos(),
        }
    }
}

/// A nearly integrable Hamiltonian on a box of actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianModel {
    pub name: String,
    pub dim: usize,
    pub h0: Vec<PolyTerm>,
    pub h1: Vec<TrigTerm>,
    /// Action box V as per-coordinate closed intervals.
    pub action_domain: Vec<(f64, f64)>,
    /// Declared analyticity widths (r, s).
    pub radii: (f64, f64),
    /// Bound on sup |h1| over the domain.
    pub m1_bound: f64,
}

impl HamiltonianModel {
    pub fn contains(&self, xi: &[f64]) -> bool {
        xi.len() == self.dim
            && xi
                .iter()
                .zip(self.action_domain.iter())
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    fn check_domain(&self, xi: &[f64]) -> Result<()> {
        if self.contains(xi) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "action {:?} outside domain {:?} of model {}",
                xi, self.action_domain, self.name
            )))
        }
    }

    pub fn h0_value(&self, xi: &[f64]) -> f64 {
        self.h0.iter().map(|t| t.eval(xi)).sum()
    }

    /// Frequency map omega(xi) = grad h0, without the domain gate. Sieves
    /// and extended grids own their domain semantics.
    pub fn frequency_raw(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|a| self.h0.iter().map(|t| t.grad(xi, a)).sum())
            .collect()
    }

    /// Frequency map on V; errors outside the declared domain.
    pub fn frequency(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(xi)?;
        Ok(self.frequency_raw(xi))
    }

    /// Hessian of h0 (row-major dim x dim).
    pub fn hessian(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                h[a * n + b] = self.h0.iter().map(|t| t.hess(xi, a, b)).sum();
            }
        }
        h
    }

    /// Perturbation value and both gradients at (p, q).
    pub fn eval_perturbation(&self, p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check_domain(p)?;
        Ok(self.perturbation_raw(p, q))
    }

    pub fn perturbation_raw(&self, p: &[f64], q: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let mut value = 0.0;
        let mut gp = vec![0.0; n];
        let mut gq = vec![0.0; n];
        for term in &self.h1 {
            let phase = term.phase(q);
            let tv = term.trig_val(phase);
            let td = term.trig_deriv(phase);
            let amp = term.amp(p);
            value += amp * tv;
            for a in 0..n {
                gp[a] += term.amp_grad(p, a) * tv;
                gq[a] += amp * td * term.wave[a] as f64;
            }
        }
        (value, gp, gq)
    }

    pub fn h1_value(&self, p: &[f64], q: &[f64]) -> f64 {
        self.h1
            .iter()
            .map(|t| t.amp(p) * t.trig_val(t.phase(q)))
            .sum()
    }

    pub fn h1_grad_p(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let (_, gp, _) = self.perturbation_raw(p, q);
        gp
    }

    pub fn h1_grad_q(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let (_, _, gq) = self.perturbation_raw(p, q);
        gq
    }

    /// Center of the action box, a safe interior seed.
    pub fn domain_center(&self) -> Vec<f64> {
        self.action_domain.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

fn poly1(coeff: f64, e: u32) -> PolyTerm {
    PolyTerm { coeff, exponents: vec![e] }
}

fn trig1(coeff: f64, k: i32) -> TrigTerm {
    TrigTerm { coeff, exponents: vec![0], wave: vec![k], trig: Trig::Cos }
}

/// The bundled test problems.
pub fn builtin_models() -> Vec<HamiltonianModel> {
    let twist1d = HamiltonianModel {
        name: "twist1d".into(),
        dim: 1,
        h0: vec![poly1(0.5, 2)],
        h1: vec![trig1(1.0, 1)],
        action_domain: vec![(0.1, 1.2)],
        radii: (0.4, 2.0),
        m1_bound: 1.0,
    };
    let twist1d_2h = HamiltonianModel {
        name: "twist1d-2h".into(),
        dim: 1,
        h0: vec![poly1(0.5, 2)],
        h1: vec![trig1(1.0, 1), trig1(0.5, 2)],
        action_domain: vec![(0.1, 1.2)],
        radii: (0.4, 2.0),
        m1_bound: 1.5,
    };
    let quartic1d = HamiltonianModel {
        name: "quartic1d".into(),
        dim: 1,
        h0: vec![poly1(0.25, 4)],
        h1: vec![trig1(1.0, 1)],
        action_domain: vec![(0.5, 1.0)],
        radii: (0.2, 2.0),
        m1_bound: 1.0,
    };
    let twist2d = HamiltonianModel {
        name: "twist2d".into(),
        dim: 2,
        h0: vec![
            PolyTerm { coeff: 0.5, exponents: vec![2, 0] },
            PolyTerm { coeff: 0.5, exponents: vec![0, 2] },
        ],
        h1: vec![
            TrigTerm { coeff: 1.0, exponents: vec![0, 0], wave: vec![1, 0], trig: Trig::Cos },
            TrigTerm { coeff: 1.0, exponents: vec![0, 0], wave: vec![1, 1], trig: Trig::Cos },
        ],
        action_domain: vec![(0.1, 0.9), (0.1, 0.9)],
        radii: (0.3, 2.0),
        m1_bound: 2.0,
    };
    // Degenerate Hessian (det D omega = xi1 - xi2^2 vanishes inside V) with
    // full derivative rank: Ruessmann-only example.
    let ruessmann2d = HamiltonianModel {
        name: "ruessmann2d".into(),
        dim: 2,
        h0: vec![
            PolyTerm { coeff: 0.5, exponents: vec![2, 0] },
            PolyTerm { coeff: 0.5, exponents: vec![1, 2] },
        ],
        h1: vec![
            TrigTerm { coeff: 1.0, exponents: vec![0, 0], wave: vec![1, 0], trig: Trig::Cos },
            TrigTerm { coeff: 1.0, exponents: vec![0, 0], wave: vec![0, 1], trig: Trig::Cos },
        ],
        action_domain: vec![(0.2, 0.8), (0.2, 0.8)],
        radii: (0.15, 2.0),
        m1_bound: 2.0,
    };
    vec![twist1d, twist1d_2h, quartic1d, twist2d, ruessmann2d]
}

/// Look up a bundled model by name.
pub fn builtin(name: &str) -> Option<HamiltonianModel> {
    builtin_models().into_iter().find(|m| m.name == name)
}

/// Validate that a custom model is well formed.
pub fn validate_model(m: &HamiltonianModel) -> Result<()> {
    if m.dim == 0 || m.dim > MAX_DIM {
        return Err(Error::Param(format!("model dimension {} outside 1..=3", m.dim)));
    }
    if m.action_domain.len() != m.dim {
        return Err(Error::Param("action_domain length must equal dim".into()));
    }
    for &(lo, hi) in &m.action_domain {
        if !(lo < hi) {
            return Err(Error::Param(format!("empty action interval [{lo}, {hi}]")));
        }
    }
    for t in &m.h0 {
        if t.exponents.len() != m.dim {
            return Err(Error::Param("h0 exponent length must equal dim".into()));
        }
    }
    for t in &m.h1 {
        if t.exponents.len() != m.dim || t.wave.len() != m.dim {
            return Err(Error::Param("h1 term shape must match dim".into()));
        }
    }
    if m.radii.0 <= 0.0 || m.radii.1 <= 0.0 {
        return Err(Error::Param("analyticity widths must be positive".into()));
    }
    if m.m1_bound <= 0.0 {
        return Err(Error::Param("m1_bound must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], axis: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[axis] += h;
        xm[axis] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn rotator_frequency_is_action() {
        let m = builtin("twist1d").unwrap();
        assert_eq!(m.frequency(&[0.6]).unwrap(), vec![0.6]);
    }

    #[test]
    fn isotropic_2d_frequency() {
        let m = builtin("twist2d").unwrap();
        let w = m.frequency(&[0.3, 0.7]).unwrap();
        assert_eq!(w, vec![0.3, 0.7]);
    }

    #[test]
    fn quartic_frequency() {
        let m = builtin("quartic1d").unwrap();
        let w = m.frequency(&[1.0]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-15, "omega = {}", w[0]);
    }

    #[test]
    fn frequency_outside_domain_errors() {
        let m = builtin("twist1d").unwrap();
        assert!(matches!(m.frequency(&[5.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn perturbation_values() {
        let m = builtin("twist1d").unwrap();
        let (v, gp, gq) = m.eval_perturbation(&[0.5], &[0.0]).unwrap();
        assert_eq!((v, gp[0], gq[0]), (1.0, 0.0, 0.0));
        let (v, gp, gq) = m.eval_perturbation(&[0.5], &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!(v.abs() < 1e-15);
        assert!(gp[0].abs() < 1e-15);
        assert!((gq[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn action_weighted_perturbation() {
        // h1 = p cos q at (p, q) = (2, 0) -> (2, 1, 0)
        let m = HamiltonianModel {
            name: "pcos".into(),
            dim: 1,
            h0: vec![poly1(0.5, 2)],
            h1: vec![TrigTerm { coeff: 1.0, exponents: vec![1], wave: vec![1], trig: Trig::Cos }],
            action_domain: vec![(0.0, 3.0)],
            radii: (0.4, 2.0),
            m1_bound: 3.0,
        };
        let (v, gp, gq) = m.eval_perturbation(&[2.0], &[0.0]).unwrap();
        assert_eq!((v, gp[0], gq[0]), (2.0, 1.0, 0.0));
    }

    #[test]
    fn catalog_contract() {
        let cat = builtin_models();
        assert!(cat.len() >= 4, "catalog has {} entries", cat.len());
        for m in &cat {
            validate_model(m).unwrap();
        }
    }

    #[test]
    fn catalog_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in builtin_models() {
            for _ in 0..100 {
                let xi: Vec<f64> = m
                    .action_domain
                    .iter()
                    .map(|&(lo, hi)| {
                        let pad = 0.05 * (hi - lo);
                        rng.gen_range(lo + pad..hi - pad)
                    })
                    .collect();
                let q: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                let w = m.frequency(&xi).unwrap();
                for a in 0..m.dim {
                    let fd = fd_grad(|x| m.h0_value(x), &xi, a, 1e-5);
                    let denom = w[a].abs().max(1.0);
                    assert!(
                        (w[a] - fd).abs() / denom < 1e-7,
                        "{}: grad h0 axis {a}: analytic {} vs fd {}",
                        m.name,
                        w[a],
                        fd
                    );
                    let gp = m.h1_grad_p(&xi, &q);
                    let fdp = fd_grad(|x| m.h1_value(x, &q), &xi, a, 1e-5);
                    assert!((gp[a] - fdp).abs() < 1e-7, "{}: grad_p h1 axis {a}", m.name);
                    let gq = m.h1_grad_q(&xi, &q);
                    let fdq = {
                        let mut qp = q.clone();
                        let mut qm = q.clone();
                        qp[a] += 1e-5;
                        qm[a] -= 1e-5;
                        (m.h1_value(&xi, &qp) - m.h1_value(&xi, &qm)) / 2e-5
                    };
                    assert!((gq[a] - fdq).abs() < 1e-7, "{}: grad_q h1 axis {a}", m.name);
                }
            }
        }
    }

    #[test]
    fn catalog_periodicity_and_m1() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in builtin_models() {
            let mut sup = 0.0f64;
            for _ in 0..100 {
                let xi: Vec<f64> = m
                    .action_domain
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..hi))
                    .collect();
                let q: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                let v = m.h1_value(&xi, &q);
                sup = sup.max(v.abs());
                for j in 0..m.dim {
                    let mut q2 = q.clone();
                    q2[j] += std::f64::consts::TAU;
                    let v2 = m.h1_value(&xi, &q2);
                    assert!((v - v2).abs() < 1e-12, "{}: periodicity axis {j}", m.name);
                }
            }
            assert!(sup <= m.m1_bound + 1e-12, "{}: sup |h1| = {sup} > M1", m.name);
        }
    }

    #[test]
    fn hessian_is_degenerate_inside_ruessmann_domain() {
        let m = builtin("ruessmann2d").unwrap();
        // det = xi1 - xi2^2 changes sign across the parabola
        let h = m.hessian(&[0.25, 0.5]);
        let det = h[0] * h[3] - h[1] * h[2];
        assert!(det.abs() < 1e-12, "det = {det}");
    }
}
