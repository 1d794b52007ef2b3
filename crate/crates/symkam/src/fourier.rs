//! Fourier-Taylor algebra on the annulus.
//!
//! A function f(I, theta) is stored as Fourier modes in the angle with
//! polynomial coefficients in the action offset I - xi*:
//!
//! ```text
//! f(I, theta) = sum_{|k| <= K} f_k(I - xi*) e^{i<k, theta>},   deg f_k <= d
//! ```
//!
//! Reality of f on real arguments is kept as the coefficient symmetry
//! f_{-k} = conj(f_k). Mode tables are sparse; coefficients below
//! `PRUNE_EPS` are dropped after every operation.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported number of degrees of freedom.
pub const MAX_DIM: usize = 3;

/// Coefficients smaller than this in magnitude are dropped after every
/// operation; keeps mode tables sparse without touching 1e-12-level checks.
pub const PRUNE_EPS: f64 = 1e-15;

/// Integer wavevector, padded with zeros beyond the active dimension.
pub type Mode = [i32; MAX_DIM];

/// l1 order |k| = sum |k_j|.
pub fn mode_order(k: &Mode) -> usize {
    k.iter().map(|c| c.unsigned_abs() as usize).sum()
}

fn mode_neg(k: &Mode) -> Mode {
    let mut m = [0i32; MAX_DIM];
    for (o, c) in m.iter_mut().zip(k.iter()) {
        *o = -c;
    }
    m
}

/// Canonical exponent list for polynomials of total degree <= d in n
/// variables: graded, then lexicographic. The list order defines the
/// coefficient layout of [`ActionPoly`].
pub fn exponents(n: usize, degree: usize) -> Vec<[u8; MAX_DIM]> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut e = [0u8; MAX_DIM];
        gen_exponents(n, total as u8, 0, &mut e, &mut out);
    }
    out
}

fn gen_exponents(n: usize, left: u8, axis: usize, e: &mut [u8; MAX_DIM], out: &mut Vec<[u8; MAX_DIM]>) {
    if axis == n {
        if left == 0 {
            out.push(*e);
        }
        return;
    }
    if axis == n - 1 {
        e[axis] = left;
        out.push(*e);
        e[axis] = 0;
        return;
    }
    for take in (0..=left).rev() {
        e[axis] = take;
        gen_exponents(n, left - take, axis + 1, e, out);
    }
    e[axis] = 0;
}

/// Polynomial in the action offset with complex coefficients, laid out in
/// the canonical [`exponents`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPoly {
    n: usize,
    degree: usize,
    coeffs: Vec<Complex64>,
}

impl ActionPoly {
    pub fn zero(n: usize, degree: usize) -> Self {
        let len = exponents(n, degree).len();
        ActionPoly { n, degree, coeffs: vec![Complex64::ZERO; len] }
    }

    pub fn constant(n: usize, value: Complex64) -> Self {
        let mut p = Self::zero(n, 0);
        p.coeffs[0] = value;
        p
    }

    pub fn from_coeffs(n: usize, degree: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), exponents(n, degree).len(), "coefficient count mismatch");
        ActionPoly { n, degree, coeffs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn eval(&self, offset: &[f64]) -> Complex64 {
        let exps = exponents(self.n, self.degree);
        let mut acc = Complex64::ZERO;
        for (e, c) in exps.iter().zip(self.coeffs.iter()) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut m = 1.0;
            for j in 0..self.n {
                for _ in 0..e[j] {
                    m *= offset[j];
                }
            }
            acc += c * m;
        }
        acc
    }

    /// Promote to a (possibly) higher degree, keeping values identical.
    pub fn promote(&self, degree: usize) -> Self {
        assert!(degree >= self.degree);
        let src = exponents(self.n, self.degree);
        let dst = exponents(self.n, degree);
        let mut out = ActionPoly::zero(self.n, degree);
        for (e, c) in src.iter().zip(self.coeffs.iter()) {
            let idx = dst.iter().position(|d| d == e).expect("exponent present");
            out.coeffs[idx] = *c;
        }
        out
    }

    /// Drop all terms of total degree above `degree`.
    pub fn truncate(&self, degree: usize) -> Self {
        let src = exponents(self.n, self.degree);
        let target = degree.min(self.degree);
        let dst = exponents(self.n, target);
        let mut out = ActionPoly::zero(self.n, target);
        for (i, e) in dst.iter().enumerate() {
            let idx = src.iter().position(|d| d == e).expect("exponent present");
            out.coeffs[i] = self.coeffs[idx];
        }
        out
    }

    /// Partial derivative with respect to action coordinate `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(axis < self.n);
        if self.degree == 0 {
            return ActionPoly::zero(self.n, 0);
        }
        let src = exponents(self.n, self.degree);
        let dst = exponents(self.n, self.degree - 1);
        let mut out = ActionPoly::zero(self.n, self.degree - 1);
        for (e, c) in src.iter().zip(self.coeffs.iter()) {
            if e[axis] == 0 {
                continue;
            }
            let mut d = *e;
            d[axis] -= 1;
            let idx = dst.iter().position(|x| x == &d).expect("exponent present");
            out.coeffs[idx] += c * (e[axis] as f64);
        }
        out
    }

    pub fn conj(&self) -> Self {
        ActionPoly {
            n: self.n,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Multiply by the coordinate monomial offset_axis; degree grows by one.
    pub fn mul_action(&self, axis: usize) -> Self {
        assert!(axis < self.n);
        let src = exponents(self.n, self.degree);
        let dst = exponents(self.n, self.degree + 1);
        let mut out = ActionPoly::zero(self.n, self.degree + 1);
        for (e, c) in src.iter().zip(self.coeffs.iter()) {
            let mut d = *e;
            d[axis] += 1;
            let idx = dst.iter().position(|x| x == &d).expect("exponent present");
            out.coeffs[idx] += c;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ActionPoly {
            n: self.n,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &ActionPoly) -> Self {
        let degree = self.degree.max(other.degree);
        let mut a = self.promote(degree);
        let b = other.promote(degree);
        for (x, y) in a.coeffs.iter_mut().zip(b.coeffs.iter()) {
            *x += y;
        }
        a
    }

    /// Upper bound for |p| over the real polydisc |offset_j| <= radius.
    pub fn sup_bound(&self, radius: f64) -> f64 {
        let exps = exponents(self.n, self.degree);
        exps.iter()
            .zip(self.coeffs.iter())
            .map(|(e, c)| {
                let total: u32 = e.iter().map(|x| *x as u32).sum();
                c.norm() * radius.powi(total as i32)
            })
            .sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn prune(&mut self) {
        for c in self.coeffs.iter_mut() {
            if c.re.abs() < PRUNE_EPS {
                c.re = 0.0;
            }
            if c.im.abs() < PRUNE_EPS {
                c.im = 0.0;
            }
        }
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// A real-analytic function of (action, angle) as a sparse Fourier-Taylor
/// mode table. Values are immutable; every operation returns a new table.
#[derive(Debug, Clone)]
pub struct FourierTaylor {
    n: usize,
    xi_star: Vec<f64>,
    k_max: usize,
    degree: usize,
    radii: (f64, f64),
    modes: BTreeMap<Mode, ActionPoly>,
}

impl FourierTaylor {
    pub fn zero(n: usize, xi_star: &[f64], k_max: usize, degree: usize, radii: (f64, f64)) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "dimension must be 1..=3");
        assert_eq!(xi_star.len(), n);
        FourierTaylor {
            n,
            xi_star: xi_star.to_vec(),
            k_max,
            degree,
            radii,
            modes: BTreeMap::new(),
        }
    }

    /// Build from explicit (mode, polynomial) pairs; enforces reality and
    /// prunes.
    pub fn from_modes(
        n: usize,
        xi_star: &[f64],
        k_max: usize,
        degree: usize,
        radii: (f64, f64),
        entries: Vec<(Mode, ActionPoly)>,
    ) -> Self {
        let mut f = Self::zero(n, xi_star, k_max, degree, radii);
        for (k, p) in entries {
            assert!(mode_order(&k) <= k_max, "mode order above cutoff");
            let q = p.promote(degree.max(p.degree));
            f.degree = f.degree.max(q.degree);
            match f.modes.get_mut(&k) {
                Some(existing) => {
                    let sum = existing.add(&q);
                    *existing = sum;
                }
                None => {
                    f.modes.insert(k, q);
                }
            }
        }
        f.enforce_reality();
        f.prune();
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi_star(&self) -> &[f64] {
        &self.xi_star
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn radii(&self) -> (f64, f64) {
        self.radii
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Mode, &ActionPoly)> {
        self.modes.iter()
    }

    pub fn mode(&self, k: &Mode) -> Option<&ActionPoly> {
        self.modes.get(k)
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Largest stored |k| (l1), zero for a pure mean.
    pub fn max_mode_order(&self) -> usize {
        self.modes.keys().map(mode_order).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Evaluate at a real point. The reality symmetry makes the sum real;
    /// the imaginary part is discarded.
    pub fn eval(&self, action: &[f64], angle: &[f64]) -> f64 {
        self.eval_complex(action, angle).re
    }

    fn eval_complex(&self, action: &[f64], angle: &[f64]) -> Complex64 {
        let mut offset = [0.0; MAX_DIM];
        for j in 0..self.n {
            offset[j] = action[j] - self.xi_star[j];
        }
        // Per-axis phase power tables up to the largest |k_j| present.
        let mut axis_max = [0usize; MAX_DIM];
        for k in self.modes.keys() {
            for j in 0..self.n {
                axis_max[j] = axis_max[j].max(k[j].unsigned_abs() as usize);
            }
        }
        let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let base = Complex64::from_polar(1.0, angle[j]);
            let mut tab = Vec::with_capacity(axis_max[j] + 1);
            let mut cur = Complex64::ONE;
            tab.push(cur);
            for _ in 0..axis_max[j] {
                cur *= base;
                tab.push(cur);
            }
            tables.push(tab);
        }
        let mut acc = Complex64::ZERO;
        for (k, poly) in &self.modes {
            let mut phase = Complex64::ONE;
            for j in 0..self.n {
                let kj = k[j];
                let p = tables[j][kj.unsigned_abs() as usize];
                phase *= if kj >= 0 { p } else { p.conj() };
            }
            acc += poly.eval(&offset[..self.n]) * phase;
        }
        acc
    }

    /// The k = 0 coefficient polynomial [f].
    pub fn mean_part(&self) -> ActionPoly {
        self.modes
            .get(&[0i32; MAX_DIM])
            .cloned()
            .unwrap_or_else(|| ActionPoly::zero(self.n, self.degree))
    }

    /// f minus its angular mean: only k != 0 modes survive.
    pub fn tilde_part(&self) -> FourierTaylor {
        let mut out = self.clone();
        out.modes.remove(&[0i32; MAX_DIM]);
        out
    }

    /// Drop every mode with |k| > k_new.
    pub fn truncate_modes(&self, k_new: usize) -> FourierTaylor {
        let mut out = self.clone();
        out.k_max = k_new.min(self.k_max);
        out.modes.retain(|k, _| mode_order(k) <= k_new);
        out
    }

    /// Drop polynomial terms of total degree above d_new.
    pub fn truncate_action(&self, d_new: usize) -> FourierTaylor {
        let mut out = self.clone();
        out.degree = d_new.min(self.degree);
        let target = out.degree;
        for poly in out.modes.values_mut() {
            *poly = poly.truncate(target);
        }
        out.prune();
        out
    }

    /// Angle derivative along `axis`: multiplies mode k by i k_axis.
    pub fn derivative_angle(&self, axis: usize) -> FourierTaylor {
        assert!(axis < self.n);
        let mut out = self.clone();
        let mut modes = BTreeMap::new();
        for (k, poly) in &out.modes {
            let factor = Complex64::new(0.0, k[axis] as f64);
            if factor.im == 0.0 {
                continue;
            }
            modes.insert(*k, poly.scale(factor));
        }
        out.modes = modes;
        out.prune();
        out
    }

    /// Multiply by the action offset coordinate along `axis`.
    pub fn mul_action(&self, axis: usize) -> FourierTaylor {
        assert!(axis < self.n);
        let mut out = self.clone();
        out.degree = self.degree + 1;
        let mut modes = BTreeMap::new();
        for (k, poly) in &self.modes {
            modes.insert(*k, poly.mul_action(axis));
        }
        out.modes = modes;
        out.prune();
        out
    }

    /// Action derivative along `axis`: differentiates coefficient
    /// polynomials; the degree drops by one.
    pub fn derivative_action(&self, axis: usize) -> FourierTaylor {
        assert!(axis < self.n);
        let mut out = self.clone();
        out.degree = self.degree.saturating_sub(1);
        let mut modes = BTreeMap::new();
        for (k, poly) in &self.modes {
            let d = poly.derivative(axis);
            if !d.is_zero() {
                modes.insert(*k, d);
            }
        }
        out.modes = modes;
        out.prune();
        out
    }

    pub fn scale(&self, s: f64) -> FourierTaylor {
        let mut out = self.clone();
        for poly in out.modes.values_mut() {
            *poly = poly.scale(Complex64::new(s, 0.0));
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &FourierTaylor) -> FourierTaylor {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        out.k_max = self.k_max.max(other.k_max);
        out.degree = self.degree.max(other.degree);
        for (k, poly) in &other.modes {
            match out.modes.get_mut(k) {
                Some(p) => {
                    let sum = p.add(poly);
                    *p = sum;
                }
                None => {
                    out.modes.insert(*k, poly.clone());
                }
            }
        }
        out.prune();
        out
    }

    /// Upper bound sum_k sup|f_k| e^{|k| strip} with sup over the polydisc
    /// of the given action radius. strip = 0 bounds the real sup norm.
    pub fn sup_norm_estimate(&self, action_radius: f64, strip: f64) -> f64 {
        self.modes
            .iter()
            .map(|(k, poly)| poly.sup_bound(action_radius) * (mode_order(k) as f64 * strip).exp())
            .sum()
    }

    /// Enforce f_{-k} = conj(f_k) by averaging paired modes.
    pub fn enforce_reality(&mut self) {
        let keys: Vec<Mode> = self.modes.keys().cloned().collect();
        for k in keys {
            let nk = mode_neg(&k);
            if k > nk {
                continue; // handle each pair once, from its lexicographically smaller key
            }
            if k == nk {
                // k = 0: make the mean real
                if let Some(p) = self.modes.get_mut(&k) {
                    for c in p.coeffs.iter_mut() {
                        c.im = 0.0;
                    }
                }
                continue;
            }
            let pk = self.modes.get(&k).cloned();
            let pnk = self.modes.get(&nk).cloned();
            let degree = self.degree;
            let n = self.n;
            let avg = match (pk, pnk) {
                (Some(a), Some(b)) => a.promote(degree).add(&b.conj().promote(degree)).scale(Complex64::new(0.5, 0.0)),
                (Some(a), None) => a.promote(degree).scale(Complex64::new(0.5, 0.0)),
                (None, Some(b)) => b.conj().promote(degree).scale(Complex64::new(0.5, 0.0)),
                (None, None) => ActionPoly::zero(n, degree),
            };
            self.modes.insert(k, avg.clone());
            self.modes.insert(nk, avg.conj());
        }
    }

    fn prune(&mut self) {
        for poly in self.modes.values_mut() {
            poly.prune();
        }
        self.modes.retain(|_, p| !p.is_zero());
    }

    /// Worst deviation from the reality symmetry, for invariant checks.
    pub fn reality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, poly) in &self.modes {
            let nk = mode_neg(k);
            let other = self
                .modes
                .get(&nk)
                .cloned()
                .unwrap_or_else(|| ActionPoly::zero(self.n, poly.degree));
            let diff = poly.add(&other.conj().scale(Complex64::new(-1.0, 0.0)));
            worst = worst.max(diff.max_coeff());
        }
        worst
    }

    /// Evaluate on a full uniform tensor angle grid at a fixed action,
    /// via inverse FFT. Grid axis j has `sizes[j]` points theta = 2 pi m / N.
    pub fn eval_angle_grid(&self, action: &[f64], sizes: &[usize]) -> Vec<f64> {
        assert_eq!(sizes.len(), self.n);
        let mut offset = [0.0; MAX_DIM];
        for j in 0..self.n {
            offset[j] = action[j] - self.xi_star[j];
        }
        let total: usize = sizes.iter().product();
        let mut spec = vec![Complex64::ZERO; total];
        for (k, poly) in &self.modes {
            let mut idx = 0usize;
            let mut ok = true;
            for j in 0..self.n {
                let nj = sizes[j];
                if 2 * (k[j].unsigned_abs() as usize) >= nj {
                    ok = false;
                    break;
                }
                let bin = k[j].rem_euclid(nj as i32) as usize;
                idx = idx * nj + bin;
            }
            if ok {
                spec[idx] += poly.eval(&offset[..self.n]);
            }
        }
        let vals = inverse_fft_nd(&mut spec, sizes);
        vals.into_iter().map(|c| c.re).collect()
    }
}

// ---------------------------------------------------------------------------
// grid fitting
// ---------------------------------------------------------------------------

/// Samples on a tensor angle grid crossed with action collocation points.
///
/// `values[a][g]` is f at action node `a` (flat index over the tensor
/// product of `action_nodes`) and angle node `g` (flat row-major index over
/// the uniform grids of `angle_sizes`).
pub struct GridSamples {
    pub n: usize,
    pub angle_sizes: Vec<usize>,
    pub action_nodes: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl GridSamples {
    pub fn action_points(&self) -> Vec<Vec<f64>> {
        tensor_points(&self.action_nodes)
    }
}

/// Cartesian product of per-axis node lists, row-major.
pub fn tensor_points(nodes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in nodes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Fit a Fourier-Taylor table from grid samples: exact for band-limited
/// inputs of matching (K, d). Reality is enforced by symmetrization.
pub fn fit_from_grid(
    samples: &GridSamples,
    xi_star: &[f64],
    k_max: usize,
    degree: usize,
    radii: (f64, f64),
) -> Result<FourierTaylor> {
    let n = samples.n;
    for &sz in &samples.angle_sizes {
        if sz < 2 * k_max + 1 {
            return Err(Error::Alias { grid: sz, k_max });
        }
    }
    let action_points = samples.action_points();
    assert_eq!(action_points.len(), samples.values.len(), "action sample count mismatch");

    // DFT per action point.
    let mut spectra: Vec<BTreeMap<Mode, Complex64>> = Vec::with_capacity(action_points.len());
    for vals in &samples.values {
        let mut buf: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = forward_fft_nd(&mut buf, &samples.angle_sizes);
        let total: f64 = samples.angle_sizes.iter().product::<usize>() as f64;
        let mut table = BTreeMap::new();
        for k in enumerate_modes(n, k_max) {
            let mut idx = 0usize;
            for j in 0..n {
                let nj = samples.angle_sizes[j];
                let bin = k[j].rem_euclid(nj as i32) as usize;
                idx = idx * nj + bin;
            }
            table.insert(k, spec[idx] / total);
        }
        spectra.push(table);
    }

    // Least-squares polynomial in the action offset, shared design matrix.
    let exps = exponents(n, degree);
    let rows = action_points.len();
    let cols = exps.len();
    if rows < cols {
        return Err(Error::Fit(format!(
            "{rows} action nodes cannot determine {cols} polynomial terms"
        )));
    }
    let mut design = nalgebra::DMatrix::<f64>::zeros(rows, cols);
    for (r, pt) in action_points.iter().enumerate() {
        for (c, e) in exps.iter().enumerate() {
            let mut m = 1.0;
            for j in 0..n {
                for _ in 0..e[j] {
                    m *= pt[j] - xi_star[j];
                }
            }
            design[(r, c)] = m;
        }
    }
    let pinv = design
        .svd(true, true)
        .pseudo_inverse(1e-300)
        .map_err(|e| Error::Fit(format!("design matrix pseudo-inverse failed: {e}")))?;

    let mut entries = Vec::new();
    for k in enumerate_modes(n, k_max) {
        let mut re = nalgebra::DVector::<f64>::zeros(rows);
        let mut im = nalgebra::DVector::<f64>::zeros(rows);
        for (r, table) in spectra.iter().enumerate() {
            let c = table[&k];
            re[r] = c.re;
            im[r] = c.im;
        }
        let cre = &pinv * re;
        let cim = &pinv * im;
        let coeffs: Vec<Complex64> = (0..cols).map(|i| Complex64::new(cre[i], cim[i])).collect();
        let poly = ActionPoly::from_coeffs(n, degree, coeffs);
        if poly.max_coeff() >= PRUNE_EPS {
            entries.push((k, poly));
        }
    }
    Ok(FourierTaylor::from_modes(n, xi_star, k_max, degree, radii, entries))
}

/// Sample a function on the standard oversampled grid and fit it.
pub fn fit_function<F>(
    f: F,
    xi_star: &[f64],
    k_max: usize,
    degree: usize,
    radius: f64,
    oversample: usize,
    radii: (f64, f64),
) -> Result<FourierTaylor>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let samples = sample_grid(&f, xi_star, k_max, degree, radius, oversample)?;
    fit_from_grid(&samples, xi_star, k_max, degree, radii)
}

/// Build the sample container for [`fit_from_grid`]: uniform angle grids of
/// size oversample*(2K+1) and symmetric action collocation nodes.
pub fn sample_grid<F>(
    f: &F,
    xi_star: &[f64],
    k_max: usize,
    degree: usize,
    radius: f64,
    oversample: usize,
) -> Result<GridSamples>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = xi_star.len();
    let size = oversample.max(1) * (2 * k_max + 1);
    let angle_sizes = vec![size; n];
    let nodes = collocation_nodes(degree, radius);
    let action_nodes: Vec<Vec<f64>> = (0..n)
        .map(|j| nodes.iter().map(|&c| xi_star[j] + c).collect())
        .collect();
    let action_points = tensor_points(&action_nodes);
    let angle_points = angle_grid_points(&angle_sizes);
    let mut values = Vec::with_capacity(action_points.len());
    for pa in &action_points {
        let mut row = Vec::with_capacity(angle_points.len());
        for th in &angle_points {
            row.push(f(pa, th));
        }
        values.push(row);
    }
    Ok(GridSamples { n, angle_sizes, action_nodes, values })
}

/// Symmetric collocation offsets for a degree-d fit: max(d+1, 3) uniform
/// nodes in [-radius, radius], always including 0 (odd count).
pub fn collocation_nodes(degree: usize, radius: f64) -> Vec<f64> {
    if radius == 0.0 || degree == 0 {
        return vec![0.0];
    }
    let mut m = (degree + 1).max(3);
    if m % 2 == 0 {
        m += 1;
    }
    let half = (m - 1) / 2;
    (0..m)
        .map(|i| radius * ((i as f64) - (half as f64)) / (half as f64))
        .collect()
}

/// Row-major list of angle grid points theta_j = 2 pi m / N_j.
pub fn angle_grid_points(sizes: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&nj| (0..nj).map(|m| 2.0 * std::f64::consts::PI * (m as f64) / (nj as f64)).collect())
        .collect();
    tensor_points(&axes)
}

/// All modes with 0 <= |k|_l1 <= k_max (including 0).
pub fn enumerate_modes(n: usize, k_max: usize) -> Vec<Mode> {
    let mut out = Vec::new();
    let mut k = [0i32; MAX_DIM];
    enumerate_rec(n, k_max as i32, 0, &mut k, &mut out);
    out
}

fn enumerate_rec(n: usize, k_max: i32, axis: usize, k: &mut Mode, out: &mut Vec<Mode>) {
    if axis == n {
        out.push(*k);
        return;
    }
    let used: i32 = k[..axis].iter().map(|c| c.abs()).sum();
    for v in -(k_max - used)..=(k_max - used) {
        k[axis] = v;
        enumerate_rec(n, k_max, axis + 1, k, out);
    }
    k[axis] = 0;
}

// ---------------------------------------------------------------------------
// tensor FFTs (row-major, any size, via rustfft)
// ---------------------------------------------------------------------------

fn fft_nd(data: &mut [Complex64], sizes: &[usize], inverse: bool) -> Vec<Complex64> {
    let total: usize = sizes.iter().product();
    assert_eq!(data.len(), total);
    let mut planner = FftPlanner::new();
    let ndim = sizes.len();
    let mut buf = data.to_vec();
    for axis in 0..ndim {
        let nj = sizes[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(nj)
        } else {
            planner.plan_fft_forward(nj)
        };
        let stride: usize = sizes[axis + 1..].iter().product();
        let outer: usize = total / (nj * stride);
        let mut line = vec![Complex64::ZERO; nj];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * nj * stride + s;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = buf[base + i * stride];
                }
                fft.process(&mut line);
                for (i, slot) in line.iter().enumerate() {
                    buf[base + i * stride] = *slot;
                }
            }
        }
    }
    buf
}

pub(crate) fn forward_fft_nd(data: &mut [Complex64], sizes: &[usize]) -> Vec<Complex64> {
    fft_nd(data, sizes, false)
}

pub(crate) fn inverse_fft_nd(data: &mut [Complex64], sizes: &[usize]) -> Vec<Complex64> {
    fft_nd(data, sizes, true)
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    k: Vec<i32>,
    poly: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FourierTaylorRecord {
    n: usize,
    xi_star: Vec<f64>,
    #[serde(rename = "K")]
    k_max: usize,
    d: usize,
    r: f64,
    s: f64,
    modes: Vec<ModeRecord>,
}

impl Serialize for FourierTaylor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let modes = self
            .modes
            .iter()
            .map(|(k, poly)| ModeRecord {
                k: k[..self.n].to_vec(),
                poly: poly.coeffs.iter().map(|c| [c.re, c.im]).collect(),
            })
            .collect();
        let rec = FourierTaylorRecord {
            n: self.n,
            xi_star: self.xi_star.clone(),
            k_max: self.k_max,
            d: self.degree,
            r: self.radii.0,
            s: self.radii.1,
            modes,
        };
        rec.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FourierTaylor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = FourierTaylorRecord::deserialize(deserializer)?;
        let mut entries = Vec::new();
        for m in rec.modes {
            let mut k = [0i32; MAX_DIM];
            for (i, v) in m.k.iter().enumerate() {
                k[i] = *v;
            }
            let coeffs: Vec<Complex64> = m.poly.iter().map(|c| Complex64::new(c[0], c[1])).collect();
            entries.push((k, ActionPoly::from_coeffs(rec.n, rec.d, coeffs)));
        }
        Ok(FourierTaylor::from_modes(
            rec.n,
            &rec.xi_star,
            rec.k_max,
            rec.d,
            (rec.r, rec.s),
            entries,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn mode1(k: i32) -> Mode {
        let mut m = [0i32; MAX_DIM];
        m[0] = k;
        m
    }

    /// cos(k theta) as a mode pair.
    fn cos_k(k: i32, amp: f64, xi: f64) -> FourierTaylor {
        let half = Complex64::new(0.5 * amp, 0.0);
        FourierTaylor::from_modes(
            1,
            &[xi],
            k.unsigned_abs() as usize,
            1,
            (0.2, 1.0),
            vec![
                (mode1(k), ActionPoly::constant(1, half)),
                (mode1(-k), ActionPoly::constant(1, half)),
            ],
        )
    }

    fn random_band_limited(rng: &mut ChaCha8Rng, n: usize, k_max: usize, degree: usize) -> FourierTaylor {
        let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
        let mut entries = Vec::new();
        for k in enumerate_modes(n, k_max) {
            let first = k.iter().find(|&&c| c != 0).copied().unwrap_or(0);
            if first < 0 {
                continue;
            }
            let terms = exponents(n, degree).len();
            let coeffs: Vec<Complex64> = (0..terms)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let poly = ActionPoly::from_coeffs(n, degree, coeffs);
            if mode_order(&k) == 0 {
                entries.push((k, poly));
            } else {
                let mut nk = [0i32; MAX_DIM];
                for j in 0..MAX_DIM {
                    nk[j] = -k[j];
                }
                entries.push((k, poly.clone()));
                entries.push((nk, poly.conj()));
            }
        }
        FourierTaylor::from_modes(n, &xi, k_max, degree, (0.1, 1.0), entries)
    }

    #[test]
    fn mean_and_tilde_split() {
        let f = cos_k(1, 1.0, 0.5);
        assert_eq!(f.mean_part().max_coeff(), 0.0);
        let g = FourierTaylor::from_modes(
            1,
            &[0.5],
            2,
            0,
            (0.2, 1.0),
            vec![
                (mode1(0), ActionPoly::constant(1, Complex64::new(3.0, 0.0))),
                (mode1(1), ActionPoly::constant(1, Complex64::new(0.5, 0.0))),
                (mode1(-1), ActionPoly::constant(1, Complex64::new(0.5, 0.0))),
            ],
        );
        assert_eq!(g.mean_part().coeffs()[0], Complex64::new(3.0, 0.0));
        let tilde = g.tilde_part();
        assert!(tilde.mode(&mode1(0)).is_none());
        // identity f = tilde + mean on a grid
        for i in 0..64 {
            let th = TAU * i as f64 / 64.0;
            let whole = g.eval(&[0.5], &[th]);
            let split = tilde.eval(&[0.5], &[th]) + g.mean_part().eval(&[0.0]).re;
            assert!((whole - split).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_of_linear_action_term() {
        // f = 2 (I - xi) + sin theta -> mean is the linear polynomial
        let lin = ActionPoly::from_coeffs(1, 1, vec![Complex64::ZERO, Complex64::new(2.0, 0.0)]);
        let half_sin = Complex64::new(0.0, -0.5);
        let f = FourierTaylor::from_modes(
            1,
            &[0.4],
            1,
            1,
            (0.2, 1.0),
            vec![
                (mode1(0), lin),
                (mode1(1), ActionPoly::constant(1, half_sin)),
                (mode1(-1), ActionPoly::constant(1, half_sin.conj())),
            ],
        );
        let mean = f.mean_part();
        assert_eq!(mean.coeffs()[0], Complex64::ZERO);
        assert_eq!(mean.coeffs()[1], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn truncate_modes_examples() {
        let f = cos_k(2, 1.0, 0.5);
        assert!(f.truncate_modes(1).is_zero());
        let g = cos_k(1, 1.0, 0.5).add(&cos_k(3, 1.0, 0.5));
        let t = g.truncate_modes(2);
        assert!(t.mode(&mode1(3)).is_none());
        assert!(t.mode(&mode1(1)).is_some());
    }

    #[test]
    fn truncation_error_bounded_by_geometric_tail() {
        // f = sum 2^{-|k|} e^{i k theta}: sup error of T_K on the real line
        // is at most the tail sum 2 sum_{k>K} 2^{-k}
        let k_full = 14;
        let mut entries = vec![(mode1(0), ActionPoly::constant(1, Complex64::ONE))];
        for k in 1..=k_full {
            let c = Complex64::new(2f64.powi(-k), 0.0);
            entries.push((mode1(k), ActionPoly::constant(1, c)));
            entries.push((mode1(-k), ActionPoly::constant(1, c)));
        }
        let f = FourierTaylor::from_modes(1, &[0.5], k_full as usize, 0, (0.1, 1.0), entries);
        for k_cut in [2usize, 4, 8] {
            let t = f.truncate_modes(k_cut);
            let tail: f64 = (k_cut as i32 + 1..=k_full).map(|k| 2.0 * 2f64.powi(-k)).sum();
            let mut sup = 0.0f64;
            for i in 0..512 {
                let th = TAU * i as f64 / 512.0;
                sup = sup.max((f.eval(&[0.5], &[th]) - t.eval(&[0.5], &[th])).abs());
            }
            assert!(sup <= tail + 1e-14, "K={k_cut}: sup {sup} > tail {tail}");
        }
    }

    #[test]
    fn truncation_error_decreases_in_k() {
        // analytic test function: coefficients e^{-0.7 |k|}
        let mut entries = Vec::new();
        for k in 1..=16 {
            let c = Complex64::new((-0.7 * k as f64).exp(), 0.0);
            entries.push((mode1(k), ActionPoly::constant(1, c)));
            entries.push((mode1(-k), ActionPoly::constant(1, c)));
        }
        let f = FourierTaylor::from_modes(1, &[0.5], 16, 0, (0.1, 1.0), entries);
        let mut prev = f64::INFINITY;
        for k_cut in [2usize, 4, 6, 8, 10] {
            let t = f.truncate_modes(k_cut);
            let mut sup = 0.0f64;
            for i in 0..256 {
                let th = TAU * i as f64 / 256.0;
                sup = sup.max((f.eval(&[0.5], &[th]) - t.eval(&[0.5], &[th])).abs());
            }
            assert!(sup < prev, "sup error must decrease monotonically in K");
            prev = sup;
        }
    }

    #[test]
    fn truncate_action_examples() {
        // affine in I stays put at d' = 1
        let lin = ActionPoly::from_coeffs(1, 1, vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        let f = FourierTaylor::from_modes(1, &[0.5], 1, 1, (0.2, 1.0), vec![(mode1(0), lin.clone())]);
        let t = f.truncate_action(1);
        assert_eq!(t.mean_part().coeffs(), lin.coeffs());
        // (I - xi)^2 cos theta dies at d' = 1
        let quad = ActionPoly::from_coeffs(
            1,
            2,
            vec![Complex64::ZERO, Complex64::ZERO, Complex64::new(0.5, 0.0)],
        );
        let g = FourierTaylor::from_modes(
            1,
            &[0.5],
            1,
            2,
            (0.2, 1.0),
            vec![(mode1(1), quad.clone()), (mode1(-1), quad)],
        );
        assert!(g.truncate_action(1).is_zero());
        // evaluation at I = xi* invariant under any truncation
        let mixed = g.add(&f);
        for d in 0..=2usize {
            let v = mixed.truncate_action(d).eval(&[0.5], &[1.3]);
            assert!((v - mixed.eval(&[0.5], &[1.3])).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let f = random_band_limited(&mut rng, 1, 6, 2);
        let da = f.derivative_action(0);
        let dq = f.derivative_angle(0);
        let xi = f.xi_star()[0];
        for _ in 0..50 {
            let i = [xi + rng.gen_range(-0.05..0.05)];
            let th = [rng.gen_range(0.0..TAU)];
            let h = 1e-6;
            let fd_a = (f.eval(&[i[0] + h], &th) - f.eval(&[i[0] - h], &th)) / (2.0 * h);
            let fd_q = (f.eval(&i, &[th[0] + h]) - f.eval(&i, &[th[0] - h])) / (2.0 * h);
            assert!((da.eval(&i, &th) - fd_a).abs() < 1e-7, "action derivative");
            assert!((dq.eval(&i, &th) - fd_q).abs() < 1e-7, "angle derivative");
        }
    }

    #[test]
    fn derivative_examples() {
        // d_theta sin = cos
        let half_sin = Complex64::new(0.0, -0.5);
        let f = FourierTaylor::from_modes(
            1,
            &[0.5],
            1,
            0,
            (0.2, 1.0),
            vec![
                (mode1(1), ActionPoly::constant(1, half_sin)),
                (mode1(-1), ActionPoly::constant(1, half_sin.conj())),
            ],
        );
        let d = f.derivative_angle(0);
        for th in [0.0, 0.7, 2.9] {
            assert!((d.eval(&[0.5], &[th]) - th.cos()).abs() < 1e-14);
        }
        // d_I [(I - xi) cos theta] = cos theta
        let lin = ActionPoly::from_coeffs(1, 1, vec![Complex64::ZERO, Complex64::new(0.5, 0.0)]);
        let g = FourierTaylor::from_modes(
            1,
            &[0.5],
            1,
            1,
            (0.2, 1.0),
            vec![(mode1(1), lin.clone()), (mode1(-1), lin)],
        );
        let dg = g.derivative_action(0);
        for th in [0.0, 1.1] {
            assert!((dg.eval(&[0.77], &[th]) - th.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_recovers_cosine() {
        let samples = sample_grid(&|_: &[f64], th: &[f64]| th[0].cos(), &[0.5], 4, 0, 0.0, 4).unwrap();
        let f = fit_from_grid(&samples, &[0.5], 4, 0, (0.1, 1.0)).unwrap();
        assert_eq!(f.n_modes(), 2);
        let c = f.mode(&mode1(1)).unwrap().coeffs()[0];
        assert!((c - Complex64::new(0.5, 0.0)).norm() < 1e-13, "c = {c}");
    }

    #[test]
    fn fit_constant_has_only_mean() {
        let samples = sample_grid(&|_: &[f64], _: &[f64]| 2.5, &[0.5], 4, 0, 0.0, 4).unwrap();
        let f = fit_from_grid(&samples, &[0.5], 4, 0, (0.1, 1.0)).unwrap();
        assert_eq!(f.n_modes(), 1);
        assert_eq!(f.mean_part().coeffs()[0], Complex64::new(2.5, 0.0));
    }

    #[test]
    fn fit_round_trip_random_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=2usize {
            let f = random_band_limited(&mut rng, n, 3, 1);
            let g = |p: &[f64], q: &[f64]| f.eval(p, q);
            let fitted = fit_function(g, f.xi_star(), 3, 1, 0.05, 4, (0.1, 1.0)).unwrap();
            for (k, poly) in f.modes() {
                let other = fitted
                    .mode(k)
                    .cloned()
                    .unwrap_or_else(|| ActionPoly::zero(n, poly.degree()));
                let diff = poly.add(&other.scale(Complex64::new(-1.0, 0.0)));
                assert!(diff.max_coeff() < 1e-12, "n={n} mode {k:?}: {}", diff.max_coeff());
            }
        }
    }

    #[test]
    fn fit_rejects_undersized_grid() {
        let samples = GridSamples {
            n: 1,
            angle_sizes: vec![8],
            action_nodes: vec![vec![0.5]],
            values: vec![vec![0.0; 8]],
        };
        assert!(matches!(
            fit_from_grid(&samples, &[0.5], 6, 0, (0.1, 1.0)),
            Err(Error::Alias { .. })
        ));
    }

    #[test]
    fn sup_norm_examples() {
        let f = cos_k(1, 1.0, 0.5);
        assert!((f.sup_norm_estimate(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((f.sup_norm_estimate(0.0, 2f64.ln()) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sup_norm_bounds_grid_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let f = random_band_limited(&mut rng, 1, 5, 1);
            let bound = f.sup_norm_estimate(0.03, 0.0);
            let mut grid_max = 0.0f64;
            for i in 0..256 {
                let th = TAU * i as f64 / 256.0;
                for da in [-0.03, 0.0, 0.03] {
                    grid_max = grid_max.max(f.eval(&[f.xi_star()[0] + da], &[th]).abs());
                }
            }
            assert!(bound >= grid_max - 1e-12, "bound {bound} < grid max {grid_max}");
        }
    }

    #[test]
    fn fitted_coefficients_decay_like_the_sampled_function() {
        // f(theta) = sum e^{-s0 |k|} cos(k theta) built from a closed form:
        // the Poisson kernel form keeps it analytic with strip s0
        let s0 = 0.8f64;
        let g = |_: &[f64], th: &[f64]| {
            let r = (-s0).exp();
            let c = th[0].cos();
            (1.0 - r * c) / (1.0 + r * r - 2.0 * r * c)
        };
        let fitted = fit_function(g, &[0.5], 24, 0, 0.0, 4, (0.1, 1.0)).unwrap();
        // measured log-slope of |f_k| should be at least 0.9 s0
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 1..=12 {
            let c = fitted.mode(&mode1(k)).map(|p| p.max_coeff()).unwrap_or(0.0);
            if c > 1e-14 {
                xs.push(k as f64);
                ys.push(c.ln());
            }
        }
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(-slope >= 0.9 * s0, "decay slope {} vs strip {s0}", -slope);
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_band_limited(&mut rng, 2, 3, 1);
        let json = serde_json::to_string(&f).unwrap();
        let g: FourierTaylor = serde_json::from_str(&json).unwrap();
        for (k, poly) in f.modes() {
            let other = g.mode(k).unwrap();
            for (a, b) in poly.coeffs().iter().zip(other.coeffs().iter()) {
                assert!((a - b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn eval_angle_grid_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = random_band_limited(&mut rng, 2, 3, 1);
        let sizes = [12usize, 10];
        let grid = f.eval_angle_grid(&[f.xi_star()[0], f.xi_star()[1]], &sizes);
        let pts = angle_grid_points(&sizes);
        for (g, th) in grid.iter().zip(pts.iter()) {
            let direct = f.eval(f.xi_star(), th);
            assert!((g - direct).abs() < 1e-12, "{g} vs {direct}");
        }
    }

    #[test]
    fn zero_function_evaluates_to_zero() {
        let f = FourierTaylor::zero(2, &[0.3, 0.4], 4, 1, (0.1, 1.0));
        assert_eq!(f.eval(&[0.3, 0.4], &[1.0, 2.0]), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// add/scale act linearly on grid evaluations.
        #[test]
        fn algebra_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_limited(&mut rng, 1, 4, 1);
            let g = {
                let mut rng2 = ChaCha8Rng::seed_from_u64(seed + 7777);
                let mut g = random_band_limited(&mut rng2, 1, 4, 1);
                // align reference actions so addition is well defined
                g = FourierTaylor::from_modes(
                    1,
                    f.xi_star(),
                    g.k_max(),
                    g.degree(),
                    g.radii(),
                    g.modes().map(|(k, p)| (*k, p.clone())).collect(),
                );
                g
            };
            let combo = f.scale(a).add(&g.scale(b));
            for i in 0..16 {
                let th = TAU * i as f64 / 16.0;
                let x = [f.xi_star()[0] + 0.01];
                let lhs = combo.eval(&x, &[th]);
                let rhs = a * f.eval(&x, &[th]) + b * g.eval(&x, &[th]);
                prop_assert!((lhs - rhs).abs() < 1e-10);
            }
        }

        /// reality defect stays at zero through operations.
        #[test]
        fn reality_is_preserved(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_limited(&mut rng, 1, 5, 1);
            prop_assert!(f.reality_defect() < 1e-12);
            prop_assert!(f.derivative_angle(0).reality_defect() < 1e-12);
            prop_assert!(f.derivative_action(0).reality_defect() < 1e-12);
            prop_assert!(f.tilde_part().reality_defect() < 1e-12);
            prop_assert!(f.truncate_modes(2).reality_defect() < 1e-12);
        }

        /// imaginary parts vanish on real arguments.
        #[test]
        fn values_are_real(seed in 0u64..1000, th in 0.0f64..TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_limited(&mut rng, 1, 5, 1);
            let v = f.eval_complex(&[f.xi_star()[0] + 0.02], &[th]);
            prop_assert!(v.im.abs() < 1e-12 * (1.0 + v.re.abs()));
        }
    }

    #[test]
    fn exponent_enumeration_orders() {
        assert_eq!(exponents(1, 2), vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        assert_eq!(
            exponents(2, 1),
            vec![[0, 0, 0], [1, 0, 0], [0, 1, 0]]
        );
        assert_eq!(exponents(2, 2).len(), 6);
    }

    #[test]
    fn mode_enumeration_counts() {
        // |k|_1 <= K in dimension 2: 2K^2 + 2K + 1 lattice points
        let m = enumerate_modes(2, 3);
        assert_eq!(m.len(), 2 * 9 + 2 * 3 + 1);
    }

    #[test]
    fn fft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sizes = [6usize, 5];
        let total = 30;
        let data: Vec<Complex64> = (0..total)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut fwd_in = data.clone();
        let spec = forward_fft_nd(&mut fwd_in, &sizes);
        let mut inv_in = spec.clone();
        let back = inverse_fft_nd(&mut inv_in, &sizes);
        for (a, b) in data.iter().zip(back.iter()) {
            assert!((a - b / total as f64).norm() < 1e-12);
        }
    }

    #[test]
    fn collocation_nodes_are_symmetric() {
        let nodes = collocation_nodes(2, 0.05);
        assert_eq!(nodes.len(), 3);
        assert_eq!(nodes[1], 0.0);
        assert!((nodes[0] + nodes[2]).abs() < 1e-15);
        assert_eq!(collocation_nodes(0, 0.05), vec![0.0]);
    }
}
