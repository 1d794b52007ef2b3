//! Diophantine admissibility sets over actions and step sizes,
//! non-degeneracy diagnostics, and the measure-vs-gamma scaling law.
//!
//! Admissibility is the time-discrete condition
//! |e^{i<k, t w>} - 1| >= t gamma / |k|^tau for all 0 < |k| <= Kmax, tested
//! by brute force at grid-cell centers. The nearest-integer resonance label
//! l = round(<k, t w> / 2 pi) is reported for every violation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::enumerate_modes;
use crate::homological::small_divisor;
use crate::models::HamiltonianModel;
use crate::verify::{order_fit, OrderFit};

/// Uniform box grid; admissibility is sampled at cell centers.
#[derive(Debug, Clone, Serialize)]
pub struct BoxGrid {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub cells: Vec<usize>,
}

impl BoxGrid {
    pub fn new(min: Vec<f64>, max: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if min.len() != max.len() || min.len() != cells.len() || min.is_empty() {
            return Err(Error::Param("grid min/max/cells must share a nonzero length".into()));
        }
        for ((&lo, &hi), &c) in min.iter().zip(max.iter()).zip(cells.iter()) {
            if !(lo < hi) || c == 0 {
                return Err(Error::Param(format!("bad grid axis [{lo}, {hi}] x {c}")));
            }
        }
        Ok(BoxGrid { min, max, cells })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn total(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.min
            .iter()
            .zip(self.max.iter())
            .map(|(&lo, &hi)| hi - lo)
            .product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.total() as f64
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut idx = vec![0usize; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = rem % self.cells[axis];
            rem /= self.cells[axis];
        }
        (0..self.dim())
            .map(|a| {
                let h = (self.max[a] - self.min[a]) / self.cells[a] as f64;
                self.min[a] + (idx[a] as f64 + 0.5) * h
            })
            .collect()
    }
}

/// Sieve floor parameters; gamma = 0 excludes exact resonances only.
#[derive(Debug, Clone, Serialize)]
pub struct SieveParams {
    pub gamma: f64,
    pub tau: f64,
    pub t: f64,
    pub k_max: usize,
}

/// Worst resonance data at one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceInfo {
    pub k: Vec<i32>,
    pub l: i64,
    /// divisor / floor; < 1 at excluded points (0/0 resonances report 0).
    pub margin: f64,
}

/// One grid cell of a sieve.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub index: usize,
    pub center: Vec<f64>,
    pub admissible: bool,
    pub worst: ResonanceInfo,
}

/// Admissible set of a parameter grid with its excluded-measure estimate.
#[derive(Debug, Clone, Serialize)]
pub struct SieveResult {
    pub grid: BoxGrid,
    pub params: SieveParams,
    pub admissible_count: usize,
    pub excluded_count: usize,
    pub excluded_fraction: f64,
    pub excluded_measure: f64,
    /// Violated (k, l) pairs with the number of cells they exclude.
    pub ledger: Vec<LedgerRow>,
    #[serde(skip)]
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerRow {
    pub k: Vec<i32>,
    pub l: i64,
    pub cells: usize,
}

/// Test one frequency point; returns the worst resonance over the scan.
pub fn scan_point(t_omega: &[f64], params: &SieveParams) -> ResonanceInfo {
    let n = t_omega.len();
    let mut worst = ResonanceInfo { k: vec![0; n], l: 0, margin: f64::INFINITY };
    for k in enumerate_modes(n, params.k_max) {
        if k.iter().all(|&c| c == 0) {
            continue;
        }
        let first = k.iter().find(|&&c| c != 0).copied().unwrap_or(0);
        if first < 0 {
            continue;
        }
        let div = small_divisor(&k[..n], t_omega).expect("nonzero k");
        let order: i32 = k[..n].iter().map(|c| c.abs()).sum();
        let floor = params.t * params.gamma / (order as f64).powf(params.tau);
        let margin = if floor > 0.0 {
            div / floor
        } else if div == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if margin < worst.margin {
            let phase: f64 = k[..n]
                .iter()
                .zip(t_omega.iter())
                .map(|(&c, &w)| c as f64 * w)
                .sum();
            worst = ResonanceInfo {
                k: k[..n].to_vec(),
                l: (phase / std::f64::consts::TAU).round() as i64,
                margin,
            };
        }
    }
    worst
}

/// A point is admissible if its worst margin reaches 1 (gamma = 0: only
/// exact resonances fail).
pub fn point_admissible(t_omega: &[f64], params: &SieveParams) -> bool {
    scan_point(t_omega, params).margin >= 1.0
}

/// Mark every cell of an action grid by the Diophantine test at its center.
pub fn sieve_actions<F>(freq: F, grid: BoxGrid, params: SieveParams) -> SieveResult
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let total = grid.total();
    let cells: Vec<CellRecord> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let center = grid.center(flat);
            let omega = freq(&center);
            let t_omega: Vec<f64> = omega.iter().map(|w| w * params.t).collect();
            let worst = scan_point(&t_omega, &params);
            CellRecord {
                index: flat,
                center,
                admissible: worst.margin >= 1.0,
                worst,
            }
        })
        .collect();
    finish_sieve(grid, params, cells)
}

fn finish_sieve(grid: BoxGrid, params: SieveParams, cells: Vec<CellRecord>) -> SieveResult {
    let excluded_count = cells.iter().filter(|c| !c.admissible).count();
    let admissible_count = cells.len() - excluded_count;
    let excluded_fraction = excluded_count as f64 / cells.len() as f64;
    let excluded_measure = excluded_fraction * grid.volume();
    let mut ledger: Vec<LedgerRow> = Vec::new();
    for cell in cells.iter().filter(|c| !c.admissible) {
        match ledger
            .iter_mut()
            .find(|row| row.k == cell.worst.k && row.l == cell.worst.l)
        {
            Some(row) => row.cells += 1,
            None => ledger.push(LedgerRow {
                k: cell.worst.k.clone(),
                l: cell.worst.l,
                cells: 1,
            }),
        }
    }
    SieveResult {
        grid,
        params,
        admissible_count,
        excluded_count,
        excluded_fraction,
        excluded_measure,
        ledger,
        cells,
    }
}

impl SieveResult {
    /// One row per cell: coordinates, admissible flag, worst (k, l), margin.
    pub fn to_csv(&self) -> String {
        let dim = self.grid.dim();
        let mut out = String::new();
        for a in 0..dim {
            out.push_str(&format!("x{a},"));
        }
        out.push_str("admissible,worst_k,worst_l,margin\n");
        for cell in &self.cells {
            for x in &cell.center {
                out.push_str(&format!("{x},"));
            }
            let kstr = cell
                .worst
                .k
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{},{}\n",
                cell.admissible as u8, kstr, cell.worst.l, cell.worst.margin
            ));
        }
        out
    }
}

/// Excluded measure as a function of gamma with a log-log fit; the paper's
/// bound is linear in gamma, so the expected slope is 1.
#[derive(Debug, Clone, Serialize)]
pub struct GammaSweep {
    pub rows: Vec<GammaRow>,
    /// Present when at least three gammas produced nonzero exclusions.
    pub fit: Option<OrderFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub excluded_fraction: f64,
    pub excluded_measure: f64,
}

pub fn measure_vs_gamma<F>(
    freq: F,
    grid: &BoxGrid,
    t: f64,
    tau: f64,
    k_max: usize,
    gammas: &[f64],
) -> Result<GammaSweep>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if gammas.is_empty() {
        return Err(Error::Param("gamma list must not be empty".into()));
    }
    // the scan is gamma-independent up to the floor; compute worst margins
    // per cell at gamma = 1 once and rescale
    let base = SieveParams { gamma: 1.0, tau, t, k_max };
    let total = grid.total();
    let margins: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let center = grid.center(flat);
            let omega = freq(&center);
            let t_omega: Vec<f64> = omega.iter().map(|w| w * t).collect();
            scan_point(&t_omega, &base).margin
        })
        .collect();
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        if gamma <= 0.0 {
            return Err(Error::Param("gamma sweep requires positive gammas".into()));
        }
        // margin at gamma g = margin at 1 times 1/g
        let excluded = margins.iter().filter(|&&m| m / gamma < 1.0).count();
        let fraction = excluded as f64 / total as f64;
        rows.push(GammaRow {
            gamma,
            excluded_fraction: fraction,
            excluded_measure: fraction * grid.volume(),
        });
    }
    if rows.iter().all(|r| r.excluded_measure == 0.0) {
        return Err(Error::Fit(
            "excluded measure vanished for every gamma: grid too coarse".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.excluded_measure > 0.0)
        .map(|r| (r.gamma, r.excluded_measure))
        .collect();
    let fit = if pts.len() >= 3 {
        Some(order_fit(
            &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(GammaSweep { rows, fit })
}

/// Step-size sieve over (0, delta] at a fixed action, with the admissible
/// density on shrinking prefixes (0, delta'].
#[derive(Debug, Clone, Serialize)]
pub struct StepSieve {
    pub omega: Vec<f64>,
    pub delta: f64,
    pub resolution: usize,
    pub gamma: f64,
    pub tau: f64,
    pub k_max: usize,
    pub admissible_fraction: f64,
    pub densities: Vec<DensityRow>,
    #[serde(skip)]
    pub admissible: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityRow {
    pub delta_prime: f64,
    pub density: f64,
}

pub fn sieve_steps(
    omega: &[f64],
    delta: f64,
    resolution: usize,
    gamma: f64,
    tau: f64,
    k_max: usize,
) -> Result<StepSieve> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Param(format!("delta must lie in (0, 1], got {delta}")));
    }
    if resolution < 2 {
        return Err(Error::Param("step sieve needs at least 2 points".into()));
    }
    let admissible: Vec<bool> = (0..resolution)
        .into_par_iter()
        .map(|i| {
            let t = delta * (i as f64 + 0.5) / resolution as f64;
            let params = SieveParams { gamma, tau, t, k_max };
            let t_omega: Vec<f64> = omega.iter().map(|w| w * t).collect();
            point_admissible(&t_omega, &params)
        })
        .collect();
    let mut densities = Vec::new();
    let mut cuts: Vec<f64> = (0..8).map(|j| delta / 2f64.powi(j)).collect();
    cuts.push(delta / 10.0);
    cuts.push(delta / 100.0);
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    for cut in cuts {
        let limit = ((cut / delta) * resolution as f64).round() as usize;
        if limit == 0 {
            continue;
        }
        let ok = admissible[..limit].iter().filter(|&&a| a).count();
        densities.push(DensityRow {
            delta_prime: cut,
            density: ok as f64 / limit as f64,
        });
    }
    let total_ok = admissible.iter().filter(|&&a| a).count();
    Ok(StepSieve {
        omega: omega.to_vec(),
        delta,
        resolution,
        gamma,
        tau,
        k_max,
        admissible_fraction: total_ok as f64 / resolution as f64,
        densities,
        admissible,
    })
}

/// Index and amount of non-degeneracy of a frequency map over a grid:
/// directional derivatives of <k, w(xi)> up to order nbar along the grid
/// axes, minimized over the grid and maximized over orders.
pub fn ruessmann_index<F>(
    freq: F,
    grid: &BoxGrid,
    nbar_max: u32,
    k_samples: &[Vec<i32>],
    threshold: f64,
) -> Result<(u32, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if k_samples.is_empty() {
        return Err(Error::Param("empty k sample set".into()));
    }
    // tabulate <k, w> on the grid per sampled k
    let sizes = grid.cells.clone();
    let total = grid.total();
    let mut best: Option<(u32, f64)> = None;
    for nbar in 0..=nbar_max {
        let mut beta: f64 = f64::INFINITY;
        let mut all_pass = true;
        for k in k_samples {
            let values: Vec<f64> = (0..total)
                .map(|flat| {
                    let xi = grid.center(flat);
                    let w = freq(&xi);
                    k.iter().zip(w.iter()).map(|(&c, &wj)| c as f64 * wj).sum()
                })
                .collect();
            let order: i32 = k.iter().map(|c| c.abs()).sum();
            let minmax = grid_min_max_derivative(&values, &sizes, grid, nbar)?;
            if minmax <= threshold {
                all_pass = false;
                break;
            }
            beta = beta.min(minmax / order as f64);
        }
        if all_pass {
            best = Some((nbar, beta));
            break;
        }
    }
    best.ok_or_else(|| {
        Error::Degenerate(format!(
            "frequency image fails non-degeneracy through order {nbar_max}: \
             some <k, w> lies below {threshold} with all sampled derivatives"
        ))
    })
}

/// min over interior grid points of max over derivative orders 0..=nbar
/// (iterated central differences along each axis) of |D^u f|.
fn grid_min_max_derivative(values: &[f64], sizes: &[usize], grid: &BoxGrid, nbar: u32) -> Result<f64> {
    let n = sizes.len();
    let spacing: Vec<f64> = (0..n)
        .map(|a| (grid.max[a] - grid.min[a]) / sizes[a] as f64)
        .collect();
    for (a, &s) in sizes.iter().enumerate() {
        if s < 2 * nbar as usize + 1 {
            return Err(Error::Param(format!(
                "grid axis {a} too coarse for order-{nbar} differences"
            )));
        }
    }
    // derivative tables per axis and order: D^0 = values
    let strides: Vec<usize> = (0..n)
        .map(|a| sizes[a + 1..].iter().product::<usize>())
        .collect();
    let margin = nbar as usize;
    let mut result: f64 = f64::INFINITY;
    let total = values.len();
    for flat in 0..total {
        // interior check
        let mut rem = flat;
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = rem % sizes[a];
            rem /= sizes[a];
        }
        if idx
            .iter()
            .zip(sizes.iter())
            .any(|(&i, &s)| i < margin || i + margin >= s)
        {
            continue;
        }
        let mut maxd = values[flat].abs();
        for a in 0..n {
            // iterated central differences along axis a
            let mut line: Vec<f64> = (-(margin as isize)..=margin as isize)
                .map(|off| values[(flat as isize + off * strides[a] as isize) as usize])
                .collect();
            for order in 1..=nbar {
                let mut next = Vec::with_capacity(line.len() - 2);
                for i in 1..line.len() - 1 {
                    next.push((line[i + 1] - line[i - 1]) / (2.0 * spacing[a]));
                }
                line = next;
                let mid = line.len() / 2;
                if order <= nbar {
                    maxd = maxd.max(line[mid].abs());
                }
            }
        }
        result = result.min(maxd);
    }
    if result.is_infinite() {
        return Err(Error::Param("grid has no interior points for differencing".into()));
    }
    Ok(result)
}

/// Sign-vertex wavevectors augmented with the coordinate axes; the default
/// sample set for [`ruessmann_index`].
pub fn default_k_samples(n: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    // vertices with first component +1 (the mirror image has the same data)
    let count = 1usize << (n - 1);
    for bits in 0..count {
        let mut k = vec![1i32; n];
        for (axis, kj) in k.iter_mut().enumerate().skip(1) {
            if (bits >> (axis - 1)) & 1 == 1 {
                *kj = -1;
            }
        }
        out.push(k);
    }
    if n > 1 {
        for axis in 0..n {
            let mut k = vec![0i32; n];
            k[axis] = 1;
            out.push(k);
        }
    }
    out
}

/// Bi-Lipschitz bounds of the frequency map: extreme singular values of
/// D omega over the grid.
pub fn kolmogorov_bounds(model: &HamiltonianModel, grid: &BoxGrid) -> Result<(f64, f64)> {
    let n = model.dim;
    let mut theta1: f64 = f64::INFINITY;
    let mut theta2: f64 = 0.0;
    for flat in 0..grid.total() {
        let xi = grid.center(flat);
        let h = model.hessian(&xi);
        let m = nalgebra::DMatrix::from_row_slice(n, n, &h);
        let svd = m.svd(false, false);
        for s in svd.singular_values.iter() {
            theta1 = theta1.min(*s);
            theta2 = theta2.max(*s);
        }
    }
    if theta1 < 1e-10 {
        return Err(Error::Degenerate(format!(
            "frequency map is not locally invertible: smallest singular value {theta1:.3e}"
        )));
    }
    Ok((theta1, theta2))
}
