//! Error types shared across the engine.

use thiserror::Error;

/// Errors raised by model evaluation, spectral fitting, contraction solves
/// and the iteration driver.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A point lies outside the declared action domain or annulus.
    #[error("domain error: {0}")]
    Domain(String),

    /// An angle grid is too small to resolve the requested mode cutoff.
    #[error("alias error: grid size {grid} cannot resolve modes up to K={k_max}")]
    Alias { grid: usize, k_max: usize },

    /// A fixed-point or Newton solve failed to reach its tolerance.
    #[error("no convergence in {context}: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        context: &'static str,
        residual: f64,
        iterations: usize,
    },

    /// A retained Fourier mode sits below the Diophantine floor; the
    /// frequency is not admissible at the current gamma level.
    #[error("small divisor violation at k={k:?}: |e^(i<k,t w>)-1| = {value:.3e} < floor {floor:.3e}")]
    SmallDivisorViolation { k: Vec<i32>, value: f64, floor: f64 },

    /// The zero wavevector has no divisor.
    #[error("zero wavevector has no small divisor")]
    ZeroWavevector,

    /// Gradient components of an extracted generating function disagree.
    #[error("inconsistent gradient reconstruction: residual {residual:.3e} exceeds tol {tol:.3e}")]
    InconsistentGradient { residual: f64, tol: f64 },

    /// The iteration stopped contracting: the new perturbation norm exceeds
    /// the previous one.
    #[error("schedule blowup at step {v}: E_{{v+1}} = {e_next:.3e} > E_v = {e_prev:.3e}")]
    ScheduleBlowup { v: usize, e_next: f64, e_prev: f64 },

    /// A frequency map fails the requested non-degeneracy diagnostic.
    #[error("degenerate frequency map: {0}")]
    Degenerate(String),

    /// A comparison was skipped because the action is not admissible for
    /// one of the sieves involved.
    #[error("skipped: action not admissible ({0})")]
    SkippedNotAdmissible(String),

    /// A scaling-law fit could not be performed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Out-of-range schedule or configuration parameters.
    #[error("parameter error: {0}")]
    Param(String),
}

pub type Result<T> = std::result::Result<T, Error>;
