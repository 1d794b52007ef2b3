//! Experiment configuration: a single TOML file with nested sections.
//! Defaults are materialized at load time so reports echo the full
//! resolved configuration and reproduce from it alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kamcore::{NondegMode, RunConfig, ScheduleParams};
use crate::models::{builtin, validate_model, HamiltonianModel};
use crate::verify::Scheme;

/// Schema version stamped into every report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub kam: KamConfig,
    #[serde(default)]
    pub sieve: SieveConfig,
    #[serde(default)]
    pub order: OrderConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_mode() -> String {
    "ruessmann".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Name of a bundled model; leave empty to define a custom one.
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub h0: Option<Vec<crate::models::PolyTerm>>,
    #[serde(default)]
    pub h1: Option<Vec<crate::models::TrigTerm>>,
    #[serde(default)]
    pub action_domain: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub radii: Option<(f64, f64)>,
    #[serde(default)]
    pub m1_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KamConfig {
    pub epsilon: f64,
    pub step_sizes: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub gamma: f64,
    pub tau: f64,
    pub nbar: u32,
    pub k0: usize,
    pub s0: f64,
    pub r0: f64,
    pub v_max: usize,
    pub target: f64,
    pub fit_degree: usize,
    pub k_fit_cap: usize,
    pub oversample: usize,
    pub scheme: String,
    /// Grid for the reported conjugacy residual.
    pub residual_grid: usize,
    /// Skip (exit 0) rather than fail when an action is inadmissible.
    pub skip_inadmissible: bool,
}

impl Default for KamConfig {
    fn default() -> Self {
        KamConfig {
            epsilon: 1e-3,
            step_sizes: vec![0.1],
            actions: vec![vec![0.618]],
            gamma: 1e-2,
            tau: 3.0,
            nbar: 0,
            k0: 8,
            s0: 2.0,
            r0: 0.05,
            v_max: 12,
            target: 1e-11,
            fit_degree: 2,
            k_fit_cap: 512,
            oversample: 4,
            scheme: "symplectic-euler".into(),
            residual_grid: 128,
            skip_inadmissible: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SieveConfig {
    pub t: f64,
    pub gamma: f64,
    pub tau: f64,
    pub k_max: usize,
    pub grid_min: Vec<f64>,
    pub grid_max: Vec<f64>,
    pub grid_cells: Vec<usize>,
    pub gammas: Vec<f64>,
    pub delta: f64,
    pub resolution: usize,
    pub xi: Vec<f64>,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig {
            t: 0.1,
            gamma: 1e-2,
            tau: 3.0,
            k_max: 100,
            grid_min: vec![],
            grid_max: vec![],
            grid_cells: vec![],
            gammas: vec![],
            delta: 1.0,
            resolution: 20_000,
            xi: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderConfig {
    pub epsilon: f64,
    pub xi: Vec<f64>,
    pub t_list: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub scheme: String,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            epsilon: 1e-3,
            xi: vec![0.618],
            t_list: vec![0.2, 0.1, 0.05, 0.025],
            pairs: vec![(0.2, 0.1), (0.1, 0.05)],
            scheme: "symplectic-euler".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// 0 means one worker per processor.
    pub workers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), workers: 0 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Param(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Param(format!("config parse error in {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.nondeg_mode()?;
        self.resolve_model()?;
        let k = &self.kam;
        if k.epsilon < 0.0 {
            return Err(Error::Param(format!("kam.epsilon must be >= 0, got {}", k.epsilon)));
        }
        if !(k.gamma > 0.0 && k.gamma < 1.0) {
            return Err(Error::Param(format!("kam.gamma must lie in (0, 1), got {}", k.gamma)));
        }
        if k.step_sizes.iter().any(|&t| t <= 0.0) {
            return Err(Error::Param("kam.step_sizes must be positive".into()));
        }
        if k.fit_degree == 0 || k.fit_degree > 2 {
            return Err(Error::Param("kam.fit_degree must be 1 or 2".into()));
        }
        if self.sieve.gamma < 0.0 {
            return Err(Error::Param("sieve.gamma must be >= 0".into()));
        }
        if self.sieve.gammas.iter().any(|&g| g <= 0.0) {
            return Err(Error::Param("sieve.gammas must be positive".into()));
        }
        scheme_from(&self.kam.scheme)?;
        scheme_from(&self.order.scheme)?;
        Ok(())
    }

    pub fn nondeg_mode(&self) -> Result<NondegMode> {
        match self.mode.as_str() {
            "ruessmann" => Ok(NondegMode::Ruessmann),
            "kolmogorov" => Ok(NondegMode::Kolmogorov),
            other => Err(Error::Param(format!(
                "mode must be \"ruessmann\" or \"kolmogorov\", got \"{other}\""
            ))),
        }
    }

    pub fn resolve_model(&self) -> Result<HamiltonianModel> {
        if !self.model.name.is_empty() {
            return builtin(&self.model.name).ok_or_else(|| {
                Error::Param(format!(
                    "unknown model \"{}\"; bundled: {}",
                    self.model.name,
                    crate::models::builtin_models()
                        .iter()
                        .map(|m| m.name.clone())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            });
        }
        let dim = self
            .model
            .dim
            .ok_or_else(|| Error::Param("custom model needs model.dim".into()))?;
        let model = HamiltonianModel {
            name: "custom".into(),
            dim,
            h0: self
                .model
                .h0
                .clone()
                .ok_or_else(|| Error::Param("custom model needs model.h0".into()))?,
            h1: self.model.h1.clone().unwrap_or_default(),
            action_domain: self
                .model
                .action_domain
                .clone()
                .ok_or_else(|| Error::Param("custom model needs model.action_domain".into()))?,
            radii: self.model.radii.unwrap_or((0.2, 2.0)),
            m1_bound: self.model.m1_bound.unwrap_or(1.0),
        };
        validate_model(&model)?;
        Ok(model)
    }

    pub fn schedule_params(&self) -> Result<ScheduleParams> {
        Ok(ScheduleParams {
            s0: self.kam.s0,
            r0: self.kam.r0,
            k0: self.kam.k0,
            gamma: self.kam.gamma,
            tau: self.kam.tau,
            nbar: self.kam.nbar,
            mode: self.nondeg_mode()?,
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            target_defect: self.kam.target,
            v_max: self.kam.v_max,
            fit_degree: self.kam.fit_degree,
            k_fit_cap: self.kam.k_fit_cap,
            oversample: self.kam.oversample,
            ..RunConfig::default()
        }
    }

    /// Grid for action sieves; defaults to the model's action box with
    /// 10^4 cells along the first axis (10^2 per axis beyond one).
    pub fn sieve_grid(&self, model: &HamiltonianModel) -> Result<crate::sieve::BoxGrid> {
        if !self.sieve.grid_min.is_empty() {
            return crate::sieve::BoxGrid::new(
                self.sieve.grid_min.clone(),
                self.sieve.grid_max.clone(),
                self.sieve.grid_cells.clone(),
            );
        }
        let min: Vec<f64> = model.action_domain.iter().map(|&(lo, _)| lo).collect();
        let max: Vec<f64> = model.action_domain.iter().map(|&(_, hi)| hi).collect();
        let cells = if model.dim == 1 { vec![10_000] } else { vec![100; model.dim] };
        crate::sieve::BoxGrid::new(min, max, cells)
    }
}

pub fn scheme_from(name: &str) -> Result<Scheme> {
    match name {
        "symplectic-euler" | "euler" => Ok(Scheme::SymplecticEuler),
        "midpoint" => Ok(Scheme::Midpoint),
        "flow" => Ok(Scheme::Flow),
        other => Err(Error::Param(format!(
            "scheme must be symplectic-euler, midpoint or flow, got \"{other}\""
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: ExperimentConfig = toml::from_str("[model]\nname = \"twist1d\"").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.kam.step_sizes, vec![0.1]);
        assert!(cfg.resolve_model().unwrap().dim == 1);
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let cfg: ExperimentConfig =
            toml::from_str("[model]\nname = \"twist1d\"\n[kam]\ngamma = -0.5").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Param(_))));
    }

    #[test]
    fn unknown_model_is_rejected() {
        let cfg: ExperimentConfig = toml::from_str("[model]\nname = \"nope\"").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn custom_model_round_trip() {
        let text = r#"
[model]
dim = 1
h0 = [{ coeff = 0.5, exponents = [2] }]
h1 = [{ coeff = 1.0, exponents = [0], wave = [1], trig = "cos" }]
action_domain = [[0.1, 0.9]]
m1_bound = 1.0
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        let model = cfg.resolve_model().unwrap();
        assert_eq!(model.frequency(&[0.5]).unwrap(), vec![0.5]);
        let (v, _, _) = model.eval_perturbation(&[0.5], &[0.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<ExperimentConfig, _> =
            toml::from_str("[model]\nname = \"twist1d\"\n[kam]\nbogus = 1");
        assert!(r.is_err());
    }
}
