//! Run configuration: a JSON document selecting a preset, grid resolution,
//! step sizes, stopping rule, and output options.
//!
//! Parsing is strict: unknown keys are rejected with an error naming the key,
//! and every omitted field takes a documented default, so the minimal valid
//! document is `{"preset": "spread"}`. [`canonical_json`] gives a normalized
//! serialization that is byte-identical across parse/serialize round trips.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiments::{ExperimentPreset, DEFAULT_NT, DEFAULT_NX, DEFAULT_SNAPSHOT_TIMES};
use crate::pdhg::{SolveOptions, StepSizes};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Optional per-preset parameter overrides. Only the keys that apply to the
/// chosen preset may be set; anything else is rejected by [`RunConfig::preset`]
/// so a typo can't silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresetParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl PresetParams {
    /// The overrides that reproduce `preset` exactly.
    pub fn of(preset: &ExperimentPreset) -> Self {
        let mut p = PresetParams::default();
        match *preset {
            ExperimentPreset::Trivial => {}
            ExperimentPreset::Spread { lambda1, lambda2 } => {
                p.lambda1 = Some(lambda1);
                p.lambda2 = Some(lambda2);
            }
            ExperimentPreset::GaussStatic { sigma1, sigma2, mu }
            | ExperimentPreset::GaussDynamic { sigma1, sigma2, mu } => {
                p.sigma1 = Some(sigma1);
                p.sigma2 = Some(sigma2);
                p.mu = Some(mu);
            }
            ExperimentPreset::Subregion { sigma, mu } => {
                p.sigma = Some(sigma);
                p.mu = Some(mu);
            }
            ExperimentPreset::Turnpike { mu, horizon, order } => {
                p.mu = Some(mu);
                p.horizon = Some(horizon);
                p.order = Some(order);
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_x1: usize,
    pub n_x2: usize,
    pub n_t: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_x1: DEFAULT_NX, n_x2: DEFAULT_NX, n_t: DEFAULT_NT }
    }
}

/// Step-size overrides; unset entries keep the solver defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_phi_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_grad_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_phi_0: Option<f64>,
}

impl StepsConfig {
    pub fn resolve(&self) -> StepSizes {
        let d = StepSizes::default();
        StepSizes {
            tau_rho: self.tau_rho.unwrap_or(d.tau_rho),
            tau_m: self.tau_m.unwrap_or(d.tau_m),
            tau_a: self.tau_a.unwrap_or(d.tau_a),
            tau_phi_t: self.tau_phi_t.unwrap_or(d.tau_phi_t),
            tau_grad_phi: self.tau_grad_phi.unwrap_or(d.tau_grad_phi),
            tau_phi_0: self.tau_phi_0.unwrap_or(d.tau_phi_0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    #[serde(default)]
    pub params: PresetParams,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub steps: StepsConfig,
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_snapshot_times")]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_log_stride")]
    pub log_stride: u64,
    #[serde(default = "default_true")]
    pub heatmaps: bool,
    #[serde(default = "default_true")]
    pub write_fields: bool,
}

fn default_max_iters() -> u64 {
    SolveOptions::default().max_iters
}

fn default_tol() -> f64 {
    SolveOptions::default().tol
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_snapshot_times() -> Vec<f64> {
    DEFAULT_SNAPSHOT_TIMES.to_vec()
}

fn default_log_stride() -> u64 {
    SolveOptions::default().log_stride
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// The configuration implied by the minimal document `{"preset": name}`.
    pub fn with_defaults(preset: &str) -> Self {
        RunConfig {
            preset: preset.to_string(),
            params: PresetParams::default(),
            grid: GridConfig::default(),
            steps: StepsConfig::default(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            out_dir: default_out_dir(),
            snapshot_times: default_snapshot_times(),
            log_stride: default_log_stride(),
            heatmaps: true,
            write_fields: true,
        }
    }

    /// Resolves the preset name and parameter overrides, rejecting any
    /// override that does not apply to the chosen preset.
    pub fn preset(&self) -> Result<ExperimentPreset> {
        let mut preset = ExperimentPreset::from_name(&self.preset)?;
        let p = &self.params;
        let applicable: &[&str] = match preset {
            ExperimentPreset::Trivial => &[],
            ExperimentPreset::Spread { .. } => &["lambda1", "lambda2"],
            ExperimentPreset::GaussStatic { .. } | ExperimentPreset::GaussDynamic { .. } => {
                &["sigma1", "sigma2", "mu"]
            }
            ExperimentPreset::Subregion { .. } => &["sigma", "mu"],
            ExperimentPreset::Turnpike { .. } => &["mu", "horizon", "order"],
        };
        let set = [
            ("lambda1", p.lambda1.is_some()),
            ("lambda2", p.lambda2.is_some()),
            ("sigma1", p.sigma1.is_some()),
            ("sigma2", p.sigma2.is_some()),
            ("sigma", p.sigma.is_some()),
            ("mu", p.mu.is_some()),
            ("horizon", p.horizon.is_some()),
            ("order", p.order.is_some()),
        ];
        let stray: Vec<&str> = set
            .iter()
            .filter(|(name, is_set)| *is_set && !applicable.contains(name))
            .map(|(name, _)| *name)
            .collect();
        if !stray.is_empty() {
            return Err(Error::Config(format!(
                "parameters [{}] do not apply to preset '{}'",
                stray.join(", "),
                self.preset
            )));
        }
        match &mut preset {
            ExperimentPreset::Trivial => {}
            ExperimentPreset::Spread { lambda1, lambda2 } => {
                if let Some(v) = p.lambda1 {
                    *lambda1 = v;
                }
                if let Some(v) = p.lambda2 {
                    *lambda2 = v;
                }
            }
            ExperimentPreset::GaussStatic { sigma1, sigma2, mu }
            | ExperimentPreset::GaussDynamic { sigma1, sigma2, mu } => {
                if let Some(v) = p.sigma1 {
                    *sigma1 = v;
                }
                if let Some(v) = p.sigma2 {
                    *sigma2 = v;
                }
                if let Some(v) = p.mu {
                    *mu = v;
                }
            }
            ExperimentPreset::Subregion { sigma, mu } => {
                if let Some(v) = p.sigma {
                    *sigma = v;
                }
                if let Some(v) = p.mu {
                    *mu = v;
                }
            }
            ExperimentPreset::Turnpike { mu, horizon, order } => {
                if let Some(v) = p.mu {
                    *mu = v;
                }
                if let Some(v) = p.horizon {
                    *horizon = v;
                }
                if let Some(v) = p.order {
                    *order = v;
                }
            }
        }
        Ok(preset)
    }

    /// Builds the full problem on the configured grid.
    pub fn build_spec(&self) -> Result<ProblemSpec> {
        self.preset()?.build(self.grid.n_x1, self.grid.n_x2, self.grid.n_t)
    }

    pub fn step_sizes(&self) -> StepSizes {
        self.steps.resolve()
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { max_iters: self.max_iters, tol: self.tol, log_stride: self.log_stride }
    }

    /// Checks the scalar settings that the solver itself does not validate.
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive and finite, got {}", self.tol)));
        }
        for &t in &self.snapshot_times {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!(
                    "snapshot time {t} lies outside the unit time interval"
                )));
            }
        }
        self.step_sizes().validate()?;
        self.preset()?;
        Ok(())
    }
}

/// Parses a configuration document, filling defaults for omitted fields.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Normalized serialization: two-space indented JSON with a trailing newline.
/// Serializing a parsed document reproduces the canonical bytes exactly.
pub fn canonical_json(config: &RunConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}
