//! Strict TOML run configuration. Unknown keys are rejected so a typo in a
//! hyperparameter name fails loudly instead of silently running defaults.

use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Corridor,
    Empty,
    Highways,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Lmc,
    Ddpm,
    Dps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Lb,
    Shd,
    Dpp,
    Xor,
    None,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub scenario: Scenario,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_coupling")]
    pub coupling: Coupling,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_true")]
    pub projection: bool,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of sampled initial configurations (navigation scenarios).
    #[serde(default = "default_one")]
    pub configurations: usize,
    #[serde(default = "default_robots")]
    pub robots: usize,
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default = "default_output")]
    pub output_dir: String,
    /// Worker threads; 0 keeps the library default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub plots: bool,
}

fn default_sampler() -> Sampler {
    Sampler::Lmc
}
fn default_coupling() -> Coupling {
    Coupling::Shd
}
fn default_gammas() -> Vec<f64> {
    vec![0.0, 8.0]
}
fn default_true() -> bool {
    true
}
fn default_batch() -> usize {
    256
}
fn default_one() -> usize {
    1
}
fn default_robots() -> usize {
    2
}
fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_beta_min")]
    pub beta_min: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale_k: f64,
}

fn default_steps() -> usize {
    25
}
fn default_beta_min() -> f64 {
    0.02
}
fn default_beta_max() -> f64 {
    0.5
}
fn default_noise_scale() -> f64 {
    1.0
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            beta_min: default_beta_min(),
            beta_max: default_beta_max(),
            noise_scale_k: default_noise_scale(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmcSection {
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_step_size() -> f64 {
    0.005
}
fn default_iterations() -> usize {
    2000
}

impl Default for LmcSection {
    fn default() -> Self {
        Self { step_size: default_step_size(), iterations: default_iterations() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSection {
    #[serde(default = "default_corridor_length")]
    pub corridor_length: f64,
    #[serde(default = "default_block_big")]
    pub block_big: f64,
    #[serde(default = "default_block_small")]
    pub block_small: f64,
    #[serde(default = "default_prior_std")]
    pub prior_std: f64,
}

fn default_corridor_length() -> f64 {
    9.0
}
fn default_block_big() -> f64 {
    6.0
}
fn default_block_small() -> f64 {
    2.0
}
fn default_prior_std() -> f64 {
    2.0
}

impl Default for CorridorSection {
    fn default() -> Self {
        Self {
            corridor_length: default_corridor_length(),
            block_big: default_block_big(),
            block_small: default_block_small(),
            prior_std: default_prior_std(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_nav_prior_std")]
    pub prior_std: f64,
    #[serde(default = "default_obstacle_margin")]
    pub obstacle_margin: f64,
    #[serde(default = "default_xi")]
    pub admm_xi: f64,
    #[serde(default = "default_admm_iters")]
    pub admm_max_iters: usize,
    #[serde(default = "default_admm_tol")]
    pub admm_tolerance: f64,
}

fn default_horizon() -> usize {
    48
}
fn default_dt() -> f64 {
    1.0
}
fn default_nav_prior_std() -> f64 {
    0.35
}
fn default_obstacle_margin() -> f64 {
    1.0
}
fn default_xi() -> f64 {
    10.0
}
fn default_admm_iters() -> usize {
    700
}
fn default_admm_tol() -> f64 {
    2e-5
}

impl Default for NavSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            dt: default_dt(),
            prior_std: default_nav_prior_std(),
            obstacle_margin: default_obstacle_margin(),
            admm_xi: default_xi(),
            admm_max_iters: default_admm_iters(),
            admm_tolerance: default_admm_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub lmc: LmcSection,
    #[serde(default)]
    pub corridor: CorridorSection,
    #[serde(default)]
    pub nav: NavSection,
}

impl RunConfig {
    /// The velocity limit in effect: explicit, or the first preset of the
    /// selected environment.
    pub fn effective_v_max(&self) -> f64 {
        self.run.v_max.unwrap_or(match self.run.scenario {
            Scenario::Highways => pcd_core::scenario::HIGHWAYS_V_MAX_PRESETS[0],
            _ => pcd_core::scenario::EMPTY_V_MAX_PRESETS[0],
        })
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> anyhow::Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).context("invalid configuration")?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> anyhow::Result<()> {
    let run = &config.run;
    if run.gammas.is_empty() {
        bail!("run.gammas: sweep list must be nonempty");
    }
    if run.gammas.iter().any(|g| *g < 0.0 || !g.is_finite()) {
        bail!("run.gammas: values must be finite and nonnegative");
    }
    if run.batch == 0 {
        bail!("run.batch: must be positive");
    }
    if run.configurations == 0 {
        bail!("run.configurations: must be positive");
    }
    if run.robots == 0 {
        bail!("run.robots: must be positive");
    }
    if matches!(run.scenario, Scenario::Corridor) && run.coupling == Coupling::Dpp {
        bail!("run.coupling: the corridor scenario supports lb, shd, xor or none");
    }
    if !matches!(run.scenario, Scenario::Corridor) && run.coupling == Coupling::Xor {
        bail!("run.coupling: xor is only available in the corridor scenario");
    }
    if let Some(v) = run.v_max {
        if v <= 0.0 {
            bail!("run.v_max: must be positive");
        }
    }
    Ok(())
}
