use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arrival_core::ensemble::EnsembleConfig;
use arrival_core::{DynamicsSpec, LongitudinalGrid, PacketConfig, PhysicalParams, SpinDirection, TimeBinning};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Sectioned run configuration shared by the ensemble-driven commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n_trajectories: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Direction labels such as `+z`, `-x` or `0.6,0,0.8`.
    #[serde(default)]
    pub directions: Vec<String>,
    #[serde(default)]
    pub physical: PhysicalParams,
    #[serde(default)]
    pub packet: PacketConfig,
    /// Defaults to `LongitudinalGrid::default_for(physical)`.
    #[serde(default)]
    pub grid: Option<LongitudinalGrid>,
    pub binning: TimeBinning,
    /// Defaults to `physical.lambda` and `physical.diffusion_nu`.
    #[serde(default)]
    pub dynamics: Option<DynamicsSpec>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub signaling: SignalingConfig,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub tol: f64,
    /// Euler-Maruyama step; `1e-4 t_max` when absent.
    pub sde_dt: Option<f64>,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self { tol: 1e-8, sde_dt: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit polar angles; overrides `n_alpha`.
    pub alphas: Option<Vec<f64>>,
    /// Number of equally spaced angles on `[0, pi]`.
    pub n_alpha: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { alphas: None, n_alpha: 9 }
    }
}

impl SweepConfig {
    pub fn angles(&self) -> Vec<f64> {
        match &self.alphas {
            Some(a) => a.clone(),
            None => {
                let n = self.n_alpha.max(2);
                (0..n).map(|i| i as f64 * std::f64::consts::PI / (n - 1) as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalingConfig {
    pub n_rounds: Vec<usize>,
    pub trials: usize,
}

impl Default for SignalingConfig {
    fn default() -> Self {
        Self { n_rounds: vec![1, 10, 100], trials: 500 }
    }
}

/// A parsed configuration with the bytes it came from.
pub struct LoadedConfig {
    pub path: PathBuf,
    pub sha256: String,
    pub config: RunConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(LoadedConfig {
            path: path.to_path_buf(),
            sha256: sha256_hex(text.as_bytes()),
            config,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            bail!("n_trajectories must be positive");
        }
        self.physical.validate()?;
        self.packet.validate()?;
        self.grid().validate()?;
        self.binning.validate()?;
        self.dynamics().validate()?;
        self.directions()?;
        Ok(())
    }

    pub fn grid(&self) -> LongitudinalGrid {
        self.grid.unwrap_or_else(|| LongitudinalGrid::default_for(&self.physical))
    }

    pub fn dynamics(&self) -> DynamicsSpec {
        self.dynamics
            .unwrap_or(DynamicsSpec::stochastic(self.physical.lambda, self.physical.diffusion_nu))
    }

    pub fn directions(&self) -> Result<Vec<SpinDirection>> {
        self.directions
            .iter()
            .map(|s| SpinDirection::parse(s).with_context(|| format!("direction {s:?}")))
            .collect()
    }

    pub fn ensemble(&self, seed: u64) -> EnsembleConfig {
        let mut c = EnsembleConfig::new(self.n_trajectories, seed, self.dynamics(), self.binning.t_max);
        c.tol = self.integration.tol;
        c.sde_dt = self.integration.sde_dt;
        c
    }
}
