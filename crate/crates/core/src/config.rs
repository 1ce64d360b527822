//! Run configuration, read from TOML. Every section rejects unknown keys and
//! missing keys take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nv::{NvMode, NvParams};
use crate::rl::env::{AnyEnv, BanditEnv, NvEnv, TargetDomain, TargetEncoding, ToyEnv};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Toy,
    ToyShifted,
    #[default]
    NvClosed,
    NvOpen,
    Bandit,
}

impl EnvKind {
    pub fn is_toy(self) -> bool {
        matches!(self, EnvKind::Toy | EnvKind::ToyShifted)
    }

    pub fn is_nv(self) -> bool {
        matches!(self, EnvKind::NvClosed | EnvKind::NvOpen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    /// Target polar-angle range; equal bounds fix θ (the equator by default).
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            theta_min: std::f64::consts::FRAC_PI_2,
            theta_max: std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    /// Hidden-layer width of both networks.
    pub neurons: usize,
    pub episodes: u64,
    pub lr: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Episodes collected per update.
    pub batch_episodes: usize,
    /// Full-batch gradient steps per update.
    pub update_epochs: usize,
    /// Number of recent batches kept in the buffer; 1 is on-policy.
    pub buffer_batches: usize,
    pub normalize_advantages: bool,
    pub initial_log_sigma: f64,
    /// Per-action override of `initial_log_sigma`; empty uses the scalar.
    pub initial_log_sigma_per_action: Vec<f64>,
    /// Scale of the actor's output-layer initialization.
    pub output_gain: f64,
    pub penalty: f64,
    pub encoding: TargetEncoding,
    pub sampler_grid: [usize; 2],
    pub sampler_window: usize,
    pub seed: u64,
    /// Checkpoint cadence in episodes; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            neurons: 600,
            episodes: 800_000,
            lr: 1e-5,
            clip_eps: 0.05,
            gamma: 1.0,
            eta: 0.5,
            batch_episodes: 32,
            update_epochs: 10,
            buffer_batches: 1,
            normalize_advantages: true,
            initial_log_sigma: 0.5f64.ln(),
            initial_log_sigma_per_action: Vec::new(),
            output_gain: 0.1,
            penalty: 0.2,
            encoding: TargetEncoding::Raw,
            sampler_grid: [20, 20],
            sampler_window: 10_000,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

/// Inclusive `n_theta x n_phi` evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_theta: 11,
            n_phi: 11,
            theta_min: 0.0,
            theta_max: std::f64::consts::PI,
            phi_min: 0.0,
            phi_max: std::f64::consts::TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub restarts: usize,
    /// Simplex iterations per run.
    pub max_iter: usize,
    pub early_stop_fidelity: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 20_000,
            early_stop_fidelity: 0.99,
            f_tol: 1e-10,
            x_tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub output_dir: PathBuf,
    pub nv: NvParams,
    pub toy: ToyConfig,
    pub rl: RlConfig,
    pub grid: GridConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::default(),
            output_dir: PathBuf::from("runs"),
            nv: NvParams::default(),
            toy: ToyConfig::default(),
            rl: RlConfig::default(),
            grid: GridConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.nv.validate()?;
        let rl = &self.rl;
        check(rl.neurons >= 1, || "rl.neurons must be >= 1".into())?;
        check(rl.lr > 0.0 && rl.lr.is_finite(), || format!("rl.lr must be > 0, got {}", rl.lr))?;
        check(rl.clip_eps > 0.0, || format!("rl.clip_eps must be > 0, got {}", rl.clip_eps))?;
        check((0.0..=1.0).contains(&rl.gamma), || {
            format!("rl.gamma must lie in [0, 1], got {}", rl.gamma)
        })?;
        check((0.0..=1.0).contains(&rl.eta), || format!("rl.eta must lie in [0, 1], got {}", rl.eta))?;
        check(rl.batch_episodes >= 1, || "rl.batch_episodes must be >= 1".into())?;
        check(rl.update_epochs >= 1, || "rl.update_epochs must be >= 1".into())?;
        check(rl.buffer_batches >= 1, || "rl.buffer_batches must be >= 1".into())?;
        check(rl.initial_log_sigma.is_finite(), || "rl.initial_log_sigma must be finite".into())?;
        check(rl.initial_log_sigma_per_action.iter().all(|x| x.is_finite()), || {
            "rl.initial_log_sigma_per_action must be finite".into()
        })?;
        check(rl.output_gain > 0.0 && rl.output_gain.is_finite(), || {
            "rl.output_gain must be > 0".into()
        })?;
        check(rl.penalty >= 0.0 && rl.penalty.is_finite(), || "rl.penalty must be >= 0".into())?;
        check(rl.sampler_grid[0] >= 1 && rl.sampler_grid[1] >= 1, || {
            "rl.sampler_grid entries must be >= 1".into()
        })?;
        check(rl.sampler_window >= 1, || "rl.sampler_window must be >= 1".into())?;

        let pi = std::f64::consts::PI;
        let tau = std::f64::consts::TAU;
        let t = &self.toy;
        check(0.0 <= t.theta_min && t.theta_min <= t.theta_max && t.theta_max <= pi, || {
            format!("toy theta range [{}, {}] must lie in [0, pi]", t.theta_min, t.theta_max)
        })?;

        let g = &self.grid;
        check(g.n_theta >= 1 && g.n_phi >= 1, || "grid dimensions must be >= 1".into())?;
        check(0.0 <= g.theta_min && g.theta_min <= g.theta_max && g.theta_max <= pi, || {
            format!("grid theta range [{}, {}] must lie in [0, pi]", g.theta_min, g.theta_max)
        })?;
        check(0.0 <= g.phi_min && g.phi_min <= g.phi_max && g.phi_max <= tau, || {
            format!("grid phi range [{}, {}] must lie in [0, 2pi]", g.phi_min, g.phi_max)
        })?;

        let b = &self.baseline;
        check(b.restarts >= 1, || "baseline.restarts must be >= 1".into())?;
        check(b.max_iter >= 1, || "baseline.max_iter must be >= 1".into())?;
        Ok(())
    }

    /// NV parameters with the mode implied by `env`.
    pub fn nv_params(&self) -> NvParams {
        let mut p = self.nv;
        match self.env {
            EnvKind::NvOpen => p.mode = NvMode::Open,
            EnvKind::NvClosed => p.mode = NvMode::Closed,
            _ => {}
        }
        p
    }

    pub fn build_env<R: Real>(&self) -> Result<AnyEnv<R>> {
        let rl = &self.rl;
        Ok(match self.env {
            EnvKind::Toy | EnvKind::ToyShifted => {
                let mut env = ToyEnv::new(self.env == EnvKind::ToyShifted, rl.encoding);
                env.domain = TargetDomain {
                    theta: (self.toy.theta_min, self.toy.theta_max),
                    phi: (0.0, std::f64::consts::TAU),
                };
                env.penalty_factor = rl.penalty;
                AnyEnv::Toy(env)
            }
            EnvKind::NvClosed | EnvKind::NvOpen => {
                let mut env = NvEnv::new(self.nv_params(), rl.encoding)?;
                env.penalty_factor = rl.penalty;
                AnyEnv::Nv(env)
            }
            EnvKind::Bandit => AnyEnv::Bandit(BanditEnv { optimum: 0.3 }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.rl.lr, 1e-5);
        assert_eq!(cfg.rl.clip_eps, 0.05);
        assert_eq!(cfg.rl.eta, 0.5);
        assert_eq!(cfg.rl.penalty, 0.2);
        assert_eq!(cfg.nv.n_steps, 9);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[rl]\nnuerons = 64\n").unwrap_err();
        assert!(err.to_string().contains("nuerons"), "{err}");
        let err = RunConfig::from_toml_str("colour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn range_checks() {
        let err = RunConfig::from_toml_str("[rl]\ngamma = 1.2\n").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(RunConfig::from_toml_str("[nv]\nt_min = 0.9\n").is_err());
        assert!(RunConfig::from_toml_str("[grid]\nn_phi = 0\n").is_err());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let cfg = RunConfig::from_toml_str("env = \"toy_shifted\"\n[rl]\nneurons = 64\nseed = 7\n").unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_ne!(cfg.hash(), RunConfig::default().hash());
        assert_eq!(cfg.hash().len(), 64);
    }
}
