//! Run configuration with TOML loading and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::LogPolarGrid;
use crate::{Error, Result};

fn default_stride() -> usize {
    4
}
fn default_kernel_size() -> usize {
    65
}
fn default_num_rings() -> usize {
    4
}
fn default_angular_bins() -> usize {
    12
}
fn default_ring_boundaries() -> Vec<f64> {
    vec![2.0, 5.0, 11.0, 21.0, 32.0]
}
fn default_coarse_factor() -> usize {
    12
}
fn default_kept_rings() -> usize {
    2
}
fn default_lambda() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_prune_k() -> usize {
    128
}
fn default_mask_sigma_factor() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Pixels per voter-field cell.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Side length of the fine vote kernel (odd).
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    #[serde(default = "default_num_rings")]
    pub num_rings: usize,
    #[serde(default = "default_angular_bins")]
    pub angular_bins: usize,
    /// Ring boundaries in voter-field cells, inner to outer.
    #[serde(default = "default_ring_boundaries")]
    pub ring_boundaries: Vec<f64>,
    /// Pixels per coarse cell; must be a multiple of `stride`.
    #[serde(default = "default_coarse_factor")]
    pub coarse_factor: usize,
    /// Inner rings kept on the coarse grid.
    #[serde(default = "default_kept_rings")]
    pub kept_rings: usize,
    /// Mixing weight between consensus and location-prior terms.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Probability floor before taking logs.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Candidate cells kept per keypoint.
    #[serde(default = "default_prune_k")]
    pub prune_k: usize,
    /// Person-mask sigma as a multiple of the person scale.
    #[serde(default = "default_mask_sigma_factor")]
    pub mask_sigma_factor: f64,
    /// Solve all keypoints jointly instead of in stages.
    #[serde(default)]
    pub single_stage: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Lower-bound convergence tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Worker threads; 0 picks the number of cores.
    #[serde(default)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize from defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size < 3 {
            return Err(Error::Config(format!(
                "kernel_size must be odd and >= 3, got {}",
                self.kernel_size
            )));
        }
        if self.coarse_factor == 0 || self.coarse_factor % self.stride != 0 {
            return Err(Error::Config(format!(
                "coarse_factor {} must be a positive multiple of stride {}",
                self.coarse_factor, self.stride
            )));
        }
        if self.kept_rings == 0 || self.kept_rings > self.num_rings {
            return Err(Error::Config(format!(
                "kept_rings {} out of range 1..={}",
                self.kept_rings, self.num_rings
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.prune_k == 0 {
            return Err(Error::Config("prune_k must be positive".into()));
        }
        if !(self.mask_sigma_factor > 0.0) {
            return Err(Error::Config("mask_sigma_factor must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        let grid = self.grid()?;
        let half = (self.kernel_size / 2) as f64;
        if grid.outer_radius() > half {
            return Err(Error::Config(format!(
                "kernel_size {} too small for outer radius {}",
                self.kernel_size,
                grid.outer_radius()
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<LogPolarGrid> {
        LogPolarGrid::new(
            self.num_rings,
            self.angular_bins,
            self.ring_boundaries.clone(),
            0.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(config.stride, 4);
        assert_eq!(config.kernel_size, 65);
        assert_eq!(config.coarse_factor, 12);
        assert_eq!(config.kept_rings, 2);
        assert_eq!(config.lambda, 0.5);
        assert_eq!(config.prune_k, 128);
        assert_eq!(config.grid().unwrap().num_classes(), 50);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config: RunConfig = toml::from_str("lambda = 0.25\nsingle_stage = true").unwrap();
        assert_eq!(config.lambda, 0.25);
        assert!(config.single_stage);
        assert_eq!(config.kernel_size, 65);
        config.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "kernel_size = 64",
            "coarse_factor = 10",
            "lambda = 1.5",
            "epsilon = 0.0",
            "kept_rings = 9",
            "prune_k = 0",
            "kernel_size = 5", // smaller than the outer radius
        ] {
            let config: RunConfig = toml::from_str(text).unwrap();
            assert!(config.validate().is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("no_such_key = 1").is_err());
    }

    #[test]
    fn load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let config = RunConfig {
            lambda: 0.75,
            ..RunConfig::default()
        };
        std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded.lambda, 0.75);
    }
}
