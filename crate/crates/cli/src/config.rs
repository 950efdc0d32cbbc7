//! Run configuration.
//!
//! Resolution order, later wins: built-in defaults, `DEPTHBENCH_DATA_DIR`,
//! the TOML file given with `--config`, then command-line flags. Every key
//! is optional in the file; unknown keys are rejected.
//!
//! ```toml
//! data_dir = "/data/depth"
//! unit_scale = 0.001
//! fx = 400.0
//! fy = 400.0
//! cx = 320.0
//! cy = 240.0
//! score_c = 1.5614e-6
//! silog_alpha = 10.0
//! silog_lambda = 0.85
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use depthbench_core::data::{data_root_from_env, DEFAULT_UNIT_SCALE};
use depthbench_core::metrics::ScoreParams;
use depthbench_core::CameraIntrinsics;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data_dir: Option<PathBuf>,
    unit_scale: Option<f64>,
    fx: Option<f64>,
    fy: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    score_c: Option<f64>,
    silog_alpha: Option<f64>,
    silog_lambda: Option<f64>,
    seed: Option<u64>,
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub data_dir: Option<PathBuf>,
    pub unit_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub score_c: f64,
    pub silog_alpha: f64,
    pub silog_lambda: f64,
    pub seed: u64,
}

/// Flag values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub unit_scale: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: None,
            unit_scale: DEFAULT_UNIT_SCALE,
            intrinsics: CameraIntrinsics::default(),
            score_c: ScoreParams::calibrated().normalization_c(),
            silog_alpha: 10.0,
            silog_lambda: 0.85,
            seed: 0,
        }
    }
}

impl Config {
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, Failure> {
        let mut cfg = Config {
            data_dir: data_root_from_env(),
            ..Config::default()
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
            let f: ConfigFile = toml::from_str(&text)
                .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
            cfg.apply(f);
        }
        if let Some(d) = &flags.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(s) = flags.unit_scale {
            cfg.unit_scale = s;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: ConfigFile) {
        let k = &mut self.intrinsics;
        if f.data_dir.is_some() {
            self.data_dir = f.data_dir;
        }
        self.unit_scale = f.unit_scale.unwrap_or(self.unit_scale);
        k.fx = f.fx.unwrap_or(k.fx);
        k.fy = f.fy.unwrap_or(k.fy);
        k.cx = f.cx.unwrap_or(k.cx);
        k.cy = f.cy.unwrap_or(k.cy);
        self.score_c = f.score_c.unwrap_or(self.score_c);
        self.silog_alpha = f.silog_alpha.unwrap_or(self.silog_alpha);
        self.silog_lambda = f.silog_lambda.unwrap_or(self.silog_lambda);
        self.seed = f.seed.unwrap_or(self.seed);
    }

    fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::usage(m));
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return bad(format!("unit_scale must be positive, got {}", self.unit_scale));
        }
        if let Err(e) = self.intrinsics.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = ScoreParams::new(self.score_c) {
            return bad(e.to_string());
        }
        if let Err(e) = depthbench_core::losses::SilogParams::new(self.silog_alpha, self.silog_lambda) {
            return bad(e.to_string());
        }
        Ok(())
    }

    pub fn score_params(&self) -> ScoreParams {
        ScoreParams::new(self.score_c).expect("validated at resolve time")
    }
}
