//! Engine thresholds. Loaded from a flat key/value document (TOML or JSON) whose keys
//! mirror the field names below; missing keys take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Containment ratio at which `inside` holds.
    pub tau_inside: f64,
    /// Vertical tolerance as a fraction of the mean box height of the pair.
    pub delta_y: f64,
    /// Intersection-over-smaller-region at which contact is certain.
    pub contact_overlap: f64,
    /// Pixel margin for `around` and contact proximity.
    pub adjacency_margin: f64,
    /// Dynamic-relation window length, frames.
    pub window: usize,
    /// Per-window displacement that counts as motion, fraction of the image diagonal.
    pub epsilon_motion: f64,
    pub tau_event: f64,
    pub tau_feas: f64,
    pub tau_sal: f64,
    pub gamma: f64,
    pub lookahead_depth: usize,
    pub aggregation: Aggregation,
    pub canvas_width: f64,
    pub canvas_height: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tau_inside: 0.8,
            delta_y: 0.25,
            contact_overlap: 0.05,
            adjacency_margin: 10.0,
            window: 5,
            epsilon_motion: 0.02,
            tau_event: 0.5,
            tau_feas: 0.3,
            tau_sal: 0.5,
            gamma: 0.0,
            lookahead_depth: 0,
            aggregation: Aggregation::Median,
            canvas_width: 640.0,
            canvas_height: 480.0,
        }
    }
}

impl EngineConfig {
    pub fn diagonal(&self) -> f64 {
        self.canvas_width.hypot(self.canvas_height)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau_inside", self.tau_inside),
            ("delta_y", self.delta_y),
            ("contact_overlap", self.contact_overlap),
            ("epsilon_motion", self.epsilon_motion),
            ("tau_event", self.tau_event),
            ("tau_feas", self.tau_feas),
            ("tau_sal", self.tau_sal),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(EsecError::Config(format!("{name} = {v} is outside [0,1]")));
            }
        }
        if self.window < 2 {
            return Err(EsecError::Config(format!("window = {} must be at least 2", self.window)));
        }
        if self.lookahead_depth > 3 {
            return Err(EsecError::Config(format!(
                "lookahead_depth = {} exceeds 3",
                self.lookahead_depth
            )));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(EsecError::Config(format!("gamma = {} must be non-negative", self.gamma)));
        }
        if self.adjacency_margin.is_nan() || self.adjacency_margin <= 0.0 {
            return Err(EsecError::Config("adjacency_margin must be positive".into()));
        }
        if !(self.canvas_width > 0.0 && self.canvas_height > 0.0) {
            return Err(EsecError::Config("canvas dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(s).map_err(|e| EsecError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: EngineConfig = serde_json::from_str(s).map_err(|e| EsecError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }
}
