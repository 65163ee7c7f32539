//! Scenario files: TOML with a fixed key set.
//!
//! ```toml
//! system = "cubic-shift"
//! polyline = [[0.0], [2.0]]
//!
//! [seed]
//! guess = [0.0]
//! alpha = [0.0]
//!
//! [tolerances]
//! newton_tol = 1e-12
//! conv_tol = 1e-10
//!
//! [outputs]
//! plan = "plan.toml"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::systems;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seed {
    pub guess: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub conv_tol: f64,
    pub tail_tol: f64,
    pub bisect_tol: f64,
    /// Planner floor in arclength; unset means a thousandth of the route.
    pub min_step: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { newton_tol: 1e-12, conv_tol: 1e-10, tail_tol: 1e-12, bisect_tol: 1e-7, min_step: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub trace: Option<PathBuf>,
    pub basin: Option<PathBuf>,
    pub lyapunov: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: Option<String>,
    #[serde(default)]
    pub seed: Seed,
    #[serde(default)]
    pub polyline: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Checks the system name and that every vector matches its dimensions.
    pub fn validate(&self) -> Result<(), String> {
        let Some(name) = &self.system else {
            return Err("no system given (set `system` or pass --system)".into());
        };
        let map = systems::by_name(name)
            .ok_or_else(|| format!("unknown system `{name}` (expected one of {})", systems::NAMES.join(", ")))?;
        let check = |what: &str, v: &[f64], dim: usize| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(format!("`{what}` has {} components, system `{name}` expects {dim}", v.len()))
            }
        };
        if let Some(g) = &self.seed.guess {
            check("seed.guess", g, map.state_dim())?;
        }
        if let Some(a) = &self.seed.alpha {
            check("seed.alpha", a, map.control_dim())?;
        }
        for vertex in &self.polyline {
            check("polyline", vertex, map.control_dim())?;
        }
        let t = &self.tolerances;
        for (key, value) in [
            ("tolerances.newton_tol", t.newton_tol),
            ("tolerances.conv_tol", t.conv_tol),
            ("tolerances.tail_tol", t.tail_tol),
            ("tolerances.bisect_tol", t.bisect_tol),
            ("tolerances.min_step", t.min_step.unwrap_or(1.0)),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("`{key}` must be positive"));
            }
        }
        Ok(())
    }
}
