//! JSON run configuration. Unknown fields are rejected.
//!
//! ```json
//! {
//!   "squeezing": { "db": 2.6 },
//!   "bs_phase": 1.5707963267948966,
//!   "losses": [1.0, 1.0, 1.0, 1.0],
//!   "gains": "auto",
//!   "mc": { "enabled": true, "n": 1000000, "seed": 42 },
//!   "convention": { "v0": 0.25 },
//!   "outputs": { "json": "report.json", "csv": "table.csv" }
//! }
//! ```

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{r_from_db, CircuitParams};
use crate::criteria::{optimal_gain_plan, GainPlan, Gains};
use crate::error::{Error, Result};
use crate::gaussian::{Convention, GaussianState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Squeezing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db: Option<f64>,
}

/// Either four output transmittances, or output and escape stages separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LossConfig {
    Output([f64; 4]),
    Staged(StagedLosses),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagedLosses {
    #[serde(default = "unit_etas")]
    pub output: [f64; 4],
    #[serde(default = "unit_etas")]
    pub escape: [f64; 4],
}

fn unit_etas() -> [f64; 4] {
    [1.0; 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoGains {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsConfig {
    Auto(AutoGains),
    Uniform(f64),
    Named(Gains),
}

impl Default for GainsConfig {
    fn default() -> Self {
        GainsConfig::Auto(AutoGains::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_mc_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_mc_n() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionConfig {
    pub v0: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    /// Comparison table `quantity,paper_value,computed_value,unit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Six-record measurement file of the simulated dB values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    /// Row-major covariance dump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<PathBuf>,
    /// Raw homodyne samples, `combo_id,sample_index,value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub squeezing: Squeezing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<LossConfig>,
    #[serde(default)]
    pub gains: GainsConfig,
    /// Use one shared `g_y4` for criteria I and II.
    #[serde(default)]
    pub tie_gy4: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<ConventionConfig>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Fully resolved run parameters, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub source: ExperimentConfig,
    pub circuit: CircuitParams,
    pub squeezing_db: Option<f64>,
    pub v0: f64,
    pub gains_mode: &'static str,
    pub tie_gy4: bool,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("config field `{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Symmetric lossless circuit at squeezing factor `r`, auto gains.
    pub fn with_r(r: f64) -> Self {
        ExperimentConfig {
            squeezing: Squeezing { r: Some(r), db: None },
            r2: None,
            bs_phase: None,
            losses: None,
            gains: GainsConfig::default(),
            tie_gy4: false,
            mc: None,
            convention: None,
            outputs: Outputs::default(),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let (r1, squeezing_db) = match (self.squeezing.r, self.squeezing.db) {
            (Some(_), Some(_)) => return Err(field_err("squeezing", "give exactly one of `r` or `db`, not both")),
            (None, None) => return Err(field_err("squeezing", "one of `r` or `db` is required")),
            (Some(r), None) => {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(field_err("squeezing.r", format!("must be finite and non-negative, got {r}")));
                }
                (r, None)
            }
            (None, Some(db)) => {
                if !(db.is_finite() && db > 0.0) {
                    return Err(field_err("squeezing.db", format!("must be finite and positive, got {db}")));
                }
                (r_from_db(db), Some(db))
            }
        };
        let r2 = match self.r2 {
            Some(r) if !(r.is_finite() && r >= 0.0) => {
                return Err(field_err("r2", format!("must be finite and non-negative, got {r}")))
            }
            Some(r) => r,
            None => r1,
        };
        let bs_phase = self.bs_phase.unwrap_or(FRAC_PI_2);
        if !bs_phase.is_finite() {
            return Err(field_err("bs_phase", "must be finite"));
        }
        let (losses, escape) = match &self.losses {
            None => ([1.0; 4], [1.0; 4]),
            Some(LossConfig::Output(o)) => (*o, [1.0; 4]),
            Some(LossConfig::Staged(s)) => (s.output, s.escape),
        };
        for (i, eta) in losses.iter().chain(&escape).enumerate() {
            if !(0.0..=1.0).contains(eta) {
                return Err(field_err("losses", format!("entry {i} = {eta} outside [0, 1]")));
            }
        }
        let v0 = match &self.convention {
            Some(c) => Convention::new(c.v0).map_err(|e| field_err("convention.v0", e))?.v0(),
            None => Convention::QUARTER.v0(),
        };
        let gains_mode = match &self.gains {
            GainsConfig::Auto(_) => "auto",
            GainsConfig::Uniform(g) => {
                if !g.is_finite() {
                    return Err(field_err("gains", "must be finite"));
                }
                "uniform"
            }
            GainsConfig::Named(g) => {
                if ![g.gx1, g.gx2, g.gx3, g.gy4].iter().all(|v| v.is_finite()) {
                    return Err(field_err("gains", "must be finite"));
                }
                "named"
            }
        };
        if let Some(mc) = &self.mc {
            if mc.enabled && mc.n < 2 {
                return Err(field_err("mc.n", format!("need at least 2 samples, got {}", mc.n)));
            }
        }
        let circuit = CircuitParams { r1, r2, bs_phase, losses, escape };
        circuit.check()?;
        Ok(ResolvedConfig { source: self.clone(), circuit, squeezing_db, v0, gains_mode, tie_gy4: self.tie_gy4 })
    }
}

impl ResolvedConfig {
    pub fn convention(&self) -> Convention {
        Convention::new(self.v0).expect("validated in resolve")
    }

    /// Gains to use on `state`: the configured values, or exact optima.
    pub fn gain_plan(&self, state: &GaussianState) -> Result<GainPlan> {
        match &self.source.gains {
            GainsConfig::Auto(_) => optimal_gain_plan(state, self.tie_gy4),
            GainsConfig::Uniform(g) => Ok(GainPlan::uniform(*g)),
            GainsConfig::Named(g) => Ok((*g).into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_converts_to_r() {
        let cfg = ExperimentConfig::from_json(r#"{"squeezing": {"db": 2.6}}"#).unwrap();
        let res = cfg.resolve().unwrap();
        assert!(((-2.0 * res.circuit.r1).exp() - 10f64.powf(-0.26)).abs() < 1e-15);
        assert_eq!(res.circuit.r1, res.circuit.r2);
        assert_eq!(res.circuit.bs_phase, FRAC_PI_2);
        assert_eq!(res.v0, 0.25);
        assert_eq!(res.gains_mode, "auto");
    }

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "squeezing": {"r": 0.3},
            "r2": 0.35,
            "bs_phase": 1.0,
            "losses": {"output": [0.9, 0.9, 0.9, 0.9], "escape": [0.95, 0.95, 0.95, 0.95]},
            "gains": {"gx1": 0.4, "gx2": 0.41, "gx3": 0.42, "gy4": 0.43},
            "tie_gy4": true,
            "mc": {"enabled": true, "n": 1000, "seed": 7},
            "convention": {"v0": 1.0},
            "outputs": {"json": "a.json", "csv": "b.csv"}
        }"#;
        let res = ExperimentConfig::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(res.circuit.r2, 0.35);
        assert_eq!(res.circuit.escape, [0.95; 4]);
        assert_eq!(res.v0, 1.0);
        assert_eq!(res.gains_mode, "named");
        let cfg = ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "gains": 0.41, "losses": [1, 0.5, 1, 1]}"#)
            .unwrap();
        assert_eq!(cfg.resolve().unwrap().circuit.losses[1], 0.5);
        assert_eq!(cfg.gains, GainsConfig::Uniform(0.41));
    }

    #[test]
    fn strict_validation() {
        let err = ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "gain": "auto"}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3, "db": 2.6}}"#).unwrap_err();
        assert!(err.to_string().contains("squeezing"));
        assert!(ExperimentConfig::from_json(r#"{"squeezing": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"squeezing": {"db": -1}}"#).is_err());
        let err = ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "losses": [1, 1, 1.5, 1]}"#).unwrap_err();
        assert!(err.to_string().contains("losses"));
        let err = ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "convention": {"v0": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("convention.v0"));
        assert!(ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "gains": "best"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"squeezing": {"r": 0.3}, "mc": {"enabled": true, "n": 1}}"#).is_err());
    }
}
