//! Scenario configuration: schema, defaults, parsing and validation.
//!
//! Configs are TOML or JSON. Every section and field is optional; missing
//! values take the first-order replica defaults. Validation errors name the
//! offending key and, when it can be found in the source, its line.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{cholesky, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    FirstOrder,
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalKind {
    /// Track the reference path.
    Track,
    /// Head straight for the true obstacle position.
    Pursue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub horizon: f64,
    pub sample_time: f64,
    pub control_dt: f64,
    pub dynamics: DynamicsKind,
    pub nominal: NominalKind,
    pub estimator: EstimatorConfig,
    pub barrier: BarrierConfig,
    pub ego: EgoConfig,
    pub obstacle: ObstacleConfig,
    pub reference: ReferenceConfig,
    pub coverage: CoverageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Standard deviation of the isotropic position noise.
    pub sigma: f64,
    pub window: usize,
    pub degree: usize,
    /// Confidence level; the sets hold the truth with probability `1 − alpha`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub gamma: f64,
    pub beta: f64,
    /// Slope of the linear class-K function.
    pub alpha_cbf: f64,
    pub mu: f64,
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    /// `[x, y, ψ]`; when absent the ego starts on the reference, aligned
    /// with it.
    pub initial: Option<[f64; 3]>,
    pub initial_nu: [f64; 3],
    pub half_widths: [f64; 2],
    pub box_power: u32,
    pub box_reg: f64,
    pub k_p: f64,
    pub k_psi: f64,
    pub k_nu: [[f64; 3]; 3],
    pub mass: [[f64; 3]; 3],
    pub damping: [[f64; 3]; 3],
    /// Speed of the pursuit nominal.
    pub pursue_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleMotion {
    Circular {
        center: [f64; 2],
        radius: f64,
        omega: f64,
        phase: f64,
    },
    /// `x(t) = Σ_j coefficients[0][j] tʲ`, likewise for `y`.
    CubicPolynomial { coefficients: [[f64; 4]; 2] },
    /// Natural cubic spline through `[t, x, y]` rows.
    WaypointSpline { waypoints: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    pub motion: ObstacleMotion,
    /// Ellipse semi-axes; avoidance uses the disk swept by all attitudes.
    pub semi_axes: [f64; 2],
    /// Speed bound behind the velocity set.
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// `[t, x, y]` rows with increasing `t`.
    pub waypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub runs: usize,
    /// Accepted absolute deviation of the containment frequency from `1 − alpha`.
    pub band: f64,
}

fn diag3(d: [f64; 3]) -> [[f64; 3]; 3] {
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 120.0,
            sample_time: 0.1,
            control_dt: 0.01,
            dynamics: DynamicsKind::FirstOrder,
            nominal: NominalKind::Track,
            estimator: EstimatorConfig::default(),
            barrier: BarrierConfig::default(),
            ego: EgoConfig::default(),
            obstacle: ObstacleConfig::default(),
            reference: ReferenceConfig::default(),
            coverage: CoverageConfig::default(),
        }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            window: 100,
            degree: 3,
            alpha: 0.05,
        }
    }
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            beta: 10.0,
            alpha_cbf: 5.0,
            mu: 1.0,
            fd_step: 1e-5,
        }
    }
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            initial: None,
            initial_nu: [0.0; 3],
            half_widths: [0.5, 0.25],
            box_power: 4,
            box_reg: 1e-3,
            k_p: 1.0,
            k_psi: 2.0,
            k_nu: diag3([5.0, 5.0, 5.0]),
            mass: diag3([25.0, 30.0, 3.0]),
            damping: diag3([10.0, 12.0, 1.5]),
            pursue_speed: 1.0,
        }
    }
}

impl Default for ObstacleMotion {
    fn default() -> Self {
        // reaches (−5, 0) at t = 30 s, when the reference does
        Self::Circular {
            center: [0.0, 0.0],
            radius: 5.0,
            omega: 0.1,
            phase: std::f64::consts::PI - 3.0,
        }
    }
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            motion: ObstacleMotion::default(),
            semi_axes: [0.8, 0.4],
            v_max: 0.75,
        }
    }
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            waypoints: vec![
                [0.0, -20.0, 0.0],
                [40.0, 0.0, 1.0],
                [80.0, 20.0, -1.0],
                [120.0, 40.0, 0.0],
            ],
        }
    }
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            runs: 2000,
            band: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Toml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{}", located(*.line, .message))]
    Parse { line: Option<usize>, message: String },
    #[error("{}", located(*.line, &format!("{}: {}", .key, .message)))]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read config: {0}")]
    Io(String),
}

fn located(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {message}"),
        None => message.to_string(),
    }
}

impl ConfigError {
    fn invalid(key: &str, message: impl fmt::Display) -> Self {
        Self::Invalid {
            key: key.to_string(),
            line: None,
            message: message.to_string(),
        }
    }

    /// Attaches the source line of the offending key, if it can be found.
    fn anchor(self, source: &str, format: &ConfigFormat) -> Self {
        match self {
            Self::Invalid { key, line: None, message } => Self::Invalid {
                line: find_key_line(source, format, &key),
                key,
                message,
            },
            other => other,
        }
    }
}

/// 1-based line of a dotted key. TOML lookups follow `[section]` headers;
/// JSON lookups take the first quoted occurrence of the leaf name.
fn find_key_line(source: &str, format: &ConfigFormat, key: &str) -> Option<usize> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop()?;
    match format {
        ConfigFormat::Json => {
            let needle = format!("\"{leaf}\"");
            source.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
        }
        ConfigFormat::Toml => {
            let section = parts.join(".");
            let mut current = String::new();
            for (i, line) in source.lines().enumerate() {
                let t = line.trim();
                if t.starts_with('[') {
                    current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                    continue;
                }
                let Some((k, _)) = t.split_once('=') else {
                    continue;
                };
                let k = k.trim();
                let inline = if section.is_empty() {
                    k.to_string()
                } else {
                    format!("{section}.{leaf}")
                };
                if (current == section && k == leaf) || (current.is_empty() && k == inline) {
                    return Some(i + 1);
                }
            }
            None
        }
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl ScenarioConfig {
    /// Parses and validates.
    pub fn parse(source: &str, format: ConfigFormat) -> Result<Self, ConfigError> {
        let cfg: Self = match format {
            ConfigFormat::Toml => toml::from_str(source).map_err(|e| ConfigError::Parse {
                line: e.span().map(|s| line_of_offset(source, s.start)),
                message: e.message().trim().to_string(),
            })?,
            ConfigFormat::Json => serde_json::from_str(source).map_err(|e| ConfigError::Parse {
                line: Some(e.line()),
                message: e.to_string(),
            })?,
        };
        cfg.validate().map_err(|e| e.anchor(source, &format))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&source, ConfigFormat::from_path(path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive and finite, got {v}")))
            }
        };
        pos("horizon", self.horizon)?;
        pos("sample_time", self.sample_time)?;
        pos("control_dt", self.control_dt)?;
        let ratio = self.sample_time / self.control_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(ConfigError::invalid(
                "control_dt",
                format!("must divide sample_time = {}", self.sample_time),
            ));
        }
        let e = &self.estimator;
        if !(e.sigma >= 0.0 && e.sigma.is_finite()) {
            return Err(ConfigError::invalid("estimator.sigma", format!("must be nonnegative, got {}", e.sigma)));
        }
        if e.window < e.degree + 1 {
            return Err(ConfigError::invalid(
                "estimator.window",
                format!("needs at least degree + 1 = {} samples, got {}", e.degree + 1, e.window),
            ));
        }
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return Err(ConfigError::invalid("estimator.alpha", format!("must lie in (0, 1), got {}", e.alpha)));
        }
        let b = &self.barrier;
        pos("barrier.gamma", b.gamma)?;
        pos("barrier.beta", b.beta)?;
        pos("barrier.alpha_cbf", b.alpha_cbf)?;
        pos("barrier.mu", b.mu)?;
        pos("barrier.fd_step", b.fd_step)?;
        let g = &self.ego;
        for (i, v) in g.initial.iter().flatten().chain(&g.initial_nu).enumerate() {
            if !v.is_finite() {
                return Err(ConfigError::invalid("ego.initial", format!("entry {i} is not finite")));
            }
        }
        pos("ego.half_widths", g.half_widths[0].min(g.half_widths[1]))?;
        if g.box_power < 1 {
            return Err(ConfigError::invalid("ego.box_power", "must be at least 1"));
        }
        pos("ego.box_reg", g.box_reg)?;
        pos("ego.k_p", g.k_p)?;
        pos("ego.k_psi", g.k_psi)?;
        pos("ego.pursue_speed", g.pursue_speed)?;
        for (key, m) in [("ego.k_nu", &g.k_nu), ("ego.mass", &g.mass)] {
            let m = mat3(m);
            let sym = m.add(&m.transpose()).expect("square").scale(0.5);
            if !m.is_finite() || cholesky(&sym).is_err() {
                return Err(ConfigError::invalid(key, "must be positive definite"));
            }
        }
        if !mat3(&g.damping).is_finite() {
            return Err(ConfigError::invalid("ego.damping", "entries must be finite"));
        }
        let o = &self.obstacle;
        pos("obstacle.semi_axes", o.semi_axes[0].min(o.semi_axes[1]))?;
        pos("obstacle.v_max", o.v_max)?;
        match &o.motion {
            ObstacleMotion::Circular { center, radius, omega, phase } => {
                if !(center.iter().all(|v| v.is_finite()) && phase.is_finite() && omega.is_finite()) {
                    return Err(ConfigError::invalid("obstacle.center", "entries must be finite"));
                }
                pos("obstacle.radius", *radius)?;
            }
            ObstacleMotion::CubicPolynomial { coefficients } => {
                if coefficients.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(ConfigError::invalid("obstacle.coefficients", "entries must be finite"));
                }
            }
            ObstacleMotion::WaypointSpline { waypoints } => {
                check_waypoints("obstacle.waypoints", waypoints)?;
            }
        }
        let speed = super::obstacle::ObstacleTruth::new(o)
            .map_err(|m| ConfigError::invalid("obstacle.motion", m))?
            .max_speed(0.0, self.horizon);
        if speed > o.v_max * (1.0 + 1e-9) {
            return Err(ConfigError::invalid(
                "obstacle.v_max",
                format!("obstacle reaches speed {speed:.4} above the bound {}", o.v_max),
            ));
        }
        check_waypoints("reference.waypoints", &self.reference.waypoints)?;
        if self.coverage.runs == 0 {
            return Err(ConfigError::invalid("coverage.runs", "must be positive"));
        }
        pos("coverage.band", self.coverage.band)?;
        Ok(())
    }

    pub fn control_substeps(&self) -> usize {
        (self.sample_time / self.control_dt).round() as usize
    }

    pub fn intervals(&self) -> usize {
        (self.horizon / self.sample_time).round() as usize
    }
}

fn check_waypoints(key: &str, w: &[[f64; 3]]) -> Result<(), ConfigError> {
    if w.len() < 2 {
        return Err(ConfigError::invalid(key, "needs at least two rows"));
    }
    if w.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ConfigError::invalid(key, "entries must be finite"));
    }
    if w.windows(2).any(|p| p[1][0] <= p[0][0]) {
        return Err(ConfigError::invalid(key, "times must increase strictly"));
    }
    Ok(())
}

pub fn mat3(m: &[[f64; 3]; 3]) -> Mat {
    Mat::from_rows(&[&m[0], &m[1], &m[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::parse(&cfg.to_toml(), ConfigFormat::Toml).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ScenarioConfig::parse(&json, ConfigFormat::Json).unwrap(), cfg);
        assert_eq!(cfg.control_substeps(), 10);
        assert_eq!(cfg.intervals(), 1200);
    }

    #[test]
    fn invalid_alpha_names_its_line() {
        let src = "seed = 3\n\n[estimator]\nsigma = 0.5\nalpha = 1.5\n";
        let err = ScenarioConfig::parse(src, ConfigFormat::Toml).unwrap_err();
        match &err {
            ConfigError::Invalid { key, line, .. } => {
                assert_eq!(key, "estimator.alpha");
                assert_eq!(*line, Some(5));
            }
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().starts_with("line 5: estimator.alpha"));
        let json = "{\n  \"estimator\": {\n    \"alpha\": 1.5\n  }\n}";
        let err = ScenarioConfig::parse(json, ConfigFormat::Json).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn syntax_and_unknown_key_errors_carry_lines() {
        let err = ScenarioConfig::parse("seed = 1\nhorizon = \n", ConfigFormat::Toml).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: Some(2), .. }), "{err}");
        let err = ScenarioConfig::parse("[barrier]\ngama = 3.0\n", ConfigFormat::Toml).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn fast_obstacle_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.obstacle.motion = ObstacleMotion::Circular {
            center: [0.0, 0.0],
            radius: 10.0,
            omega: 0.1,
            phase: 0.0,
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "obstacle.v_max"));
    }

    #[test]
    fn control_step_must_divide_sample_time() {
        let cfg = ScenarioConfig {
            control_dt: 0.03,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
