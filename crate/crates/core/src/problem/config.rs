//! JSON problem configuration.
//!
//! ```json
//! {
//!   "domain": [0, 1],
//!   "horizon": 3,
//!   "gamma": 0,
//!   "state": { "initial": "sqrt(2)*sin(pi*x)", "source": "0" },
//!   "controls": { "drift": "0", "channels": ["1"], "linear_cost": [0] },
//!   "constraints": [ { "density": "sqrt(2)*sin(pi*x)", "offset": -2 } ],
//!   "targets": { "running": "...", "terminal": "sqrt(2)*sin(pi*x)" },
//!   "bounds": { "lower": [-1], "upper": ["pi^2 + 1"] }
//! }
//! ```
//!
//! Scalars may be given as numbers or as constant expressions.

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::ProblemSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Scalar {
    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Expr(s) => {
                let e = parse(field, s)?;
                match e {
                    Expr::Const(v) => Ok(v),
                    _ => Err(Error::InvalidProblem(format!("{field} must be a constant, got {s:?}"))),
                }
            }
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: [Scalar; 2],
    pub horizon: Scalar,
    pub gamma: Scalar,
    pub state: StateConfig,
    pub controls: ControlsConfig,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    pub targets: TargetsConfig,
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub initial: String,
    #[serde(default = "zero")]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    #[serde(default = "zero")]
    pub drift: String,
    pub channels: Vec<String>,
    #[serde(default)]
    pub linear_cost: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub density: String,
    pub offset: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub running: String,
    pub terminal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: Vec<Scalar>,
    pub upper: Vec<Scalar>,
}

fn zero() -> String {
    "0".to_string()
}

fn parse(field: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|source| Error::Expr { field: field.to_string(), source })
}

impl ProblemConfig {
    pub fn into_spec(&self) -> Result<ProblemSpec> {
        let m = self.controls.channels.len();
        let linear_cost = if self.controls.linear_cost.is_empty() {
            vec![0.0; m]
        } else {
            self.controls
                .linear_cost
                .iter()
                .enumerate()
                .map(|(i, s)| s.value(&format!("controls.linear_cost[{i}]")))
                .collect::<Result<_>>()?
        };
        let spec = ProblemSpec {
            x_min: self.domain[0].value("domain[0]")?,
            x_max: self.domain[1].value("domain[1]")?,
            horizon: self.horizon.value("horizon")?,
            gamma: self.gamma.value("gamma")?,
            source: parse("state.source", &self.state.source)?,
            initial_state: parse("state.initial", &self.state.initial)?,
            drift: parse("controls.drift", &self.controls.drift)?,
            channels: self
                .controls
                .channels
                .iter()
                .enumerate()
                .map(|(i, s)| parse(&format!("controls.channels[{i}]"), s))
                .collect::<Result<_>>()?,
            linear_cost,
            constraint_densities: self
                .constraints
                .iter()
                .enumerate()
                .map(|(j, c)| parse(&format!("constraints[{j}].density"), &c.density))
                .collect::<Result<_>>()?,
            constraint_offsets: self
                .constraints
                .iter()
                .enumerate()
                .map(|(j, c)| c.offset.value(&format!("constraints[{j}].offset")))
                .collect::<Result<_>>()?,
            running_target: parse("targets.running", &self.targets.running)?,
            terminal_target: parse("targets.terminal", &self.targets.terminal)?,
            u_lower: self
                .bounds
                .lower
                .iter()
                .enumerate()
                .map(|(i, s)| s.value(&format!("bounds.lower[{i}]")))
                .collect::<Result<_>>()?,
            u_upper: self
                .bounds
                .upper
                .iter()
                .enumerate()
                .map(|(i, s)| s.value(&format!("bounds.upper[{i}]")))
                .collect::<Result<_>>()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses and validates a JSON problem configuration.
pub fn load_problem(config_text: &str) -> Result<ProblemSpec> {
    let cfg: ProblemConfig =
        serde_json::from_str(config_text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    cfg.into_spec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const EXAMPLE: &str = include_str!("../../data/example.json");

    #[test]
    fn loads_example() {
        let spec = load_problem(EXAMPLE).unwrap();
        assert_eq!(spec.m(), 1);
        assert_eq!(spec.q(), 1);
        assert_eq!(spec.gamma, 0.0);
        assert_eq!(spec.horizon, 3.0);
        assert_eq!(spec.constraint_offsets, vec![-2.0]);
        assert_eq!(spec.u_lower, vec![-1.0]);
        assert!((spec.u_upper[0] - (PI * PI + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let text = EXAMPLE.replace("\"upper\": [\"pi^2 + 1\"]", "\"upper\": [-1]");
        assert_ne!(text, EXAMPLE);
        let err = load_problem(&text).unwrap_err();
        assert!(err.to_string().contains("degenerate control bounds"), "{err}");
    }

    #[test]
    fn nonvanishing_initial_state_rejected() {
        let text = EXAMPLE.replace("\"initial\": \"sqrt(2)*sin(pi*x)\"", "\"initial\": \"x\"");
        assert_ne!(text, EXAMPLE);
        let err = load_problem(&text).unwrap_err();
        assert!(err.to_string().contains("boundary compatibility"), "{err}");
    }

    #[test]
    fn parse_failures() {
        assert!(matches!(load_problem("{"), Err(Error::ConfigParse(_))));
        let text = EXAMPLE.replace("\"horizon\": 3", "\"horizon\": 3, \"extra\": 1");
        assert!(matches!(load_problem(&text), Err(Error::ConfigParse(_))));
        let text = EXAMPLE.replace("\"channels\": [\"1\"]", "\"channels\": [\"1 +\"]");
        assert!(matches!(load_problem(&text), Err(Error::Expr { .. })));
        let text = EXAMPLE.replace("\"offset\": -2", "\"offset\": \"x\"");
        assert!(matches!(load_problem(&text), Err(Error::InvalidProblem(_))));
    }
}
