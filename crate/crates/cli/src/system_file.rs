//! JSON system definitions.
//!
//! ```json
//! {
//!   "name": "quadratic",
//!   "dimension": 1,
//!   "map": ["eps*x1^2 + (1-eps)*x1"],
//!   "params": {"eps": 0.5},
//!   "lyapunov": "x1",
//!   "domain": {"lower": [0], "upper": [1]}
//! }
//! ```
//!
//! State variables are `x1..xm`. A scalar recurrence replaces `map` with
//! `"higher_order": {"order": k, "g": "...", "initial": [u0, ..., u(k-1)]}`
//! where `u1` is the newest value; it is lifted to a k-dimensional map and
//! `lyapunov`/`domain` then refer to the lifted state.

use std::collections::BTreeMap;
use std::path::Path;

use lasalle_core::dynsys::lift;
use lasalle_core::expr::parse;
use lasalle_core::{Bounds, Environment, HigherOrderSpec, Point, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<String>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub higher_order: Option<HigherOrderDef>,
    /// Default starting point when no `--x0` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDef {
    pub fn to_bounds(&self) -> CliResult<Bounds> {
        Ok(Bounds::new(self.lower.clone(), self.upper.clone())?)
    }

    pub fn from_bounds(b: &Bounds) -> Self {
        BoxDef {
            lower: b.lower().to_vec(),
            upper: b.upper().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HigherOrderDef {
    pub order: usize,
    pub g: String,
    pub initial: Vec<f64>,
}

/// A validated system ready for analysis.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub name: String,
    pub system: SystemSpec,
    pub initial_state: Option<Point>,
}

fn parse_expr(what: &str, text: &str) -> CliResult<lasalle_core::Expr> {
    parse(text).map_err(|e| CliError::input(format!("{what}: {e} in `{text}`")))
}

impl SystemFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::input(format!("invalid system file: {e}")))
    }

    pub fn load(&self) -> CliResult<LoadedSystem> {
        let params = Environment::from_pairs(self.params.iter().map(|(k, v)| (k.as_str(), *v)))?;
        let (mut system, lifted_x0) = match (&self.map, &self.higher_order) {
            (Some(_), Some(_)) => return Err(CliError::input("give either `map` or `higher_order`, not both")),
            (None, None) => return Err(CliError::input("one of `map` or `higher_order` is required")),
            (Some(map), None) => {
                if map.is_empty() {
                    return Err(CliError::input("`map` must have at least one component"));
                }
                let components = map
                    .iter()
                    .enumerate()
                    .map(|(i, c)| parse_expr(&format!("map[{i}]"), c))
                    .collect::<CliResult<Vec<_>>>()?;
                (SystemSpec::new(components, params)?, None)
            }
            (None, Some(h)) => {
                let spec = HigherOrderSpec {
                    order: h.order,
                    g: parse_expr("higher_order.g", &h.g)?,
                    params,
                    initial: h.initial.clone(),
                };
                let (sys, x0) = lift(&spec)?;
                (sys, Some(x0))
            }
        };
        let m = system.dim();
        if let Some(d) = self.dimension {
            if d != m {
                return Err(CliError::input(format!("`dimension` is {d} but the map has {m} components")));
            }
        }
        if let Some(v) = &self.lyapunov {
            system = system.with_lyapunov(parse_expr("lyapunov", v)?)?;
        }
        if let Some(d) = &self.domain {
            system = system.with_domain(d.to_bounds()?)?;
        }
        let initial_state = match &self.initial_state {
            Some(x) if x.len() != m => {
                return Err(CliError::input(format!(
                    "`initial_state` has {} coordinates, expected {m}",
                    x.len()
                )))
            }
            Some(x) => Some(Point::new(x.clone())),
            None => lifted_x0,
        };
        Ok(LoadedSystem {
            name: self.name.clone(),
            system,
            initial_state,
        })
    }

    /// The equivalent first-order file. A `map` file comes back normalised.
    pub fn lifted(&self) -> CliResult<SystemFile> {
        let loaded = self.load()?;
        let sys = &loaded.system;
        Ok(SystemFile {
            name: self.name.clone(),
            dimension: Some(sys.dim()),
            map: Some(sys.components().iter().map(ToString::to_string).collect()),
            params: self.params.clone(),
            lyapunov: sys.lyapunov().map(ToString::to_string),
            domain: sys.domain().map(BoxDef::from_bounds),
            higher_order: None,
            initial_state: loaded.initial_state.map(Point::into_coords),
        })
    }
}
