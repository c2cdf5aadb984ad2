//! Run configuration for a single localized flow.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cutoff::{center_node, constant_cutoff, make_cutoff, CutoffFunction, Profile};
use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::flow::FlowSettings;
use crate::grid::ChartGrid;
use crate::io::read_metric;
use crate::scenario::{scenario_on_default_grid, ScenarioParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub params: ScenarioParams,
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffSpec {
    /// Ball of coordinate radius `radius`; centered on the node nearest
    /// `center`, or on the chart center when absent.
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
        #[serde(default)]
        profile: Profile,
    },
    Constant {
        value: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunCheck {
    FlowConditions,
    Smoothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    /// Metric field file, relative to the config file.
    #[serde(default)]
    pub metric_file: Option<PathBuf>,
    pub cutoff: CutoffSpec,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub checks: Vec<RunCheck>,
    /// Sobolev constant for the smoothing check; estimated when absent.
    #[serde(default)]
    pub c_s: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Seed for randomized scenarios that do not set their own.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file; `metric_file` and `out` become relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.metric_file {
            cfg.metric_file = Some(base.join(m));
        }
        if let Some(o) = &cfg.out {
            cfg.out = Some(base.join(o));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_some() == self.metric_file.is_some() {
            return Err(Error::Config(
                "exactly one of `scenario` and `metric_file` is required".into(),
            ));
        }
        self.flow.validate()
    }

    /// Initial metric from the scenario or the metric file.
    pub fn initial_metric(&self, seed: Option<u64>) -> Result<MetricField> {
        match (&self.scenario, &self.metric_file) {
            (Some(s), None) => {
                let mut params = s.params.clone();
                if params.seed.is_none() {
                    params.seed = seed.or(self.seed);
                }
                Ok(scenario_on_default_grid(&s.name, &params, s.dim, s.n)?.metric)
            }
            (None, Some(path)) => read_metric(path),
            _ => Err(Error::Config(
                "exactly one of `scenario` and `metric_file` is required".into(),
            )),
        }
    }

    pub fn cutoff(&self, grid: &ChartGrid) -> Result<CutoffFunction> {
        match &self.cutoff {
            CutoffSpec::Ball {
                center,
                radius,
                profile,
            } => {
                let node = match center {
                    Some(x) => node_near(grid, x)?,
                    None => center_node(grid),
                };
                make_cutoff(grid, node, *radius, *profile)
            }
            CutoffSpec::Constant { value } => constant_cutoff(grid, *value),
        }
    }
}

/// The node nearest the coordinate point `x`.
pub fn node_near(grid: &ChartGrid, x: &[f64]) -> Result<usize> {
    if x.len() != grid.dim() {
        return Err(Error::Dimension(format!(
            "point has {} coordinates, grid is {}-dimensional",
            x.len(),
            grid.dim()
        )));
    }
    let frac = grid.fractional_index(x);
    let mut idx = Vec::with_capacity(grid.dim());
    for (a, &n) in grid.extents().iter().enumerate() {
        let f = frac[a].round();
        let i = if grid.is_periodic() {
            f.rem_euclid(n as f64) as usize
        } else if (0.0..n as f64).contains(&f) {
            f as usize
        } else {
            return Err(Error::InvalidParameter(format!(
                "coordinate {} lies outside the chart on axis {a}",
                x[a]
            )));
        };
        idx.push(i);
    }
    Ok(grid.index(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "scenario": {"name": "perturbed_flat", "params": {"amplitude": 0.05, "wavenumber": 2}, "dim": 2, "n": 32},
        "cutoff": {"kind": "ball", "radius": 0.3},
        "flow": {"t_target": 0.001}
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_json(BASE).unwrap();
        let g = cfg.initial_metric(Some(7)).unwrap();
        let c = cfg.cutoff(g.grid()).unwrap();
        assert_eq!(c.support_radius, 0.3);
        assert_eq!(g.data(), cfg.initial_metric(Some(7)).unwrap().data());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = BASE.replace("\"flow\"", "\"flw\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Json(_))));
        let bad = BASE.replace("\"t_target\"", "\"t_end\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn needs_exactly_one_source() {
        let both = BASE.replace("\"cutoff\"", "\"metric_file\": \"g.json\", \"cutoff\"");
        assert!(matches!(RunConfig::from_json(&both), Err(Error::Config(_))));
    }

    #[test]
    fn nearest_node() {
        let grid = ChartGrid::periodic_cube(2, 10, 1.0).unwrap();
        let k = node_near(&grid, &[0.51, 0.29]).unwrap();
        let p = grid.position(k);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.3).abs() < 1e-12);
        let frozen = ChartGrid::frozen_cube(2, 10, -1.0, 1.0).unwrap();
        assert!(node_near(&frozen, &[3.0, 0.0]).is_err());
    }
}
