//! Scenario files: one TOML document describes the plant, the grid, the
//! input samples, the task sets and costs, and the simulation defaults.
//!
//! The parsed structure is the unit of identity: artifacts carry the
//! SHA-256 of its canonical JSON serialization, so reformatting a file or
//! editing comments does not invalidate caches, while any semantic change
//! does. The abstraction cache key covers only the fields the transition
//! computation depends on.

use crate::costs::{CostFamily, CostModel};
use crate::dynamics::{SampledSystem, VectorField};
use crate::geom::{HyperRect, Region, Segment2};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

fn bad(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    /// "vehicle", "integrator" or "linear".
    pub model: String,
    pub tau: f64,
    pub substeps: u32,
    pub disturbance: Vec<f64>,
    /// Componentwise growth-bound matrix for the model on the domain.
    pub growth: Vec<Vec<f64>>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<u32>,
    /// Indices of periodic axes.
    #[serde(default)]
    pub periodic: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Samples per axis, endpoints included; a single sample sits at the
    /// midpoint.
    pub samples: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub a1: Vec<RectSpec>,
    pub a2: Vec<RectSpec>,
    #[serde(default)]
    pub obstacles: Vec<RectSpec>,
    /// Constant terminal cost paid when stopping in the goal set.
    pub g0: f64,
    /// "constant", "time_steer" or "vehicle".
    pub cost: String,
    #[serde(default)]
    pub cost_value: Option<f64>,
    #[serde(default)]
    pub legality: Vec<RectSpec>,
    #[serde(default)]
    pub axes: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub x0: Vec<f64>,
    pub episodes: u32,
    pub seed: u64,
    /// "none", "uniform" or "corners".
    pub strategy: String,
    /// 0 selects an automatic budget from the synthesized value.
    #[serde(default)]
    pub max_steps: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dynamics: DynamicsSpec,
    pub grid: GridSpec,
    pub inputs: InputSpec,
    pub spec: TaskSpec,
    pub sim: SimSpec,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn state_dim(&self) -> Result<usize, ScenarioError> {
        match self.dynamics.model.as_str() {
            "vehicle" => Ok(4),
            "integrator" => self
                .dynamics
                .dim
                .ok_or_else(|| bad("integrator model needs dynamics.dim")),
            "linear" => {
                let a = self
                    .dynamics
                    .a
                    .as_ref()
                    .ok_or_else(|| bad("linear model needs dynamics.a"))?;
                Ok(a.len())
            }
            other => Err(bad(format!("unknown model '{other}'"))),
        }
    }

    fn input_dim(&self) -> Result<usize, ScenarioError> {
        match self.dynamics.model.as_str() {
            "vehicle" => Ok(2),
            "integrator" => self.state_dim(),
            "linear" => {
                let b = self
                    .dynamics
                    .b
                    .as_ref()
                    .ok_or_else(|| bad("linear model needs dynamics.b"))?;
                Ok(b.first().map_or(0, |row| row.len()))
            }
            other => Err(bad(format!("unknown model '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.state_dim()?;
        let m = self.input_dim()?;
        let d = &self.dynamics;
        if !(d.tau > 0.0) {
            return Err(bad("dynamics.tau must be positive"));
        }
        if d.substeps == 0 {
            return Err(bad("dynamics.substeps must be at least 1"));
        }
        if d.disturbance.len() != n {
            return Err(bad(format!(
                "dynamics.disturbance has {} entries, state dimension is {n}",
                d.disturbance.len()
            )));
        }
        if d.disturbance.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(bad("dynamics.disturbance entries must be finite and nonnegative"));
        }
        if d.growth.len() != n || d.growth.iter().any(|r| r.len() != n) {
            return Err(bad(format!("dynamics.growth must be a {n}x{n} matrix")));
        }
        if self.grid.lo.len() != n || self.grid.hi.len() != n || self.grid.cells.len() != n {
            return Err(bad(format!("grid lo/hi/cells must all have dimension {n}")));
        }
        if self.grid.periodic.iter().any(|&a| a >= n) {
            return Err(bad("grid.periodic refers to a nonexistent axis"));
        }
        if self.inputs.lo.len() != m
            || self.inputs.hi.len() != m
            || self.inputs.samples.len() != m
        {
            return Err(bad(format!("inputs lo/hi/samples must all have dimension {m}")));
        }
        if self.inputs.samples.iter().any(|&k| k == 0) {
            return Err(bad("inputs.samples entries must be at least 1"));
        }
        for (lo, hi) in self.inputs.lo.iter().zip(&self.inputs.hi) {
            if !(lo <= hi) {
                return Err(bad("inputs.lo must not exceed inputs.hi"));
            }
        }
        for (label, rects) in [
            ("a1", &self.spec.a1),
            ("a2", &self.spec.a2),
            ("obstacles", &self.spec.obstacles),
            ("legality", &self.spec.legality),
        ] {
            for r in rects.iter() {
                if r.lo.len() != n || r.hi.len() != n {
                    return Err(bad(format!("spec.{label} rectangle has wrong dimension")));
                }
                if r.lo.iter().zip(&r.hi).any(|(a, b)| !(a <= b)) {
                    return Err(bad(format!("spec.{label} rectangle has lo > hi")));
                }
            }
        }
        if self.spec.a1.is_empty() || self.spec.a2.is_empty() {
            return Err(bad("spec.a1 and spec.a2 must be non-empty"));
        }
        if !(self.spec.g0.is_finite() && self.spec.g0 >= 0.0) {
            return Err(bad("spec.g0 must be finite and nonnegative"));
        }
        match self.spec.cost.as_str() {
            "constant" => {
                let v = self
                    .spec
                    .cost_value
                    .ok_or_else(|| bad("constant cost needs spec.cost_value"))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad("spec.cost_value must be finite and nonnegative"));
                }
            }
            "time_steer" => {}
            "vehicle" => {
                if self.spec.axes.is_empty() {
                    return Err(bad("vehicle cost needs spec.axes"));
                }
            }
            other => return Err(bad(format!("unknown cost family '{other}'"))),
        }
        if self.sim.x0.len() != n {
            return Err(bad(format!("sim.x0 must have dimension {n}")));
        }
        match self.sim.strategy.as_str() {
            "none" | "uniform" | "corners" => {}
            other => return Err(bad(format!("unknown disturbance strategy '{other}'"))),
        }
        self.cost_model()?.validate().map_err(bad)?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid, ScenarioError> {
        let n = self.state_dim()?;
        let mut periodic = vec![false; n];
        for &a in &self.grid.periodic {
            periodic[a] = true;
        }
        Ok(Grid::new(
            HyperRect::new(self.grid.lo.clone(), self.grid.hi.clone()),
            self.grid.cells.clone(),
            periodic,
        )?)
    }

    pub fn sampled_system(&self) -> Result<SampledSystem, ScenarioError> {
        let field = match self.dynamics.model.as_str() {
            "vehicle" => VectorField::Vehicle,
            "integrator" => VectorField::Integrator { dim: self.state_dim()? },
            "linear" => VectorField::Linear {
                a: self.dynamics.a.clone().unwrap_or_default(),
                b: self.dynamics.b.clone().unwrap_or_default(),
            },
            other => return Err(bad(format!("unknown model '{other}'"))),
        };
        Ok(SampledSystem {
            field,
            tau: self.dynamics.tau,
            substeps: self.dynamics.substeps,
            growth: self.dynamics.growth.clone(),
            disturbance: self.dynamics.disturbance.clone(),
        })
    }

    /// Input grid, axis 0 fastest, endpoints included; single-sample axes
    /// use the interval midpoint.
    pub fn input_points(&self) -> Vec<Vec<f64>> {
        let m = self.inputs.samples.len();
        let axis_points: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let (lo, hi) = (self.inputs.lo[i], self.inputs.hi[i]);
                let k = self.inputs.samples[i];
                if k == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..k)
                        .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let total: usize = axis_points.iter().map(|p| p.len()).product();
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut u = Vec::with_capacity(m);
            for pts in &axis_points {
                u.push(pts[idx % pts.len()]);
                idx /= pts.len();
            }
            out.push(u);
        }
        out
    }

    fn region(rects: &[RectSpec]) -> Region {
        Region(
            rects
                .iter()
                .map(|r| HyperRect::new(r.lo.clone(), r.hi.clone()))
                .collect(),
        )
    }

    pub fn a1_region(&self) -> Region {
        Self::region(&self.spec.a1)
    }

    pub fn a2_region(&self) -> Region {
        Self::region(&self.spec.a2)
    }

    pub fn obstacle_region(&self) -> Region {
        Self::region(&self.spec.obstacles)
    }

    pub fn cost_model(&self) -> Result<CostModel, ScenarioError> {
        let family = match self.spec.cost.as_str() {
            "constant" => CostFamily::Constant { value: self.spec.cost_value.unwrap_or(0.0) },
            "time_steer" => CostFamily::TimeSteer,
            "vehicle" => CostFamily::Vehicle,
            other => return Err(bad(format!("unknown cost family '{other}'"))),
        };
        Ok(CostModel {
            family,
            tau: self.dynamics.tau,
            domain: HyperRect::new(self.grid.lo.clone(), self.grid.hi.clone()),
            obstacles: self.obstacle_region(),
            legality: Self::region(&self.spec.legality),
            axes: self
                .spec
                .axes
                .iter()
                .map(|s| Segment2 { a: s.a, b: s.b })
                .collect(),
            terminal: crate::cost::Cost::new(self.spec.g0),
        })
    }

    /// Inner-approximation masks of the waypoint and goal sets, extended by
    /// one trailing `false` for the absorbing out cell.
    pub fn task_masks(&self, grid: &Grid) -> (Vec<bool>, Vec<bool>) {
        let mut a1 = grid.inner_mask(&self.a1_region());
        let mut a2 = grid.inner_mask(&self.a2_region());
        a1.push(false);
        a2.push(false);
        (a1, a2)
    }

    /// Identity of the whole scenario.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Identity of the abstraction inputs only (plant, grid, input samples);
    /// used to reuse cached transition structures across task edits.
    pub fn abstraction_key(&self) -> [u8; 32] {
        let json = serde_json::to_vec(&(&self.dynamics, &self.grid, &self.inputs))
            .expect("scenario serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize().into()
    }
}
