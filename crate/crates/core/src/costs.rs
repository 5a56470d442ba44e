//! Running-cost families evaluated both pointwise on concrete states and as
//! conservative cell-level upper bounds on the grid.
//!
//! The cell-level tables dominate the pointwise cost: a cell that touches an
//! obstacle, or is not entirely inside a single legality box, gets infinite
//! outgoing cost; distance terms are maximized over the successor cell. This
//! is the direction required for the synthesized value function to upper-bound
//! closed-loop cost.

use crate::cost::Cost;
use crate::geom::{distance_bound_over_box, distance_to_segments, HyperRect, Region, Segment2};
use crate::grid::Grid;
use crate::system::{InputId, StateId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostFamily {
    /// Fixed charge per step.
    Constant { value: f64 },
    /// Sampling period plus squared steering effort (second input coordinate).
    TimeSteer,
    /// TimeSteer plus distance of the successor position to the roadway axes.
    Vehicle,
}

/// Scenario cost structure. Obstacles and legality constraints apply to the
/// state the input is applied in; the distance term to the state reached.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub family: CostFamily,
    pub tau: f64,
    pub domain: HyperRect,
    pub obstacles: Region,
    /// Empty region means no legality constraint.
    pub legality: Region,
    /// Roadway axes for the Vehicle family.
    pub axes: Vec<Segment2>,
    /// Constant terminal cost on the goal set.
    pub terminal: Cost,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        match self.family {
            CostFamily::Constant { value } => {
                Cost::try_new(value).map_err(|e| e.to_string())?;
                if !value.is_finite() {
                    return Err("constant running cost must be finite".into());
                }
            }
            CostFamily::TimeSteer | CostFamily::Vehicle => {
                if !(self.tau > 0.0) {
                    return Err("sampling period must be positive".into());
                }
            }
        }
        if matches!(self.family, CostFamily::Vehicle) && self.axes.is_empty() {
            return Err("vehicle cost family needs at least one roadway axis".into());
        }
        Ok(())
    }

    fn steering(u: &[f64]) -> f64 {
        if u.len() >= 2 {
            u[1]
        } else {
            0.0
        }
    }

    /// True when applying an input at `x` violates a hard constraint.
    /// `x` must already have periodic coordinates in their principal range.
    pub fn violates(&self, x: &[f64]) -> bool {
        if !self.domain.contains_point(x) {
            return true;
        }
        if self.obstacles.contains_point(x) {
            return true;
        }
        if !self.legality.is_empty() && !self.legality.contains_point(x) {
            return true;
        }
        false
    }

    /// Pointwise running cost g(x, y, u).
    pub fn concrete(&self, x: &[f64], y: &[f64], u: &[f64]) -> Cost {
        if self.violates(x) {
            return Cost::INF;
        }
        let v = match self.family {
            CostFamily::Constant { value } => value,
            CostFamily::TimeSteer => self.tau + Self::steering(u).powi(2),
            CostFamily::Vehicle => {
                self.tau
                    + Self::steering(u).powi(2)
                    + distance_to_segments([y[0], y[1]], &self.axes)
            }
        };
        Cost::new(v)
    }

    /// Precomputed cell-level upper bounds for a grid and input list.
    pub fn abstracted(&self, grid: &Grid, inputs: &[Vec<f64>]) -> AbstractRunningCost {
        let n = grid.cell_total() as usize;
        let mut base_ok = vec![true; n];
        let constrained = !self.obstacles.is_empty() || !self.legality.is_empty();
        if constrained {
            for cell in 0..n {
                let b = grid.cell_box(cell as StateId);
                let ok = !self.obstacles.intersects_rect(&b)
                    && (self.legality.is_empty() || self.legality.covers_rect(&b));
                base_ok[cell] = ok;
            }
        }
        let per_input: Vec<f64> = inputs
            .iter()
            .map(|u| match self.family {
                CostFamily::Constant { value } => value,
                CostFamily::TimeSteer | CostFamily::Vehicle => {
                    self.tau + Self::steering(u).powi(2)
                }
            })
            .collect();
        // The distance term depends on the successor's position plane only,
        // and axes 0 and 1 are the fastest in the linear cell index.
        let pos_bound = if matches!(self.family, CostFamily::Vehicle) {
            let plane = (grid.cells[0] as usize) * (grid.cells[1] as usize);
            let mut bounds = vec![0.0; plane];
            for (p, bound) in bounds.iter_mut().enumerate() {
                let b = grid.cell_box(p as StateId);
                *bound = distance_bound_over_box(
                    [b.lo[0], b.lo[1]],
                    [b.hi[0], b.hi[1]],
                    &self.axes,
                );
            }
            bounds
        } else {
            Vec::new()
        };
        AbstractRunningCost {
            out_cell: grid.out_cell(),
            plane: if pos_bound.is_empty() {
                0
            } else {
                (grid.cells[0] as u64) * (grid.cells[1] as u64)
            },
            base_ok,
            per_input,
            pos_bound,
        }
    }
}

/// Cell-level running-cost upper bound g'(cell, successor, input).
#[derive(Debug, Clone)]
pub struct AbstractRunningCost {
    out_cell: StateId,
    plane: u64,
    base_ok: Vec<bool>,
    per_input: Vec<f64>,
    pos_bound: Vec<f64>,
}

impl AbstractRunningCost {
    #[inline]
    pub fn eval(&self, x: StateId, y: StateId, u: InputId) -> Cost {
        if x == self.out_cell || y == self.out_cell || !self.base_ok[x as usize] {
            return Cost::INF;
        }
        let mut v = self.per_input[u as usize];
        if self.plane != 0 {
            v += self.pos_bound[(y as u64 % self.plane) as usize];
        }
        Cost::new(v)
    }

    /// Cells with finite outgoing cost.
    pub fn base_ok(&self) -> &[bool] {
        &self.base_ok
    }
}
