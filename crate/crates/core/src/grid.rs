//! Uniform grid over a box domain with one distinguished out-of-domain cell.
//!
//! Cells are half-open along every axis: cell k on an axis covers
//! [lo + k*w, lo + (k+1)*w), so a point exactly on an interior boundary
//! belongs to the upper cell. Periodic axes wrap instead of flowing out.
//! The linear cell index is row-major with axis 0 fastest.

use crate::geom::{HyperRect, Region};
use crate::system::StateId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid shape mismatch: domain dim {dim}, cells {cells}, periodic {periodic}")]
    Shape { dim: usize, cells: usize, periodic: usize },
    #[error("axis {axis} must have at least one cell")]
    EmptyAxis { axis: usize },
    #[error("axis {axis} has zero width")]
    ZeroWidth { axis: usize },
    #[error("grid has {total} cells, beyond the addressable limit")]
    TooManyCells { total: u128 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: HyperRect,
    pub cells: Vec<u32>,
    pub periodic: Vec<bool>,
    width: Vec<f64>,
    strides: Vec<u64>,
    total: u64,
}

impl Grid {
    pub fn new(domain: HyperRect, cells: Vec<u32>, periodic: Vec<bool>) -> Result<Grid, GridError> {
        let dim = domain.dim();
        if cells.len() != dim || periodic.len() != dim {
            return Err(GridError::Shape { dim, cells: cells.len(), periodic: periodic.len() });
        }
        let mut total: u128 = 1;
        let mut strides = vec![0u64; dim];
        let mut width = vec![0.0; dim];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(GridError::EmptyAxis { axis: a });
            }
            if domain.hi[a] <= domain.lo[a] {
                return Err(GridError::ZeroWidth { axis: a });
            }
            strides[a] = total as u64;
            total *= cells[a] as u128;
            width[a] = (domain.hi[a] - domain.lo[a]) / cells[a] as f64;
        }
        // One extra id is reserved for the out cell; successor indices are u32.
        if total >= (u32::MAX as u128) {
            return Err(GridError::TooManyCells { total });
        }
        Ok(Grid { domain, cells, periodic, width, strides, total: total as u64 })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    /// Number of in-domain cells; the out cell is not counted.
    pub fn cell_total(&self) -> u64 {
        self.total
    }

    pub fn out_cell(&self) -> StateId {
        self.total as StateId
    }

    pub fn width(&self) -> &[f64] {
        &self.width
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.width.iter().map(|w| 0.5 * w).collect()
    }

    /// Per-axis cell index of a coordinate, before wrapping or range checks.
    #[inline]
    fn raw_axis_index(&self, axis: usize, v: f64) -> f64 {
        ((v - self.domain.lo[axis]) / self.width[axis]).floor()
    }

    /// Wraps a coordinate on a periodic axis into [lo, hi).
    #[inline]
    pub fn wrap_coord(&self, axis: usize, v: f64) -> f64 {
        let lo = self.domain.lo[axis];
        let span = self.domain.hi[axis] - lo;
        let t = v - span * ((v - lo) / span).floor();
        // Guard the rounding case t == hi.
        if t >= self.domain.hi[axis] {
            lo
        } else {
            t
        }
    }

    /// Per-axis index after wrap and range handling; None means out.
    #[inline]
    pub fn axis_index(&self, axis: usize, v: f64) -> Option<u32> {
        if self.periodic[axis] {
            let idx = self.raw_axis_index(axis, self.wrap_coord(axis, v));
            let idx = (idx as i64).clamp(0, self.cells[axis] as i64 - 1);
            Some(idx as u32)
        } else {
            let idx = self.raw_axis_index(axis, v);
            if idx < 0.0 || idx >= self.cells[axis] as f64 || !idx.is_finite() {
                None
            } else {
                Some(idx as u32)
            }
        }
    }

    /// Cell containing a point, or the out cell.
    pub fn quantize(&self, x: &[f64]) -> StateId {
        debug_assert_eq!(x.len(), self.dim());
        let mut id: u64 = 0;
        for a in 0..self.dim() {
            match self.axis_index(a, x[a]) {
                Some(i) => id += i as u64 * self.strides[a],
                None => return self.out_cell(),
            }
        }
        id as StateId
    }

    pub fn coords(&self, cell: StateId) -> Vec<u32> {
        debug_assert!((cell as u64) < self.total);
        let mut rest = cell as u64;
        let mut out = vec![0u32; self.dim()];
        for a in 0..self.dim() {
            out[a] = (rest % self.cells[a] as u64) as u32;
            rest /= self.cells[a] as u64;
        }
        out
    }

    pub fn index(&self, coords: &[u32]) -> StateId {
        let mut id: u64 = 0;
        for a in 0..self.dim() {
            debug_assert!(coords[a] < self.cells[a]);
            id += coords[a] as u64 * self.strides[a];
        }
        id as StateId
    }

    /// Closed box of a cell.
    pub fn cell_box(&self, cell: StateId) -> HyperRect {
        let c = self.coords(cell);
        let lo: Vec<f64> = (0..self.dim())
            .map(|a| self.domain.lo[a] + c[a] as f64 * self.width[a])
            .collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|a| self.domain.lo[a] + (c[a] + 1) as f64 * self.width[a])
            .collect();
        HyperRect::new(lo, hi)
    }

    pub fn center(&self, cell: StateId) -> Vec<f64> {
        let c = self.coords(cell);
        (0..self.dim())
            .map(|a| self.domain.lo[a] + (c[a] as f64 + 0.5) * self.width[a])
            .collect()
    }

    /// Cells whose closed box lies inside the region (inner approximation;
    /// containment is tested against single member boxes).
    pub fn inner_cells(&self, region: &Region) -> Vec<StateId> {
        let mut out = Vec::new();
        for cell in 0..self.total {
            if region.covers_rect(&self.cell_box(cell as StateId)) {
                out.push(cell as StateId);
            }
        }
        out
    }

    /// Marks cells whose closed box intersects the region.
    pub fn intersecting_mask(&self, region: &Region) -> Vec<bool> {
        (0..self.total)
            .map(|cell| region.intersects_rect(&self.cell_box(cell as StateId)))
            .collect()
    }

    pub fn inner_mask(&self, region: &Region) -> Vec<bool> {
        (0..self.total)
            .map(|cell| region.covers_rect(&self.cell_box(cell as StateId)))
            .collect()
    }
}
