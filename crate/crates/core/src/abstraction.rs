//! Grid abstraction of a sampled system: one-step reachable-set
//! over-approximation quantized to cell successor sets.
//!
//! Successor lists are stored in one compressed array with a per-(cell, input)
//! offset table, built in two passes (count, then fill into disjoint slices),
//! so the result is byte-identical regardless of thread count. A pair whose
//! reach box leaves the non-periodic domain, or whose integration fails, is
//! marked unsafe: its successor set is exactly the absorbing out cell.

use crate::dynamics::{PreparedInput, SampledSystem};
use crate::grid::Grid;
use crate::system::{InputId, StateId, TransitionSystem};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("field dimension {field} does not match grid dimension {grid}")]
    Dimension { field: usize, grid: usize },
    #[error("{pairs} cell-input pairs exceed the addressable sparse-store capacity")]
    Capacity { pairs: u64 },
    #[error("growth-bound radius computation failed")]
    Radius,
}

#[derive(Debug, Clone)]
pub struct AbstractSystem {
    pub grid: Grid,
    input_count: u32,
    /// Pair-indexed, length pairs+1; pair = cell * input_count + input.
    offsets: Vec<u64>,
    successors: Vec<StateId>,
    out_loop: [StateId; 1],
}

impl AbstractSystem {
    pub fn from_parts(
        grid: Grid,
        input_count: u32,
        offsets: Vec<u64>,
        successors: Vec<StateId>,
    ) -> AbstractSystem {
        let out = grid.out_cell();
        debug_assert_eq!(
            offsets.len() as u64,
            grid.cell_total() * input_count as u64 + 1
        );
        debug_assert_eq!(*offsets.last().unwrap_or(&0), successors.len() as u64);
        AbstractSystem { grid, input_count, offsets, successors, out_loop: [out] }
    }

    #[inline]
    pub fn pair(&self, cell: StateId, input: InputId) -> usize {
        cell as usize * self.input_count as usize + input as usize
    }

    pub fn cell_successors(&self, cell: StateId, input: InputId) -> &[StateId] {
        let p = self.pair(cell, input);
        &self.successors[self.offsets[p] as usize..self.offsets[p + 1] as usize]
    }

    /// Unsafe pairs keep only the absorbing out cell.
    pub fn is_unsafe(&self, cell: StateId, input: InputId) -> bool {
        self.cell_successors(cell, input) == [self.grid.out_cell()]
    }

    pub fn transition_count(&self) -> u64 {
        self.successors.len() as u64
    }

    pub fn unsafe_pair_count(&self) -> u64 {
        let out = self.grid.out_cell();
        let mut n = 0;
        for p in 0..self.offsets.len() - 1 {
            let s = &self.successors[self.offsets[p] as usize..self.offsets[p + 1] as usize];
            if s == [out] {
                n += 1;
            }
        }
        n
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn successor_store(&self) -> &[StateId] {
        &self.successors
    }
}

impl TransitionSystem for AbstractSystem {
    fn state_count(&self) -> usize {
        self.grid.cell_total() as usize + 1
    }

    fn input_count(&self) -> usize {
        self.input_count as usize
    }

    fn successors(&self, state: StateId, input: InputId) -> &[StateId] {
        if state == self.grid.out_cell() {
            &self.out_loop
        } else {
            self.cell_successors(state, input)
        }
    }
}

/// Per-axis slice of cells intersected by a reach-box interval.
#[derive(Debug, Clone, Copy)]
struct AxisArc {
    start: u32,
    len: u32,
}

/// Computes the per-axis successor arcs for one reach box, or None when the
/// box leaves the domain on a non-periodic axis (within floating-point
/// resolution of the boundary counts as leaving).
fn box_arcs(grid: &Grid, center: &[f64], radius: &[f64], arcs: &mut [AxisArc]) -> bool {
    for a in 0..grid.dim() {
        let lo_v = center[a] - radius[a];
        let hi_v = center[a] + radius[a];
        let cells = grid.cells[a];
        if grid.periodic[a] {
            let w = grid.width()[a];
            let span = grid.domain.hi[a] - grid.domain.lo[a];
            // Count boundary crossings in unwrapped index space.
            let unwrapped =
                ((hi_v - grid.domain.lo[a]) / w).floor() - ((lo_v - grid.domain.lo[a]) / w).floor();
            if !unwrapped.is_finite() || unwrapped as i64 + 1 >= cells as i64 || hi_v - lo_v >= span
            {
                arcs[a] = AxisArc { start: 0, len: cells };
                continue;
            }
            let start = grid.axis_index(a, lo_v).expect("periodic axis always quantizes");
            let end = grid.axis_index(a, hi_v).expect("periodic axis always quantizes");
            // Reconcile the wrapped endpoints with the crossing count; take
            // the larger so both computations are covered.
            let ring = (end as i64 - start as i64).rem_euclid(cells as i64) as u32 + 1;
            let len = ring.max(unwrapped as u32 + 1).min(cells);
            arcs[a] = AxisArc { start, len };
        } else {
            if lo_v < grid.domain.lo[a] || hi_v >= grid.domain.hi[a] {
                return false;
            }
            let start = match grid.axis_index(a, lo_v) {
                Some(i) => i,
                None => return false,
            };
            // Clamped: rounding can push the upper index to `cells` even
            // though hi_v < hi; treat that as leaving to stay conservative.
            let end_raw = ((hi_v - grid.domain.lo[a]) / grid.width()[a]).floor();
            if !(end_raw >= 0.0) || end_raw >= cells as f64 {
                return false;
            }
            let end = end_raw as u32;
            arcs[a] = AxisArc { start, len: end - start + 1 };
        }
    }
    true
}

fn arc_product(arcs: &[AxisArc]) -> u64 {
    arcs.iter().map(|r| r.len as u64).product()
}

/// Emits the successor ids for the given arcs, sorted ascending.
fn emit_successors(grid: &Grid, arcs: &[AxisArc], out: &mut [StateId]) {
    let dim = grid.dim();
    let mut idx = vec![0u32; dim];
    for slot in out.iter_mut() {
        let mut id: u64 = 0;
        let mut stride: u64 = 1;
        for a in 0..dim {
            let cell = (arcs[a].start + idx[a]) % grid.cells[a];
            id += cell as u64 * stride;
            stride *= grid.cells[a] as u64;
        }
        *slot = id as StateId;
        for a in 0..dim {
            idx[a] += 1;
            if idx[a] < arcs[a].len {
                break;
            }
            idx[a] = 0;
        }
    }
    out.sort_unstable();
    debug_assert!(out.windows(2).all(|w| w[0] < w[1]));
}

/// Builds the abstract transition structure. Deterministic for any thread
/// count of the ambient rayon pool.
pub fn compute_transitions(
    sys: &SampledSystem,
    grid: &Grid,
    inputs: &[Vec<f64>],
) -> Result<AbstractSystem, AbstractionError> {
    let dim = sys.field.state_dim();
    if dim != grid.dim() {
        return Err(AbstractionError::Dimension { field: dim, grid: grid.dim() });
    }
    let n_cells = grid.cell_total();
    let m = inputs.len() as u64;
    let pair_count = n_cells * m;
    if pair_count > u32::MAX as u64 {
        return Err(AbstractionError::Capacity { pairs: pair_count });
    }
    let pairs = pair_count as usize;

    // The tube radius depends only on the (uniform) cell half-widths.
    let radius = sys
        .tube_radius(&grid.half_widths())
        .map_err(|_| AbstractionError::Radius)?;
    let prepared: Vec<PreparedInput> = inputs.iter().map(|u| sys.prepare(u)).collect();

    // Pass 1: nominal flows and successor counts. Centers are kept so the
    // fill pass does not integrate again; NaN marks integration failure.
    let mut centers = vec![0.0f64; pairs * dim];
    let mut counts = vec![0u32; pairs];
    let m_us = inputs.len();
    counts
        .par_chunks_mut(m_us)
        .zip(centers.par_chunks_mut(m_us * dim))
        .enumerate()
        .for_each(|(cell, (count_row, center_row))| {
            let mid = grid.center(cell as StateId);
            let mut arcs = vec![AxisArc { start: 0, len: 0 }; dim];
            for u in 0..m_us {
                let slot = &mut center_row[u * dim..(u + 1) * dim];
                match sys.integrate_prepared(&mid, &prepared[u], &[]) {
                    Ok(c) => {
                        count_row[u] = if box_arcs(grid, &c, &radius, &mut arcs) {
                            arc_product(&arcs) as u32
                        } else {
                            1
                        };
                        slot.copy_from_slice(&c);
                    }
                    Err(_) => {
                        count_row[u] = 1;
                        slot.fill(f64::NAN);
                    }
                }
            }
        });

    let mut offsets = vec![0u64; pairs + 1];
    for p in 0..pairs {
        offsets[p + 1] = offsets[p] + counts[p] as u64;
    }
    let entries = offsets[pairs] as usize;
    drop(counts);

    // Pass 2: fill each cell's contiguous slice; writes are disjoint.
    let mut successors = vec![0 as StateId; entries];
    let mut slices: Vec<(usize, &mut [StateId])> = Vec::with_capacity(n_cells as usize);
    {
        let mut rest: &mut [StateId] = &mut successors;
        for cell in 0..n_cells as usize {
            let lo = offsets[cell * m_us] as usize;
            let hi = offsets[(cell + 1) * m_us] as usize;
            let (head, tail) = rest.split_at_mut(hi - lo);
            slices.push((cell, head));
            rest = tail;
        }
    }
    let out = grid.out_cell();
    slices.into_par_iter().for_each(|(cell, slice)| {
        let mut arcs = vec![AxisArc { start: 0, len: 0 }; dim];
        let base = offsets[cell * m_us];
        for u in 0..m_us {
            let p = cell * m_us + u;
            let seg =
                &mut slice[(offsets[p] - base) as usize..(offsets[p + 1] - base) as usize];
            let center = &centers[p * dim..(p + 1) * dim];
            if center.iter().any(|v| v.is_nan()) {
                seg[0] = out;
                continue;
            }
            if box_arcs(grid, center, &radius, &mut arcs) {
                emit_successors(grid, &arcs, seg);
            } else {
                seg[0] = out;
            }
        }
    });

    Ok(AbstractSystem::from_parts(grid.clone(), m_us as u32, offsets, successors))
}
