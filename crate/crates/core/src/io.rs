//! Binary artifact containers and tabular exports.
//!
//! Everything is little-endian and written straight from the in-memory
//! arrays, so two runs that compute identical results produce byte-identical
//! files. Abstractions carry the key of the inputs they were computed from;
//! controllers carry the hash of the scenario they were synthesized for.
//! Loaders validate shapes and reject values the rest of the crate would
//! never produce.

use crate::abstraction::AbstractSystem;
use crate::cost::Cost;
use crate::geom::HyperRect;
use crate::grid::Grid;
use crate::solver::PolicyEntry;
use crate::system::{StateId, TransitionSystem};
use serde::Serialize;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const ABSTRACTION_MAGIC: [u8; 4] = *b"SPVA";
pub const CONTROLLER_MAGIC: [u8; 4] = *b"SPVC";
pub const FORMAT_VERSION: u32 = 1;

const POLICY_STOP: u32 = 0xFFFF_FFFE;
const POLICY_NONE: u32 = 0xFFFF_FFFF;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a {expected} file (bad magic)")]
    Magic { expected: &'static str },
    #[error("format version {got} is not supported (expected {want})")]
    Version { got: u32, want: u32 },
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

fn corrupt(msg: impl Into<String>) -> IoError {
    IoError::Corrupt(msg.into())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn put_grid<W: Write>(w: &mut W, grid: &Grid) -> std::io::Result<()> {
    put_u32(w, grid.dim() as u32)?;
    for a in 0..grid.dim() {
        put_f64(w, grid.domain.lo[a])?;
        put_f64(w, grid.domain.hi[a])?;
        put_u32(w, grid.cells[a])?;
        w.write_all(&[grid.periodic[a] as u8])?;
    }
    Ok(())
}

fn get_grid<R: Read>(r: &mut R) -> Result<Grid, IoError> {
    let dim = get_u32(r)? as usize;
    if dim == 0 || dim > 64 {
        return Err(corrupt(format!("grid dimension {dim}")));
    }
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    let mut cells = Vec::with_capacity(dim);
    let mut periodic = Vec::with_capacity(dim);
    for _ in 0..dim {
        lo.push(get_f64(r)?);
        hi.push(get_f64(r)?);
        cells.push(get_u32(r)?);
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        periodic.push(b[0] != 0);
    }
    if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
        return Err(corrupt("grid bounds out of order"));
    }
    Ok(Grid::new(HyperRect::new(lo, hi), cells, periodic)?)
}

pub fn save_abstraction(
    path: &Path,
    abs: &AbstractSystem,
    key: &[u8; 32],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&ABSTRACTION_MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(key)?;
    put_grid(&mut w, &abs.grid)?;
    put_u32(&mut w, abs.input_count() as u32)?;
    let offsets = abs.offsets();
    put_u64(&mut w, offsets.len() as u64 - 1)?;
    put_u64(&mut w, abs.transition_count())?;
    for &o in offsets {
        put_u64(&mut w, o)?;
    }
    for &s in abs.successor_store() {
        put_u32(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_abstraction(path: &Path) -> Result<(AbstractSystem, [u8; 32]), IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != ABSTRACTION_MAGIC {
        return Err(IoError::Magic { expected: "transition-structure" });
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(IoError::Version { got: version, want: FORMAT_VERSION });
    }
    let mut key = [0u8; 32];
    r.read_exact(&mut key)?;
    let grid = get_grid(&mut r)?;
    let input_count = get_u32(&mut r)?;
    let pairs = get_u64(&mut r)?;
    let entries = get_u64(&mut r)?;
    if pairs != grid.cell_total() * input_count as u64 {
        return Err(corrupt("pair count does not match grid and inputs"));
    }
    let mut offsets = Vec::with_capacity(pairs as usize + 1);
    for _ in 0..=pairs {
        offsets.push(get_u64(&mut r)?);
    }
    if offsets.first() != Some(&0) || offsets.last() != Some(&entries) {
        return Err(corrupt("offset table endpoints"));
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(corrupt("offset table not monotone"));
    }
    let out = grid.out_cell();
    let mut successors = Vec::with_capacity(entries as usize);
    for _ in 0..entries {
        let s = get_u32(&mut r)?;
        if s > out {
            return Err(corrupt(format!("successor {s} beyond the out cell")));
        }
        successors.push(s);
    }
    Ok((AbstractSystem::from_parts(grid, input_count, offsets, successors), key))
}

/// Synthesized controller with everything needed to run and to re-audit it:
/// both value functions, both policies, and the finalization orders that
/// make exact policy evaluation possible after a reload.
pub struct ControllerArtifact {
    pub scenario_hash: [u8; 32],
    pub grid: Grid,
    pub input_count: u32,
    pub naive: bool,
    pub v1: Vec<Cost>,
    pub v2: Vec<Cost>,
    pub mu1: Vec<PolicyEntry>,
    pub mu2: Vec<PolicyEntry>,
    pub order1: Vec<StateId>,
    pub order2: Vec<StateId>,
    /// (waypoint cells, waypoint cells with finite goal value).
    pub coverage: (u64, u64),
}

fn policy_code(p: PolicyEntry) -> u32 {
    match p {
        PolicyEntry::Stop => POLICY_STOP,
        PolicyEntry::Unreachable => POLICY_NONE,
        PolicyEntry::Input(u) => u,
    }
}

fn policy_from_code(code: u32, input_count: u32) -> Result<PolicyEntry, IoError> {
    match code {
        POLICY_STOP => Ok(PolicyEntry::Stop),
        POLICY_NONE => Ok(PolicyEntry::Unreachable),
        u if u < input_count => Ok(PolicyEntry::Input(u)),
        u => Err(corrupt(format!("input index {u} out of range"))),
    }
}

pub fn save_controller(path: &Path, art: &ControllerArtifact) -> Result<(), IoError> {
    let n = art.grid.cell_total() as usize + 1;
    for (label, len) in [
        ("v1", art.v1.len()),
        ("v2", art.v2.len()),
        ("mu1", art.mu1.len()),
        ("mu2", art.mu2.len()),
    ] {
        if len != n {
            return Err(corrupt(format!("{label} has {len} entries, expected {n}")));
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&CONTROLLER_MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(&art.scenario_hash)?;
    put_grid(&mut w, &art.grid)?;
    put_u32(&mut w, art.input_count)?;
    w.write_all(&[art.naive as u8])?;
    put_u64(&mut w, art.coverage.0)?;
    put_u64(&mut w, art.coverage.1)?;
    for mu in [&art.mu1, &art.mu2] {
        for &p in mu.iter() {
            put_u32(&mut w, policy_code(p))?;
        }
    }
    for v in [&art.v1, &art.v2] {
        for &c in v.iter() {
            put_u64(&mut w, c.to_bits())?;
        }
    }
    for order in [&art.order1, &art.order2] {
        put_u64(&mut w, order.len() as u64)?;
        for &s in order.iter() {
            put_u32(&mut w, s)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_controller(path: &Path) -> Result<ControllerArtifact, IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CONTROLLER_MAGIC {
        return Err(IoError::Magic { expected: "controller" });
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(IoError::Version { got: version, want: FORMAT_VERSION });
    }
    let mut scenario_hash = [0u8; 32];
    r.read_exact(&mut scenario_hash)?;
    let grid = get_grid(&mut r)?;
    let input_count = get_u32(&mut r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let naive = flag[0] != 0;
    let coverage = (get_u64(&mut r)?, get_u64(&mut r)?);
    let n = grid.cell_total() as usize + 1;
    let mut policies = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut mu = Vec::with_capacity(n);
        for _ in 0..n {
            mu.push(policy_from_code(get_u32(&mut r)?, input_count)?);
        }
        policies.push(mu);
    }
    let mut values = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let bits = get_u64(&mut r)?;
            v.push(
                Cost::from_bits(bits)
                    .map_err(|e| corrupt(format!("stored value {}", e.0)))?,
            );
        }
        values.push(v);
    }
    let mut orders = Vec::with_capacity(2);
    for _ in 0..2 {
        let len = get_u64(&mut r)? as usize;
        if len > n {
            return Err(corrupt("order longer than the state space"));
        }
        let mut order = Vec::with_capacity(len);
        for _ in 0..len {
            let s = get_u32(&mut r)?;
            if s as usize >= n {
                return Err(corrupt("order entry beyond the state space"));
            }
            order.push(s);
        }
        orders.push(order);
    }
    let order2 = orders.pop().unwrap();
    let order1 = orders.pop().unwrap();
    let v2 = values.pop().unwrap();
    let v1 = values.pop().unwrap();
    let mu2 = policies.pop().unwrap();
    let mu1 = policies.pop().unwrap();
    Ok(ControllerArtifact {
        scenario_hash,
        grid,
        input_count,
        naive,
        v1,
        v2,
        mu1,
        mu2,
        order1,
        order2,
        coverage,
    })
}

/// Synthesis summary written alongside the binary artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub scenario_hash: String,
    pub naive: bool,
    pub cells: u64,
    pub inputs: u32,
    pub transitions: u64,
    pub unsafe_pairs: u64,
    pub coverage_target: u64,
    pub coverage_winning: u64,
    pub v1_finite: u64,
    pub v2_finite: u64,
    pub x0_cell: u32,
    /// Absent when the initial cell has no finite guarantee.
    pub v1_at_x0: Option<f64>,
    pub synth_seconds: f64,
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_slice_with<F>(
    path: &Path,
    grid: &Grid,
    axes: (usize, usize),
    fixed: &[(usize, u32)],
    mut entry: F,
) -> Result<(), IoError>
where
    F: FnMut(StateId) -> String,
{
    let dim = grid.dim();
    if axes.0 >= dim || axes.1 >= dim || axes.0 == axes.1 {
        return Err(corrupt("slice axes out of range"));
    }
    let mut coords = vec![0u32; dim];
    for a in 0..dim {
        if a == axes.0 || a == axes.1 {
            continue;
        }
        let &(_, idx) = fixed
            .iter()
            .find(|(fa, _)| *fa == a)
            .ok_or_else(|| corrupt(format!("axis {a} needs a fixed index")))?;
        if idx >= grid.cells[a] {
            return Err(corrupt(format!("fixed index {idx} out of range on axis {a}")));
        }
        coords[a] = idx;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for j in 0..grid.cells[axes.1] {
        coords[axes.1] = j;
        let mut line = String::new();
        for i in 0..grid.cells[axes.0] {
            coords[axes.0] = i;
            if i > 0 {
                line.push(',');
            }
            line.push_str(&entry(grid.index(&coords)));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a 2-D slice of a value function as a CSV matrix: rows follow
/// `axes.1` ascending, columns `axes.0` ascending, remaining axes pinned by
/// `fixed` (axis, cell index) pairs. Infinite entries print as `inf`.
pub fn write_value_slice(
    path: &Path,
    grid: &Grid,
    values: &[Cost],
    axes: (usize, usize),
    fixed: &[(usize, u32)],
) -> Result<(), IoError> {
    if values.len() < grid.cell_total() as usize {
        return Err(corrupt("value vector shorter than the grid"));
    }
    write_slice_with(path, grid, axes, fixed, |cell| {
        let v = values[cell as usize];
        if v.is_finite() {
            format!("{}", v.value())
        } else {
            "inf".to_string()
        }
    })
}

/// Writes a 2-D slice of a policy as a CSV matrix with the same layout as
/// `write_value_slice`: input indices, `stop`, or `-` for unreachable cells.
pub fn write_policy_slice(
    path: &Path,
    grid: &Grid,
    policy: &[PolicyEntry],
    axes: (usize, usize),
    fixed: &[(usize, u32)],
) -> Result<(), IoError> {
    if policy.len() < grid.cell_total() as usize {
        return Err(corrupt("policy vector shorter than the grid"));
    }
    write_slice_with(path, grid, axes, fixed, |cell| match policy[cell as usize] {
        PolicyEntry::Stop => "stop".to_string(),
        PolicyEntry::Unreachable => "-".to_string(),
        PolicyEntry::Input(u) => format!("{u}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SampledSystem, VectorField};
    use crate::grid::Grid;

    fn small_abstraction() -> AbstractSystem {
        let sys = SampledSystem {
            field: VectorField::Integrator { dim: 1 },
            tau: 1.0,
            substeps: 2,
            growth: vec![vec![0.0]],
            disturbance: vec![0.3],
        };
        let grid =
            Grid::new(HyperRect::new(vec![0.0], vec![6.0]), vec![6], vec![false]).unwrap();
        crate::abstraction::compute_transitions(&sys, &grid, &[vec![0.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn abstraction_round_trip_is_byte_stable() {
        let abs = small_abstraction();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        let key = [7u8; 32];
        save_abstraction(&p1, &abs, &key).unwrap();
        let (loaded, loaded_key) = load_abstraction(&p1).unwrap();
        assert_eq!(loaded_key, key);
        assert_eq!(loaded.offsets(), abs.offsets());
        assert_eq!(loaded.successor_store(), abs.successor_store());
        assert_eq!(loaded.grid, abs.grid);
        save_abstraction(&p2, &loaded, &loaded_key).unwrap();
        let bytes1 = std::fs::read(&p1).unwrap();
        let bytes2 = std::fs::read(&p2).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn controller_round_trip() {
        let grid =
            Grid::new(HyperRect::new(vec![0.0], vec![4.0]), vec![4], vec![false]).unwrap();
        let art = ControllerArtifact {
            scenario_hash: [9u8; 32],
            grid: grid.clone(),
            input_count: 3,
            naive: true,
            v1: vec![Cost::new(1.5), Cost::ZERO, Cost::INF, Cost::new(2.0), Cost::INF],
            v2: vec![Cost::ZERO, Cost::ZERO, Cost::new(0.5), Cost::INF, Cost::INF],
            mu1: vec![
                PolicyEntry::Input(2),
                PolicyEntry::Stop,
                PolicyEntry::Unreachable,
                PolicyEntry::Input(0),
                PolicyEntry::Unreachable,
            ],
            mu2: vec![PolicyEntry::Stop; 5],
            order1: vec![1, 3, 0],
            order2: vec![0, 1, 2, 3],
            coverage: (4, 3),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        save_controller(&p, &art).unwrap();
        let l = load_controller(&p).unwrap();
        assert_eq!(l.scenario_hash, art.scenario_hash);
        assert_eq!(l.grid, art.grid);
        assert_eq!(l.naive, true);
        assert_eq!(l.v1, art.v1);
        assert_eq!(l.v2, art.v2);
        assert_eq!(l.mu1, art.mu1);
        assert_eq!(l.mu2, art.mu2);
        assert_eq!(l.order1, art.order1);
        assert_eq!(l.order2, art.order2);
        assert_eq!(l.coverage, (4, 3));
    }

    #[test]
    fn loaders_reject_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"definitely not an artifact").unwrap();
        assert!(matches!(load_abstraction(&p), Err(IoError::Magic { .. })));
        assert!(matches!(load_controller(&p), Err(IoError::Magic { .. })));

        let abs = small_abstraction();
        let good = dir.path().join("good.bin");
        save_abstraction(&good, &abs, &[0u8; 32]).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        let last = bytes.len() - 1;
        bytes[last] = 0xFF;
        std::fs::write(&good, &bytes).unwrap();
        assert!(load_abstraction(&good).is_err());
    }

    #[test]
    fn value_slice_matrix_shape() {
        let grid = Grid::new(
            HyperRect::new(vec![0.0, 0.0, 0.0], vec![3.0, 2.0, 2.0]),
            vec![3, 2, 2],
            vec![false, false, false],
        )
        .unwrap();
        let mut values = vec![Cost::INF; 13];
        for c in 0..12 {
            values[c] = Cost::new(c as f64);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        write_value_slice(&p, &grid, &values, (0, 1), &[(2, 1)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        // Axis 2 pinned to 1: linear index = i + 3j + 6.
        assert_eq!(text, "6,7,8\n9,10,11\n");
        assert!(write_value_slice(&p, &grid, &values, (0, 1), &[]).is_err());
        assert!(write_value_slice(&p, &grid, &values, (0, 0), &[(2, 0)]).is_err());
    }

    #[test]
    fn policy_slice_symbols() {
        let grid = Grid::new(
            HyperRect::new(vec![0.0, 0.0], vec![2.0, 1.0]),
            vec![2, 1],
            vec![false, false],
        )
        .unwrap();
        let policy = vec![PolicyEntry::Input(3), PolicyEntry::Stop, PolicyEntry::Unreachable];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mu.csv");
        write_policy_slice(&p, &grid, &policy, (0, 1), &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "3,stop\n");
    }
}
