//! Finite transition systems, memoryless controllers, and trajectory costs.

use crate::cost::Cost;
use thiserror::Error;

pub type StateId = u32;
pub type InputId = u32;

/// Nondeterministic transition structure over dense state and input indices.
///
/// Successor slices are sorted and duplicate-free. An empty slice means the
/// input is not available at that state.
pub trait TransitionSystem: Sync {
    fn state_count(&self) -> usize;
    fn input_count(&self) -> usize;
    fn successors(&self, state: StateId, input: InputId) -> &[StateId];
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("transition table has {got} entries, expected states*inputs = {want}")]
    TableShape { got: usize, want: usize },
    #[error("state {state} input {input} has no successor; transitions must be strict")]
    NotStrict { state: StateId, input: InputId },
    #[error("state {state} input {input} references successor {succ} out of range")]
    SuccessorRange { state: StateId, input: InputId, succ: StateId },
}

/// Explicitly stored finite system. Intended for small models; the grid
/// abstraction has its own compressed representation.
#[derive(Debug, Clone)]
pub struct FiniteSystem {
    states: usize,
    inputs: usize,
    succ: Vec<Vec<StateId>>,
}

impl FiniteSystem {
    /// `succ[state * inputs + input]` lists the successors of that pair.
    /// Lists are sorted and deduplicated here; every pair must be non-empty.
    pub fn new(
        states: usize,
        inputs: usize,
        mut succ: Vec<Vec<StateId>>,
    ) -> Result<FiniteSystem, SystemError> {
        let want = states * inputs;
        if succ.len() != want {
            return Err(SystemError::TableShape { got: succ.len(), want });
        }
        for (pair, list) in succ.iter_mut().enumerate() {
            let state = (pair / inputs) as StateId;
            let input = (pair % inputs) as InputId;
            if list.is_empty() {
                return Err(SystemError::NotStrict { state, input });
            }
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.iter().find(|&&s| s as usize >= states) {
                return Err(SystemError::SuccessorRange { state, input, succ: bad });
            }
        }
        Ok(FiniteSystem { states, inputs, succ })
    }
}

impl TransitionSystem for FiniteSystem {
    fn state_count(&self) -> usize {
        self.states
    }

    fn input_count(&self) -> usize {
        self.inputs
    }

    fn successors(&self, state: StateId, input: InputId) -> &[StateId] {
        &self.succ[state as usize * self.inputs + input as usize]
    }
}

/// Per-edge running costs aligned with the successor lists of a `FiniteSystem`.
#[derive(Debug, Clone)]
pub struct EdgeCosts {
    inputs: usize,
    table: Vec<Vec<Cost>>,
}

impl EdgeCosts {
    /// `table` mirrors the (sorted) successor lists pair by pair.
    pub fn new(sys: &FiniteSystem, table: Vec<Vec<Cost>>) -> Result<EdgeCosts, SystemError> {
        let want = sys.states * sys.inputs;
        if table.len() != want {
            return Err(SystemError::TableShape { got: table.len(), want });
        }
        for (pair, costs) in table.iter().enumerate() {
            if costs.len() != sys.succ[pair].len() {
                return Err(SystemError::TableShape { got: costs.len(), want: sys.succ[pair].len() });
            }
        }
        Ok(EdgeCosts { inputs: sys.inputs, table })
    }

    pub fn cost(&self, sys: &FiniteSystem, x: StateId, y: StateId, u: InputId) -> Cost {
        let pair = x as usize * self.inputs + u as usize;
        match sys.succ[pair].binary_search(&y) {
            Ok(k) => self.table[pair][k],
            Err(_) => Cost::INF,
        }
    }
}

/// Decision of a memoryless controller at one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Apply(InputId),
    Stop,
}

/// State-indexed decision table; `None` marks states outside the domain.
#[derive(Debug, Clone)]
pub struct MemorylessController {
    actions: Vec<Option<Action>>,
}

impl MemorylessController {
    pub fn new(actions: Vec<Option<Action>>) -> MemorylessController {
        MemorylessController { actions }
    }

    pub fn decide(&self, state: StateId) -> Option<Action> {
        self.actions.get(state as usize).copied().flatten()
    }

    pub fn domain_size(&self) -> usize {
        self.actions.iter().filter(|a| a.is_some()).count()
    }

    pub fn actions(&self) -> &[Option<Action>] {
        &self.actions
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory with {states} states needs {} inputs, got {inputs}", states - 1)]
    LengthMismatch { states: usize, inputs: usize },
    #[error("trajectory must contain at least the initial state")]
    Empty,
}

/// Sampled trajectory prefix. `states` has length T+1 and `inputs` length T,
/// where T is the number of applied inputs; `stopped` records whether the
/// stopping signal was raised at the final state.
#[derive(Debug, Clone)]
pub struct Trajectory<S, U> {
    pub states: Vec<S>,
    pub inputs: Vec<U>,
    pub stopped: bool,
}

impl<S, U> Trajectory<S, U> {
    pub fn new(states: Vec<S>, inputs: Vec<U>, stopped: bool) -> Result<Self, TrajectoryError> {
        if states.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if states.len() != inputs.len() + 1 {
            return Err(TrajectoryError::LengthMismatch {
                states: states.len(),
                inputs: inputs.len(),
            });
        }
        Ok(Trajectory { states, inputs, stopped })
    }

    /// Number of applied inputs (the stopping time when `stopped`).
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Total cost of a trajectory: accumulated running cost plus the terminal
/// cost of the full prefix. A trajectory that never stops costs infinity.
pub fn total_cost<S, U>(
    tr: &Trajectory<S, U>,
    mut running: impl FnMut(&S, &S, &U) -> Cost,
    terminal: impl FnOnce(&[S]) -> Cost,
) -> Result<Cost, TrajectoryError> {
    if tr.states.len() != tr.inputs.len() + 1 {
        return Err(TrajectoryError::LengthMismatch {
            states: tr.states.len(),
            inputs: tr.inputs.len(),
        });
    }
    if !tr.stopped {
        return Ok(Cost::INF);
    }
    let mut acc = Cost::ZERO;
    for t in 0..tr.inputs.len() {
        acc += running(&tr.states[t], &tr.states[t + 1], &tr.inputs[t]);
    }
    Ok(acc + terminal(&tr.states))
}
