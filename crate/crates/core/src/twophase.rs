//! Two-phase reach-avoid synthesis: visit a waypoint set, then reach a goal
//! set, minimizing worst-case total cost.
//!
//! The goal phase is solved first; its value function becomes the terminal
//! cost of the waypoint phase, so the waypoint controller already accounts
//! for how expensive each waypoint cell is to continue from. Switching the
//! two controllers at the first phase's stop signal is then optimal for the
//! combined task. The naive alternative solves the waypoint phase with a
//! zero terminal, reaching the nearest waypoint regardless of what the goal
//! phase will cost from there; it is kept as a baseline.

use crate::cost::Cost;
use crate::solver::{
    evaluate_policy, BackwardAdjacency, PolicyEntry, ReachAvoidProblem, Solution, SolverError,
};
use crate::system::{Action, InputId, StateId, TransitionSystem};
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct Coverage {
    /// Cells in the phase-1 stop set.
    pub target_cells: usize,
    /// Of those, cells from which phase 2 has finite value.
    pub winning_cells: usize,
}

#[derive(Debug, Error)]
pub enum TwoPhaseError {
    #[error("phase 2 is unwinnable from every one of the {} phase-1 target cells", .coverage.target_cells)]
    NoSolution { coverage: Coverage },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

pub struct TwoPhaseSolution {
    pub v1: Vec<Cost>,
    pub v2: Vec<Cost>,
    pub mu1: Vec<PolicyEntry>,
    pub mu2: Vec<PolicyEntry>,
    pub order1: Vec<StateId>,
    pub order2: Vec<StateId>,
    pub coverage: Coverage,
}

/// Waypoint-phase result of the zero-terminal baseline. `claimed` is the
/// value its own solve reports (cost to reach the waypoint set); `actual` is
/// the exact worst-case cost of running baseline phase 1 and then the
/// optimal phase 2 from wherever it stopped.
pub struct NaiveSolution {
    pub claimed: Vec<Cost>,
    pub actual: Vec<Cost>,
    pub mu1: Vec<PolicyEntry>,
    pub order1: Vec<StateId>,
}

/// Solves the goal phase: stop anywhere in `a2`, paying `g0` there.
pub fn solve_phase2<S, T, R>(
    system: &S,
    backward: &BackwardAdjacency,
    a2: &[bool],
    g0: T,
    running: R,
) -> Result<Solution, SolverError>
where
    S: TransitionSystem,
    T: Fn(StateId) -> Cost,
    R: Fn(StateId, StateId, InputId) -> Cost,
{
    ReachAvoidProblem { system, target: a2, terminal: g0, running }.solve_with(backward)
}

fn coverage_of(a1: &[bool], v2: &[Cost]) -> Coverage {
    let target_cells = a1.iter().filter(|&&t| t).count();
    let winning_cells = a1
        .iter()
        .zip(v2)
        .filter(|(&t, v)| t && v.is_finite())
        .count();
    Coverage { target_cells, winning_cells }
}

/// Solves the waypoint phase against the goal phase's value function.
pub fn compose_phase1<S, R>(
    system: &S,
    backward: &BackwardAdjacency,
    a1: &[bool],
    v2: &[Cost],
    running: R,
) -> Result<(Solution, Coverage), TwoPhaseError>
where
    S: TransitionSystem,
    R: Fn(StateId, StateId, InputId) -> Cost,
{
    let coverage = coverage_of(a1, v2);
    if coverage.winning_cells == 0 {
        return Err(TwoPhaseError::NoSolution { coverage });
    }
    let sol = ReachAvoidProblem {
        system,
        target: a1,
        terminal: |x: StateId| v2[x as usize],
        running,
    }
    .solve_with(backward)?;
    Ok((sol, coverage))
}

/// Solves the waypoint phase with a zero terminal on the winnable waypoint
/// cells and evaluates the true cost of the resulting strategy.
pub fn naive_phase1<S, R>(
    system: &S,
    backward: &BackwardAdjacency,
    a1: &[bool],
    v2: &[Cost],
    running: R,
) -> Result<NaiveSolution, TwoPhaseError>
where
    S: TransitionSystem,
    R: Fn(StateId, StateId, InputId) -> Cost + Copy,
{
    let coverage = coverage_of(a1, v2);
    if coverage.winning_cells == 0 {
        return Err(TwoPhaseError::NoSolution { coverage });
    }
    let target: Vec<bool> = a1
        .iter()
        .zip(v2)
        .map(|(&t, v)| t && v.is_finite())
        .collect();
    let sol = ReachAvoidProblem {
        system,
        target: &target,
        terminal: |_| Cost::ZERO,
        running,
    }
    .solve_with(backward)?;
    let actual = evaluate_policy(
        system,
        &sol.policy,
        &sol.order,
        |x| v2[x as usize],
        running,
    )?;
    Ok(NaiveSolution { claimed: sol.values, actual, mu1: sol.policy, order1: sol.order })
}

/// Full pipeline: goal phase, then composed waypoint phase.
pub fn synthesize<S, T, R>(
    system: &S,
    a1: &[bool],
    a2: &[bool],
    g0: T,
    running: R,
) -> Result<TwoPhaseSolution, TwoPhaseError>
where
    S: TransitionSystem,
    T: Fn(StateId) -> Cost,
    R: Fn(StateId, StateId, InputId) -> Cost + Copy,
{
    let backward = BackwardAdjacency::build(system)?;
    let p2 = solve_phase2(system, &backward, a2, g0, running)?;
    let (p1, coverage) = compose_phase1(system, &backward, a1, &p2.values, running)?;
    Ok(TwoPhaseSolution {
        v1: p1.values,
        v2: p2.values,
        mu1: p1.policy,
        mu2: p2.policy,
        order1: p1.order,
        order2: p2.order,
        coverage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    First,
    Second,
    Done,
}

#[derive(Debug, Error, PartialEq)]
pub enum ControllerFault {
    #[error("no action at state {state} in phase {phase:?}")]
    OutsideDomain { state: StateId, phase: Phase },
    #[error("controller already stopped")]
    AlreadyStopped,
}

/// Switching controller: follow the waypoint policy until it signals stop,
/// then follow the goal policy from that same state. The waypoint stop is
/// internal (no time step is spent on it); only the goal policy's stop ends
/// the run.
pub struct ComposedController<'a> {
    mu1: &'a [PolicyEntry],
    mu2: &'a [PolicyEntry],
    phase: Phase,
}

impl<'a> ComposedController<'a> {
    pub fn new(mu1: &'a [PolicyEntry], mu2: &'a [PolicyEntry]) -> ComposedController<'a> {
        ComposedController { mu1, mu2, phase: Phase::First }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn step(&mut self, state: StateId) -> Result<Action, ControllerFault> {
        if self.phase == Phase::First {
            match self.mu1[state as usize] {
                PolicyEntry::Input(u) => return Ok(Action::Apply(u)),
                PolicyEntry::Stop => self.phase = Phase::Second,
                PolicyEntry::Unreachable => {
                    return Err(ControllerFault::OutsideDomain { state, phase: Phase::First })
                }
            }
        }
        match self.phase {
            Phase::Second => match self.mu2[state as usize] {
                PolicyEntry::Input(u) => Ok(Action::Apply(u)),
                PolicyEntry::Stop => {
                    self.phase = Phase::Done;
                    Ok(Action::Stop)
                }
                PolicyEntry::Unreachable => {
                    Err(ControllerFault::OutsideDomain { state, phase: Phase::Second })
                }
            },
            Phase::Done => Err(ControllerFault::AlreadyStopped),
            Phase::First => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::FiniteSystem;

    /// Line 0 -> 1 -> 2 -> 3, state 3 absorbing, unit step cost.
    fn line() -> FiniteSystem {
        FiniteSystem::new(4, 1, vec![vec![1], vec![2], vec![3], vec![3]]).unwrap()
    }

    fn unit_cost(_: StateId, _: StateId, _: InputId) -> Cost {
        Cost::new(1.0)
    }

    #[test]
    fn line_pinned_values() {
        let sys = line();
        let a1 = vec![false, true, false, false];
        let a2 = vec![false, false, false, true];
        let s = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0)).unwrap();
        assert_eq!(
            s.v2,
            vec![Cost::new(3.0), Cost::new(2.0), Cost::new(1.0), Cost::ZERO]
        );
        assert_eq!(s.v1[0], Cost::new(3.0));
        assert_eq!(s.v1[1], Cost::new(2.0));
        assert_eq!(s.mu1[1], PolicyEntry::Stop);
        assert_eq!(s.mu2[3], PolicyEntry::Stop);
        assert_eq!(s.coverage.target_cells, 1);
        assert_eq!(s.coverage.winning_cells, 1);
    }

    #[test]
    fn composed_controller_walks_the_line() {
        let sys = line();
        let a1 = vec![false, true, false, false];
        let a2 = vec![false, false, false, true];
        let s = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0)).unwrap();
        let mut c = ComposedController::new(&s.mu1, &s.mu2);
        assert_eq!(c.step(0).unwrap(), Action::Apply(0));
        assert_eq!(c.phase(), Phase::First);
        // At the waypoint the stop signal switches phases within the step.
        assert_eq!(c.step(1).unwrap(), Action::Apply(0));
        assert_eq!(c.phase(), Phase::Second);
        assert_eq!(c.step(2).unwrap(), Action::Apply(0));
        assert_eq!(c.step(3).unwrap(), Action::Stop);
        assert_eq!(c.phase(), Phase::Done);
        assert_eq!(c.step(3), Err(ControllerFault::AlreadyStopped));
    }

    #[test]
    fn unwinnable_waypoints_are_no_solution() {
        // State 0 is absorbing and the only waypoint; the goal is unreachable
        // from it.
        let sys = FiniteSystem::new(4, 1, vec![vec![0], vec![2], vec![3], vec![3]]).unwrap();
        let a1 = vec![true, false, false, false];
        let a2 = vec![false, false, false, true];
        let r = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0));
        match r {
            Err(TwoPhaseError::NoSolution { coverage }) => {
                assert_eq!(coverage.target_cells, 1);
                assert_eq!(coverage.winning_cells, 0);
            }
            _ => panic!("expected NoSolution"),
        }
    }

    #[test]
    fn partial_coverage_proceeds() {
        // Waypoints {0, 1}; 0 is absorbing so only 1 wins phase 2.
        let sys = FiniteSystem::new(4, 1, vec![vec![0], vec![2], vec![3], vec![3]]).unwrap();
        let a1 = vec![true, true, false, false];
        let a2 = vec![false, false, false, true];
        let s = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0)).unwrap();
        assert_eq!(s.coverage.target_cells, 2);
        assert_eq!(s.coverage.winning_cells, 1);
        assert_eq!(s.v1[1], Cost::new(2.0));
        assert!(s.v1[0].is_infinite());
    }

    #[test]
    fn naive_is_never_cheaper() {
        let sys = line();
        let a1 = vec![false, true, false, false];
        let a2 = vec![false, false, false, true];
        let backward = BackwardAdjacency::build(&sys).unwrap();
        let p2 = solve_phase2(&sys, &backward, &a2, |_| Cost::ZERO, unit_cost).unwrap();
        let (p1, _) = compose_phase1(&sys, &backward, &a1, &p2.values, unit_cost).unwrap();
        let naive = naive_phase1(&sys, &backward, &a1, &p2.values, unit_cost).unwrap();
        for x in 0..4 {
            assert!(naive.actual[x] >= p1.values[x]);
        }
        // On the line there is only one route, so the baseline ties.
        assert_eq!(naive.actual[0], p1.values[0]);
        assert_eq!(naive.claimed[0], Cost::new(1.0));
    }

    #[test]
    fn stopping_at_start_skips_no_step() {
        // Start inside the waypoint set with the goal adjacent: the composed
        // controller must consult the goal policy immediately.
        let sys = FiniteSystem::new(2, 1, vec![vec![1], vec![1]]).unwrap();
        let a1 = vec![true, false];
        let a2 = vec![false, true];
        let s = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0)).unwrap();
        let mut c = ComposedController::new(&s.mu1, &s.mu2);
        assert_eq!(c.step(0).unwrap(), Action::Apply(0));
        assert_eq!(c.phase(), Phase::Second);
        assert_eq!(c.step(1).unwrap(), Action::Stop);
    }

    #[test]
    fn outside_domain_is_a_fault() {
        let sys = FiniteSystem::new(3, 1, vec![vec![1], vec![1], vec![2]]).unwrap();
        // State 2 is separated from the rest; no policy covers it.
        let a1 = vec![true, false, false];
        let a2 = vec![false, true, false];
        let s = synthesize(&sys, &a1, &a2, |_| Cost::ZERO, |_, _, _| Cost::new(1.0)).unwrap();
        let mut c = ComposedController::new(&s.mu1, &s.mu2);
        assert_eq!(
            c.step(2),
            Err(ControllerFault::OutsideDomain { state: 2, phase: Phase::First })
        );
    }
}
