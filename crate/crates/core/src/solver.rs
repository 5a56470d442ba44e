//! Minimax label-setting solver for stop-or-continue problems on finite
//! transition systems.
//!
//! The value of a state is the total cost of the best strategy that either
//! stops (paying the terminal cost, allowed on target states only) or applies
//! an input (paying the running cost of the worst successor plus that
//! successor's value). Running costs are nonnegative, so states can be
//! finalized in nondecreasing value order; a (state, input) hyperedge relaxes
//! once all of its successors are finalized, carrying the running maximum of
//! cost-plus-value accumulated along the way. Ties prefer stopping over
//! continuing and smaller input indices over larger, and the heap breaks
//! equal values by state id, so the result is fully deterministic.

use crate::cost::Cost;
use crate::system::{InputId, StateId, TransitionSystem};
use rayon::prelude::*;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no state is marked as a stop target")]
    EmptyTarget,
    #[error("target mask length {mask} does not match state count {states}")]
    TargetLength { mask: usize, states: usize },
    #[error("value vector length {values} does not match state count {states}")]
    ValueLength { values: usize, states: usize },
    #[error("{pairs} state-input pairs exceed the addressable capacity")]
    Capacity { pairs: u64 },
    #[error("value iteration did not stabilize within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("state {state}: value {value} does not satisfy the optimality equation (rhs {rhs})")]
    FixedPoint { state: StateId, value: f64, rhs: f64 },
    #[error("state {state} appears in the order without a defined action")]
    InconsistentPolicy { state: StateId },
}

/// Action prescribed at one state, or the lack of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyEntry {
    Stop,
    Input(InputId),
    Unreachable,
}

/// Incoming hyperedge index: for every state, the (state, input) pair ids
/// whose successor set contains it. Pair id = state * input_count + input.
pub struct BackwardAdjacency {
    offsets: Vec<u64>,
    pairs: Vec<u32>,
}

impl BackwardAdjacency {
    pub fn build<S: TransitionSystem>(system: &S) -> Result<BackwardAdjacency, SolverError> {
        let n = system.state_count();
        let m = system.input_count();
        let pair_count = n as u64 * m as u64;
        if pair_count > u32::MAX as u64 {
            return Err(SolverError::Capacity { pairs: pair_count });
        }
        let mut offsets = vec![0u64; n + 1];
        for x in 0..n {
            for u in 0..m {
                for &y in system.successors(x as StateId, u as InputId) {
                    offsets[y as usize + 1] += 1;
                }
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor: Vec<u64> = offsets[..n].to_vec();
        let mut pairs = vec![0u32; offsets[n] as usize];
        for x in 0..n {
            for u in 0..m {
                let p = (x * m + u) as u32;
                for &y in system.successors(x as StateId, u as InputId) {
                    pairs[cursor[y as usize] as usize] = p;
                    cursor[y as usize] += 1;
                }
            }
        }
        Ok(BackwardAdjacency { offsets, pairs })
    }

    pub fn incoming(&self, state: StateId) -> &[u32] {
        &self.pairs[self.offsets[state as usize] as usize..self.offsets[state as usize + 1] as usize]
    }

    pub fn edge_count(&self) -> u64 {
        self.pairs.len() as u64
    }
}

/// Solver output. `order` lists the finalized states in nondecreasing value;
/// every successor a state's chosen input can produce appears earlier in the
/// order than the state itself, so one forward pass over `order` evaluates
/// any quantity defined recursively along the policy.
pub struct Solution {
    pub values: Vec<Cost>,
    pub policy: Vec<PolicyEntry>,
    pub order: Vec<StateId>,
}

/// One stop-or-continue problem instance. `target` marks where stopping is
/// allowed, `terminal` prices it, `running` prices (from, to, input) steps.
pub struct ReachAvoidProblem<'a, S, T, R> {
    pub system: &'a S,
    pub target: &'a [bool],
    pub terminal: T,
    pub running: R,
}

impl<'a, S, T, R> ReachAvoidProblem<'a, S, T, R>
where
    S: TransitionSystem,
    T: Fn(StateId) -> Cost,
    R: Fn(StateId, StateId, InputId) -> Cost,
{
    fn validate(&self) -> Result<(), SolverError> {
        let n = self.system.state_count();
        let m = self.system.input_count();
        if self.target.len() != n {
            return Err(SolverError::TargetLength { mask: self.target.len(), states: n });
        }
        let pair_count = n as u64 * m as u64;
        if pair_count > u32::MAX as u64 {
            return Err(SolverError::Capacity { pairs: pair_count });
        }
        if !self.target.iter().any(|&t| t) {
            return Err(SolverError::EmptyTarget);
        }
        Ok(())
    }

    fn stop_cost(&self, x: StateId) -> Cost {
        if self.target[x as usize] {
            (self.terminal)(x)
        } else {
            Cost::INF
        }
    }

    pub fn solve(&self) -> Result<Solution, SolverError> {
        let backward = BackwardAdjacency::build(self.system)?;
        self.solve_with(&backward)
    }

    /// Label-setting solve against a prebuilt backward adjacency.
    pub fn solve_with(&self, backward: &BackwardAdjacency) -> Result<Solution, SolverError> {
        self.validate()?;
        let n = self.system.state_count();
        let m = self.system.input_count();

        let mut remaining = vec![0u32; n * m];
        let mut label = vec![Cost::ZERO; n * m];
        for x in 0..n {
            for u in 0..m {
                let succ = self.system.successors(x as StateId, u as InputId);
                if succ.is_empty() {
                    label[x * m + u] = Cost::INF;
                } else {
                    remaining[x * m + u] = succ.len() as u32;
                }
            }
        }

        let mut values = vec![Cost::INF; n];
        let mut policy = vec![PolicyEntry::Unreachable; n];
        let mut best = vec![Cost::INF; n];
        let mut act = vec![PolicyEntry::Unreachable; n];
        let mut finalized = vec![false; n];
        let mut order: Vec<StateId> = Vec::new();
        let mut heap: BinaryHeap<Reverse<(Cost, StateId)>> = BinaryHeap::new();

        for x in 0..n {
            if self.target[x] {
                let c = (self.terminal)(x as StateId);
                if c.is_finite() {
                    best[x] = c;
                    act[x] = PolicyEntry::Stop;
                    heap.push(Reverse((c, x as StateId)));
                }
            }
        }

        while let Some(Reverse((c, x))) = heap.pop() {
            let xi = x as usize;
            if finalized[xi] || c > best[xi] {
                continue;
            }
            finalized[xi] = true;
            values[xi] = c;
            policy[xi] = act[xi];
            order.push(x);
            for &p in backward.incoming(x) {
                let pi = p as usize;
                let y = pi / m;
                if finalized[y] {
                    continue;
                }
                if label[pi] != Cost::INF {
                    let u = (pi % m) as InputId;
                    label[pi] = label[pi].max((self.running)(y as StateId, x, u) + c);
                }
                remaining[pi] -= 1;
                if remaining[pi] == 0 && label[pi] != Cost::INF {
                    let cand = label[pi];
                    let u = (pi % m) as InputId;
                    if cand < best[y] {
                        best[y] = cand;
                        act[y] = PolicyEntry::Input(u);
                        heap.push(Reverse((cand, y as StateId)));
                    } else if cand == best[y] {
                        if let PolicyEntry::Input(prev) = act[y] {
                            if u < prev {
                                act[y] = PolicyEntry::Input(u);
                            }
                        }
                    }
                }
            }
        }

        Ok(Solution { values, policy, order })
    }

    /// Gauss-Seidel value iteration started from the stop costs, sweeping
    /// states in ascending id. Values only decrease; the sweep stabilizes in
    /// finitely many rounds because costs are drawn from a finite set of
    /// partial path sums. Independent of the label-setting route, which is
    /// the point: agreement of the two is a meaningful correctness check.
    pub fn value_iteration(&self, max_sweeps: usize) -> Result<Vec<Cost>, SolverError> {
        self.validate()?;
        let n = self.system.state_count();
        let mut v: Vec<Cost> = (0..n).map(|x| self.stop_cost(x as StateId)).collect();
        for _ in 0..max_sweeps {
            let mut changed = false;
            for x in 0..n {
                let new = self.bellman_rhs(x, &v);
                if new != v[x] {
                    debug_assert!(new < v[x]);
                    v[x] = new;
                    changed = true;
                }
            }
            if !changed {
                return Ok(v);
            }
        }
        Err(SolverError::NonConvergence { sweeps: max_sweeps })
    }

    fn bellman_rhs(&self, x: usize, v: &[Cost]) -> Cost {
        let m = self.system.input_count();
        let mut best = self.stop_cost(x as StateId);
        for u in 0..m {
            let succ = self.system.successors(x as StateId, u as InputId);
            if succ.is_empty() {
                continue;
            }
            let mut worst = Cost::ZERO;
            for &y in succ {
                worst = worst.max((self.running)(x as StateId, y, u as InputId) + v[y as usize]);
                if worst == Cost::INF {
                    break;
                }
            }
            best = best.min(worst);
        }
        best
    }

    /// Checks that `values` satisfies the optimality equation to relative
    /// tolerance `tol` at every state; returns the worst relative residual.
    pub fn verify_fixed_point(&self, values: &[Cost], tol: f64) -> Result<f64, SolverError>
    where
        S: Sync,
        T: Sync,
        R: Sync,
    {
        self.validate()?;
        let n = self.system.state_count();
        if values.len() != n {
            return Err(SolverError::ValueLength { values: values.len(), states: n });
        }
        (0..n)
            .into_par_iter()
            .map(|x| {
                let rhs = self.bellman_rhs(x, values);
                let v = values[x];
                if v.is_infinite() && rhs.is_infinite() {
                    return Ok(0.0);
                }
                let (vf, rf) = (v.value(), rhs.value());
                let resid = (vf - rf).abs();
                let scale = 1.0f64.max(vf.abs()).max(rf.abs());
                if v.is_finite() && rhs.is_finite() && resid <= tol * scale {
                    Ok(resid / scale)
                } else {
                    Err(SolverError::FixedPoint { state: x as StateId, value: vf, rhs: rf })
                }
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

/// Worst-case cost of following a fixed policy, evaluated exactly in one
/// pass over a finalization order (successors precede their predecessors).
/// `stop_value` prices the Stop action, which may differ from the terminal
/// the policy was synthesized against. States outside the order stay at
/// infinity, and so does any state whose chosen successors include one.
pub fn evaluate_policy<S, F, R>(
    system: &S,
    policy: &[PolicyEntry],
    order: &[StateId],
    stop_value: F,
    running: R,
) -> Result<Vec<Cost>, SolverError>
where
    S: TransitionSystem,
    F: Fn(StateId) -> Cost,
    R: Fn(StateId, StateId, InputId) -> Cost,
{
    let n = system.state_count();
    let mut w = vec![Cost::INF; n];
    for &x in order {
        let xi = x as usize;
        match policy[xi] {
            PolicyEntry::Stop => w[xi] = stop_value(x),
            PolicyEntry::Input(u) => {
                let mut worst = Cost::ZERO;
                for &y in system.successors(x, u) {
                    worst = worst.max(running(x, y, u) + w[y as usize]);
                }
                w[xi] = worst;
            }
            PolicyEntry::Unreachable => {
                return Err(SolverError::InconsistentPolicy { state: x });
            }
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::FiniteSystem;

    fn chain() -> FiniteSystem {
        FiniteSystem::new(3, 1, vec![vec![1], vec![2], vec![2]]).unwrap()
    }

    #[test]
    fn chain_values_and_order() {
        let sys = chain();
        let target = vec![false, false, true];
        let p = ReachAvoidProblem {
            system: &sys,
            target: &target,
            terminal: |_| Cost::ZERO,
            running: |_, _, _| Cost::new(1.0),
        };
        let s = p.solve().unwrap();
        assert_eq!(
            s.values,
            vec![Cost::new(2.0), Cost::new(1.0), Cost::ZERO]
        );
        assert_eq!(s.policy[0], PolicyEntry::Input(0));
        assert_eq!(s.policy[1], PolicyEntry::Input(0));
        assert_eq!(s.policy[2], PolicyEntry::Stop);
        assert_eq!(s.order, vec![2, 1, 0]);
    }

    #[test]
    fn worst_successor_dictates_input_choice() {
        // Input 1 has a cheap successor and a dead one; input 0 is a sure 5.
        let sys =
            FiniteSystem::new(3, 2, vec![vec![1], vec![1, 2], vec![1], vec![1], vec![2], vec![2]])
                .unwrap();
        let target = vec![false, true, false];
        let run = |x: StateId, _y: StateId, u: InputId| {
            if x == 0 && u == 0 {
                Cost::new(5.0)
            } else {
                Cost::new(1.0)
            }
        };
        let p = ReachAvoidProblem { system: &sys, target: &target, terminal: |_| Cost::ZERO, running: run };
        let s = p.solve().unwrap();
        assert_eq!(s.values[0], Cost::new(5.0));
        assert_eq!(s.policy[0], PolicyEntry::Input(0));
        assert_eq!(s.values[2], Cost::INF);
        assert_eq!(s.policy[2], PolicyEntry::Unreachable);
    }

    #[test]
    fn stop_wins_cost_ties() {
        let sys = FiniteSystem::new(2, 1, vec![vec![1], vec![1]]).unwrap();
        let target = vec![true, true];
        let term = |x: StateId| if x == 0 { Cost::new(3.0) } else { Cost::ZERO };
        let p = ReachAvoidProblem {
            system: &sys,
            target: &target,
            terminal: term,
            running: |_, _, _| Cost::new(3.0),
        };
        let s = p.solve().unwrap();
        assert_eq!(s.values[0], Cost::new(3.0));
        assert_eq!(s.policy[0], PolicyEntry::Stop);
    }

    #[test]
    fn equal_inputs_pick_smaller_index() {
        // Both orderings of completion must settle on input 0.
        for flip in [false, true] {
            let succ = if flip {
                vec![vec![2], vec![1], vec![1], vec![1], vec![2], vec![2]]
            } else {
                vec![vec![1], vec![2], vec![1], vec![1], vec![2], vec![2]]
            };
            let sys = FiniteSystem::new(3, 2, succ).unwrap();
            let target = vec![false, true, true];
            let p = ReachAvoidProblem {
                system: &sys,
                target: &target,
                terminal: |_| Cost::ZERO,
                running: |_, _, _| Cost::new(2.0),
            };
            let s = p.solve().unwrap();
            assert_eq!(s.values[0], Cost::new(2.0));
            assert_eq!(s.policy[0], PolicyEntry::Input(0), "flip={flip}");
            assert_eq!(s.order, vec![1, 2, 0]);
        }
    }

    #[test]
    fn unavailable_input_is_skipped() {
        struct Gap;
        impl TransitionSystem for Gap {
            fn state_count(&self) -> usize {
                2
            }
            fn input_count(&self) -> usize {
                2
            }
            fn successors(&self, state: StateId, input: InputId) -> &[StateId] {
                match (state, input) {
                    (0, 0) => &[1],
                    (0, 1) => &[],
                    _ => &[1],
                }
            }
        }
        let target = vec![false, true];
        let p = ReachAvoidProblem {
            system: &Gap,
            target: &target,
            terminal: |_| Cost::ZERO,
            running: |_, _, _| Cost::new(1.0),
        };
        let s = p.solve().unwrap();
        assert_eq!(s.values[0], Cost::new(1.0));
        let vi = p.value_iteration(16).unwrap();
        assert_eq!(vi, s.values);
    }

    #[test]
    fn unreachable_targets_leave_infinity() {
        let sys = FiniteSystem::new(2, 1, vec![vec![0], vec![1]]).unwrap();
        let target = vec![false, true];
        let p = ReachAvoidProblem {
            system: &sys,
            target: &target,
            terminal: |_| Cost::INF,
            running: |_, _, _| Cost::new(1.0),
        };
        let s = p.solve().unwrap();
        assert!(s.values.iter().all(|v| v.is_infinite()));
        assert!(s.order.is_empty());
    }

    #[test]
    fn rejects_bad_masks() {
        let sys = chain();
        let short = vec![true; 2];
        let p = ReachAvoidProblem {
            system: &sys,
            target: &short,
            terminal: |_| Cost::ZERO,
            running: |_, _, _| Cost::ZERO,
        };
        assert!(matches!(p.solve(), Err(SolverError::TargetLength { .. })));
        let none = vec![false; 3];
        let p = ReachAvoidProblem {
            system: &sys,
            target: &none,
            terminal: |_| Cost::ZERO,
            running: |_, _, _| Cost::ZERO,
        };
        assert!(matches!(p.solve(), Err(SolverError::EmptyTarget)));
    }

    /// Deterministic half-integer random instances, solver-local; the full
    /// cross-check corpus lives with the oracle.
    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> u64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            self.0 >> 33
        }
        fn below(&mut self, n: u64) -> u64 {
            self.next() % n
        }
    }

    fn random_instance(seed: u64) -> (FiniteSystem, Vec<bool>, Vec<Cost>, Vec<Vec<Cost>>) {
        let mut r = Lcg(seed.wrapping_mul(2654435761).wrapping_add(11));
        let n = 2 + r.below(28) as usize;
        let m = 1 + r.below(4) as usize;
        let mut succ = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            let k = 1 + r.below(3) as usize;
            let mut s: Vec<StateId> = (0..k).map(|_| r.below(n as u64) as StateId).collect();
            s.sort_unstable();
            s.dedup();
            succ.push(s);
        }
        let sys = FiniteSystem::new(n, m, succ).unwrap();
        let mut target = vec![false; n];
        for x in 0..n {
            target[x] = r.below(5) == 0;
        }
        target[r.below(n as u64) as usize] = true;
        let terminal: Vec<Cost> = (0..n).map(|_| Cost::new(r.below(11) as f64 * 0.5)).collect();
        let mut table = Vec::with_capacity(n * m);
        for x in 0..n {
            for u in 0..m {
                let len = sys.successors(x as StateId, u as InputId).len();
                let row: Vec<Cost> = (0..len)
                    .map(|_| {
                        if r.below(20) == 0 {
                            Cost::INF
                        } else {
                            Cost::new((1 + r.below(20)) as f64 * 0.5)
                        }
                    })
                    .collect();
                table.push(row);
            }
        }
        (sys, target, terminal, table)
    }

    #[test]
    fn value_iteration_matches_label_setting_exactly() {
        for seed in 0..60u64 {
            let (sys, target, terminal, table) = random_instance(seed);
            let costs = crate::system::EdgeCosts::new(&sys, table).unwrap();
            let p = ReachAvoidProblem {
                system: &sys,
                target: &target,
                terminal: |x: StateId| terminal[x as usize],
                running: |x, y, u| costs.cost(&sys, x, y, u),
            };
            let s = p.solve().unwrap();
            let vi = p.value_iteration(4 * sys.state_count() + 64).unwrap();
            assert_eq!(s.values, vi, "seed {seed}");
        }
    }

    #[test]
    fn order_is_topological_for_the_policy() {
        for seed in 0..20u64 {
            let (sys, target, terminal, table) = random_instance(seed);
            let costs = crate::system::EdgeCosts::new(&sys, table).unwrap();
            let p = ReachAvoidProblem {
                system: &sys,
                target: &target,
                terminal: |x: StateId| terminal[x as usize],
                running: |x, y, u| costs.cost(&sys, x, y, u),
            };
            let s = p.solve().unwrap();
            let mut pos = vec![usize::MAX; sys.state_count()];
            for (i, &x) in s.order.iter().enumerate() {
                pos[x as usize] = i;
            }
            for &x in &s.order {
                if let PolicyEntry::Input(u) = s.policy[x as usize] {
                    for &y in sys.successors(x, u) {
                        assert!(pos[y as usize] < pos[x as usize], "seed {seed}");
                    }
                }
            }
        }
    }

    #[test]
    fn policy_evaluation_reproduces_values() {
        for seed in 0..20u64 {
            let (sys, target, terminal, table) = random_instance(seed);
            let costs = crate::system::EdgeCosts::new(&sys, table).unwrap();
            let p = ReachAvoidProblem {
                system: &sys,
                target: &target,
                terminal: |x: StateId| terminal[x as usize],
                running: |x, y, u| costs.cost(&sys, x, y, u),
            };
            let s = p.solve().unwrap();
            let w = evaluate_policy(
                &sys,
                &s.policy,
                &s.order,
                |x| terminal[x as usize],
                |x, y, u| costs.cost(&sys, x, y, u),
            )
            .unwrap();
            assert_eq!(w, s.values, "seed {seed}");
        }
    }

    #[test]
    fn fixed_point_check_accepts_solution_and_rejects_perturbation() {
        let (sys, target, terminal, table) = random_instance(3);
        let costs = crate::system::EdgeCosts::new(&sys, table).unwrap();
        let p = ReachAvoidProblem {
            system: &sys,
            target: &target,
            terminal: |x: StateId| terminal[x as usize],
            running: |x, y, u| costs.cost(&sys, x, y, u),
        };
        let s = p.solve().unwrap();
        let worst = p.verify_fixed_point(&s.values, 1e-9).unwrap();
        assert_eq!(worst, 0.0);
        let mut bad = s.values.clone();
        let fin = bad.iter().position(|v| v.is_finite() && v.value() > 0.0);
        if let Some(i) = fin {
            bad[i] = Cost::new(bad[i].value() * 1.5 + 1.0);
            assert!(matches!(
                p.verify_fixed_point(&bad, 1e-9),
                Err(SolverError::FixedPoint { .. })
            ));
        }
    }
}
