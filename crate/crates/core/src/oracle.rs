//! Brute-force reference for the two-phase task on finite systems.
//!
//! Tracks "waypoint visited" as one extra bit of state: the task becomes a
//! single reach-avoid problem on a doubled system, solved here by value
//! iteration. Nothing in this module shares code with the phase-splitting
//! route or the label-setting solver loop, so agreement between the two is
//! evidence either is right. Costs are kept on the half-integer lattice so
//! sums, minima and maxima are exact in floating point and values can be
//! compared with `==`.

use crate::cost::Cost;
use crate::solver::ReachAvoidProblem;
use crate::system::{EdgeCosts, FiniteSystem, InputId, StateId, TransitionSystem};
use crate::twophase::{self, TwoPhaseError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One finite two-phase task: visit `a1`, then stop in `a2` paying `g0`.
pub struct Instance {
    pub sys: FiniteSystem,
    pub a1: Vec<bool>,
    pub a2: Vec<bool>,
    pub g0: Vec<Cost>,
    pub costs: EdgeCosts,
}

impl Instance {
    pub fn running(&self) -> impl Fn(StateId, StateId, InputId) -> Cost + Copy + '_ {
        move |x, y, u| self.costs.cost(&self.sys, x, y, u)
    }

    /// Product-state id of the plain start at `x`.
    pub fn initial_pid(&self, x: StateId) -> StateId {
        2 * x + self.a1[x as usize] as StateId
    }
}

/// Optimal task values on the doubled system, by value iteration. Index
/// 2x + b, where b records whether the waypoint set has been visited.
pub fn product_value(inst: &Instance) -> Result<Vec<Cost>, crate::solver::SolverError> {
    let n = inst.sys.state_count();
    let m = inst.sys.input_count();
    let mut succ = Vec::with_capacity(2 * n * m);
    let mut table = Vec::with_capacity(2 * n * m);
    for x in 0..n {
        for b in 0..2u32 {
            for u in 0..m {
                let orig = inst.sys.successors(x as StateId, u as InputId);
                let mut list = Vec::with_capacity(orig.len());
                let mut costs = Vec::with_capacity(orig.len());
                for &y in orig {
                    let nb = b | inst.a1[y as usize] as u32;
                    list.push(2 * y + nb);
                    costs.push(inst.costs.cost(&inst.sys, x as StateId, y, u as InputId));
                }
                succ.push(list);
                table.push(costs);
            }
        }
    }
    let product = FiniteSystem::new(2 * n, m, succ).unwrap();
    let pcosts = EdgeCosts::new(&product, table).unwrap();
    let target: Vec<bool> = (0..2 * n)
        .map(|pid| pid % 2 == 1 && inst.a2[pid / 2])
        .collect();
    let p = ReachAvoidProblem {
        system: &product,
        target: &target,
        terminal: |pid: StateId| inst.g0[pid as usize / 2],
        running: |px: StateId, py: StateId, u: InputId| {
            pcosts.cost(&product, px, py, u)
        },
    };
    p.value_iteration(8 * n + 64)
}

/// Outcome of pitting the phase-split route against the oracle on one
/// instance.
pub struct InstanceReport {
    /// Composed value equals the oracle value at every plain start.
    pub values_match: bool,
    /// The zero-terminal baseline never beats the composed controller.
    pub naive_never_better: bool,
    /// Some start exists where the baseline is strictly worse.
    pub naive_gap: bool,
    /// The instance had no solution (oracle confirmed infinite everywhere).
    pub no_solution: bool,
}

/// Solves an instance both ways and cross-checks. Exact comparisons
/// throughout; any tolerance would hide real defects.
pub fn check_instance(inst: &Instance) -> Result<InstanceReport, TwoPhaseError> {
    let oracle = product_value(inst)?;
    let n = inst.sys.state_count();
    match twophase::synthesize(&inst.sys, &inst.a1, &inst.a2, |x| inst.g0[x as usize], inst.running()) {
        Ok(sol) => {
            let values_match = (0..n).all(|x| {
                sol.v1[x] == oracle[inst.initial_pid(x as StateId) as usize]
            });
            let backward = crate::solver::BackwardAdjacency::build(&inst.sys)?;
            let naive =
                twophase::naive_phase1(&inst.sys, &backward, &inst.a1, &sol.v2, inst.running())?;
            let naive_never_better = (0..n).all(|x| naive.actual[x] >= sol.v1[x]);
            let naive_gap = (0..n).any(|x| sol.v1[x].is_finite() && naive.actual[x] > sol.v1[x]);
            Ok(InstanceReport { values_match, naive_never_better, naive_gap, no_solution: false })
        }
        Err(TwoPhaseError::NoSolution { .. }) => {
            let all_inf =
                (0..n).all(|x| oracle[inst.initial_pid(x as StateId) as usize].is_infinite());
            Ok(InstanceReport {
                values_match: all_inf,
                naive_never_better: true,
                naive_gap: false,
                no_solution: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Hand-built 6-state instance on which the zero-terminal baseline pays
/// nearly four times the optimum: the nearest waypoint (via input 0) leads
/// into an expensive corridor, the slightly dearer one (via input 1) exits
/// cheaply.
pub fn gadget() -> Instance {
    let inf = Cost::INF;
    let c = |v: f64| Cost::new(v);
    let succ = vec![
        vec![1], vec![2], // 0: cheap waypoint / dear waypoint
        vec![3], vec![5], // 1: expensive corridor / dead
        vec![4], vec![5], // 2: cheap exit / dead
        vec![4], vec![5], // 3
        vec![5], vec![4], // 4: goal; input 1 idles
        vec![5], vec![5], // 5: dead
    ];
    let sys = FiniteSystem::new(6, 2, succ).unwrap();
    let table = vec![
        vec![c(1.0)], vec![c(2.0)],
        vec![c(5.0)], vec![inf],
        vec![c(1.0)], vec![inf],
        vec![c(5.0)], vec![inf],
        vec![inf], vec![c(1.0)],
        vec![inf], vec![inf],
    ];
    let costs = EdgeCosts::new(&sys, table).unwrap();
    Instance {
        sys,
        a1: vec![false, true, true, false, false, false],
        a2: vec![false, false, false, false, true, false],
        g0: vec![Cost::ZERO; 6],
        costs,
    }
}

/// Size and shape bounds for random instances.
#[derive(Debug, Clone, Copy)]
pub struct InstanceLimits {
    pub max_states: usize,
    pub max_inputs: usize,
    pub max_succ: usize,
    /// Keep the waypoint and goal sets disjoint and give the waypoint set at
    /// least two members, so where phase 1 stops actually matters.
    pub phase_coupled: bool,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        InstanceLimits { max_states: 200, max_inputs: 5, max_succ: 4, phase_coupled: false }
    }
}

/// Seeded random instance on the half-integer cost lattice.
pub fn random_instance(seed: u64, limits: InstanceLimits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=limits.max_states.max(2));
    let m = rng.gen_range(1..=limits.max_inputs.max(1));
    let mut succ = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        let k = rng.gen_range(1..=limits.max_succ.max(1));
        let list: Vec<StateId> = (0..k).map(|_| rng.gen_range(0..n) as StateId).collect();
        succ.push(list);
    }
    let sys = FiniteSystem::new(n, m, succ).unwrap();

    let mut a1 = vec![false; n];
    let mut a2 = vec![false; n];
    for x in 0..n {
        a1[x] = rng.gen_bool(0.15);
        a2[x] = rng.gen_bool(0.15);
    }
    if limits.phase_coupled {
        for x in 0..n {
            if a1[x] {
                a2[x] = false;
            }
        }
        let mut a1_count = a1.iter().filter(|&&t| t).count();
        while a1_count < 2.min(n.saturating_sub(1)) {
            let x = rng.gen_range(0..n);
            if !a1[x] && !a2[x] {
                a1[x] = true;
                a1_count += 1;
            }
        }
    }
    if !a1.iter().any(|&t| t) {
        a1[rng.gen_range(0..n)] = true;
    }
    if !a2.iter().any(|&t| t) {
        let mut x = rng.gen_range(0..n);
        if limits.phase_coupled && n > 1 {
            while a1[x] {
                x = rng.gen_range(0..n);
            }
        }
        a2[x] = true;
    }

    let g0: Vec<Cost> = (0..n)
        .map(|_| Cost::new(rng.gen_range(0..=10) as f64 * 0.5))
        .collect();
    let mut table = Vec::with_capacity(n * m);
    for x in 0..n {
        for u in 0..m {
            let len = sys.successors(x as StateId, u as InputId).len();
            let row: Vec<Cost> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.05) {
                        Cost::INF
                    } else {
                        Cost::new(rng.gen_range(1..=20) as f64 * 0.5)
                    }
                })
                .collect();
            table.push(row);
        }
    }
    let costs = EdgeCosts::new(&sys, table).unwrap();
    Instance { sys, a1, a2, g0, costs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::BackwardAdjacency;

    #[test]
    fn gadget_pinned_values() {
        let inst = gadget();
        let sol = twophase::synthesize(
            &inst.sys,
            &inst.a1,
            &inst.a2,
            |x| inst.g0[x as usize],
            inst.running(),
        )
        .unwrap();
        let want_v2 = vec![
            Cost::new(3.0),
            Cost::new(10.0),
            Cost::new(1.0),
            Cost::new(5.0),
            Cost::ZERO,
            Cost::INF,
        ];
        assert_eq!(sol.v2, want_v2);
        assert_eq!(sol.v1[0], Cost::new(3.0));

        let backward = BackwardAdjacency::build(&inst.sys).unwrap();
        let naive =
            twophase::naive_phase1(&inst.sys, &backward, &inst.a1, &sol.v2, inst.running())
                .unwrap();
        assert_eq!(naive.claimed[0], Cost::new(1.0));
        assert_eq!(naive.actual[0], Cost::new(11.0));

        let oracle = product_value(&inst).unwrap();
        assert_eq!(oracle[inst.initial_pid(0) as usize], Cost::new(3.0));
    }

    #[test]
    fn gadget_report_shows_the_gap() {
        let r = check_instance(&gadget()).unwrap();
        assert!(r.values_match);
        assert!(r.naive_never_better);
        assert!(r.naive_gap);
        assert!(!r.no_solution);
    }

    #[test]
    fn line_oracle_agrees_from_plain_start() {
        // 0 -> 1 -> 2 -> 3, waypoint {1}, goal {3}: value 3 from the start,
        // which enters the product in the unvisited layer.
        let sys = FiniteSystem::new(4, 1, vec![vec![1], vec![2], vec![3], vec![3]]).unwrap();
        let table = vec![
            vec![Cost::new(1.0)],
            vec![Cost::new(1.0)],
            vec![Cost::new(1.0)],
            vec![Cost::INF],
        ];
        let costs = EdgeCosts::new(&sys, table).unwrap();
        let inst = Instance {
            sys,
            a1: vec![false, true, false, false],
            a2: vec![false, false, false, true],
            g0: vec![Cost::ZERO; 4],
            costs,
        };
        assert_eq!(inst.initial_pid(0), 0);
        let oracle = product_value(&inst).unwrap();
        assert_eq!(oracle[0], Cost::new(3.0));
        let r = check_instance(&inst).unwrap();
        assert!(r.values_match);
    }

    #[test]
    fn unwinnable_waypoint_matches_oracle_infinity() {
        // Point the waypoint set at the dead state: no solution, and the
        // oracle must agree from every plain start.
        let mut inst = gadget();
        inst.a1 = vec![false, false, false, false, false, true];
        let r = check_instance(&inst).unwrap();
        assert!(r.no_solution);
        assert!(r.values_match);
    }

    #[test]
    fn random_corpus_agrees_both_ways() {
        let mut gaps = 0;
        for seed in 0..120u64 {
            let limits = if seed % 2 == 0 {
                InstanceLimits { max_states: 40, max_inputs: 4, max_succ: 3, phase_coupled: false }
            } else {
                InstanceLimits { max_states: 40, max_inputs: 4, max_succ: 3, phase_coupled: true }
            };
            let inst = random_instance(seed, limits);
            let r = check_instance(&inst).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(r.values_match, "value mismatch at seed {seed}");
            assert!(r.naive_never_better, "baseline beat the optimum at seed {seed}");
            if r.naive_gap {
                gaps += 1;
            }
        }
        assert!(gaps > 0, "no instance separated the baseline from the optimum");
    }

    #[test]
    fn generator_is_deterministic() {
        let a = random_instance(42, InstanceLimits::default());
        let b = random_instance(42, InstanceLimits::default());
        assert_eq!(a.sys.state_count(), b.sys.state_count());
        assert_eq!(a.a1, b.a1);
        assert_eq!(a.g0, b.g0);
        for x in 0..a.sys.state_count() as StateId {
            for u in 0..a.sys.input_count() as InputId {
                assert_eq!(a.sys.successors(x, u), b.sys.successors(x, u));
            }
        }
    }
}
