//! Closed-loop simulation of a composed controller on the sampled plant.
//!
//! Each episode quantizes the concrete state, asks the controller for an
//! action, integrates one sampling period under a seeded disturbance, and
//! accumulates the concrete running cost. Episodes are reproducible from
//! their seed alone and independent of thread count or batch position.

use crate::cost::Cost;
use crate::costs::{CostFamily, CostModel};
use crate::dynamics::{PreparedInput, SampledSystem};
use crate::geom::Region;
use crate::grid::Grid;
use crate::solver::PolicyEntry;
use crate::system::{Action, InputId};
use crate::twophase::{ComposedController, ControllerFault, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the adversary fills the disturbance box each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disturbance {
    /// No disturbance at all.
    None,
    /// Fresh uniform sample from the box every integration sub-step.
    Uniform,
    /// A random vertex of the box, held constant over the sampling period.
    Corners,
}

impl Disturbance {
    pub fn parse(s: &str) -> Option<Disturbance> {
        match s {
            "none" => Some(Disturbance::None),
            "uniform" => Some(Disturbance::Uniform),
            "corners" => Some(Disturbance::Corners),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Disturbance::None => "none",
            Disturbance::Uniform => "uniform",
            Disturbance::Corners => "corners",
        }
    }
}

pub struct EpisodeReport {
    /// Visited states, wrapped into the principal domain; length steps + 1.
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<InputId>,
    /// Accumulated running cost plus terminal; infinite when the episode
    /// never stopped, stopped invalidly, or faulted.
    pub cost: Cost,
    /// Value of the initial cell; the promised worst case.
    pub bound: Cost,
    pub finished: bool,
    pub visited_a1: bool,
    pub stopped_in_a2: bool,
    /// Step index at which the controller switched to the goal phase.
    pub phase_switch: Option<usize>,
    pub stop_step: Option<usize>,
    pub fault: Option<ControllerFault>,
}

impl EpisodeReport {
    pub fn bound_ok(&self) -> bool {
        self.cost <= self.bound
    }
}

pub struct Simulator<'a> {
    pub sys: &'a SampledSystem,
    pub grid: &'a Grid,
    pub model: &'a CostModel,
    pub a1: &'a Region,
    pub a2: &'a Region,
    pub inputs: &'a [Vec<f64>],
    prepared: Vec<PreparedInput>,
}

/// Step budget large enough that any run obeying `bound` has room to finish:
/// every step charges at least the family's floor charge.
pub fn auto_step_budget(model: &CostModel, bound: Cost) -> usize {
    let floor = match model.family {
        CostFamily::Constant { value } => value,
        CostFamily::TimeSteer | CostFamily::Vehicle => model.tau,
    };
    if !bound.is_finite() || floor <= 0.0 {
        return 4096;
    }
    let steps = (4.0 * bound.value() / floor).ceil();
    (steps as usize).clamp(16, 4_000_000)
}

impl<'a> Simulator<'a> {
    pub fn new(
        sys: &'a SampledSystem,
        grid: &'a Grid,
        model: &'a CostModel,
        a1: &'a Region,
        a2: &'a Region,
        inputs: &'a [Vec<f64>],
    ) -> Simulator<'a> {
        let prepared = inputs.iter().map(|u| sys.prepare(u)).collect();
        Simulator { sys, grid, model, a1, a2, inputs, prepared }
    }

    fn sample_disturbance(
        &self,
        rng: &mut ChaCha8Rng,
        strategy: Disturbance,
    ) -> Vec<Vec<f64>> {
        let w = &self.sys.disturbance;
        let substeps = self.sys.substeps as usize;
        match strategy {
            Disturbance::None => Vec::new(),
            Disturbance::Uniform => (0..substeps)
                .map(|_| {
                    w.iter()
                        .map(|&wi| if wi > 0.0 { rng.gen_range(-wi..=wi) } else { 0.0 })
                        .collect()
                })
                .collect(),
            Disturbance::Corners => {
                let vertex: Vec<f64> = w
                    .iter()
                    .map(|&wi| if rng.gen::<bool>() { wi } else { -wi })
                    .collect();
                vec![vertex; substeps]
            }
        }
    }

    fn wrap(&self, x: &mut [f64]) {
        for a in 0..self.grid.dim() {
            if self.grid.periodic[a] {
                x[a] = self.grid.wrap_coord(a, x[a]);
            }
        }
    }

    pub fn run_episode(
        &self,
        x0: &[f64],
        seed: u64,
        strategy: Disturbance,
        max_steps: usize,
        mu1: &[PolicyEntry],
        mu2: &[PolicyEntry],
        bound: Cost,
    ) -> EpisodeReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctrl = ComposedController::new(mu1, mu2);
        let mut x = x0.to_vec();
        self.wrap(&mut x);
        let mut visited_a1 = self.a1.contains_point(&x);
        let mut states = vec![x.clone()];
        let mut inputs = Vec::new();
        let mut total = Cost::ZERO;
        let mut phase_switch = None;
        let report = |states: Vec<Vec<f64>>,
                          inputs: Vec<InputId>,
                          cost: Cost,
                          finished: bool,
                          visited_a1: bool,
                          stopped_in_a2: bool,
                          phase_switch: Option<usize>,
                          stop_step: Option<usize>,
                          fault: Option<ControllerFault>| {
            EpisodeReport {
                states,
                inputs,
                cost,
                bound,
                finished,
                visited_a1,
                stopped_in_a2,
                phase_switch,
                stop_step,
                fault,
            }
        };

        for step in 0..max_steps {
            let cell = self.grid.quantize(&x);
            let action = match ctrl.step(cell) {
                Ok(a) => a,
                Err(fault) => {
                    return report(
                        states,
                        inputs,
                        Cost::INF,
                        false,
                        visited_a1,
                        false,
                        phase_switch,
                        None,
                        Some(fault),
                    )
                }
            };
            if phase_switch.is_none() && ctrl.phase() != Phase::First {
                phase_switch = Some(step);
            }
            match action {
                Action::Stop => {
                    let valid = visited_a1 && self.a2.contains_point(&x);
                    let cost = if valid { total + self.model.terminal } else { Cost::INF };
                    return report(
                        states,
                        inputs,
                        cost,
                        true,
                        visited_a1,
                        self.a2.contains_point(&x),
                        phase_switch,
                        Some(step),
                        None,
                    );
                }
                Action::Apply(u) => {
                    let d = self.sample_disturbance(&mut rng, strategy);
                    let mut y = match self.sys.integrate_prepared(&x, &self.prepared[u as usize], &d)
                    {
                        Ok(y) => y,
                        Err(_) => {
                            return report(
                                states,
                                inputs,
                                Cost::INF,
                                false,
                                visited_a1,
                                false,
                                phase_switch,
                                None,
                                None,
                            )
                        }
                    };
                    self.wrap(&mut y);
                    total = total + self.model.concrete(&x, &y, &self.inputs[u as usize]);
                    x = y;
                    visited_a1 = visited_a1 || self.a1.contains_point(&x);
                    states.push(x.clone());
                    inputs.push(u);
                }
            }
        }
        report(states, inputs, Cost::INF, false, visited_a1, false, phase_switch, None, None)
    }

    /// Runs `episodes` episodes with seeds `base_seed..base_seed+episodes`,
    /// collected in seed order.
    #[allow(clippy::too_many_arguments)]
    pub fn run_batch(
        &self,
        x0: &[f64],
        episodes: u32,
        base_seed: u64,
        strategy: Disturbance,
        max_steps: usize,
        mu1: &[PolicyEntry],
        mu2: &[PolicyEntry],
        bound: Cost,
    ) -> Vec<EpisodeReport> {
        (0..episodes as u64)
            .map(|k| {
                self.run_episode(x0, base_seed + k, strategy, max_steps, mu1, mu2, bound)
            })
            .collect()
    }
}
