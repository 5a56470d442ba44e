//! Synthesis of near-optimal controllers for quantitative two-phase
//! reach-avoid problems on sampled nonlinear control systems.
//!
//! The pipeline: quantize the state space into a uniform grid, over-
//! approximate one-step reachability with growth-bound tubes, solve the
//! resulting finite minimax shortest-path problems phase by phase, and
//! compose the per-phase controllers into one switching controller whose
//! closed-loop cost is bounded by the abstract value function.

pub mod abstraction;
pub mod cost;
pub mod costs;
pub mod dynamics;
pub mod geom;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod system;
pub mod twophase;

pub use cost::Cost;
pub use system::{InputId, StateId};
