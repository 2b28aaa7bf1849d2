//! Distributed Nash-equilibrium seeking for constrained aggregative games.
//!
//! Players run a projected gradient-play law on their own action while a
//! dynamic average consensus filter, exchanged over a switching directed
//! network, estimates the aggregate. The crate provides the game model,
//! Euclidean projections onto action sets, switching-network utilities, the
//! closed-loop dynamics and their integrator, a centralized equilibrium
//! oracle, and diagnostics used to check convergence and invariants.

pub mod convex_sets;
pub mod diagnostics;
pub mod dynamics;
pub mod equilibrium;
mod error;
pub mod game_model;
pub mod switching_network;

pub use convex_sets::ConvexSet;
pub use diagnostics::{build_basis, error_coordinates, make_report, rate_fit, OrthonormalBasis, Report};
pub use dynamics::{
    default_init, simulate, AlgorithmParams, IntegratorConfig, Method, SimState, Trajectory,
};
pub use equilibrium::{equilibrium_targets, solve_ne, step_bounds, verify_vi, NeSolveConfig, StepBounds};
pub use error::{Error, Result};
pub use game_model::{estimate_constants, AggregativeGame, GameConstants};
pub use switching_network::{verify_assumption4, SwitchingSchedule, WeightedDigraph};

/// Dense real vector used for actions, profiles and stacked estimates.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
