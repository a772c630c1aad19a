//! Energy-optimal task offloading for vehicular edge computing.
//!
//! Vehicles drive past a line of road side units (RSUs) and must finish a
//! compute task before a shared deadline. Each vehicle may process its input
//! bits locally (cubic CPU energy in the bit count) or offload a fraction of
//! them over a fading uplink, let the RSU compute, and fetch the output on
//! the downlink. Time is slotted into frames; under the one-by-one access
//! scheme exactly one vehicle talks to the RSU per frame, so the planner has
//! to decide *who* gets each frame, *how much* each vehicle offloads, and
//! *how many bits* go into every scheduled frame.
//!
//! The crate is organized around that decision problem:
//!
//! - [`scenario`]: road/RSU geometry, vehicle mobility, seeded Rayleigh
//!   fading, and per-frame rate caps ([`scenario::ChannelTrace`]).
//! - [`energy`]: the closed-form energy and score functions the optimizer
//!   trades off.
//! - [`alloc`]: per-vehicle capped waterfilling and pipeline fill shared by
//!   the solver and the baselines.
//! - [`solver`]: the Lagrangian dual loop (offload ratio, one-by-one
//!   schedule, bit allocation, subgradient multiplier updates) plus a primal
//!   recovery pass that always returns a feasible plan.
//! - [`baselines`]: local execution, optimized orthogonal access, and the
//!   naive equal-bit one-by-one benchmark.
//! - [`harness`]: deterministic seeded experiment sweeps and CSV emission;
//!   backs the `vecsim` CLI.
//!
//! Independent sweep points (and the per-vehicle subproblems of the
//! orthogonal baseline) run data-parallel via rayon when the default
//! `parallel` feature is enabled; disabling it falls back to plain
//! sequential iteration with identical results.

pub mod alloc;
pub mod baselines;
pub mod energy;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod scenario;
pub mod search;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use grid::Grid;
pub use scenario::{ChannelTrace, FadingMode, Position, ScenarioConfig, VehicleTask};
pub use solver::{PrimalPlan, SolveReport, SolverConfig};
