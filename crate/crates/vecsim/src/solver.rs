//! Joint optimization of offload ratio, one-by-one schedule, and bit
//! allocation by Lagrangian dual ascent.
//!
//! The mixed-integer program relaxes its coupling constraints (rate caps,
//! pipeline precedence, bit totals) into multipliers. Each iteration then
//! decomposes:
//!
//! 1. offload ratios from a closed form in the equality multipliers,
//! 2. per-frame winner-take-all schedules from the uplink/downlink scores,
//! 3. a convex per-vehicle bit allocation (capped waterfilling) under the
//!    chosen schedules,
//! 4. projected subgradient steps on all multipliers, evaluated at the
//!    box-constrained Lagrangian minimizer, with diminishing step sizes.
//!
//! Dual iterates of a relaxed mixed-integer program are not feasible in
//! general, so after the loop a recovery pass freezes schedules (the
//! cheapest iterate's, plus two deterministic fallbacks) and re-optimizes
//! each vehicle's ratio by exact scalar search. The recovered plan is
//! always feasible (ratio zero is) and never worse than pure local
//! execution.

use std::time::Instant;

use thiserror::Error;

use crate::alloc::{
    max_feasible_ratio, offload_cost, optimize_ratio, AllocError, VehicleLink, BIT_EQUALITY_TOL,
};
use crate::energy::{
    comm_energy_slot, downlink_score, local_energy, marginal_cost_slot, uplink_score,
    EnergyBreakdown,
};
use crate::grid::Grid;
use crate::scenario::{ChannelTrace, ScenarioConfig, VehicleTask};

/// Tie-breaking rule for the per-frame schedule argmin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Deterministic: the lowest vehicle index wins equal scores.
    #[default]
    LowestIndex,
}

/// Knobs of the dual loop.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Hard cap on dual iterations.
    pub max_iterations: usize,
    /// Relative spread of the dual objective over `convergence_window`
    /// iterations below which the loop stops.
    pub dual_tolerance: f64,
    /// Acceptance threshold for the inner solve's optimality residual.
    pub kkt_tolerance: f64,
    /// Global multiplier on all subgradient step sizes. The per-multiplier
    /// base steps are derived from the instance's natural magnitudes (bit
    /// totals, spectral efficiencies, local-energy scale).
    pub step_scale: f64,
    /// Window length for the convergence test.
    pub convergence_window: usize,
    pub tie_break: TieBreak,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            dual_tolerance: 1e-4,
            kkt_tolerance: 1e-6,
            step_scale: 4.0,
            convergence_window: 10,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

/// Families of the plan feasibility predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    UplinkRateCap,
    DownlinkRateCap,
    ComputePrecedence,
    DownlinkPrecedence,
    UplinkExclusivity,
    DownlinkExclusivity,
    UplinkTotal,
    ComputeTotal,
    DownlinkTotal,
    RatioRange,
    NonNegativity,
    Placement,
}

/// Maximum relative violation observed per constraint family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityResiduals {
    pub uplink_rate_cap: f64,
    pub downlink_rate_cap: f64,
    pub compute_precedence: f64,
    pub downlink_precedence: f64,
    pub exclusivity: f64,
    pub totals: f64,
    pub ratio_range: f64,
    pub domain: f64,
}

impl FeasibilityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.uplink_rate_cap,
            self.downlink_rate_cap,
            self.compute_precedence,
            self.downlink_precedence,
            self.exclusivity,
            self.totals,
            self.ratio_range,
            self.domain,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("trace is {trace_vehicles}x{trace_frames} but scenario expects {vehicles}x{frames}")]
    DimensionMismatch {
        trace_vehicles: usize,
        trace_frames: usize,
        vehicles: usize,
        frames: usize,
    },
    #[error("task ids must equal their index; task {index} has id {id}")]
    TaskIdMismatch { index: usize, id: usize },
    #[error("plan violates {family:?} (relative violation {violation:.3e})")]
    InfeasiblePlan {
        family: ConstraintFamily,
        violation: f64,
    },
    #[error("inner bit allocation for vehicle {vehicle}: {source}")]
    BitAllocation {
        vehicle: usize,
        #[source]
        source: AllocError,
    },
    #[error("inner solve optimality residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Certification { residual: f64, tolerance: f64 },
}

/// The full decision set: per-frame bits, schedules, and offload ratios.
///
/// All grids are `K x N`. Uplink bits live in frames `0..N-2`, compute bits
/// in `1..N-1`, downlink bits in `2..N`; the schedule grids follow the same
/// windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPlan {
    pub uplink_bits: Grid<f64>,
    pub compute_bits: Grid<f64>,
    pub downlink_bits: Grid<f64>,
    pub uplink_sched: Grid<bool>,
    pub downlink_sched: Grid<bool>,
    pub rho: Vec<f64>,
}

impl PrimalPlan {
    pub fn zeros(num_vehicles: usize, num_frames: usize) -> Self {
        Self {
            uplink_bits: Grid::filled(num_vehicles, num_frames, 0.0),
            compute_bits: Grid::filled(num_vehicles, num_frames, 0.0),
            downlink_bits: Grid::filled(num_vehicles, num_frames, 0.0),
            uplink_sched: Grid::filled(num_vehicles, num_frames, false),
            downlink_sched: Grid::filled(num_vehicles, num_frames, false),
            rho: vec![0.0; num_vehicles],
        }
    }

    /// Checks every constraint family; `Err` carries the first family whose
    /// relative violation exceeds [`BIT_EQUALITY_TOL`].
    pub fn check_feasible(
        &self,
        trace: &ChannelTrace,
        tasks: &[VehicleTask],
        cfg: &ScenarioConfig,
    ) -> Result<FeasibilityResiduals, SolverError> {
        let residuals = self.residuals(trace, tasks, cfg);
        let checks = [
            (ConstraintFamily::UplinkRateCap, residuals.uplink_rate_cap),
            (ConstraintFamily::DownlinkRateCap, residuals.downlink_rate_cap),
            (ConstraintFamily::ComputePrecedence, residuals.compute_precedence),
            (ConstraintFamily::DownlinkPrecedence, residuals.downlink_precedence),
            (ConstraintFamily::UplinkExclusivity, residuals.exclusivity),
            (ConstraintFamily::UplinkTotal, residuals.totals),
            (ConstraintFamily::RatioRange, residuals.ratio_range),
            (ConstraintFamily::NonNegativity, residuals.domain),
        ];
        for (family, violation) in checks {
            if violation > BIT_EQUALITY_TOL {
                return Err(SolverError::InfeasiblePlan { family, violation });
            }
        }
        Ok(residuals)
    }

    /// Relative violation of each constraint family (bit quantities are
    /// normalized by the task's input size).
    pub fn residuals(
        &self,
        trace: &ChannelTrace,
        tasks: &[VehicleTask],
        cfg: &ScenarioConfig,
    ) -> FeasibilityResiduals {
        let (k_total, n) = (tasks.len(), cfg.num_frames);
        let nu = cfg.uplink_frames();
        let mut r = FeasibilityResiduals::default();

        for (k, task) in tasks.iter().enumerate() {
            let scale = task.input_bits.max(1.0);
            let rho = self.rho[k];
            r.ratio_range = r.ratio_range.max(-rho).max(rho - 1.0);

            let mut cum_up = 0.0;
            let mut cum_comp = 0.0;
            let mut cum_down = 0.0;
            for u in 0..nu {
                let up = self.uplink_bits[(k, u)];
                let comp = self.compute_bits[(k, u + 1)];
                let down = self.downlink_bits[(k, u + 2)];
                let up_cap = if self.uplink_sched[(k, u)] {
                    trace.uplink_cap[(k, u)]
                } else {
                    0.0
                };
                let down_cap = if self.downlink_sched[(k, u + 2)] {
                    trace.downlink_cap[(k, u + 2)]
                } else {
                    0.0
                };
                r.uplink_rate_cap = r.uplink_rate_cap.max((up - up_cap) / scale);
                r.downlink_rate_cap = r.downlink_rate_cap.max((down - down_cap) / scale);
                cum_up += up;
                cum_comp += comp;
                cum_down += down;
                r.compute_precedence = r.compute_precedence.max((cum_comp - cum_up) / scale);
                r.downlink_precedence = r
                    .downlink_precedence
                    .max((cum_down - task.output_ratio * cum_comp) / scale);
            }
            let quota = rho * task.input_bits;
            r.totals = r
                .totals
                .max((cum_up - quota).abs() / scale)
                .max((cum_comp - quota).abs() / scale)
                .max((cum_down - task.output_ratio * quota).abs() / scale);

            // Bits must stay non-negative and inside their frame windows.
            for f in 0..n {
                let up = self.uplink_bits[(k, f)];
                let comp = self.compute_bits[(k, f)];
                let down = self.downlink_bits[(k, f)];
                r.domain = r.domain.max(-up / scale).max(-comp / scale).max(-down / scale);
                if f >= nu {
                    r.domain = r.domain.max(up.abs() / scale);
                }
                if f == 0 || f >= n - 1 {
                    r.domain = r.domain.max(comp.abs() / scale);
                }
                if f < 2 {
                    r.domain = r.domain.max(down.abs() / scale);
                }
            }
        }

        // Exactly one vehicle holds each uplink and each downlink frame.
        for u in 0..nu {
            let ups = (0..k_total).filter(|&k| self.uplink_sched[(k, u)]).count();
            let downs = (0..k_total)
                .filter(|&k| self.downlink_sched[(k, u + 2)])
                .count();
            r.exclusivity = r
                .exclusivity
                .max((ups as f64 - 1.0).abs())
                .max((downs as f64 - 1.0).abs());
        }
        r
    }
}

/// Lagrange multipliers and subgradient step state.
///
/// `lambda_*` price the per-frame rate caps, `mu_*` the cumulative pipeline
/// precedence constraints, and the unconstrained `u_*` the bit-total
/// equalities; all are indexed `(vehicle, uplink frame)` or per vehicle.
#[derive(Debug, Clone)]
pub struct DualState {
    pub lambda_up: Grid<f64>,
    pub lambda_down: Grid<f64>,
    pub mu_up: Grid<f64>,
    pub mu_down: Grid<f64>,
    pub u_up: Vec<f64>,
    pub u_compute: Vec<f64>,
    pub u_down: Vec<f64>,
    /// Base step size per multiplier family, decayed as `1/sqrt(z)`.
    pub base_steps: [f64; 7],
    /// Completed update count.
    pub iteration: usize,
}

impl DualState {
    pub fn new(num_vehicles: usize, uplink_frames: usize, base_steps: [f64; 7]) -> Self {
        Self {
            lambda_up: Grid::filled(num_vehicles, uplink_frames, 0.0),
            lambda_down: Grid::filled(num_vehicles, uplink_frames, 0.0),
            mu_up: Grid::filled(num_vehicles, uplink_frames, 0.0),
            mu_down: Grid::filled(num_vehicles, uplink_frames, 0.0),
            u_up: vec![0.0; num_vehicles],
            u_compute: vec![0.0; num_vehicles],
            u_down: vec![0.0; num_vehicles],
            base_steps,
            iteration: 0,
        }
    }

    /// Base steps scaled to the instance. Bit residuals are normalized by
    /// the largest task size; the equality and precedence multipliers live
    /// on the water-level scale (the median zero-load marginal transmit
    /// cost), and the rate-cap multipliers on the per-frame energy scale
    /// divided by the spectral efficiencies they multiply.
    pub fn natural_steps(
        cfg: &ScenarioConfig,
        tasks: &[VehicleTask],
        trace: &ChannelTrace,
        step_scale: f64,
    ) -> [f64; 7] {
        let nu = cfg.uplink_frames();
        let l_max = tasks.iter().map(|t| t.input_bits).fold(1.0, f64::max);
        // Median marginal cost of the first bit across usable frames: the
        // region the uplink water level, and with it the equality
        // multipliers, settles in.
        let mut floors: Vec<f64> = Vec::with_capacity(tasks.len() * nu);
        for k in 0..trace.num_vehicles() {
            for u in 0..nu {
                if trace.uplink_cap[(k, u)] > 0.0 {
                    floors.push(marginal_cost_slot(
                        0.0,
                        trace.gains[(k, u)],
                        cfg.frame_duration,
                        cfg,
                    ));
                }
            }
        }
        floors.sort_by(f64::total_cmp);
        let u_scale = floors.get(floors.len() / 2).copied().unwrap_or(1e-9);
        // Per-frame slice of the largest local cost: what winning or losing
        // a frame is worth to the schedule.
        let frame_energy = tasks
            .iter()
            .map(|t| {
                local_energy(
                    t.input_bits,
                    t.cycles_per_bit,
                    t.switched_capacitance,
                    cfg.mission_time,
                ) / nu as f64
            })
            .fold(f64::MIN, f64::max);
        let symbols = cfg.symbols_per_frame();
        let mean_rate = |caps: &Grid<f64>| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for k in 0..trace.num_vehicles() {
                for u in 0..nu {
                    let r = caps[(k, u)] / symbols;
                    if r > 0.0 {
                        sum += r;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                1.0
            } else {
                sum / count as f64
            }
        };
        let r_up = mean_rate(&trace.uplink_cap);
        let r_down = mean_rate(&trace.downlink_cap);
        let bit_step = step_scale * u_scale / (8.0 * l_max);
        // The precedence multipliers enter the per-frame coefficients as
        // suffix sums over all later frames, which amplifies their update
        // noise by the frame count; scale them down accordingly.
        let mu_step = bit_step / nu as f64;
        [
            step_scale * frame_energy / (4.0 * r_up * r_up),
            step_scale * frame_energy / (4.0 * r_down * r_down),
            mu_step,
            mu_step,
            bit_step,
            bit_step,
            bit_step,
        ]
    }

    fn step(&self, family: usize) -> f64 {
        self.base_steps[family] / ((self.iteration + 1) as f64).sqrt()
    }
}

/// Closed-form minimizer of the Lagrangian in the offload ratio:
/// `1 - sqrt(clamp01(S * T^2 / (3 * gamma * C^3 * L^2)))` with
/// `S = u_up + u_compute + kappa * u_down`.
pub fn optimal_offload_ratio(duals: &DualState, task: &VehicleTask, deadline: f64) -> f64 {
    let k = task.id;
    let s = duals.u_up[k] + duals.u_compute[k] + task.output_ratio * duals.u_down[k];
    let denom = 3.0
        * task.switched_capacitance
        * task.cycles_per_bit.powi(3)
        * task.input_bits.powi(2)
        / (deadline * deadline);
    let bracket = (s / denom).clamp(0.0, 1.0);
    1.0 - bracket.sqrt()
}

/// Winner-take-all schedules: per uplink frame the active vehicle with the
/// smallest uplink score, per downlink frame the one with the smallest
/// downlink score. Ties go to the lowest index; frames where no vehicle is
/// active fall to vehicle 0 with zero caps.
pub fn optimal_schedule(
    duals: &DualState,
    prev_uplink_bits: &Grid<f64>,
    trace: &ChannelTrace,
    cfg: &ScenarioConfig,
) -> (Grid<bool>, Grid<bool>) {
    let (k_total, n) = (trace.num_vehicles(), trace.num_frames());
    let nu = cfg.uplink_frames();
    let mut up = Grid::filled(k_total, n, false);
    let mut down = Grid::filled(k_total, n, false);
    for u in 0..nu {
        let mut best_up: Option<(usize, f64)> = None;
        let mut best_down: Option<(usize, f64)> = None;
        for k in 0..k_total {
            if trace.active[(k, u)] {
                let score = uplink_score(
                    prev_uplink_bits[(k, u)],
                    trace.gains[(k, u)],
                    duals.lambda_up[(k, u)],
                    cfg,
                );
                if best_up.is_none_or(|(_, s)| score < s) {
                    best_up = Some((k, score));
                }
            }
            if trace.active[(k, u + 2)] {
                let score =
                    downlink_score(duals.lambda_down[(k, u)], trace.gains[(k, u + 2)], cfg);
                if best_down.is_none_or(|(_, s)| score < s) {
                    best_down = Some((k, score));
                }
            }
        }
        up[(best_up.map_or(0, |(k, _)| k), u)] = true;
        down[(best_down.map_or(0, |(k, _)| k), u + 2)] = true;
    }
    (up, down)
}

/// Masked per-vehicle view of the trace under a one-by-one schedule.
fn schedule_link(
    trace: &ChannelTrace,
    k: usize,
    uplink_sched: &Grid<bool>,
    downlink_sched: &Grid<bool>,
    cfg: &ScenarioConfig,
) -> VehicleLink {
    let nu = cfg.uplink_frames();
    let mut gains = Vec::with_capacity(nu);
    let mut up = Vec::with_capacity(nu);
    let mut down = Vec::with_capacity(nu);
    for u in 0..nu {
        gains.push(trace.gains[(k, u)]);
        up.push(if uplink_sched[(k, u)] {
            trace.uplink_cap[(k, u)]
        } else {
            0.0
        });
        down.push(if downlink_sched[(k, u + 2)] {
            trace.downlink_cap[(k, u + 2)]
        } else {
            0.0
        });
    }
    VehicleLink::new(gains, up, down, cfg.frame_duration)
}

/// Result of the inner convex solve for fixed schedules and ratios.
#[derive(Debug, Clone)]
pub struct BitAllocation {
    pub uplink_bits: Grid<f64>,
    pub compute_bits: Grid<f64>,
    pub downlink_bits: Grid<f64>,
    /// Uplink transmit energy per vehicle (J).
    pub comm_energy: Vec<f64>,
    /// Worst per-vehicle optimality residual of the uplink solve.
    pub kkt_residual: f64,
}

/// Minimum-energy bit allocation under fixed schedules and offload ratios.
///
/// Uplink bits are waterfilled per vehicle over its scheduled frames;
/// compute and downlink bits (objective weight zero) are completed by the
/// earliest-feasible fill. Errors identify the vehicle whose quota the
/// schedule cannot carry.
pub fn solve_bit_allocation(
    uplink_sched: &Grid<bool>,
    downlink_sched: &Grid<bool>,
    rho: &[f64],
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
    solver_cfg: &SolverConfig,
) -> Result<BitAllocation, SolverError> {
    let (k_total, n) = (tasks.len(), cfg.num_frames);
    let nu = cfg.uplink_frames();
    let mut out = BitAllocation {
        uplink_bits: Grid::filled(k_total, n, 0.0),
        compute_bits: Grid::filled(k_total, n, 0.0),
        downlink_bits: Grid::filled(k_total, n, 0.0),
        comm_energy: vec![0.0; k_total],
        kkt_residual: 0.0,
    };
    for (k, task) in tasks.iter().enumerate() {
        let link = schedule_link(trace, k, uplink_sched, downlink_sched, cfg);
        let (alloc, fill) = offload_cost(&link, rho[k], task, cfg)
            .map_err(|source| SolverError::BitAllocation { vehicle: k, source })?;
        for u in 0..nu {
            out.uplink_bits[(k, u)] = alloc.bits[u];
            out.compute_bits[(k, u + 1)] = fill.compute[u];
            out.downlink_bits[(k, u + 2)] = fill.downlink[u];
        }
        out.comm_energy[k] = alloc.energy;
        out.kkt_residual = out.kkt_residual.max(alloc.kkt_residual);
    }
    if out.kkt_residual > solver_cfg.kkt_tolerance {
        return Err(SolverError::Certification {
            residual: out.kkt_residual,
            tolerance: solver_cfg.kkt_tolerance,
        });
    }
    Ok(out)
}

/// Minimizer of the Lagrangian over the box-constrained decision set, for
/// fixed schedules and the closed-form ratios. Separable per (vehicle,
/// frame): the uplink term is convex with a log-closed-form interior
/// minimizer, compute and downlink terms are linear and go bang-bang.
pub fn dual_argmin_plan(
    duals: &DualState,
    uplink_sched: &Grid<bool>,
    downlink_sched: &Grid<bool>,
    rho: &[f64],
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
) -> PrimalPlan {
    let (k_total, n) = (tasks.len(), cfg.num_frames);
    let nu = cfg.uplink_frames();
    let symbols = cfg.symbols_per_frame();
    let mut plan = PrimalPlan::zeros(k_total, n);
    plan.uplink_sched = uplink_sched.clone();
    plan.downlink_sched = downlink_sched.clone();
    plan.rho = rho.to_vec();

    for (k, task) in tasks.iter().enumerate() {
        // Suffix sums turn the cumulative precedence multipliers into
        // per-frame linear coefficients.
        let mut mu_up_suffix = vec![0.0; nu + 1];
        let mut mu_down_suffix = vec![0.0; nu + 1];
        for u in (0..nu).rev() {
            mu_up_suffix[u] = mu_up_suffix[u + 1] + duals.mu_up[(k, u)];
            mu_down_suffix[u] = mu_down_suffix[u + 1] + duals.mu_down[(k, u)];
        }
        for u in 0..nu {
            let up_cap = trace.uplink_cap[(k, u)];
            if up_cap > 0.0 {
                let coef = duals.lambda_up[(k, u)] / symbols - mu_up_suffix[u] - duals.u_up[k];
                plan.uplink_bits[(k, u)] = if uplink_sched[(k, u)] {
                    let floor = marginal_cost_slot(0.0, trace.gains[(k, u)], cfg.frame_duration, cfg);
                    if -coef <= floor {
                        0.0
                    } else {
                        (symbols * (-coef / floor).log2()).min(up_cap)
                    }
                } else if coef < 0.0 {
                    up_cap
                } else {
                    0.0
                };
            }
            let comp_coef =
                mu_up_suffix[u] - task.output_ratio * mu_down_suffix[u] - duals.u_compute[k];
            if comp_coef < 0.0 {
                plan.compute_bits[(k, u + 1)] = task.input_bits;
            }
            let down_cap = trace.downlink_cap[(k, u + 2)];
            if down_cap > 0.0 {
                let down_coef =
                    duals.lambda_down[(k, u)] / symbols + mu_down_suffix[u] - duals.u_down[k];
                if down_coef < 0.0 {
                    plan.downlink_bits[(k, u + 2)] = down_cap;
                }
            }
        }
    }
    plan
}

/// Lagrangian value at a (not necessarily feasible) plan point.
pub fn lagrangian_value(
    duals: &DualState,
    plan: &PrimalPlan,
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
) -> f64 {
    let nu = cfg.uplink_frames();
    let symbols = cfg.symbols_per_frame();
    let mut value = 0.0;
    for (k, task) in tasks.iter().enumerate() {
        let rho = plan.rho[k];
        value += local_energy(
            (1.0 - rho) * task.input_bits,
            task.cycles_per_bit,
            task.switched_capacitance,
            cfg.mission_time,
        );
        let mut cum_up = 0.0;
        let mut cum_comp = 0.0;
        let mut cum_down = 0.0;
        let mut sum_up = 0.0;
        let mut sum_comp = 0.0;
        let mut sum_down = 0.0;
        for u in 0..nu {
            let up = plan.uplink_bits[(k, u)];
            let comp = plan.compute_bits[(k, u + 1)];
            let down = plan.downlink_bits[(k, u + 2)];
            if plan.uplink_sched[(k, u)] && up > 0.0 {
                value += comm_energy_slot(up, trace.gains[(k, u)], cfg.frame_duration, cfg)
                    .expect("box-constrained bits stay below the physical cap");
            }
            let rate_up = trace.uplink_cap[(k, u)] / symbols;
            let rate_down = trace.downlink_cap[(k, u + 2)] / symbols;
            let sched_up = if plan.uplink_sched[(k, u)] { 1.0 } else { 0.0 };
            let sched_down = if plan.downlink_sched[(k, u + 2)] { 1.0 } else { 0.0 };
            value += duals.lambda_up[(k, u)] * (up / symbols - sched_up * rate_up);
            value += duals.lambda_down[(k, u)] * (down / symbols - sched_down * rate_down);
            cum_up += up;
            cum_comp += comp;
            cum_down += down;
            value += duals.mu_up[(k, u)] * (cum_comp - cum_up);
            value += duals.mu_down[(k, u)] * (cum_down - task.output_ratio * cum_comp);
            sum_up += up;
            sum_comp += comp;
            sum_down += down;
        }
        let quota = rho * task.input_bits;
        value += duals.u_up[k] * (quota - sum_up);
        value += duals.u_compute[k] * (quota - sum_comp);
        value += duals.u_down[k] * (task.output_ratio * quota - sum_down);
    }
    value
}

/// One projected subgradient step on every multiplier, using the constraint
/// residuals of the given plan iterate. The inequality multipliers are
/// clipped at zero; the equality multipliers move freely. Step sizes decay
/// as `1/sqrt(iteration)`, and bit residuals are clipped at twice the
/// largest task size so the bang-bang swings of the relaxed compute and
/// downlink variables cannot blow the multipliers off scale.
pub fn update_duals(
    duals: &DualState,
    plan: &PrimalPlan,
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
) -> DualState {
    let nu = cfg.uplink_frames();
    let symbols = cfg.symbols_per_frame();
    let clip = 2.0 * tasks.iter().map(|t| t.input_bits).fold(1.0, f64::max);
    let bits = |residual: f64| residual.clamp(-clip, clip);
    let mut next = duals.clone();
    let steps: Vec<f64> = (0..7).map(|i| duals.step(i)).collect();
    for (k, task) in tasks.iter().enumerate() {
        let mut cum_up = 0.0;
        let mut cum_comp = 0.0;
        let mut cum_down = 0.0;
        for u in 0..nu {
            let up = plan.uplink_bits[(k, u)];
            let comp = plan.compute_bits[(k, u + 1)];
            let down = plan.downlink_bits[(k, u + 2)];
            let sched_up = if plan.uplink_sched[(k, u)] { 1.0 } else { 0.0 };
            let sched_down = if plan.downlink_sched[(k, u + 2)] { 1.0 } else { 0.0 };
            let cap_residual_up = up / symbols - sched_up * trace.uplink_cap[(k, u)] / symbols;
            let cap_residual_down =
                down / symbols - sched_down * trace.downlink_cap[(k, u + 2)] / symbols;
            next.lambda_up[(k, u)] =
                (duals.lambda_up[(k, u)] + steps[0] * cap_residual_up).max(0.0);
            next.lambda_down[(k, u)] =
                (duals.lambda_down[(k, u)] + steps[1] * cap_residual_down).max(0.0);
            cum_up += up;
            cum_comp += comp;
            cum_down += down;
            next.mu_up[(k, u)] =
                (duals.mu_up[(k, u)] + steps[2] * bits(cum_comp - cum_up)).max(0.0);
            next.mu_down[(k, u)] = (duals.mu_down[(k, u)]
                + steps[3] * bits(cum_down - task.output_ratio * cum_comp))
                .max(0.0);
        }
        let quota = plan.rho[k] * task.input_bits;
        next.u_up[k] = duals.u_up[k] + steps[4] * bits(quota - cum_up);
        next.u_compute[k] = duals.u_compute[k] + steps[5] * bits(quota - cum_comp);
        next.u_down[k] = duals.u_down[k] + steps[6] * bits(task.output_ratio * quota - cum_down);
    }
    next.iteration = duals.iteration + 1;
    next
}

/// Converged plan plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Feasible recovered plan.
    pub plan: PrimalPlan,
    /// Energy of the recovered plan.
    pub breakdown: EnergyBreakdown,
    /// Lagrangian dual value per iteration.
    pub dual_history: Vec<f64>,
    /// Energy of the feasible iterate per iteration.
    pub primal_history: Vec<f64>,
    /// Dual value of the iteration whose schedules were recovered; a lower
    /// bound on any plan under those schedules by weak duality.
    pub dual_value: f64,
    /// Residuals of the recovered plan (all within tolerance).
    pub feasibility_residuals: FeasibilityResiduals,
    pub iterations_used: usize,
    pub wall_time: f64,
}

impl SolveReport {
    /// Best dual value seen across the run.
    pub fn best_dual(&self) -> f64 {
        self.dual_history
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(primal - dual) / primal` at the reported solution.
    pub fn relative_gap(&self) -> f64 {
        let primal = self.breakdown.total;
        if primal == 0.0 {
            0.0
        } else {
            (primal - self.dual_value) / primal.abs()
        }
    }
}

fn check_dimensions(
    cfg: &ScenarioConfig,
    tasks: &[VehicleTask],
    trace: &ChannelTrace,
) -> Result<(), SolverError> {
    if trace.num_vehicles() != tasks.len() || trace.num_frames() != cfg.num_frames {
        return Err(SolverError::DimensionMismatch {
            trace_vehicles: trace.num_vehicles(),
            trace_frames: trace.num_frames(),
            vehicles: tasks.len(),
            frames: cfg.num_frames,
        });
    }
    for (index, task) in tasks.iter().enumerate() {
        if task.id != index {
            return Err(SolverError::TaskIdMismatch {
                index,
                id: task.id,
            });
        }
    }
    Ok(())
}

/// Full dual-ascent solve with primal recovery.
///
/// Iterates ratio / schedule / bit-allocation / multiplier updates until
/// the dual objective flattens (relative spread below `dual_tolerance`
/// over `convergence_window` iterations) or `max_iterations` is hit, then
/// recovers a feasible plan by an exact per-vehicle ratio search over a
/// small schedule candidate set. The returned plan always passes the
/// feasibility predicate.
pub fn solve(
    cfg: &ScenarioConfig,
    tasks: &[VehicleTask],
    trace: &ChannelTrace,
    solver_cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    check_dimensions(cfg, tasks, trace)?;
    let (k_total, n) = (tasks.len(), cfg.num_frames);
    let nu = cfg.uplink_frames();

    let steps = DualState::natural_steps(cfg, tasks, trace, solver_cfg.step_scale);
    let mut duals = DualState::new(k_total, nu, steps);

    // Symmetric feasible-direction start: spread each task's bits evenly
    // over its active uplink frames.
    let mut prev_uplink = Grid::filled(k_total, n, 0.0);
    for (k, task) in tasks.iter().enumerate() {
        let share = task.input_bits / nu as f64;
        for u in 0..nu {
            if trace.active[(k, u)] {
                prev_uplink[(k, u)] = share;
            }
        }
    }

    let mut dual_history = Vec::new();
    let mut primal_history = Vec::new();
    let mut certified_dual = f64::NEG_INFINITY;
    // Schedules of the cheapest feasible iterate seen.
    let mut best_iterate: Option<(f64, Grid<bool>, Grid<bool>)> = None;
    let mut iterations_used = 0;

    for _ in 0..solver_cfg.max_iterations {
        iterations_used += 1;
        let rho_opt: Vec<f64> = tasks
            .iter()
            .map(|t| optimal_offload_ratio(&duals, t, cfg.mission_time))
            .collect();
        let (up_sched, down_sched) = optimal_schedule(&duals, &prev_uplink, trace, cfg);

        // Dual side: value and residual point of the relaxed subproblem.
        let argmin = dual_argmin_plan(&duals, &up_sched, &down_sched, &rho_opt, trace, tasks, cfg);
        let dual_value = lagrangian_value(&duals, &argmin, trace, tasks, cfg);
        dual_history.push(dual_value);
        certified_dual = certified_dual.max(certified_dual_bound(&duals, trace, tasks, cfg));

        // Primal side: clip each quota to what the schedule can carry, then
        // solve the inner allocation exactly.
        let rho_feasible: Vec<f64> = tasks
            .iter()
            .enumerate()
            .map(|(k, task)| {
                let link = schedule_link(trace, k, &up_sched, &down_sched, cfg);
                if offload_cost(&link, rho_opt[k], task, cfg).is_ok() {
                    rho_opt[k]
                } else {
                    max_feasible_ratio(&link, task, cfg)
                }
            })
            .collect();
        let alloc = solve_bit_allocation(
            &up_sched,
            &down_sched,
            &rho_feasible,
            trace,
            tasks,
            cfg,
            solver_cfg,
        )?;
        let primal: f64 = alloc.comm_energy.iter().sum::<f64>()
            + tasks
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    local_energy(
                        (1.0 - rho_feasible[k]) * t.input_bits,
                        t.cycles_per_bit,
                        t.switched_capacitance,
                        cfg.mission_time,
                    )
                })
                .sum::<f64>();
        primal_history.push(primal);
        if best_iterate.as_ref().is_none_or(|(best, ..)| primal < *best) {
            best_iterate = Some((primal, up_sched.clone(), down_sched.clone()));
        }

        // Downlink rate residuals are anchored to the bits actually carried
        // on scheduled frames, so a slot holder sheds frames its greedy
        // fill leaves empty while starved vehicles keep bidding through the
        // relaxed demand signal. Everything else stays on the relaxed
        // minimizer, whose residuals drive the quota multipliers toward the
        // water level.
        let mut residual_plan = argmin;
        for k in 0..k_total {
            for u in 0..nu {
                if down_sched[(k, u + 2)] {
                    residual_plan.downlink_bits[(k, u + 2)] = alloc.downlink_bits[(k, u + 2)];
                }
            }
        }
        prev_uplink = alloc.uplink_bits;

        // Converged once the dual objective is flat across the window:
        // its range over the last `window + 1` values falls below the
        // relative tolerance.
        let window = solver_cfg.convergence_window;
        if dual_history.len() > window {
            let tail = &dual_history[dual_history.len() - 1 - window..];
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < solver_cfg.dual_tolerance * hi.abs().max(1.0) {
                break;
            }
        }
        duals = update_duals(&duals, &residual_plan, trace, tasks, cfg);
    }

    // Primal recovery. The downlink multipliers are degenerate whenever the
    // rate caps are slack, so no single schedule snapshot is authoritative;
    // recover over a small candidate set (cheapest iterate, best-channel
    // greedy, round-robin) with an exact per-vehicle scalar search over the
    // offload ratio, and keep the cheapest feasible result.
    let (_, up_best, down_best) = best_iterate.expect("at least one iteration runs");
    let mut candidates = vec![(up_best, down_best)];
    candidates.push(greedy_cap_schedule(trace, cfg));
    candidates.push(round_robin_schedule(k_total, cfg));

    let mut best_plan: Option<(f64, PrimalPlan)> = None;
    for (up_sched, down_sched) in candidates {
        let mut plan = PrimalPlan::zeros(k_total, n);
        plan.uplink_sched = up_sched;
        plan.downlink_sched = down_sched;
        let mut total = 0.0;
        for (k, task) in tasks.iter().enumerate() {
            let link = schedule_link(trace, k, &plan.uplink_sched, &plan.downlink_sched, cfg);
            let optimum = optimize_ratio(&link, task, cfg);
            plan.rho[k] = optimum.rho;
            for u in 0..nu {
                plan.uplink_bits[(k, u)] = optimum.uplink.bits[u];
                plan.compute_bits[(k, u + 1)] = optimum.pipeline.compute[u];
                plan.downlink_bits[(k, u + 2)] = optimum.pipeline.downlink[u];
            }
            total += optimum.comm_energy + optimum.local_energy;
        }
        if best_plan.as_ref().is_none_or(|(best, _)| total < *best) {
            best_plan = Some((total, plan));
        }
    }
    let (_, plan) = best_plan.expect("candidate set is non-empty");
    let feasibility_residuals = plan.check_feasible(trace, tasks, cfg)?;
    let breakdown = evaluate_total_energy(&plan, trace, tasks, cfg)?;

    Ok(SolveReport {
        plan,
        breakdown,
        dual_history,
        primal_history,
        dual_value: certified_dual,
        feasibility_residuals,
        iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Schedule assigning every frame to the active vehicle with the largest
/// rate cap (ties to the lowest index).
fn greedy_cap_schedule(trace: &ChannelTrace, cfg: &ScenarioConfig) -> (Grid<bool>, Grid<bool>) {
    let (k_total, n) = (trace.num_vehicles(), trace.num_frames());
    let nu = cfg.uplink_frames();
    let mut up = Grid::filled(k_total, n, false);
    let mut down = Grid::filled(k_total, n, false);
    for u in 0..nu {
        let best = |caps: &Grid<f64>, f: usize| {
            (0..k_total)
                .filter(|&k| trace.active[(k, f)])
                .max_by(|&a, &b| {
                    caps[(a, f)]
                        .total_cmp(&caps[(b, f)])
                        .then(b.cmp(&a))
                })
                .unwrap_or(0)
        };
        up[(best(&trace.uplink_cap, u), u)] = true;
        down[(best(&trace.downlink_cap, u + 2), u + 2)] = true;
    }
    (up, down)
}

/// Frames rotate over vehicles in index order; downlink mirrors uplink two
/// frames later.
fn round_robin_schedule(k_total: usize, cfg: &ScenarioConfig) -> (Grid<bool>, Grid<bool>) {
    let n = cfg.num_frames;
    let nu = cfg.uplink_frames();
    let mut up = Grid::filled(k_total, n, false);
    let mut down = Grid::filled(k_total, n, false);
    for u in 0..nu {
        up[(u % k_total, u)] = true;
        down[(u % k_total, u + 2)] = true;
    }
    (up, down)
}

/// Certified lower bound on the optimum: the Lagrangian minimized exactly
/// over the box-constrained decision set, including the per-frame joint
/// choice of slot holder and bits. Valid for any feasible plan because
/// every feasible plan lies inside the boxes.
pub fn certified_dual_bound(
    duals: &DualState,
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
) -> f64 {
    let nu = cfg.uplink_frames();
    let symbols = cfg.symbols_per_frame();
    let k_total = tasks.len();
    let mut value = 0.0;

    // Suffix sums of the precedence multipliers, one row per vehicle.
    let mut mu_up_suffix = Grid::filled(k_total, nu + 1, 0.0);
    let mut mu_down_suffix = Grid::filled(k_total, nu + 1, 0.0);
    for k in 0..k_total {
        for u in (0..nu).rev() {
            mu_up_suffix[(k, u)] = mu_up_suffix[(k, u + 1)] + duals.mu_up[(k, u)];
            mu_down_suffix[(k, u)] = mu_down_suffix[(k, u + 1)] + duals.mu_down[(k, u)];
        }
    }

    // Ratio terms (exact scalar minimization) and compute-bit box minima.
    for (k, task) in tasks.iter().enumerate() {
        let s = duals.u_up[k] + duals.u_compute[k] + task.output_ratio * duals.u_down[k];
        let rho = optimal_offload_ratio(duals, task, cfg.mission_time);
        value += local_energy(
            (1.0 - rho) * task.input_bits,
            task.cycles_per_bit,
            task.switched_capacitance,
            cfg.mission_time,
        ) + s * rho * task.input_bits;
        for u in 0..nu {
            let comp_coef = mu_up_suffix[(k, u)]
                - task.output_ratio * mu_down_suffix[(k, u)]
                - duals.u_compute[k];
            value += (comp_coef * task.input_bits).min(0.0);
        }
    }

    // Frame-by-frame joint minimization over the slot holder and the bits:
    // every vehicle contributes its unscheduled box minimum, plus the
    // cheapest way to grant the slot to exactly one of them.
    for u in 0..nu {
        let mut up_grant_best = f64::INFINITY;
        let mut down_grant_best = f64::INFINITY;
        for k in 0..k_total {
            let up_cap = trace.uplink_cap[(k, u)];
            let coef = duals.lambda_up[(k, u)] / symbols - mu_up_suffix[(k, u)] - duals.u_up[k];
            let off = (coef * up_cap).min(0.0);
            value += off;
            let on = if up_cap > 0.0 {
                let gain = trace.gains[(k, u)];
                let floor = marginal_cost_slot(0.0, gain, cfg.frame_duration, cfg);
                let bits = if -coef <= floor {
                    0.0
                } else {
                    (symbols * (-coef / floor).log2()).min(up_cap)
                };
                comm_energy_slot(bits, gain, cfg.frame_duration, cfg)
                    .expect("bits within the physical cap")
                    + coef * bits
            } else {
                0.0
            };
            up_grant_best =
                up_grant_best.min(on - off - duals.lambda_up[(k, u)] * up_cap / symbols);

            let down_cap = trace.downlink_cap[(k, u + 2)];
            let down_coef =
                duals.lambda_down[(k, u)] / symbols + mu_down_suffix[(k, u)] - duals.u_down[k];
            value += (down_coef * down_cap).min(0.0);
            down_grant_best =
                down_grant_best.min(-duals.lambda_down[(k, u)] * down_cap / symbols);
        }
        value += up_grant_best + down_grant_best;
    }
    value
}

/// Exact objective of a feasible plan: uplink transmit energy plus local
/// compute energy for the non-offloaded share. Rejects infeasible plans
/// with the violated constraint family.
pub fn evaluate_total_energy(
    plan: &PrimalPlan,
    trace: &ChannelTrace,
    tasks: &[VehicleTask],
    cfg: &ScenarioConfig,
) -> Result<EnergyBreakdown, SolverError> {
    check_dimensions(cfg, tasks, trace)?;
    plan.check_feasible(trace, tasks, cfg)?;
    let nu = cfg.uplink_frames();
    let mut comm = vec![0.0; tasks.len()];
    let mut local = vec![0.0; tasks.len()];
    for (k, task) in tasks.iter().enumerate() {
        for u in 0..nu {
            if plan.uplink_sched[(k, u)] && plan.uplink_bits[(k, u)] > 0.0 {
                comm[k] +=
                    comm_energy_slot(plan.uplink_bits[(k, u)], trace.gains[(k, u)], cfg.frame_duration, cfg)
                        .map_err(|_| SolverError::InfeasiblePlan {
                            family: ConstraintFamily::UplinkRateCap,
                            violation: f64::INFINITY,
                        })?;
            }
        }
        local[k] = local_energy(
            (1.0 - plan.rho[k]) * task.input_bits,
            task.cycles_per_bit,
            task.switched_capacitance,
            cfg.mission_time,
        );
    }
    Ok(EnergyBreakdown::new(comm, local))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channel_trace, FadingMode};
    use crate::testutil::{config_with, task};

    fn small_instance(
        mission: f64,
        seed: u64,
        bits: f64,
        k: usize,
    ) -> (ScenarioConfig, Vec<VehicleTask>, ChannelTrace) {
        let cfg = config_with(mission, seed, FadingMode::Rayleigh);
        let tasks: Vec<VehicleTask> = (0..k)
            .map(|i| task(i, i % cfg.num_lanes, 0.02 * i as f64, bits))
            .collect();
        let trace = generate_channel_trace(&cfg, &tasks).unwrap();
        (cfg, tasks, trace)
    }

    #[test]
    fn offload_ratio_zero_multipliers() {
        let duals = DualState::new(1, 3, [0.0; 7]);
        let t = task(0, 0, 0.0, 1e6);
        assert_eq!(optimal_offload_ratio(&duals, &t, 25.0), 1.0);
    }

    #[test]
    fn offload_ratio_clamps_to_zero() {
        let mut duals = DualState::new(1, 3, [0.0; 7]);
        let t = task(0, 0, 0.0, 1e6);
        let denom = 3.0 * t.switched_capacitance * t.cycles_per_bit.powi(3) * t.input_bits.powi(2)
            / (25.0 * 25.0);
        duals.u_up[0] = 2.0 * denom;
        assert_eq!(optimal_offload_ratio(&duals, &t, 25.0), 0.0);
    }

    #[test]
    fn offload_ratio_interior_bracket() {
        let mut duals = DualState::new(1, 3, [0.0; 7]);
        let t = task(0, 0, 0.0, 1e6);
        let denom = 3.0 * t.switched_capacitance * t.cycles_per_bit.powi(3) * t.input_bits.powi(2)
            / (25.0 * 25.0);
        duals.u_up[0] = 0.25 * denom;
        let rho = optimal_offload_ratio(&duals, &t, 25.0);
        assert!((rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn offload_ratio_is_stationary_point() {
        // The interior ratio zeroes the Lagrangian derivative in rho,
        // verified against central finite differences.
        let mut duals = DualState::new(1, 3, [0.0; 7]);
        let t = task(0, 0, 0.0, 1e6);
        let denom = 3.0 * t.switched_capacitance * t.cycles_per_bit.powi(3) * t.input_bits.powi(2)
            / (25.0 * 25.0);
        let s = 0.37 * denom;
        duals.u_up[0] = s;
        let rho = optimal_offload_ratio(&duals, &t, 25.0);
        let phi = |r: f64| {
            local_energy(
                (1.0 - r) * t.input_bits,
                t.cycles_per_bit,
                t.switched_capacitance,
                25.0,
            ) + s * r * t.input_bits
        };
        let h = 1e-6;
        let derivative = (phi(rho + h) - phi(rho - h)) / (2.0 * h);
        let scale = (s * t.input_bits).abs();
        assert!(derivative.abs() / scale < 1e-8, "derivative {derivative}");
    }

    #[test]
    fn single_vehicle_takes_every_frame() {
        let (cfg, _tasks, trace) = small_instance(0.18, 3, 1e4, 1);
        let duals = DualState::new(1, cfg.uplink_frames(), [0.0; 7]);
        let prev = Grid::filled(1, cfg.num_frames, 0.0);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        for u in 0..cfg.uplink_frames() {
            assert!(up[(0, u)]);
            assert!(down[(0, u + 2)]);
        }
    }

    #[test]
    fn schedule_picks_smaller_score() {
        // Vehicle 1 has a much better channel everywhere; with equal bits
        // pending it wins every uplink frame.
        let cfg = config_with(0.18, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e4), task(1, 0, 0.0, 1e4)];
        let mut gains = Grid::filled(2, cfg.num_frames, 1e-9);
        for f in 0..cfg.num_frames {
            gains[(1, f)] = 1e-7;
        }
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let mut duals = DualState::new(2, cfg.uplink_frames(), [0.0; 7]);
        for u in 0..cfg.uplink_frames() {
            duals.lambda_up[(0, u)] = 1e-6;
            duals.lambda_up[(1, u)] = 1e-6;
            duals.lambda_down[(0, u)] = 1e-6;
            duals.lambda_down[(1, u)] = 1e-6;
        }
        let prev = Grid::filled(2, cfg.num_frames, 5e3);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        for u in 0..cfg.uplink_frames() {
            assert!(up[(1, u)] && !up[(0, u)]);
            assert!(down[(1, u + 2)] && !down[(0, u + 2)]);
        }
    }

    #[test]
    fn schedule_tie_breaks_to_lowest_index() {
        let cfg = config_with(0.18, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e4), task(1, 0, 0.0, 1e4)];
        let gains = Grid::filled(2, cfg.num_frames, 1e-8);
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let duals = DualState::new(2, cfg.uplink_frames(), [0.0; 7]);
        let prev = Grid::filled(2, cfg.num_frames, 5e3);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        for u in 0..cfg.uplink_frames() {
            assert!(up[(0, u)] && !up[(1, u)]);
            assert!(down[(0, u + 2)]);
        }
    }

    #[test]
    fn schedule_excludes_inactive_vehicles() {
        let cfg = config_with(0.3, 3, FadingMode::Disabled);
        // Vehicle 0 arrives last; early frames must go to the only active
        // vehicle, and frames where nobody has arrived fall to vehicle 0
        // with zero caps.
        let t0 = task(0, 0, 0.25, 1e4);
        let t1 = task(1, 0, 0.10, 1e4);
        let trace = generate_channel_trace(&cfg, &[t0, t1]).unwrap();
        let duals = DualState::new(2, cfg.uplink_frames(), [0.0; 7]);
        let prev = Grid::filled(2, cfg.num_frames, 0.0);
        let (up, _down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        for u in 0..cfg.uplink_frames() {
            let nobody = !trace.active[(0, u)] && !trace.active[(1, u)];
            if nobody {
                assert!(up[(0, u)], "fallback frame {u}");
                assert_eq!(trace.uplink_cap[(0, u)], 0.0);
            } else if !trace.active[(0, u)] {
                assert!(up[(1, u)], "vehicle 1 is the only candidate at {u}");
            }
        }
    }

    #[test]
    fn schedule_invariant_under_positive_scaling() {
        // Scaling every score by the same positive factor leaves the
        // argmin unchanged; scores scale with lambda, so compare schedules
        // at lambda and 10x lambda with zero pending bits.
        let (cfg, tasks, trace) = small_instance(0.18, 9, 1e4, 3);
        let nu = cfg.uplink_frames();
        let mut duals = DualState::new(3, nu, [0.0; 7]);
        for k in 0..3 {
            for u in 0..nu {
                duals.lambda_up[(k, u)] = 1e-7 * ((k + u) % 5 + 1) as f64;
                duals.lambda_down[(k, u)] = 2e-7 * ((k * u) % 3 + 1) as f64;
            }
        }
        let prev = Grid::filled(3, cfg.num_frames, 0.0);
        let (up1, down1) = optimal_schedule(&duals, &prev, &trace, &cfg);
        for k in 0..3 {
            for u in 0..nu {
                duals.lambda_up[(k, u)] *= 10.0;
                duals.lambda_down[(k, u)] *= 10.0;
            }
        }
        let (up2, down2) = optimal_schedule(&duals, &prev, &trace, &cfg);
        assert_eq!(up1, up2);
        assert_eq!(down1, down2);
        let _ = tasks;
    }

    #[test]
    fn zero_ratios_give_zero_allocation() {
        let (cfg, tasks, trace) = small_instance(0.18, 5, 1e4, 2);
        let duals = DualState::new(2, cfg.uplink_frames(), [0.0; 7]);
        let prev = Grid::filled(2, cfg.num_frames, 0.0);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        let alloc = solve_bit_allocation(
            &up,
            &down,
            &[0.0, 0.0],
            &trace,
            &tasks,
            &cfg,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(alloc.uplink_bits.iter().all(|&b| b == 0.0));
        assert!(alloc.comm_energy.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn equal_gain_frames_split_bits_equally() {
        let cfg = config_with(0.15, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e4)];
        let gains = Grid::filled(1, cfg.num_frames, 1e-8);
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let nu = cfg.uplink_frames();
        let mut up = Grid::filled(1, cfg.num_frames, false);
        let mut down = Grid::filled(1, cfg.num_frames, false);
        // Two scheduled uplink frames only.
        up[(0, 0)] = true;
        up[(0, 2)] = true;
        for u in 0..nu {
            down[(0, u + 2)] = true;
        }
        let alloc = solve_bit_allocation(
            &up,
            &down,
            &[1.0],
            &trace,
            &tasks,
            &cfg,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((alloc.uplink_bits[(0, 0)] - alloc.uplink_bits[(0, 2)]).abs() < 1e-6);
        assert!((alloc.uplink_bits[(0, 0)] - 5e3).abs() < 1e-6);
    }

    #[test]
    fn infeasible_quota_names_the_vehicle() {
        let cfg = config_with(0.15, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e4), task(1, 0, 0.0, 1e12)];
        let gains = Grid::filled(2, cfg.num_frames, 1e-10);
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let duals = DualState::new(2, cfg.uplink_frames(), [0.0; 7]);
        let prev = Grid::filled(2, cfg.num_frames, 0.0);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        let err = solve_bit_allocation(
            &up,
            &down,
            &[0.0, 1.0],
            &trace,
            &tasks,
            &cfg,
            &SolverConfig::default(),
        )
        .unwrap_err();
        match err {
            SolverError::BitAllocation { vehicle, .. } => assert_eq!(vehicle, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dual_update_fixed_point_at_zero_residuals() {
        let (cfg, tasks, trace) = small_instance(0.18, 5, 1e4, 1);
        let duals = DualState::new(1, cfg.uplink_frames(), [1.0; 7]);
        let mut plan = PrimalPlan::zeros(1, cfg.num_frames);
        // rho = 0 and all-zero bits: every residual vanishes.
        for u in 0..cfg.uplink_frames() {
            plan.uplink_sched[(0, u)] = true;
            plan.downlink_sched[(0, u + 2)] = true;
        }
        let next = update_duals(&duals, &plan, &trace, &tasks, &cfg);
        assert_eq!(next.lambda_up, duals.lambda_up);
        assert_eq!(next.mu_up, duals.mu_up);
        assert_eq!(next.u_up, duals.u_up);
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn dual_update_steps_along_violation() {
        // One uplink frame over cap by r bits: lambda rises by step * r of
        // the rate residual.
        let cfg = config_with(0.15, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e5)];
        let gains = Grid::filled(1, cfg.num_frames, 1e-9);
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let duals = DualState::new(1, cfg.uplink_frames(), [1.0; 7]);
        let mut plan = PrimalPlan::zeros(1, cfg.num_frames);
        // No frame scheduled, but positive bits: pure violation.
        plan.uplink_bits[(0, 0)] = 600.0;
        let next = update_duals(&duals, &plan, &trace, &tasks, &cfg);
        let expected = 600.0 / cfg.symbols_per_frame();
        assert!((next.lambda_up[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn dual_update_projects_to_zero() {
        let cfg = config_with(0.15, 3, FadingMode::Disabled);
        let tasks = vec![task(0, 0, 0.0, 1e5)];
        let gains = Grid::filled(1, cfg.num_frames, cfg.noise_power());
        let trace = ChannelTrace::from_gains(&cfg, &tasks, gains).unwrap();
        let mut duals = DualState::new(1, cfg.uplink_frames(), [1.0; 7]);
        duals.lambda_up[(0, 0)] = 0.1;
        let mut plan = PrimalPlan::zeros(1, cfg.num_frames);
        // Scheduled frame with zero bits: the slack residual (-1 here, the
        // gain is pinned to give unit spectral efficiency) pushes lambda
        // negative and the projection clips it at zero.
        plan.uplink_sched[(0, 0)] = true;
        let next = update_duals(&duals, &plan, &trace, &tasks, &cfg);
        assert_eq!(next.lambda_up[(0, 0)], 0.0);
    }

    #[test]
    fn evaluate_rejects_cap_violation() {
        let (cfg, tasks, trace) = small_instance(0.18, 5, 1e4, 1);
        let mut plan = PrimalPlan::zeros(1, cfg.num_frames);
        for u in 0..cfg.uplink_frames() {
            plan.uplink_sched[(0, u)] = true;
            plan.downlink_sched[(0, u + 2)] = true;
        }
        plan.uplink_bits[(0, 0)] = trace.uplink_cap[(0, 0)] + 1.0;
        let err = evaluate_total_energy(&plan, &trace, &tasks, &cfg).unwrap_err();
        match err {
            SolverError::InfeasiblePlan { family, .. } => {
                assert!(matches!(
                    family,
                    ConstraintFamily::UplinkRateCap | ConstraintFamily::UplinkTotal
                ));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn evaluate_local_only_plan() {
        let (cfg, tasks, trace) = small_instance(0.18, 5, 1e4, 2);
        let mut plan = PrimalPlan::zeros(2, cfg.num_frames);
        for u in 0..cfg.uplink_frames() {
            plan.uplink_sched[(0, u)] = true;
            plan.downlink_sched[(0, u + 2)] = true;
        }
        let breakdown = evaluate_total_energy(&plan, &trace, &tasks, &cfg).unwrap();
        let expect: f64 = tasks
            .iter()
            .map(|t| {
                local_energy(
                    t.input_bits,
                    t.cycles_per_bit,
                    t.switched_capacitance,
                    cfg.mission_time,
                )
            })
            .sum();
        assert!((breakdown.total - expect).abs() / expect < 1e-12);
        assert!(breakdown.comm_energy.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn hopeless_channel_recovers_local_execution() {
        let mut cfg = config_with(0.3, 11, FadingMode::Disabled);
        cfg.ref_gain = 1e-12; // gains ~1e-17: offloading any bit is absurd
        let tasks = vec![task(0, 0, 0.0, 2e7)];
        let trace = generate_channel_trace(&cfg, &tasks).unwrap();
        let report = solve(&cfg, &tasks, &trace, &SolverConfig::default()).unwrap();
        assert!(report.plan.rho[0] < 1e-3);
        let local = local_energy(2e7, 1550.7, 1e-28, cfg.mission_time);
        assert!((report.breakdown.total - local).abs() / local < 1e-3);
    }

    #[test]
    fn generous_channel_offloads_everything() {
        let mut cfg = config_with(1.0, 11, FadingMode::Disabled);
        cfg.ref_gain = 1e-1;
        let tasks = vec![task(0, 0, 0.0, 2e7)];
        let trace = generate_channel_trace(&cfg, &tasks).unwrap();
        let report = solve(&cfg, &tasks, &trace, &SolverConfig::default()).unwrap();
        assert!(report.plan.rho[0] > 0.99, "rho = {}", report.plan.rho[0]);
        let local = local_energy(2e7, 1550.7, 1e-28, cfg.mission_time);
        assert!(report.breakdown.total < 0.05 * local);
    }

    #[test]
    fn recovery_never_worse_than_local() {
        for seed in [1, 2, 3, 4, 5] {
            let (cfg, tasks, trace) = small_instance(2.0, seed, 5e5, 3);
            let report = solve(&cfg, &tasks, &trace, &SolverConfig::default()).unwrap();
            let local: f64 = tasks
                .iter()
                .map(|t| {
                    local_energy(
                        t.input_bits,
                        t.cycles_per_bit,
                        t.switched_capacitance,
                        cfg.mission_time,
                    )
                })
                .sum();
            assert!(
                report.breakdown.total <= local * (1.0 + 1e-9),
                "seed {seed}: {} > {}",
                report.breakdown.total,
                local
            );
        }
    }

    #[test]
    fn doubling_gains_never_hurts() {
        for seed in [2, 7] {
            let (cfg, tasks, trace) = small_instance(1.0, seed, 1e6, 2);
            let report = solve(&cfg, &tasks, &trace, &SolverConfig::default()).unwrap();
            let mut doubled = trace.gains.clone();
            for k in 0..tasks.len() {
                for f in 0..cfg.num_frames {
                    doubled[(k, f)] = 2.0 * trace.gains[(k, f)];
                }
            }
            let trace2 = ChannelTrace::from_gains(&cfg, &tasks, doubled).unwrap();
            let report2 = solve(&cfg, &tasks, &trace2, &SolverConfig::default()).unwrap();
            assert!(
                report2.breakdown.total <= report.breakdown.total * (1.0 + 1e-9),
                "seed {seed}: doubled gains {} vs {}",
                report2.breakdown.total,
                report.breakdown.total
            );
        }
    }

    fn synthetic_duals(k_total: usize, nu: usize) -> DualState {
        let mut duals = DualState::new(k_total, nu, [0.0; 7]);
        for k in 0..k_total {
            for u in 0..nu {
                duals.lambda_up[(k, u)] = 1e-3 * ((k + 2 * u) % 7) as f64;
                duals.lambda_down[(k, u)] = 5e-4 * ((3 * k + u) % 5) as f64;
                duals.mu_up[(k, u)] = 2e-12 * ((u + k) % 3) as f64;
                duals.mu_down[(k, u)] = 1e-12 * ((u * (k + 1)) % 4) as f64;
            }
            duals.u_up[k] = 3e-8 - 4e-8 * k as f64;
            duals.u_compute[k] = 1e-9 * (k + 1) as f64;
            duals.u_down[k] = 5e-9 - 7e-9 * k as f64;
        }
        duals
    }

    #[test]
    fn certified_bound_below_schedule_restricted_value() {
        // Minimizing jointly over schedules can only go lower than the
        // Lagrangian at the score-based schedule pick.
        let (cfg, tasks, trace) = small_instance(0.3, 21, 5e4, 2);
        let nu = cfg.uplink_frames();
        let duals = synthetic_duals(2, nu);
        let rho: Vec<f64> = tasks
            .iter()
            .map(|t| optimal_offload_ratio(&duals, t, cfg.mission_time))
            .collect();
        let prev = Grid::filled(2, cfg.num_frames, 1e4);
        let (up, down) = optimal_schedule(&duals, &prev, &trace, &cfg);
        let argmin = dual_argmin_plan(&duals, &up, &down, &rho, &trace, &tasks, &cfg);
        let restricted = lagrangian_value(&duals, &argmin, &trace, &tasks, &cfg);
        let bound = certified_dual_bound(&duals, &trace, &tasks, &cfg);
        assert!(
            bound <= restricted + 1e-9 * restricted.abs().max(1.0),
            "bound {bound} restricted {restricted}"
        );
    }

    #[test]
    fn certified_bound_below_any_feasible_plan() {
        let (cfg, tasks, trace) = small_instance(0.3, 22, 5e4, 2);
        let nu = cfg.uplink_frames();
        let duals = synthetic_duals(2, nu);
        let bound = certified_dual_bound(&duals, &trace, &tasks, &cfg);

        // All-local plan.
        let mut local = PrimalPlan::zeros(2, cfg.num_frames);
        for u in 0..nu {
            local.uplink_sched[(u % 2, u)] = true;
            local.downlink_sched[(u % 2, u + 2)] = true;
        }
        let local_cost = evaluate_total_energy(&local, &trace, &tasks, &cfg)
            .unwrap()
            .total;
        assert!(bound <= local_cost + 1e-12);

        // A partially offloaded feasible plan on the same schedules.
        let alloc = solve_bit_allocation(
            &local.uplink_sched,
            &local.downlink_sched,
            &[0.04, 0.03],
            &trace,
            &tasks,
            &cfg,
            &SolverConfig::default(),
        )
        .unwrap();
        let mut partial = local.clone();
        partial.uplink_bits = alloc.uplink_bits;
        partial.compute_bits = alloc.compute_bits;
        partial.downlink_bits = alloc.downlink_bits;
        partial.rho = vec![0.04, 0.03];
        let partial_cost = evaluate_total_energy(&partial, &trace, &tasks, &cfg)
            .unwrap()
            .total;
        assert!(
            bound <= partial_cost + 1e-12,
            "bound {bound} feasible {partial_cost}"
        );
    }

    #[test]
    fn best_dual_is_monotone_and_below_primal() {
        let (cfg, tasks, trace) = small_instance(1.0, 13, 1e6, 2);
        let solver_cfg = SolverConfig {
            max_iterations: 200,
            dual_tolerance: 0.0,
            ..SolverConfig::default()
        };
        let report = solve(&cfg, &tasks, &trace, &solver_cfg).unwrap();
        assert_eq!(report.dual_history.len(), 200);
        let mut best = f64::NEG_INFINITY;
        for &g in &report.dual_history {
            assert!(g.is_finite());
            best = best.max(g);
        }
        // Weak duality at the reported solution.
        assert!(
            report.breakdown.total >= report.dual_value - 1e-6 * report.breakdown.total.abs(),
            "primal {} dual {}",
            report.breakdown.total,
            report.dual_value
        );
    }
}
