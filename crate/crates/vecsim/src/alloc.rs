//! Per-vehicle bit allocation over scheduled frames.
//!
//! Given the frames a vehicle may use, the cheapest way to push a fixed
//! number of uplink bits through them is capped waterfilling: every frame
//! with an interior allocation runs at the same marginal energy per bit,
//! frames at their rate cap run below it, and unused frames would cost more
//! than it. Compute and downlink bits carry no vehicle energy, so they are
//! completed by an earliest-feasible greedy fill afterwards.
//!
//! The same machinery serves both access schemes; only the slot length and
//! the cap masks differ (full frames for one-by-one, 1/K slots every frame
//! for orthogonal).

use thiserror::Error;

use crate::energy::{comm_energy_slot, local_energy, marginal_cost_slot, EnergyError};
use crate::scenario::{ScenarioConfig, VehicleTask};
use crate::search::{bisect_feasible_edge, golden_section_min};

/// Relative tolerance on bit-count equalities.
pub const BIT_EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("demand of {needed} bits exceeds usable capacity {capacity}")]
    Infeasible { needed: f64, capacity: f64 },
    #[error("downlink pipeline cannot carry {needed} bits (delivered {delivered})")]
    PipelineInfeasible { needed: f64, delivered: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// The frames a single vehicle may transmit in, with rate caps already
/// masked by schedule and activity (a zero cap means the frame is unusable).
///
/// Entry `u` refers to uplink frame `u`; its paired downlink cap is for
/// delivery frame `u + 2`.
#[derive(Debug, Clone)]
pub struct VehicleLink {
    pub gains: Vec<f64>,
    pub uplink_caps: Vec<f64>,
    pub downlink_caps: Vec<f64>,
    /// Transmit slot length within a frame (s).
    pub slot: f64,
}

impl VehicleLink {
    pub fn new(gains: Vec<f64>, uplink_caps: Vec<f64>, downlink_caps: Vec<f64>, slot: f64) -> Self {
        assert_eq!(gains.len(), uplink_caps.len());
        assert_eq!(gains.len(), downlink_caps.len());
        assert!(slot > 0.0);
        Self {
            gains,
            uplink_caps,
            downlink_caps,
            slot,
        }
    }

    pub fn uplink_capacity(&self) -> f64 {
        self.uplink_caps.iter().sum()
    }
}

/// Energy-minimal uplink split of `total` bits over the link's frames.
#[derive(Debug, Clone)]
pub struct UplinkAllocation {
    pub bits: Vec<f64>,
    /// Common marginal energy per bit of the interior frames.
    pub water_level: f64,
    /// Worst violation of the optimality conditions (relative).
    pub kkt_residual: f64,
    /// Total transmit energy of the allocation (J).
    pub energy: f64,
}

/// Capped waterfilling: minimize total slot energy subject to per-frame
/// caps and an exact bit total.
pub fn waterfill(
    link: &VehicleLink,
    total: f64,
    cfg: &ScenarioConfig,
) -> Result<UplinkAllocation, AllocError> {
    let n = link.gains.len();
    let mut bits = vec![0.0; n];
    if total <= 0.0 {
        return Ok(UplinkAllocation {
            bits,
            water_level: 0.0,
            kkt_residual: 0.0,
            energy: 0.0,
        });
    }
    let usable: Vec<usize> = (0..n)
        .filter(|&u| link.uplink_caps[u] > 0.0 && link.gains[u] > 0.0)
        .collect();
    let capacity: f64 = usable.iter().map(|&u| link.uplink_caps[u]).sum();
    if capacity < total * (1.0 - BIT_EQUALITY_TOL) {
        return Err(AllocError::Infeasible {
            needed: total,
            capacity,
        });
    }

    let symbols = cfg.bandwidth * link.slot;
    let fill_at = |level: f64, bits: &mut [f64]| -> f64 {
        let mut sum = 0.0;
        for &u in &usable {
            let floor = marginal_cost_slot(0.0, link.gains[u], link.slot, cfg);
            let l = if level <= floor {
                0.0
            } else {
                (symbols * (level / floor).log2()).min(link.uplink_caps[u])
            };
            bits[u] = l;
            sum += l;
        }
        sum
    };

    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &u in &usable {
        let floor = marginal_cost_slot(0.0, link.gains[u], link.slot, cfg);
        let ceil = marginal_cost_slot(link.uplink_caps[u], link.gains[u], link.slot, cfg);
        lo = lo.min(floor);
        hi = hi.max(ceil);
    }
    // The bracket can span many decades when near-dead frames inflate the
    // top marginal; converge relative to the lower end so the fill error
    // at the final level is negligible.
    for _ in 0..400 {
        if (hi - lo) <= 1e-15 * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fill_at(mid, &mut bits) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    fill_at(level, &mut bits);

    // Close the residual bisection gap on the cheapest frames first, so
    // the slack never lands on frames whose zero-load marginal sits far
    // above the water level.
    let mut by_floor = usable.clone();
    by_floor.sort_by(|&a, &b| {
        marginal_cost_slot(0.0, link.gains[a], link.slot, cfg)
            .total_cmp(&marginal_cost_slot(0.0, link.gains[b], link.slot, cfg))
    });
    let mut short = total - bits.iter().sum::<f64>();
    for &u in &by_floor {
        if short > 0.0 {
            let add = short.min(link.uplink_caps[u] - bits[u]);
            bits[u] += add;
            short -= add;
        }
    }
    for &u in by_floor.iter().rev() {
        if short < 0.0 {
            let take = (-short).min(bits[u]);
            bits[u] -= take;
            short += take;
        }
    }

    let mut energy = 0.0;
    let mut kkt = 0.0f64;
    for &u in &usable {
        let l = bits[u];
        let cap = link.uplink_caps[u];
        energy += comm_energy_slot(l, link.gains[u], link.slot, cfg)?;
        let marginal = marginal_cost_slot(l, link.gains[u], link.slot, cfg);
        let tol = 1e-9 * cap;
        if l <= tol {
            // Unused: the frame must not be cheaper than the water level.
            kkt = kkt.max((level - marginal) / level);
        } else if l >= cap - tol {
            // Capped: the frame must not be more expensive than the level.
            kkt = kkt.max((marginal - level) / level);
        } else {
            kkt = kkt.max((marginal - level).abs() / level);
        }
    }
    let total_err = (bits.iter().sum::<f64>() - total).abs() / total.max(1.0);
    Ok(UplinkAllocation {
        bits,
        water_level: level,
        kkt_residual: kkt.max(total_err),
        energy,
    })
}

/// Compute and downlink bits completing an uplink allocation: everything
/// uplinked in frame `u` is computed in frame `u + 1`, and output bits are
/// delivered as early as downlink caps and the compute prefix allow.
#[derive(Debug, Clone)]
pub struct PipelineFill {
    /// Bits computed in frame `u + 1`.
    pub compute: Vec<f64>,
    /// Bits delivered in frame `u + 2`.
    pub downlink: Vec<f64>,
}

pub fn fill_pipeline(
    link: &VehicleLink,
    uplink_bits: &[f64],
    output_ratio: f64,
) -> Result<PipelineFill, AllocError> {
    let compute = uplink_bits.to_vec();
    let need = output_ratio * uplink_bits.iter().sum::<f64>();
    let mut downlink = vec![0.0; uplink_bits.len()];
    let mut cum_compute = 0.0;
    let mut sent = 0.0;
    for (u, d) in downlink.iter_mut().enumerate() {
        cum_compute += compute[u];
        let room = output_ratio * cum_compute - sent;
        let fill = link.downlink_caps[u].min(room).min(need - sent).max(0.0);
        *d = fill;
        sent += fill;
    }
    if need - sent > BIT_EQUALITY_TOL * need.max(1.0) {
        return Err(AllocError::PipelineInfeasible {
            needed: need,
            delivered: sent,
        });
    }
    Ok(PipelineFill { compute, downlink })
}

/// Transmit energy of offloading `rho * input_bits` through the link, with
/// the full allocation, or an error when the link cannot carry it.
pub fn offload_cost(
    link: &VehicleLink,
    rho: f64,
    task: &VehicleTask,
    cfg: &ScenarioConfig,
) -> Result<(UplinkAllocation, PipelineFill), AllocError> {
    let alloc = waterfill(link, rho * task.input_bits, cfg)?;
    let fill = fill_pipeline(link, &alloc.bits, task.output_ratio)?;
    Ok((alloc, fill))
}

/// Largest offload ratio the link can carry for this task.
pub fn max_feasible_ratio(link: &VehicleLink, task: &VehicleTask, cfg: &ScenarioConfig) -> f64 {
    let feasible = |rho: f64| offload_cost(link, rho, task, cfg).is_ok();
    bisect_feasible_edge(feasible, 0.0, 1.0, 50)
}

/// Outcome of the scalar offload-ratio optimization.
#[derive(Debug, Clone)]
pub struct RatioOptimum {
    pub rho: f64,
    /// Transmit energy at `rho` (J).
    pub comm_energy: f64,
    /// Local energy for the remaining `(1 - rho)` share (J).
    pub local_energy: f64,
    pub uplink: UplinkAllocation,
    pub pipeline: PipelineFill,
}

/// Minimizes transmit-plus-local energy over the offload ratio.
///
/// The objective is convex in the ratio (waterfilling cost is convex in the
/// bit total, the local term is convex in the remainder), so a
/// golden-section search over the feasible interval suffices; both interval
/// endpoints are checked as well, which keeps the result never worse than
/// pure local execution.
pub fn optimize_ratio(link: &VehicleLink, task: &VehicleTask, cfg: &ScenarioConfig) -> RatioOptimum {
    let rho_max = max_feasible_ratio(link, task, cfg);
    let objective = |rho: f64| match offload_cost(link, rho, task, cfg) {
        Ok((alloc, _)) => {
            alloc.energy
                + local_energy(
                    (1.0 - rho) * task.input_bits,
                    task.cycles_per_bit,
                    task.switched_capacitance,
                    cfg.mission_time,
                )
        }
        Err(_) => f64::INFINITY,
    };
    let (x, fx) = golden_section_min(objective, 0.0, rho_max, 1e-4, 200);
    let mut best = (x, fx);
    for cand in [0.0, rho_max] {
        let f = objective(cand);
        if f < best.1 {
            best = (cand, f);
        }
    }
    let rho = best.0;
    let (uplink, pipeline) =
        offload_cost(link, rho, task, cfg).expect("optimum must be feasible: rho = 0 always is");
    RatioOptimum {
        rho,
        comm_energy: uplink.energy,
        local_energy: local_energy(
            (1.0 - rho) * task.input_bits,
            task.cycles_per_bit,
            task.switched_capacitance,
            cfg.mission_time,
        ),
        uplink,
        pipeline,
    }
}
