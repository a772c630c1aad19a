//! Closed-form energy model and the scheduling scores built from it.
//!
//! ```text
//! local CPU:        E = gamma * C^3 * l^3 / T^2        (frequency C*l/T)
//! one-by-one frame: E = (N0*B*dt / g) * (2^(l/(B*dt)) - 1)
//! orthogonal slot:  same with dt -> dt/K
//! ```
//!
//! Everything is linear units and Joules; dB figures never enter these
//! paths. Rate exponents `l/(B*dt)` beyond [`MAX_RATE_EXPONENT`] are
//! rejected: any plan that respects the per-frame caps stays far below it.

use thiserror::Error;

use crate::scenario::ScenarioConfig;

/// Hard ceiling on the spectral-efficiency exponent `l / (B * dt)`.
pub const MAX_RATE_EXPONENT: f64 = 64.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("transmitting {bits} bits over a zero-gain channel")]
    ZeroGain { bits: f64 },
    #[error("rate exponent {exponent} exceeds {MAX_RATE_EXPONENT}")]
    ExponentOverflow { exponent: f64 },
}

/// Per-vehicle energy totals for a plan (J).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub comm_energy: Vec<f64>,
    pub local_energy: Vec<f64>,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(comm_energy: Vec<f64>, local_energy: Vec<f64>) -> Self {
        let total = comm_energy.iter().sum::<f64>() + local_energy.iter().sum::<f64>();
        Self {
            comm_energy,
            local_energy,
            total,
        }
    }
}

/// CPU energy to process `bits` within `deadline` seconds at the implied
/// fixed frequency: `gamma * cycles_per_bit^3 * bits^3 / deadline^2`.
pub fn local_energy(bits: f64, cycles_per_bit: f64, switched_capacitance: f64, deadline: f64) -> f64 {
    debug_assert!(bits >= 0.0 && deadline > 0.0);
    switched_capacitance * cycles_per_bit.powi(3) * bits.powi(3) / (deadline * deadline)
}

/// Transmit energy for `bits` in one slot of `slot` seconds over a channel
/// with power gain `gain`.
pub(crate) fn comm_energy_slot(
    bits: f64,
    gain: f64,
    slot: f64,
    cfg: &ScenarioConfig,
) -> Result<f64, EnergyError> {
    if bits == 0.0 {
        return Ok(0.0);
    }
    if gain <= 0.0 {
        return Err(EnergyError::ZeroGain { bits });
    }
    let exponent = bits / (cfg.bandwidth * slot);
    if exponent > MAX_RATE_EXPONENT {
        return Err(EnergyError::ExponentOverflow { exponent });
    }
    Ok(cfg.noise_psd * cfg.bandwidth * slot / gain * (exponent.exp2() - 1.0))
}

/// Marginal transmit energy per bit at allocation `bits`:
/// `(N0 * ln2 / gain) * 2^(bits/(B*slot))`.
pub(crate) fn marginal_cost_slot(bits: f64, gain: f64, slot: f64, cfg: &ScenarioConfig) -> f64 {
    let exponent = (bits / (cfg.bandwidth * slot)).min(MAX_RATE_EXPONENT);
    cfg.noise_psd * std::f64::consts::LN_2 / gain * exponent.exp2()
}

/// Uplink energy of a vehicle in the one-by-one scheme for one frame.
/// Zero when the vehicle is muted (`scheduled == false`) or sends nothing.
pub fn one_by_one_comm_energy(
    scheduled: bool,
    bits: f64,
    gain: f64,
    cfg: &ScenarioConfig,
) -> Result<f64, EnergyError> {
    if !scheduled {
        return Ok(0.0);
    }
    comm_energy_slot(bits, gain, cfg.frame_duration, cfg)
}

/// Uplink energy in the orthogonal scheme, where each of `num_vehicles`
/// gets a dedicated slot of `frame_duration / num_vehicles` per frame.
pub fn orthogonal_comm_energy(
    bits: f64,
    gain: f64,
    cfg: &ScenarioConfig,
    num_vehicles: usize,
) -> Result<f64, EnergyError> {
    debug_assert!(num_vehicles >= 1);
    comm_energy_slot(bits, gain, cfg.frame_duration / num_vehicles as f64, cfg)
}

/// Marginal one-by-one uplink cost per bit at allocation `bits`.
pub fn uplink_marginal_cost(bits: f64, gain: f64, cfg: &ScenarioConfig) -> f64 {
    marginal_cost_slot(bits, gain, cfg.frame_duration, cfg)
}

/// Achievable spectral efficiency `log2(1 + power * gain / (N0 * B))`.
pub fn spectral_efficiency(power: f64, gain: f64, cfg: &ScenarioConfig) -> f64 {
    (1.0 + power * gain / cfg.noise_power()).log2()
}

/// Uplink scheduling score: frame energy at `bits` minus `lambda` times the
/// achievable uplink rate. The energy term saturates at the exponent
/// ceiling instead of erroring so scores stay totally ordered.
pub fn uplink_score(bits: f64, gain: f64, lambda: f64, cfg: &ScenarioConfig) -> f64 {
    debug_assert!(lambda >= 0.0);
    let energy = if bits == 0.0 {
        0.0
    } else if gain <= 0.0 {
        f64::INFINITY
    } else {
        let exponent = (bits / cfg.symbols_per_frame()).min(MAX_RATE_EXPONENT);
        cfg.noise_psd * cfg.bandwidth * cfg.frame_duration / gain * (exponent.exp2() - 1.0)
    };
    energy - lambda * spectral_efficiency(cfg.vehicle_max_power, gain.max(0.0), cfg)
}

/// Downlink scheduling score: `-lambda` times the achievable downlink rate
/// at the delivery frame. Never positive.
pub fn downlink_score(lambda: f64, gain_at_delivery: f64, cfg: &ScenarioConfig) -> f64 {
    debug_assert!(lambda >= 0.0);
    -lambda * spectral_efficiency(cfg.rsu_power, gain_at_delivery.max(0.0), cfg)
}
