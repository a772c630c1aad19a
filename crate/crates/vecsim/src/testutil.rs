//! Shared fixtures for unit tests.

use crate::scenario::{FadingMode, ScenarioConfig, VehicleTask};

/// Default radio/road constants used across tests: 3 RSUs 500 m apart at
/// 250 m / 20 m, three lanes at 30-35 m/s, 30 ms frames over a 25 s
/// mission, 20 MHz band, N0 = 3.981e-15 W/Hz, 1 W / 2 W power budgets.
pub(crate) fn table1_config() -> ScenarioConfig {
    ScenarioConfig::new(
        3,
        500.0,
        250.0,
        20.0,
        3,
        4.0,
        vec![30.0, 32.5, 35.0],
        25.0,
        0.03,
        2e7,
        3.981e-15,
        1.0,
        2.0,
        1e-3,
        2.0,
        7,
        FadingMode::Rayleigh,
    )
    .unwrap()
}

/// Same constants with a caller-chosen mission time, seed, and fading mode.
pub(crate) fn config_with(mission_time: f64, seed: u64, fading: FadingMode) -> ScenarioConfig {
    ScenarioConfig::new(
        3,
        500.0,
        250.0,
        20.0,
        3,
        4.0,
        vec![30.0, 32.5, 35.0],
        mission_time,
        0.03,
        2e7,
        3.981e-15,
        1.0,
        2.0,
        1e-3,
        2.0,
        seed,
        fading,
    )
    .unwrap()
}

pub(crate) fn task(id: usize, lane: usize, arrival: f64, input_bits: f64) -> VehicleTask {
    VehicleTask {
        id,
        lane,
        arrival_time: arrival,
        input_bits,
        cycles_per_bit: 1550.7,
        output_ratio: 0.5,
        switched_capacitance: 1e-28,
    }
}
