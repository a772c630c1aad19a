//! Deterministic world model: road and RSU geometry, vehicle mobility,
//! seeded Rayleigh fading, and the per-frame rate caps derived from them.
//!
//! Geometry follows a one-way road along the x axis. RSU `m` (0-based) sits
//! at `(rsu_radius + m * rsu_spacing, 0)` at height `rsu_height`, so a
//! vehicle entering the road at `x = 0` is exactly on the first RSU's
//! coverage edge. Lane `j` runs at `y = j * lane_width` with speed
//! `lane_speeds[j]`.
//!
//! Frames are 0-based in code: frame `f` covers wall-clock time up to
//! `(f + 1) * frame_duration`. A task uplinked in frame `f` is computed in
//! frame `f + 1` and downlinked in frame `f + 2`, so uplink frames range
//! over `0..num_frames - 2`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::Grid;

/// Small-scale fading model used when generating a channel trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingMode {
    /// Unit-variance Rayleigh: squared magnitudes are i.i.d. unit-mean
    /// exponential draws.
    #[default]
    Rayleigh,
    /// No fading (gain factor fixed to 1); handy for deterministic tests.
    Disabled,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("invalid task {id}: {reason}")]
    InvalidTask { id: usize, reason: String },
    #[error("mission allows only {frames} frames; the uplink/compute/downlink pipeline needs at least 3")]
    TooFewFrames { frames: usize },
}

/// Immutable world description.
///
/// All physical quantities are linear SI units; in particular `noise_psd`
/// is W/Hz (any dBm/Hz figure is converted once at ingestion, see
/// [`noise_psd_from_dbm_per_hz`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_rsus: usize,
    /// Distance between adjacent RSUs (m).
    pub rsu_spacing: f64,
    /// Coverage radius of each RSU (m); also the x offset of the first RSU.
    pub rsu_radius: f64,
    /// RSU antenna height (m).
    pub rsu_height: f64,
    pub num_lanes: usize,
    /// Lane width (m).
    pub lane_width: f64,
    /// Per-lane speed (m/s); length must equal `num_lanes`.
    pub lane_speeds: Vec<f64>,
    /// Mission deadline T (s).
    pub mission_time: f64,
    /// Frame duration (s).
    pub frame_duration: f64,
    /// Number of frames, `floor(mission_time / frame_duration)`.
    pub num_frames: usize,
    /// Channel bandwidth (Hz), equal for uplink and downlink.
    pub bandwidth: f64,
    /// Noise power spectral density (W/Hz, linear).
    pub noise_psd: f64,
    /// Vehicle transmit power budget (W).
    pub vehicle_max_power: f64,
    /// RSU transmit power (W).
    pub rsu_power: f64,
    /// Received power gain at 1 m for 1 W transmit power.
    pub ref_gain: f64,
    /// Path loss exponent, at least 2.
    pub pathloss_exponent: f64,
    pub rng_seed: u64,
    pub fading: FadingMode,
}

impl ScenarioConfig {
    /// Validates invariants and derives `num_frames` from `mission_time`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_rsus: usize,
        rsu_spacing: f64,
        rsu_radius: f64,
        rsu_height: f64,
        num_lanes: usize,
        lane_width: f64,
        lane_speeds: Vec<f64>,
        mission_time: f64,
        frame_duration: f64,
        bandwidth: f64,
        noise_psd: f64,
        vehicle_max_power: f64,
        rsu_power: f64,
        ref_gain: f64,
        pathloss_exponent: f64,
        rng_seed: u64,
        fading: FadingMode,
    ) -> Result<Self, ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::InvalidConfig(msg.to_string()));
        if num_rsus == 0 {
            return bad("need at least one RSU");
        }
        if num_lanes == 0 {
            return bad("need at least one lane");
        }
        if lane_speeds.len() != num_lanes {
            return bad("lane_speeds length must equal num_lanes");
        }
        let positives = [
            rsu_spacing,
            rsu_radius,
            rsu_height,
            lane_width,
            mission_time,
            frame_duration,
            bandwidth,
            noise_psd,
            vehicle_max_power,
            rsu_power,
            ref_gain,
        ];
        if positives.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("all physical quantities must be strictly positive and finite");
        }
        if lane_speeds.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("lane speeds must be strictly positive and finite");
        }
        if !pathloss_exponent.is_finite() || pathloss_exponent < 2.0 {
            return bad("pathloss_exponent must be at least 2");
        }
        let num_frames = (mission_time / frame_duration).floor() as usize;
        if num_frames < 3 {
            return Err(ScenarioError::TooFewFrames { frames: num_frames });
        }
        Ok(Self {
            num_rsus,
            rsu_spacing,
            rsu_radius,
            rsu_height,
            num_lanes,
            lane_width,
            lane_speeds,
            mission_time,
            frame_duration,
            num_frames,
            bandwidth,
            noise_psd,
            vehicle_max_power,
            rsu_power,
            ref_gain,
            pathloss_exponent,
            rng_seed,
            fading,
        })
    }

    /// Number of usable uplink frames (`num_frames - 2`).
    pub fn uplink_frames(&self) -> usize {
        self.num_frames - 2
    }

    /// Noise power over the full band, `noise_psd * bandwidth` (W).
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }

    /// Bits per frame, `bandwidth * frame_duration`.
    pub fn symbols_per_frame(&self) -> f64 {
        self.bandwidth * self.frame_duration
    }
}

/// Converts a noise PSD in dBm/Hz to linear W/Hz.
pub fn noise_psd_from_dbm_per_hz(dbm_per_hz: f64) -> f64 {
    10f64.powf(dbm_per_hz / 10.0) * 1e-3
}

/// One vehicle's compute task and kinematic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTask {
    pub id: usize,
    /// Lane index, 0-based.
    pub lane: usize,
    /// Time the vehicle reaches the road start (s).
    pub arrival_time: f64,
    /// Task input size (bits).
    pub input_bits: f64,
    /// CPU cycles needed per input bit.
    pub cycles_per_bit: f64,
    /// Output bits produced per input bit, in (0, 1).
    pub output_ratio: f64,
    /// Effective switched capacitance of the vehicle CPU (J s^2 / cycle^3).
    pub switched_capacitance: f64,
}

impl VehicleTask {
    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
        let fail = |reason: &str| {
            Err(ScenarioError::InvalidTask {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if self.lane >= cfg.num_lanes {
            return fail("lane index out of range");
        }
        if !self.input_bits.is_finite() || self.input_bits <= 0.0 {
            return fail("input_bits must be positive");
        }
        if !self.cycles_per_bit.is_finite() || self.cycles_per_bit <= 0.0 {
            return fail("cycles_per_bit must be positive");
        }
        if !(self.output_ratio > 0.0 && self.output_ratio < 1.0) {
            return fail("output_ratio must be in (0, 1)");
        }
        if !self.switched_capacitance.is_finite() || self.switched_capacitance <= 0.0 {
            return fail("switched_capacitance must be positive");
        }
        if !(self.arrival_time >= 0.0 && self.arrival_time < cfg.mission_time) {
            return fail("arrival_time must lie in [0, mission_time)");
        }
        Ok(())
    }
}

/// Ground-plane position (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Vehicle position at 0-based frame `frame`, which ends at wall-clock
/// time `(frame + 1) * frame_duration`.
///
/// `x` is negative before the vehicle arrives.
pub fn vehicle_position(task: &VehicleTask, frame: usize, cfg: &ScenarioConfig) -> Position {
    let t = (frame as f64 + 1.0) * cfg.frame_duration - task.arrival_time;
    Position {
        x: t * cfg.lane_speeds[task.lane],
        y: task.lane as f64 * cfg.lane_width,
    }
}

/// Index of the nearest RSU (ties go to the lowest index) and the squared
/// 3-D distance to it, including the RSU height term.
pub fn nearest_rsu(pos: Position, cfg: &ScenarioConfig) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for m in 0..cfg.num_rsus {
        let dx = pos.x - (cfg.rsu_radius + m as f64 * cfg.rsu_spacing);
        let d2 = dx * dx + pos.y * pos.y + cfg.rsu_height * cfg.rsu_height;
        if d2 < best.1 {
            best = (m, d2);
        }
    }
    best
}

/// Path-loss power gain to the nearest RSU: `ref_gain / dist3d^alpha`.
pub fn large_scale_gain(pos: Position, cfg: &ScenarioConfig) -> f64 {
    let (_, d2) = nearest_rsu(pos, cfg);
    cfg.ref_gain / d2.powf(cfg.pathloss_exponent / 2.0)
}

/// Per-vehicle, per-frame channel power gains and the rate caps they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    /// Channel power gain per (vehicle, frame).
    pub gains: Grid<f64>,
    /// Max uplink bits per (vehicle, frame) at the vehicle power budget;
    /// zero wherever the vehicle has not arrived.
    pub uplink_cap: Grid<f64>,
    /// Max downlink bits per (vehicle, frame) at the RSU power.
    pub downlink_cap: Grid<f64>,
    /// Whether the vehicle has arrived by the end of the frame.
    pub active: Grid<bool>,
}

impl ChannelTrace {
    pub fn num_vehicles(&self) -> usize {
        self.gains.rows()
    }

    pub fn num_frames(&self) -> usize {
        self.gains.cols()
    }

    /// Builds a trace from explicit gains, deriving caps and activity the
    /// same way [`generate_channel_trace`] does. Meant for synthetic traces
    /// in tests and for what-if rescaling.
    pub fn from_gains(
        cfg: &ScenarioConfig,
        tasks: &[VehicleTask],
        gains: Grid<f64>,
    ) -> Result<Self, ScenarioError> {
        if cfg.num_frames < 3 {
            return Err(ScenarioError::TooFewFrames {
                frames: cfg.num_frames,
            });
        }
        if gains.rows() != tasks.len() || gains.cols() != cfg.num_frames {
            return Err(ScenarioError::InvalidConfig(format!(
                "gain matrix is {}x{}, expected {}x{}",
                gains.rows(),
                gains.cols(),
                tasks.len(),
                cfg.num_frames
            )));
        }
        let (k, n) = (tasks.len(), cfg.num_frames);
        let mut active = Grid::filled(k, n, false);
        let mut up = Grid::filled(k, n, 0.0);
        let mut down = Grid::filled(k, n, 0.0);
        let symbols = cfg.symbols_per_frame();
        let noise = cfg.noise_power();
        for (ki, task) in tasks.iter().enumerate() {
            for f in 0..n {
                let arrived = (f as f64 + 1.0) * cfg.frame_duration >= task.arrival_time;
                active[(ki, f)] = arrived;
                if arrived {
                    let g = gains[(ki, f)];
                    up[(ki, f)] = symbols * (1.0 + cfg.vehicle_max_power * g / noise).log2();
                    down[(ki, f)] = symbols * (1.0 + cfg.rsu_power * g / noise).log2();
                }
            }
        }
        Ok(Self {
            gains,
            uplink_cap: up,
            downlink_cap: down,
            active,
        })
    }
}

// Each (vehicle, frame) pair draws from its own ChaCha stream so the trace
// does not depend on generation order.
fn fading_factor(seed: u64, vehicle: usize, frame: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((vehicle as u64) << 32) | frame as u64);
    let u = uniform_unit(&mut rng);
    -(1.0 - u).ln()
}

/// Uniform draw in [0, 1) from the top 53 bits of the next u64.
pub(crate) fn uniform_unit<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Builds the channel trace for a scenario: large-scale path loss to the
/// nearest RSU times a seeded small-scale fading draw, plus the per-frame
/// uplink/downlink bit caps.
pub fn generate_channel_trace(
    cfg: &ScenarioConfig,
    tasks: &[VehicleTask],
) -> Result<ChannelTrace, ScenarioError> {
    if tasks.is_empty() {
        return Err(ScenarioError::InvalidConfig("no vehicle tasks".into()));
    }
    if cfg.num_frames < 3 {
        return Err(ScenarioError::TooFewFrames {
            frames: cfg.num_frames,
        });
    }
    for task in tasks {
        task.validate(cfg)?;
    }
    let n = cfg.num_frames;
    let rows = crate::exec::map_items(tasks.to_vec(), |task| {
        let mut row = vec![0.0; n];
        for (f, slot) in row.iter_mut().enumerate() {
            let pos = vehicle_position(&task, f, cfg);
            let ls = large_scale_gain(pos, cfg);
            let s = match cfg.fading {
                FadingMode::Rayleigh => fading_factor(cfg.rng_seed, task.id, f),
                FadingMode::Disabled => 1.0,
            };
            *slot = s * ls;
        }
        row
    });
    ChannelTrace::from_gains(cfg, tasks, Grid::from_rows(rows))
}
