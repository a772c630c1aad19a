//! Experiment harness: seeded sweeps over deadline, input bits, or vehicle
//! count, evaluating any subset of the four schemes, with CSV output.
//!
//! # Configuration file
//!
//! A single TOML file with four sections, all optional (defaults follow the
//! standard three-lane / 20 MHz setup):
//!
//! ```toml
//! [scenario]
//! num_rsus = 1
//! rsu_spacing_m = 500.0
//! rsu_radius_m = 250.0
//! rsu_height_m = 20.0
//! num_lanes = 3
//! lane_width_m = 4.0
//! lane_speeds_mps = [30.0, 32.5, 35.0]
//! mission_time_s = 25.0
//! frame_duration_s = 0.03
//! bandwidth_hz = 2.0e7
//! noise_psd_dbm_hz = -114.0        # converted to W/Hz on ingestion
//! vehicle_max_power_w = 1.0
//! rsu_power_w = 2.0
//! ref_gain = 1.0e-2                # power gain at 1 m
//! pathloss_exponent = 3.0
//! fading = "rayleigh"              # or "disabled"
//!
//! [tasks]
//! num_vehicles = 3
//! input_bits = 7.5e7
//! cycles_per_bit = 1550.7
//! output_ratio = 0.5
//! switched_capacitance = 1.0e-28
//! arrival_window_s = 1.0
//!
//! [solver]
//! max_iterations = 500
//! dual_tolerance = 1.0e-4
//! kkt_tolerance = 1.0e-6
//! step_scale = 1.0
//!
//! [experiment]
//! sweep = "T"                      # T | L | K
//! values = [10.0, 15.0, 20.0, 25.0]
//! schemes = ["one-by-one", "orthogonal", "equal-bit", "local"]
//! num_seeds = 5
//! base_seed = 7
//! out = "results.csv"
//! ```
//!
//! # CSV schema
//!
//! `scheme,axis,axis_value,seed,total_energy_j,iterations,gap,wall_time_s`
//! with one data line per (scheme, axis value, seed); floats are written
//! with 17 significant digits so a parse reproduces them exactly. Rows are
//! ordered by (scheme, axis value, seed) regardless of evaluation order,
//! and the wall-time column is pinned to zero so identical specs yield
//! byte-identical files.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::baselines::{
    equal_bit_one_by_one, local_execution_total, orthogonal_optimize, Scheme,
};
use crate::scenario::{
    generate_channel_trace, noise_psd_from_dbm_per_hz, uniform_unit, FadingMode, ScenarioConfig,
    ScenarioError, VehicleTask,
};
use crate::solver::{solve, SolverConfig, SolverError};

/// Stream-salt separating task-parameter draws from channel fading draws.
const TASK_STREAM_SALT: u64 = 0x7461_736b;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("cannot write {path}: {source}")]
    CsvIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("refusing to emit an empty CSV")]
    EmptyRows,
}

/// Which scenario parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Mission deadline T (s).
    Deadline,
    /// Input bits per task.
    InputBits,
    /// Number of vehicles.
    NumVehicles,
}

impl SweepAxis {
    pub fn tag(&self) -> &'static str {
        match self {
            SweepAxis::Deadline => "T",
            SweepAxis::InputBits => "L",
            SweepAxis::NumVehicles => "K",
        }
    }

    pub fn default_values(&self) -> Vec<f64> {
        match self {
            SweepAxis::Deadline => vec![10.0, 15.0, 20.0, 25.0],
            SweepAxis::InputBits => vec![2e7, 4e7, 6e7, 7.5e7],
            SweepAxis::NumVehicles => vec![2.0, 3.0, 4.0, 5.0],
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "T" | "t" => Ok(SweepAxis::Deadline),
            "L" | "l" => Ok(SweepAxis::InputBits),
            "K" | "k" => Ok(SweepAxis::NumVehicles),
            other => Err(format!("unknown sweep axis '{other}' (expected T, L, or K)")),
        }
    }
}

/// Shared task parameters; per-vehicle arrivals and lanes are derived from
/// the seed at run time.
#[derive(Debug, Clone)]
pub struct TaskTemplate {
    pub num_vehicles: usize,
    pub input_bits: f64,
    pub cycles_per_bit: f64,
    pub output_ratio: f64,
    pub switched_capacitance: f64,
    /// Arrivals are drawn uniformly from `[0, arrival_window)` seconds.
    pub arrival_window: f64,
}

/// A full sweep description: base world, task template, solver knobs, axis,
/// schemes, and seed plan.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub template: TaskTemplate,
    pub solver: SolverConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub num_seeds: usize,
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::InvalidSpec(msg));
        if self.values.is_empty() {
            return fail("sweep needs at least one axis value".into());
        }
        if self.values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return fail("axis values must be positive".into());
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return fail("axis values must be sorted ascending".into());
        }
        if self.num_seeds == 0 {
            return fail("num_seeds must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return fail("need at least one scheme".into());
        }
        match self.axis {
            SweepAxis::Deadline => {
                for &t in &self.values {
                    if (t / self.scenario.frame_duration).floor() < 3.0 {
                        return fail(format!(
                            "deadline {t} s yields fewer than 3 frames at {} s per frame",
                            self.scenario.frame_duration
                        ));
                    }
                }
            }
            SweepAxis::NumVehicles => {
                for &k in &self.values {
                    if k.fract() != 0.0 || k < 1.0 {
                        return fail(format!("vehicle count {k} is not a positive integer"));
                    }
                }
            }
            SweepAxis::InputBits => {}
        }
        Ok(())
    }
}

/// One (scheme, axis value, seed) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub seed: u64,
    pub total_energy: f64,
    pub per_vehicle: Vec<f64>,
    /// Dual iterations used (one-by-one scheme only).
    pub iterations: usize,
    /// Relative primal-dual gap (one-by-one scheme only).
    pub gap: f64,
    /// Pinned to zero so emitted CSVs are reproducible; see module docs.
    pub wall_time_s: f64,
}

/// Builds the per-seed task population: arrivals uniform in the window,
/// lanes round-robin by vehicle index.
pub fn build_tasks(template: &TaskTemplate, cfg: &ScenarioConfig, seed: u64) -> Vec<VehicleTask> {
    (0..template.num_vehicles)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TASK_STREAM_SALT);
            rng.set_stream(k as u64);
            let arrival = template.arrival_window * uniform_unit(&mut rng);
            VehicleTask {
                id: k,
                lane: k % cfg.num_lanes,
                // Keep arrivals inside the mission when the window exceeds it.
                arrival_time: arrival.min(cfg.mission_time * 0.5),
                input_bits: template.input_bits,
                cycles_per_bit: template.cycles_per_bit,
                output_ratio: template.output_ratio,
                switched_capacitance: template.switched_capacitance,
            }
        })
        .collect()
}

fn point_scenario(spec: &ExperimentSpec, value: f64, seed: u64) -> Result<ScenarioConfig, ScenarioError> {
    let base = &spec.scenario;
    let mission_time = match spec.axis {
        SweepAxis::Deadline => value,
        _ => base.mission_time,
    };
    ScenarioConfig::new(
        base.num_rsus,
        base.rsu_spacing,
        base.rsu_radius,
        base.rsu_height,
        base.num_lanes,
        base.lane_width,
        base.lane_speeds.clone(),
        mission_time,
        base.frame_duration,
        base.bandwidth,
        base.noise_psd,
        base.vehicle_max_power,
        base.rsu_power,
        base.ref_gain,
        base.pathloss_exponent,
        seed,
        base.fading,
    )
}

fn point_template(spec: &ExperimentSpec, value: f64) -> TaskTemplate {
    let mut template = spec.template.clone();
    match spec.axis {
        SweepAxis::InputBits => template.input_bits = value,
        SweepAxis::NumVehicles => template.num_vehicles = value as usize,
        SweepAxis::Deadline => {}
    }
    template
}

fn run_point(spec: &ExperimentSpec, value: f64, seed: u64) -> Result<Vec<ResultRow>, HarnessError> {
    let cfg = point_scenario(spec, value, seed)?;
    let template = point_template(spec, value);
    let tasks = build_tasks(&template, &cfg, seed);
    let trace = generate_channel_trace(&cfg, &tasks)?;

    let mut rows = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let row = |total: f64, per_vehicle: Vec<f64>, iterations: usize, gap: f64| ResultRow {
            scheme,
            axis: spec.axis,
            axis_value: value,
            seed,
            total_energy: total,
            per_vehicle,
            iterations,
            gap,
            wall_time_s: 0.0,
        };
        rows.push(match scheme {
            Scheme::Local => {
                let r = local_execution_total(&tasks, cfg.mission_time);
                row(r.total, r.per_vehicle, 0, 0.0)
            }
            Scheme::Orthogonal => {
                let r = orthogonal_optimize(&cfg, &tasks, &trace);
                row(r.total, r.per_vehicle, 0, 0.0)
            }
            Scheme::EqualBit => {
                let r = equal_bit_one_by_one(&cfg, &tasks, &trace);
                row(r.total, r.per_vehicle, 0, 0.0)
            }
            Scheme::OneByOne => {
                let report = solve(&cfg, &tasks, &trace, &spec.solver)?;
                let per_vehicle: Vec<f64> = report
                    .breakdown
                    .comm_energy
                    .iter()
                    .zip(&report.breakdown.local_energy)
                    .map(|(c, l)| c + l)
                    .collect();
                row(
                    report.breakdown.total,
                    per_vehicle,
                    report.iterations_used,
                    report.relative_gap(),
                )
            }
        });
    }
    Ok(rows)
}

/// Runs every (axis value, seed) point of the spec, evaluating the
/// requested schemes on a shared channel trace per point. Points run
/// data-parallel; the returned rows are sorted by (scheme, axis value,
/// seed) so output is independent of evaluation order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.values.len() * spec.num_seeds);
    for &value in &spec.values {
        for s in 0..spec.num_seeds {
            points.push((value, spec.base_seed.wrapping_add(s as u64)));
        }
    }
    let results = crate::exec::map_items(points, |(value, seed)| run_point(spec, value, seed));
    let mut rows = Vec::new();
    for point_rows in results {
        rows.extend(point_rows?);
    }
    rows.sort_by(|a, b| {
        a.scheme
            .cmp(&b.scheme)
            .then(a.axis_value.total_cmp(&b.axis_value))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// CSV header, the stable machine interface.
pub const CSV_HEADER: &str = "scheme,axis,axis_value,seed,total_energy_j,iterations,gap,wall_time_s";

/// Writes rows as CSV (UTF-8, LF newlines, 17-significant-digit floats).
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyRows);
    }
    let io_err = |source| HarnessError::CsvIo {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, line: String| {
        out.write_all(line.as_bytes()).map_err(|source| HarnessError::CsvIo {
            path: path.to_path_buf(),
            source,
        })
    };
    write(&mut out, format!("{CSV_HEADER}\n"))?;
    for r in rows {
        write(
            &mut out,
            format!(
                "{},{},{:.16e},{},{:.16e},{},{:.16e},{:.16e}\n",
                r.scheme.tag(),
                r.axis.tag(),
                r.axis_value,
                r.seed,
                r.total_energy,
                r.iterations,
                r.gap,
                r.wall_time_s
            ),
        )?;
    }
    out.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
// Configuration file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_rsus: usize,
    pub rsu_spacing_m: f64,
    pub rsu_radius_m: f64,
    pub rsu_height_m: f64,
    pub num_lanes: usize,
    pub lane_width_m: f64,
    pub lane_speeds_mps: Vec<f64>,
    pub mission_time_s: f64,
    pub frame_duration_s: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub vehicle_max_power_w: f64,
    pub rsu_power_w: f64,
    pub ref_gain: f64,
    pub pathloss_exponent: f64,
    pub fading: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            num_rsus: 1,
            rsu_spacing_m: 500.0,
            rsu_radius_m: 250.0,
            rsu_height_m: 20.0,
            num_lanes: 3,
            lane_width_m: 4.0,
            lane_speeds_mps: vec![30.0, 32.5, 35.0],
            mission_time_s: 25.0,
            frame_duration_s: 0.03,
            bandwidth_hz: 2e7,
            noise_psd_dbm_hz: -114.0,
            vehicle_max_power_w: 1.0,
            rsu_power_w: 2.0,
            ref_gain: 1e-2,
            pathloss_exponent: 3.0,
            fading: "rayleigh".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub num_vehicles: usize,
    pub input_bits: f64,
    pub cycles_per_bit: f64,
    pub output_ratio: f64,
    pub switched_capacitance: f64,
    pub arrival_window_s: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            num_vehicles: 3,
            input_bits: 7.5e7,
            cycles_per_bit: 1550.7,
            output_ratio: 0.5,
            switched_capacitance: 1e-28,
            arrival_window_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub dual_tolerance: f64,
    pub kkt_tolerance: f64,
    pub step_scale: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iterations: d.max_iterations,
            dual_tolerance: d.dual_tolerance,
            kkt_tolerance: d.kkt_tolerance,
            step_scale: d.step_scale,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub sweep: String,
    pub values: Vec<f64>,
    pub schemes: Vec<String>,
    pub num_seeds: usize,
    pub base_seed: u64,
    pub out: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            sweep: "T".into(),
            values: Vec::new(),
            schemes: Scheme::ALL.iter().map(|s| s.tag().to_string()).collect(),
            num_seeds: 5,
            base_seed: 7,
            out: "results.csv".into(),
        }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioSection,
    pub tasks: TaskSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigIo {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Resolves the file into a validated spec plus the output path.
    /// dBm/Hz -> W/Hz conversion happens here, once.
    pub fn into_spec(self) -> Result<(ExperimentSpec, PathBuf), HarnessError> {
        let fading = match self.scenario.fading.as_str() {
            "rayleigh" => FadingMode::Rayleigh,
            "disabled" => FadingMode::Disabled,
            other => {
                return Err(HarnessError::InvalidSpec(format!(
                    "unknown fading mode '{other}' (expected rayleigh or disabled)"
                )))
            }
        };
        let scenario = ScenarioConfig::new(
            self.scenario.num_rsus,
            self.scenario.rsu_spacing_m,
            self.scenario.rsu_radius_m,
            self.scenario.rsu_height_m,
            self.scenario.num_lanes,
            self.scenario.lane_width_m,
            self.scenario.lane_speeds_mps.clone(),
            self.scenario.mission_time_s,
            self.scenario.frame_duration_s,
            self.scenario.bandwidth_hz,
            noise_psd_from_dbm_per_hz(self.scenario.noise_psd_dbm_hz),
            self.scenario.vehicle_max_power_w,
            self.scenario.rsu_power_w,
            self.scenario.ref_gain,
            self.scenario.pathloss_exponent,
            self.experiment.base_seed,
            fading,
        )?;
        let axis = SweepAxis::from_str(&self.experiment.sweep).map_err(HarnessError::InvalidSpec)?;
        let values = if self.experiment.values.is_empty() {
            axis.default_values()
        } else {
            self.experiment.values.clone()
        };
        let schemes = self
            .experiment
            .schemes
            .iter()
            .map(|s| Scheme::from_str(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(HarnessError::InvalidSpec)?;
        let spec = ExperimentSpec {
            scenario,
            template: TaskTemplate {
                num_vehicles: self.tasks.num_vehicles,
                input_bits: self.tasks.input_bits,
                cycles_per_bit: self.tasks.cycles_per_bit,
                output_ratio: self.tasks.output_ratio,
                switched_capacitance: self.tasks.switched_capacitance,
                arrival_window: self.tasks.arrival_window_s,
            },
            solver: SolverConfig {
                max_iterations: self.solver.max_iterations,
                dual_tolerance: self.solver.dual_tolerance,
                kkt_tolerance: self.solver.kkt_tolerance,
                step_scale: self.solver.step_scale,
                ..SolverConfig::default()
            },
            axis,
            values,
            schemes,
            num_seeds: self.experiment.num_seeds,
            base_seed: self.experiment.base_seed,
        };
        spec.validate()?;
        Ok((spec, PathBuf::from(self.experiment.out)))
    }
}
