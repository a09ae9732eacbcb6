//! Experiment driver: presets, trajectory records and summaries.
//!
//! A run integrates one initial value problem, writes one CSV row every
//! `record_every` steps (plus the final step) and returns a [`Summary`]. The
//! statistics in the summary are computed from exactly the rows that were
//! written, so [`summarize_records`] on the file reproduces them bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, mass_shell, noether_from_momentum, ConvergenceRow, LorentzGenerator};
use crate::error::Error;
use crate::fields::{BuiltinField, Field, FieldModel, ScaledField};
use crate::integrators::{step_count, GridPoint, Method, Propagator, SolverSettings};
use crate::minkowski::{v3, Position4, Vec3, Velocity4};

/// Column names of the trajectory CSV, in order.
pub const CSV_HEADER: [&str; 15] = [
    "n",
    "tau",
    "t",
    "x1",
    "x2",
    "x3",
    "gamma",
    "u1",
    "u2",
    "u3",
    "energy",
    "energy_rel_err",
    "mass_shell",
    "discrete_energy",
    "noether",
];

/// Column names of the convergence CSV.
pub const CONVERGENCE_HEADER: [&str; 3] = ["h", "error", "observed_order"];

/// Target number of rows when a preset picks `record_every` itself.
const PRESET_ROWS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver failed at step {step}: {source}")]
    Solver {
        step: u64,
        #[source]
        source: Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Records { path: PathBuf, msg: String },
}

impl ExperimentError {
    /// Process exit code: 2 for bad input, 3 for a failed implicit solve.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Solver { .. } => 3,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn records(path: &Path, msg: impl Into<String>) -> Self {
        Self::Records {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

/// Errors raised while setting up a run are configuration errors; errors raised
/// while stepping are solver errors.
fn setup_error(e: Error) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Example1,
    Example2,
    Example3,
    Axisym,
    ConstantEb,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Example1,
        Preset::Example2,
        Preset::Example3,
        Preset::Axisym,
        Preset::ConstantEb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
            Preset::Axisym => "axisym",
            Preset::ConstantEb => "constant-eb",
        }
    }

    pub fn field(self) -> BuiltinField {
        match self {
            Preset::Example1 => BuiltinField::Example1,
            Preset::Example2 => BuiltinField::Example2,
            Preset::Example3 => BuiltinField::Example3,
            Preset::Axisym => BuiltinField::Axisymmetric,
            Preset::ConstantEb => BuiltinField::ConstantEB {
                e: [1.0, 0.0, 0.0],
                b: [0.0, 0.0, 1.0],
            },
        }
    }

    /// Constant `c` of the `±c h²` window used when plotting this preset.
    pub fn envelope_constant(self) -> Option<f64> {
        match self {
            Preset::Example1 => Some(2.0),
            Preset::Example2 => Some(4000.0),
            Preset::Example3 => Some(5000.0),
            _ => None,
        }
    }

    /// Default configuration for `method`: the published initial data and
    /// step size, a shortened horizon, and `record_every` chosen for about
    /// ten thousand rows.
    pub fn config(self, method: Method) -> ExperimentConfig {
        let (x0, u0, h, tau_end) = match self {
            Preset::Example1 => ([0.0, 1.0, 0.1], [0.09, 0.05, 0.2], 0.01, 1e4),
            Preset::Example2 => ([0.0, 1.0, 0.1], [0.09, 0.55, 0.3], 1e-4, 1e3),
            Preset::Example3 => ([0.0, 1.0, 0.1], [0.09, 0.55, 0.3], 1e-3, 1e4),
            Preset::Axisym => ([1.0, 0.0, 0.1], [0.1, 0.5, 0.05], 0.01, 1e3),
            Preset::ConstantEb => ([0.0, 1.0, 0.1], [0.09, 0.05, 0.2], 0.02, 1e3),
        };
        let perturbation = (self == Preset::Example3).then_some(Perturbation {
            scale: 1e-15,
            count: 5,
        });
        let mut cfg = ExperimentConfig {
            field: Field::Builtin(self.field()),
            method,
            h,
            tau_end,
            x0,
            u0,
            out: None,
            record_every: 1,
            solver: SolverSettings::default(),
            epsilon: None,
            perturbation,
        };
        cfg.auto_record_every();
        cfg
    }
}

impl FromStr for Preset {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            ExperimentError::Config(format!("unknown preset `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Runs `k = 0, …, count − 1` with `k · scale` added to the second component of `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub scale: f64,
    pub count: usize,
}

impl Perturbation {
    pub fn offsets(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.count).map(move |k| (k, k as f64 * self.scale))
    }
}

/// Parses `SCALE:COUNT`, optionally written `k*SCALE:COUNT`.
impl FromStr for Perturbation {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Config(format!("perturbation `{s}` is not of the form k*SCALE:COUNT"));
        let (scale, count) = s.split_once(':').ok_or_else(bad)?;
        let scale = scale.trim().strip_prefix("k*").unwrap_or(scale.trim());
        Ok(Self {
            scale: scale.parse().map_err(|_| bad())?,
            count: count.trim().parse().map_err(|_| bad())?,
        })
    }
}

fn one() -> u64 {
    1
}

/// Everything needed to reproduce one run (or one perturbed ensemble).
///
/// `u0` is the spatial momentum; the time component is put on the mass shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: Field,
    pub method: Method,
    pub h: f64,
    pub tau_end: f64,
    pub x0: Vec3,
    pub u0: Vec3,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Small-field scaling `φ → ε²φ`, `A → εA`, `u0 → εu0` with the step
    /// and horizon measured in the rescaled time `ετ`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let config = |msg: String| Err(ExperimentError::Config(msg));
        self.field.validate().map_err(setup_error)?;
        if !(self.h.is_finite() && self.h > 0.0) {
            return config(format!("h must be positive, got {}", self.h));
        }
        if !(self.tau_end.is_finite() && self.tau_end > 0.0) {
            return config(format!("tau_end must be positive, got {}", self.tau_end));
        }
        if self.record_every < 1 {
            return config("record_every must be at least 1".into());
        }
        if !self.x0.iter().chain(self.u0.iter()).all(|v| v.is_finite()) {
            return config("initial data must be finite".into());
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps <= 0.5) {
                return config(format!("epsilon must lie in (0, 0.5], got {eps}"));
            }
            if !self.method.is_relativistic() {
                return config(format!("epsilon scaling applies to relativistic methods, not {}", self.method));
            }
        }
        if let Some(p) = &self.perturbation {
            if p.count < 1 || !p.scale.is_finite() {
                return config("perturbation needs a finite scale and count >= 1".into());
            }
        }
        self.solver.validate().map_err(setup_error)?;
        self.steps().map(|_| ())
    }

    pub fn steps(&self) -> Result<u64, ExperimentError> {
        step_count(self.tau_end, self.h).map_err(setup_error)
    }

    /// Pick `record_every` so that the run writes about ten thousand rows.
    pub fn auto_record_every(&mut self) {
        if let Ok(n) = self.steps() {
            self.record_every = n.div_ceil(PRESET_ROWS).max(1);
        }
    }

    /// Number of rows a run writes: `⌈N / record_every⌉ + 1`.
    pub fn row_count(&self) -> Result<u64, ExperimentError> {
        Ok(self.steps()?.div_ceil(self.record_every.max(1)) + 1)
    }

    fn noether_generator(&self) -> Option<LorentzGenerator> {
        matches!(self.field, Field::Builtin(BuiltinField::Axisymmetric)).then(LorentzGenerator::rotation_x3)
    }
}

/// One CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub n: u64,
    pub tau: f64,
    pub t: f64,
    pub x: Vec3,
    pub gamma: f64,
    pub u: Vec3,
    /// `H(xⁿ, γⁿ)` at grid values; `½|vⁿ|² + φ(xⁿ)` for the non-relativistic methods.
    pub energy: f64,
    /// `(H − H⁰)/H⁰`, or `H − H⁰` when `H⁰ = 0`.
    pub energy_rel_err: f64,
    /// `½uᵀMu` at `u^{n+1/2}`; NaN for the non-relativistic methods.
    pub mass_shell: f64,
    pub discrete_energy: Option<f64>,
    pub noether: Option<f64>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryRecord {
    pub fn to_fields(&self) -> [String; 15] {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            self.n.to_string(),
            fmt_f64(self.tau),
            fmt_f64(self.t),
            fmt_f64(self.x[0]),
            fmt_f64(self.x[1]),
            fmt_f64(self.x[2]),
            fmt_f64(self.gamma),
            fmt_f64(self.u[0]),
            fmt_f64(self.u[1]),
            fmt_f64(self.u[2]),
            fmt_f64(self.energy),
            fmt_f64(self.energy_rel_err),
            fmt_f64(self.mass_shell),
            opt(self.discrete_energy),
            opt(self.noether),
        ]
    }

    pub fn from_fields(fields: &csv::StringRecord) -> Result<Self, String> {
        if fields.len() != CSV_HEADER.len() {
            return Err(format!("expected {} fields, found {}", CSV_HEADER.len(), fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse()
                .map_err(|_| format!("column {}: cannot parse `{}`", CSV_HEADER[i], &fields[i]))
        };
        let opt = |i: usize| -> Result<Option<f64>, String> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        Ok(Self {
            n: fields[0]
                .parse()
                .map_err(|_| format!("column n: cannot parse `{}`", &fields[0]))?,
            tau: num(1)?,
            t: num(2)?,
            x: [num(3)?, num(4)?, num(5)?],
            gamma: num(6)?,
            u: [num(7)?, num(8)?, num(9)?],
            energy: num(10)?,
            energy_rel_err: num(11)?,
            mass_shell: num(12)?,
            discrete_energy: opt(13)?,
            noether: opt(14)?,
        })
    }
}

/// Drift statistics over a sequence of records, measured against the first row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordStats {
    pub rows: u64,
    pub final_tau: f64,
    pub max_abs_energy_rel_err: f64,
    pub final_energy_rel_err: f64,
    /// `max |𝓗 − 𝓗⁰| / |𝓗⁰|`; absent for the non-relativistic methods.
    pub max_mass_shell_drift: Option<f64>,
    pub max_discrete_energy_drift: Option<f64>,
    pub max_noether_drift: Option<f64>,
}

fn relative(v: f64, v0: f64) -> f64 {
    if v0 == 0.0 {
        v - v0
    } else {
        (v - v0) / v0
    }
}

#[derive(Clone, Debug, Default)]
struct StatsAccumulator {
    first: Option<TrajectoryRecord>,
    last: Option<TrajectoryRecord>,
    rows: u64,
    energy: f64,
    mass_shell: Option<f64>,
    discrete_energy: Option<f64>,
    noether: Option<f64>,
}

impl StatsAccumulator {
    fn push(&mut self, r: &TrajectoryRecord) {
        let first = *self.first.get_or_insert(*r);
        let drift = |acc: &mut Option<f64>, v: Option<f64>, v0: Option<f64>| {
            if let (Some(v), Some(v0)) = (v, v0) {
                let d = relative(v, v0).abs();
                *acc = Some(acc.map_or(d, |a: f64| a.max(d)));
            }
        };
        self.energy = self.energy.max(r.energy_rel_err.abs());
        let ms = |v: f64| (!v.is_nan()).then_some(v);
        drift(&mut self.mass_shell, ms(r.mass_shell), ms(first.mass_shell));
        drift(&mut self.discrete_energy, r.discrete_energy, first.discrete_energy);
        drift(&mut self.noether, r.noether, first.noether);
        self.rows += 1;
        self.last = Some(*r);
    }

    fn finish(&self) -> Option<RecordStats> {
        let last = self.last?;
        Some(RecordStats {
            rows: self.rows,
            final_tau: last.tau,
            max_abs_energy_rel_err: self.energy,
            final_energy_rel_err: last.energy_rel_err,
            max_mass_shell_drift: self.mass_shell,
            max_discrete_energy_drift: self.discrete_energy,
            max_noether_drift: self.noether,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub total: u64,
    pub max: usize,
    pub mean: f64,
}

/// Result of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub h: f64,
    pub steps: u64,
    pub x0: Vec3,
    pub output: Option<PathBuf>,
    pub records: RecordStats,
    pub solver: IterationStats,
    pub wall_time_s: f64,
}

/// Streams records to an optional CSV file and accumulates statistics.
struct RecordSink {
    writer: Option<(PathBuf, csv::Writer<BufWriter<File>>)>,
    stats: StatsAccumulator,
}

impl RecordSink {
    fn open(path: Option<&Path>) -> Result<Self, ExperimentError> {
        let writer = match path {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
                }
                let file = File::create(path).map_err(|e| ExperimentError::io(path, e))?;
                let mut w = csv::Writer::from_writer(BufWriter::new(file));
                w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
                Some((path.to_path_buf(), w))
            }
            None => None,
        };
        Ok(Self {
            writer,
            stats: StatsAccumulator::default(),
        })
    }

    fn push(&mut self, r: &TrajectoryRecord) -> Result<(), ExperimentError> {
        if let Some((path, w)) = &mut self.writer {
            w.write_record(r.to_fields()).map_err(|e| csv_error(path, e))?;
        }
        self.stats.push(r);
        Ok(())
    }

    fn close(self) -> Result<RecordStats, ExperimentError> {
        if let Some((path, mut w)) = self.writer {
            w.flush().map_err(|e| ExperimentError::io(&path, e))?;
        }
        Ok(self.stats.finish().expect("a run records at least the initial row"))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> ExperimentError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ExperimentError::io(path, io),
        other => ExperimentError::records(path, format!("{other:?}")),
    }
}

/// Builds records from grid points of one run.
struct Recorder<'a> {
    model: &'a (dyn FieldModel + Sync),
    relativistic: bool,
    generator: Option<LorentzGenerator>,
    energy0: f64,
}

impl<'a> Recorder<'a> {
    fn energy(&self, g: &GridPoint) -> f64 {
        if self.relativistic {
            diagnostics::energy(self.model, g.x.x, g.u.gamma)
        } else {
            0.5 * v3::dot(g.u.u, g.u.u) + self.model.phi(g.x.x)
        }
    }

    fn record(&self, g: &GridPoint) -> TrajectoryRecord {
        let energy = self.energy(g);
        TrajectoryRecord {
            n: g.n,
            tau: g.tau,
            t: g.x.t,
            x: g.x.x,
            gamma: g.u.gamma,
            u: g.u.u,
            energy,
            energy_rel_err: relative(energy, self.energy0),
            mass_shell: if self.relativistic { mass_shell(g.u_next) } else { f64::NAN },
            discrete_energy: g.discrete_energy,
            noether: self.generator.as_ref().map(|l| noether_from_momentum(&g.p, &g.x, l)),
        }
    }
}

/// Integrates `cfg` from `x0` (ignoring any perturbation list) and writes `out`.
fn run_single(cfg: &ExperimentConfig, x0: Vec3, out: Option<&Path>) -> Result<Summary, ExperimentError> {
    let started = Instant::now();
    let steps = cfg.steps()?;
    let every = cfg.record_every;

    let scaled;
    let (model, h, u0): (&(dyn FieldModel + Sync), f64, Vec3) = match cfg.epsilon {
        Some(eps) => {
            scaled = ScaledField {
                inner: cfg.field.clone(),
                epsilon: eps,
            };
            (&scaled, cfg.h / eps, v3::scale(eps, cfg.u0))
        }
        None => (&cfg.field, cfg.h, cfg.u0),
    };

    let x0 = Position4::new(0.0, x0);
    let u0 = Velocity4::on_shell(u0);
    let mut prop = Propagator::new(model, cfg.method, h, cfg.solver, x0, u0).map_err(setup_error)?;
    let initial = prop.initial();
    let mut recorder = Recorder {
        model,
        relativistic: cfg.method.is_relativistic(),
        generator: cfg.noether_generator(),
        energy0: 0.0,
    };
    recorder.energy0 = recorder.energy(&initial);

    let mut sink = RecordSink::open(out)?;
    sink.push(&recorder.record(&initial))?;
    let mut iterations = IterationStats {
        total: 0,
        max: 0,
        mean: 0.0,
    };
    for n in 1..=steps {
        let g = prop.advance().map_err(|source| ExperimentError::Solver { step: n, source })?;
        debug_assert_eq!(g.n, n);
        iterations.total += g.iterations as u64;
        iterations.max = iterations.max.max(g.iterations);
        if n % every == 0 || n == steps {
            sink.push(&recorder.record(&g))?;
        }
    }
    iterations.mean = iterations.total as f64 / steps as f64;
    let records = sink.close()?;

    Ok(Summary {
        method: cfg.method,
        h: cfg.h,
        steps,
        x0: x0.x,
        output: out.map(Path::to_path_buf),
        records,
        solver: iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// `dir/name.csv` → `dir/name_k{k}.csv`.
pub fn perturbed_path(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_k{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_k{k}"),
    };
    path.with_file_name(name)
}

/// Runs the configuration and returns one summary per trajectory.
///
/// With a perturbation list the perturbed trajectories run on separate
/// threads, each writing its own file (see [`perturbed_path`]).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Summary>, ExperimentError> {
    cfg.validate()?;
    let Some(perturbation) = cfg.perturbation else {
        return Ok(vec![run_single(cfg, cfg.x0, cfg.out.as_deref())?]);
    };
    let jobs: Vec<(Vec3, Option<PathBuf>)> = perturbation
        .offsets()
        .map(|(k, dx)| {
            let mut x0 = cfg.x0;
            x0[1] += dx;
            (x0, cfg.out.as_deref().map(|p| perturbed_path(p, k)))
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(x0, out)| scope.spawn(move || run_single(cfg, *x0, out.as_deref())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>, ExperimentError> {
    let file = File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() {
        return Err(ExperimentError::records(path, "file is empty"));
    }
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        let found: Vec<_> = header.iter().collect();
        return Err(ExperimentError::records(
            path,
            format!("header mismatch: expected `{}`, found `{}`", CSV_HEADER.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, fields) in reader.records().enumerate() {
        let fields = fields.map_err(|e| csv_error(path, e))?;
        let row = TrajectoryRecord::from_fields(&fields)
            .map_err(|msg| ExperimentError::records(path, format!("row {}: {msg}", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ExperimentError::records(path, "no records"));
    }
    Ok(rows)
}

/// Recomputes [`RecordStats`] from a trajectory file.
pub fn summarize_records(path: &Path) -> Result<RecordStats, ExperimentError> {
    let mut acc = StatsAccumulator::default();
    for r in read_records(path)? {
        acc.push(&r);
    }
    Ok(acc.finish().expect("read_records rejects empty files"))
}

/// Settings for the non-relativistic limit comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitStudyConfig {
    pub field: Field,
    pub x0: Vec3,
    /// Rescaled momentum `ũ0`; the relativistic run starts from `ε ũ0`.
    pub u0: Vec3,
    /// Step in the rescaled time `ετ`.
    pub h: f64,
    pub tau_end: f64,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub epsilon: f64,
    /// `maxₙ ‖xⁿ_LF − xⁿ_Boris‖∞` over the spatial positions.
    pub max_difference: f64,
}

/// Compares the explicit leapfrog method on the ε-scaled relativistic problem
/// with the Boris method on the limit problem, grid point by grid point.
///
/// The relativistic run uses step `h/ε` in proper time, which is step `h` in
/// the rescaled time. `ε = 0` is the limit itself and reports zero.
pub fn run_limit_study(cfg: &LimitStudyConfig) -> Result<Vec<LimitRow>, ExperimentError> {
    cfg.field.validate().map_err(setup_error)?;
    if cfg.epsilons.is_empty() {
        return Err(ExperimentError::Config("no epsilon values given".into()));
    }
    if let Some(eps) = cfg.epsilons.iter().find(|e| !(0.0..=0.5).contains(*e)) {
        return Err(ExperimentError::Config(format!("epsilon must lie in [0, 0.5], got {eps}")));
    }
    let steps = step_count(cfg.tau_end, cfg.h).map_err(setup_error)?;
    let x0 = Position4::new(0.0, cfg.x0);

    let mut boris = Propagator::new(
        &cfg.field,
        Method::Boris,
        cfg.h,
        cfg.solver,
        x0,
        Velocity4::new(1.0, cfg.u0),
    )
    .map_err(setup_error)?;
    let mut limit = Vec::with_capacity(steps as usize + 1);
    limit.push(boris.initial().x.x);
    for n in 1..=steps {
        let g = boris.advance().map_err(|source| ExperimentError::Solver { step: n, source })?;
        limit.push(g.x.x);
    }

    let compare = |eps: f64| -> Result<LimitRow, ExperimentError> {
        if eps == 0.0 {
            return Ok(LimitRow {
                epsilon: eps,
                max_difference: 0.0,
            });
        }
        let model = ScaledField {
            inner: &cfg.field,
            epsilon: eps,
        };
        let u0 = Velocity4::on_shell(v3::scale(eps, cfg.u0));
        let mut lf = Propagator::new(&model, Method::Explicit, cfg.h / eps, cfg.solver, x0, u0).map_err(setup_error)?;
        let mut worst: f64 = 0.0;
        for (n, xb) in limit.iter().enumerate().skip(1) {
            let g = lf.advance().map_err(|source| ExperimentError::Solver {
                step: n as u64,
                source,
            })?;
            worst = worst.max(v3::norm_inf(v3::sub(g.x.x, *xb)));
        }
        Ok(LimitRow {
            epsilon: eps,
            max_difference: worst,
        })
    };

    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.epsilons.iter().map(|&eps| scope.spawn(move || compare(eps))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("limit-study thread panicked"))
            .collect()
    })
}

/// Which part of a trajectory file to turn into a plot series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureWindow {
    /// Envelope constant `c` in `±c h²`.
    pub c: f64,
    /// Keep every `stride`-th row of the window.
    pub stride: usize,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub h: f64,
    pub c: f64,
    /// `c h²`
    pub envelope: f64,
    pub tau: Vec<f64>,
    pub energy_rel_err: Vec<f64>,
}

impl FigureData {
    /// Writes `tau,energy_rel_err,lower,upper`.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        let file = File::create(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["tau", "energy_rel_err", "lower", "upper"])
            .map_err(|e| csv_error(path, e))?;
        for (tau, err) in self.tau.iter().zip(&self.energy_rel_err) {
            w.write_record([fmt_f64(*tau), fmt_f64(*err), fmt_f64(-self.envelope), fmt_f64(self.envelope)])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| ExperimentError::io(path, e))
    }
}

/// Extracts a subsampled energy-error series and its `±c h²` envelope.
///
/// The step size is recovered from the records as `τ/n` of the last row.
pub fn emit_figure_data(path: &Path, window: &FigureWindow) -> Result<FigureData, ExperimentError> {
    if !(window.c.is_finite() && window.c > 0.0) || window.stride < 1 {
        return Err(ExperimentError::Config("figure window needs c > 0 and stride >= 1".into()));
    }
    let rows = read_records(path)?;
    let last = rows.last().expect("read_records rejects empty files");
    if last.n == 0 {
        return Err(ExperimentError::records(path, "need at least one step to infer h"));
    }
    let h = last.tau / last.n as f64;
    let lo = window.tau_min.unwrap_or(f64::NEG_INFINITY);
    let hi = window.tau_max.unwrap_or(f64::INFINITY);
    let (tau, energy_rel_err) = rows
        .iter()
        .filter(|r| (lo..=hi).contains(&r.tau))
        .step_by(window.stride)
        .map(|r| (r.tau, r.energy_rel_err))
        .unzip();
    Ok(FigureData {
        h,
        c: window.c,
        envelope: window.c * h * h,
        tau,
        energy_rel_err,
    })
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(CONVERGENCE_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([fmt_f64(r.h), fmt_f64(r.error), fmt_f64(r.observed_order)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(mut out: impl Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: Method) -> ExperimentConfig {
        let mut cfg = Preset::Example1.config(method);
        cfg.h = 0.02;
        cfg.tau_end = 1.0;
        cfg.record_every = 1;
        cfg
    }

    #[test]
    fn presets_parse_and_validate() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.config(Method::Explicit).validate().unwrap();
        }
        assert!("example4".parse::<Preset>().is_err());
        let ex3 = Preset::Example3.config(Method::Explicit);
        assert_eq!(ex3.perturbation.unwrap().count, 5);
        assert!(ex3.row_count().unwrap() <= PRESET_ROWS + 1);
    }

    #[test]
    fn zero_step_is_a_config_error() {
        let mut cfg = Preset::Example1.config(Method::Explicit);
        cfg.h = 0.0;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, ExperimentError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn other_invalid_configs() {
        let base = small(Method::Explicit);
        let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.tau_end = -1.0),
            Box::new(|c| c.record_every = 0),
            Box::new(|c| c.x0[0] = f64::NAN),
            Box::new(|c| c.epsilon = Some(0.7)),
            Box::new(|c| c.h = 10.0),
            Box::new(|c| c.solver.tol = 0.0),
        ];
        for f in cases {
            let mut cfg = base.clone();
            f(&mut cfg);
            assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Config(_))), "{cfg:?}");
        }
        let mut cfg = small(Method::Boris);
        cfg.epsilon = Some(0.1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn perturbation_syntax() {
        let p: Perturbation = "k*1e-15:5".parse().unwrap();
        assert_eq!(p, Perturbation { scale: 1e-15, count: 5 });
        assert_eq!("2e-15:3".parse::<Perturbation>().unwrap().count, 3);
        for bad in ["1e-15", "k*x:5", "1e-15:-1"] {
            assert!(bad.parse::<Perturbation>().is_err());
        }
        let offsets: Vec<_> = p.offsets().map(|(_, d)| d).collect();
        assert_eq!(offsets[0], 0.0);
        assert_eq!(offsets[4], 4e-15);
    }

    #[test]
    fn perturbed_paths() {
        assert_eq!(perturbed_path(Path::new("out/run.csv"), 3), PathBuf::from("out/run_k3.csv"));
        assert_eq!(perturbed_path(Path::new("run"), 0), PathBuf::from("run_k0"));
    }

    #[test]
    fn record_fields_round_trip() {
        let r = TrajectoryRecord {
            n: 7,
            tau: 0.1 + 0.2,
            t: 1.0 / 3.0,
            x: [f64::MIN_POSITIVE, -1e300, 0.0],
            gamma: 1.000_000_000_000_000_2,
            u: [1e-17, -0.0, 3.0],
            energy: std::f64::consts::PI,
            energy_rel_err: -1.234e-9,
            mass_shell: -0.5,
            discrete_energy: None,
            noether: Some(2.5),
        };
        let fields = csv::StringRecord::from(r.to_fields().to_vec());
        let back = TrajectoryRecord::from_fields(&fields).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.u[1].to_bits(), (-0.0_f64).to_bits());
    }

    #[test]
    fn nonrelativistic_rows_have_nan_mass_shell() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Method::Boris);
        cfg.out = Some(dir.path().join("b.csv"));
        let s = run_experiment(&cfg).unwrap().remove(0);
        assert_eq!(s.records.max_mass_shell_drift, None);
        let rows = read_records(cfg.out.as_ref().unwrap()).unwrap();
        assert!(rows.iter().all(|r| r.mass_shell.is_nan() && r.gamma == 1.0 && r.t == r.tau));
        assert_eq!(summarize_records(cfg.out.as_ref().unwrap()).unwrap(), s.records);
    }

    #[test]
    fn first_row_uses_supplied_initial_data() {
        let cfg = small(Method::Explicit);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        run_single(&cfg, cfg.x0, Some(&path)).unwrap();
        let rows = read_records(&path).unwrap();
        let u0 = Velocity4::on_shell(cfg.u0);
        assert_eq!(rows[0].n, 0);
        assert_eq!(rows[0].x, cfg.x0);
        assert_eq!(rows[0].u, cfg.u0);
        assert_eq!(rows[0].gamma, u0.gamma);
        assert_eq!(rows[0].energy_rel_err, 0.0);
        assert_eq!(rows.len(), 51);
        assert!(rows.windows(2).all(|w| w[1].tau > w[0].tau));
    }

    #[test]
    fn noether_column_only_for_axisymmetric_field() {
        let mut cfg = Preset::Axisym.config(Method::Variational);
        cfg.tau_end = 0.5;
        cfg.record_every = 1;
        let s = run_experiment(&cfg).unwrap().remove(0);
        assert!(s.records.max_noether_drift.unwrap() < 1e-12);
        assert!(s.records.max_discrete_energy_drift.unwrap() < 1e-12);
        let s = run_experiment(&small(Method::Variational)).unwrap().remove(0);
        assert_eq!(s.records.max_noether_drift, None);
    }

    #[test]
    fn solver_failure_reports_step() {
        let mut cfg = small(Method::DgradAvf);
        cfg.solver = SolverSettings {
            tol: 1e-300,
            max_iter: 1,
            ..SolverSettings::default()
        };
        match run_experiment(&cfg) {
            Err(e @ ExperimentError::Solver { step: 1, .. }) => assert_eq!(e.exit_code(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn limit_study_epsilon_zero_and_range() {
        let cfg = LimitStudyConfig {
            field: Field::Builtin(BuiltinField::Example3),
            x0: [0.0, 1.0, 0.1],
            u0: [0.09, 0.55, 0.3],
            h: 0.01,
            tau_end: 0.5,
            epsilons: vec![0.0, 0.1],
            solver: SolverSettings::default(),
        };
        let rows = run_limit_study(&cfg).unwrap();
        assert_eq!(rows[0].max_difference, 0.0);
        assert!(rows[1].max_difference > 0.0 && rows[1].max_difference < 1e-2);
        let mut bad = cfg.clone();
        bad.epsilons = vec![0.6];
        assert!(run_limit_study(&bad).is_err());
    }

    #[test]
    fn figure_window_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fig.csv");
        let mut cfg = small(Method::Explicit);
        cfg.out = Some(path.clone());
        run_experiment(&cfg).unwrap();
        let window = FigureWindow {
            c: 2.0,
            stride: 5,
            tau_min: Some(0.2),
            tau_max: None,
        };
        let fig = emit_figure_data(&path, &window).unwrap();
        assert!((fig.h - 0.02).abs() < 1e-15);
        assert!((fig.envelope - 8e-4).abs() < 1e-18);
        assert!(fig.tau.iter().all(|&t| t >= 0.2));
        assert_eq!(fig.tau.len(), 9);

        assert!(matches!(
            emit_figure_data(&dir.path().join("missing.csv"), &window),
            Err(ExperimentError::Io { .. })
        ));
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(emit_figure_data(&empty, &window), Err(ExperimentError::Records { .. })));
        let header_only = dir.path().join("header.csv");
        std::fs::write(&header_only, CSV_HEADER.join(",") + "\n").unwrap();
        assert!(matches!(emit_figure_data(&header_only, &window), Err(ExperimentError::Records { .. })));
        let wrong = dir.path().join("wrong.csv");
        std::fs::write(&wrong, "n,tau\n0,0\n").unwrap();
        let err = emit_figure_data(&wrong, &window).unwrap_err();
        assert!(err.to_string().contains("header mismatch"), "{err}");
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = small(Method::DgradMidpoint);
        cfg.field = serde_json::from_str(r#"{"phi": [{"coef": 1.0, "pow": [2, 0, 0]}]}"#).unwrap();
        cfg.epsilon = Some(0.1);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let preset_json = r#"{"field": "example2", "method": "explicit", "h": 0.01, "tau_end": 1.0,
            "x0": [0, 1, 0.1], "u0": [0.09, 0.55, 0.3]}"#;
        let parsed = ExperimentConfig::from_json(preset_json).unwrap();
        assert_eq!(parsed.field, Field::Builtin(BuiltinField::Example2));
        assert_eq!(parsed.record_every, 1);
        assert!(ExperimentConfig::from_json(r#"{"field": "example2", "bogus": 1}"#).is_err());
    }
}
