//! Run configurations, initial data, named presets and parameter sweeps.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{run_checks, CheckName, CheckReport, CheckSettings, FieldContext};
use crate::error::{Error, Result};
use crate::functionals::{estimate_well_depth_refined, evaluate, gaussian, periodic_gap, separable_mode};
use crate::grid::{ConeGrid, DiscreteOperators, Field, ProblemParams, TipBc};
use crate::io::{self, Manifest, SnapshotHeader};
use crate::oracle;
use crate::stepper::{self, Outcome, StepperConfig, Trajectory};

/// Trials and descent steps behind the reported `d_est`.
const WELL_TRIALS: usize = 24;
const WELL_REFINE_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub depth: f64,
    #[serde(rename = "Ns")]
    pub ns: usize,
    #[serde(rename = "Ntheta")]
    pub ntheta: usize,
    pub tip_bc: TipBc,
}

impl GridConfig {
    pub fn build(&self) -> Result<ConeGrid> {
        ConeGrid::new(self.depth, self.ns, self.ntheta, self.tip_bc)
    }
}

fn two() -> u32 {
    2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub p: f64,
    #[serde(default = "two")]
    pub n: u32,
    pub nonlocal_on: bool,
    #[serde(default = "yes")]
    pub source_on: bool,
}

impl ParamsConfig {
    pub fn build(&self) -> Result<ProblemParams> {
        let params = ProblemParams { p: self.p, n: self.n, nonlocal_on: self.nonlocal_on, source_on: self.source_on };
        params.require_planar()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Eigenmode,
    GaussianBump,
    Dipole,
    FromSnapshot,
}

/// Description of `u0`. `center` is `(s, theta)`; `mode` is `(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl InitialSpec {
    pub fn new(kind: InitialKind, amplitude: f64) -> Self {
        InitialSpec { kind, amplitude, center: None, width: None, seed: None, mode: None, path: None }
    }

    fn validate(&self, grid: &GridConfig) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be finite and nonzero, got {}",
                self.amplitude
            )));
        }
        if let Some(w) = self.width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("width must be positive, got {w}")));
            }
        }
        if let Some([s, th]) = self.center {
            if !(s.is_finite() && th.is_finite()) {
                return Err(Error::InvalidParameter("center must be finite".into()));
            }
        }
        match self.kind {
            InitialKind::Dipole if !grid.ntheta.is_multiple_of(2) => {
                Err(Error::InvalidParameter(format!("dipole data needs an even Ntheta, got {}", grid.ntheta)))
            }
            InitialKind::Eigenmode if grid.tip_bc == TipBc::DirichletTip && self.mode.is_some_and(|m| m[0] == 0) => {
                Err(Error::InvalidParameter("DirichletTip eigenmodes are numbered from k = 1".into()))
            }
            InitialKind::FromSnapshot if self.path.is_none() => {
                Err(Error::InvalidParameter("from_snapshot needs a path".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub names: Vec<CheckName>,
    #[serde(default)]
    pub tolerances: CheckSettings,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig { names: CheckName::ALL.to_vec(), tolerances: CheckSettings::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Write every this many steps' state as a snapshot file (0: only the final state).
    #[serde(default)]
    pub snapshot_every: usize,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: None, snapshot_every: 0, formats: vec![OutputFormat::Csv, OutputFormat::Jsonl] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub stepper: StepperConfig,
    pub initial: InitialSpec,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("config serialization: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Validate every block without allocating grid-sized storage.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.depth > 0.0 && g.depth.is_finite()) {
            return Err(Error::InvalidParameter(format!("L must be positive, got {}", g.depth)));
        }
        if g.ns < 4 || g.ntheta < 4 {
            return Err(Error::UndersizedGrid(format!("Ns = {}, Ntheta = {} (need >= 4)", g.ns, g.ntheta)));
        }
        self.params.build()?;
        self.stepper.validate()?;
        self.initial.validate(g)?;
        self.checks.tolerances.validate()?;
        Ok(())
    }

    /// Stepper cadence that also covers the snapshots requested for output.
    fn capture_every(&self) -> usize {
        match (self.stepper.snapshot_every, self.output.snapshot_every) {
            (0, o) => o,
            (s, 0) => s,
            (s, o) => gcd(s, o),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Build `u0` on `grid`. The amplitude multiplies the shape last.
pub fn make_initial(grid: &ConeGrid, spec: &InitialSpec) -> Result<Field> {
    if !(spec.amplitude.is_finite() && spec.amplitude != 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude must be finite and nonzero, got {}", spec.amplitude)));
    }
    let depth = grid.depth();
    let width = spec.width.unwrap_or(0.5);
    let [sc, tc] = match (spec.center, spec.seed) {
        (Some(c), _) => c,
        (None, Some(seed)) if spec.kind == InitialKind::GaussianBump => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            [-rng.gen_range(0.2 * depth..0.8 * depth), rng.gen_range(0.0..2.0 * PI)]
        }
        (None, _) => [-depth / 2.0, PI / 2.0],
    };
    let shape = match spec.kind {
        InitialKind::Eigenmode => {
            let [k, m] = spec.mode.unwrap_or([1, 0]);
            if grid.tip_bc() == TipBc::DirichletTip && k == 0 {
                return Err(Error::InvalidParameter("DirichletTip eigenmodes are numbered from k = 1".into()));
            }
            let tip = grid.tip_bc();
            Field::from_fn(grid, |s, th| separable_mode(tip, depth, k, m, s, th))
        }
        InitialKind::GaussianBump => Field::from_fn(grid, |s, th| gaussian(s - sc, periodic_gap(th, tc), width)),
        InitialKind::Dipole => dipole(grid, sc, tc, width)?,
        InitialKind::FromSnapshot => {
            let path =
                spec.path.as_ref().ok_or_else(|| Error::InvalidParameter("from_snapshot needs a path".into()))?;
            let (header, values) = io::read_snapshot(BufReader::new(fs::File::open(path)?))?;
            if !header.matches(grid) {
                return Err(Error::GridMismatch);
            }
            Field::new(grid, values)?
        }
    };
    let u = shape.scaled(spec.amplitude);
    if u.is_zero() {
        return Err(Error::Degenerate("initial data vanishes on every node".into()));
    }
    Ok(u)
}

/// `b(theta - c) - b(theta - c - pi)` on the first half circle and its
/// negative on the second, so `u(theta + pi) = -u(theta)` node by node.
fn dipole(grid: &ConeGrid, sc: f64, tc: f64, width: f64) -> Result<Field> {
    let n = grid.ntheta();
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("dipole data needs an even Ntheta, got {n}")));
    }
    let mut values = vec![0.0; grid.len()];
    for r in 0..grid.active_rows() {
        for j in 0..n / 2 {
            let k = grid.index(r, j);
            let (s, th) = grid.coords(k);
            let bump = |c: f64| gaussian(s - sc, periodic_gap(th, c), width);
            let v = bump(tc) - bump(tc + PI);
            values[k] = v;
            values[grid.index(r, j + n / 2)] = -v;
        }
    }
    Field::new(grid, values)
}

/// Functionals of `u0` and the well depth they are compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialReport {
    pub j0: f64,
    pub i0: f64,
    pub s0: f64,
    pub h2_0: f64,
    /// Trial-family bound on the well depth, from the DirichletTip grid of
    /// the same shape. Absent when the source is off.
    pub d_est: Option<f64>,
    pub above_well: Option<bool>,
}

pub fn describe_initial(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    u0: &Field,
    seed: u64,
) -> Result<InitialReport> {
    let r = evaluate(grid, ops, u0, params)?;
    let d_est = if params.source_on {
        // near-constant fields drive the Neumann infimum to zero, so the well
        // depth is measured with the tip pinned
        let companion = ConeGrid::new(grid.depth(), grid.ns(), grid.ntheta(), TipBc::DirichletTip)?;
        let cops = DiscreteOperators::assemble(&companion);
        Some(estimate_well_depth_refined(&companion, &cops, params, WELL_TRIALS, seed, WELL_REFINE_STEPS)?.d_est)
    } else {
        None
    };
    Ok(InitialReport { j0: r.j, i0: r.i, s0: r.s, h2_0: r.h2, d_est, above_well: d_est.map(|d| r.j > d) })
}

/// A completed run with its checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: RunConfig,
    pub grid: ConeGrid,
    pub initial: InitialReport,
    pub trajectory: Trajectory,
    pub checks: Vec<CheckReport>,
}

impl RunResult {
    /// Whether any gating check failed.
    pub fn any_failure(&self) -> bool {
        self.checks.iter().any(CheckReport::is_failure)
    }
}

/// Run a configuration and its checks in memory.
pub fn execute(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let grid = config.grid.build()?;
    let params = config.params.build()?;
    let ops = DiscreteOperators::assemble(&grid);
    let u0 = make_initial(&grid, &config.initial)?;
    let initial = describe_initial(&grid, &ops, &params, &u0, config.initial.seed.unwrap_or(0))?;
    let mut stepper_cfg = config.stepper;
    stepper_cfg.snapshot_every = config.capture_every();
    let trajectory = stepper::run(&grid, &ops, &u0, &params, &stepper_cfg)?;
    let ctx = FieldContext { grid: &grid, ops: &ops, params: &params };
    let checks = run_checks(&trajectory, &config.checks.names, &config.checks.tolerances, Some(&ctx));
    Ok(RunResult { config: config.clone(), grid, initial, trajectory, checks })
}

/// Write the run directory: config copy, manifest, initial report and the
/// requested formats.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["config.toml".to_string(), "initial.json".to_string(), "manifest.json".to_string()];
    fs::write(dir.join("config.toml"), result.config.to_toml()?)?;
    fs::write(
        dir.join("initial.json"),
        serde_json::to_string_pretty(&result.initial).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    let formats = &result.config.output.formats;
    if formats.contains(&OutputFormat::Csv) {
        io::write_trajectory_csv(
            BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?),
            &result.trajectory.rows,
        )?;
        files.push("trajectory.csv".into());
    }
    if formats.contains(&OutputFormat::Jsonl) {
        io::write_checks_jsonl(BufWriter::new(fs::File::create(dir.join("checks.jsonl"))?), &result.checks)?;
        files.push("checks.jsonl".into());
    }
    if formats.contains(&OutputFormat::Snapshot) {
        let sub = dir.join("snapshots");
        fs::create_dir_all(&sub)?;
        let every = result.config.output.snapshot_every;
        let grid = &result.grid;
        let periodic = result.trajectory.snapshots.iter().filter(|s| every > 0 && s.step % every == 0);
        for snap in periodic.chain(result.trajectory.final_state.iter()) {
            let name = if Some(snap) == result.trajectory.final_state.as_ref() {
                "final.snap".to_string()
            } else {
                format!("step_{:08}.snap", snap.step)
            };
            let header = SnapshotHeader::for_grid(grid, snap.t);
            io::write_snapshot(BufWriter::new(fs::File::create(sub.join(&name))?), &header, &snap.values)?;
            files.push(format!("snapshots/{name}"));
        }
    }
    let ops = DiscreteOperators::assemble(&result.grid);
    let manifest = Manifest::new(
        &result.grid,
        &ops,
        result.trajectory.outcome.to_string(),
        result.trajectory.failure.clone(),
        files,
    );
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    Ok(())
}

/// Execute, write outputs when a directory is configured, and turn a
/// solver failure into an error after the outputs are on disk.
pub fn run_config(config: &RunConfig) -> Result<RunResult> {
    let result = execute(config)?;
    if let Some(dir) = &config.output.directory {
        write_run(dir, &result)?;
    }
    if result.trajectory.outcome == Outcome::SolverFailure {
        return Err(Error::SolverFailure(result.trajectory.failure.clone().unwrap_or_default()));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    LinearDecay,
    SubcriticalGlobal,
    SubcriticalBlowup,
    HigherenergyBlowup,
    SminusDichotomySweep,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::LinearDecay,
        Preset::SubcriticalGlobal,
        Preset::SubcriticalBlowup,
        Preset::HigherenergyBlowup,
        Preset::SminusDichotomySweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::LinearDecay => "linear_decay",
            Preset::SubcriticalGlobal => "subcritical_global",
            Preset::SubcriticalBlowup => "subcritical_blowup",
            Preset::HigherenergyBlowup => "higherenergy_blowup",
            Preset::SminusDichotomySweep => "sminus_dichotomy_sweep",
        }
    }

    /// Configuration of the preset; for the sweep, the template each
    /// amplitude is substituted into.
    pub fn config(&self) -> RunConfig {
        let neumann = GridConfig { depth: 5.0, ns: 48, ntheta: 48, tip_bc: TipBc::NeumannTip };
        let nonlocal = ParamsConfig { p: 3.0, n: 2, nonlocal_on: true, source_on: true };
        let dipole = |amplitude: f64, width: f64| InitialSpec {
            center: Some([-2.5, PI / 2.0]),
            width: Some(width),
            ..InitialSpec::new(InitialKind::Dipole, amplitude)
        };
        let base = |grid, params, initial| RunConfig {
            grid,
            params,
            stepper: StepperConfig::default(),
            initial,
            checks: ChecksConfig::default(),
            output: OutputConfig::default(),
        };
        match self {
            Preset::LinearDecay => {
                let mut cfg = base(
                    GridConfig { depth: 5.0, ns: 64, ntheta: 64, tip_bc: TipBc::DirichletTip },
                    ParamsConfig { p: 3.0, n: 2, nonlocal_on: false, source_on: false },
                    InitialSpec { mode: Some([1, 0]), ..InitialSpec::new(InitialKind::Eigenmode, 1.0) },
                );
                cfg.stepper = StepperConfig { dt0: 1e-3, dt_max: 1e-3, t_end: 5.0, ..StepperConfig::default() };
                cfg
            }
            Preset::SubcriticalGlobal => base(neumann, nonlocal, dipole(0.05, 0.5)),
            Preset::SubcriticalBlowup => base(neumann, nonlocal, dipole(3.0, 1.0)),
            Preset::HigherenergyBlowup => base(neumann, nonlocal, dipole(3.0, 0.5)),
            Preset::SminusDichotomySweep => {
                let grid = GridConfig { ns: 32, ntheta: 32, ..neumann };
                base(grid, nonlocal, dipole(1.0, 0.5))
            }
        }
    }

    /// Amplitudes of the dichotomy sweep.
    pub fn sweep_values(&self) -> Option<Vec<f64>> {
        (*self == Preset::SminusDichotomySweep).then(|| (1..=20).map(|k| 0.25 * k as f64).collect())
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}`")))
    }
}

pub enum PresetOutput {
    Run(Box<RunResult>),
    Sweep(SweepResult),
}

/// Run a preset, writing under `out` when given. `seed` replaces the
/// initial-data seed.
pub fn run_preset(preset: Preset, out: Option<&Path>, seed: Option<u64>) -> Result<PresetOutput> {
    let mut cfg = preset.config();
    if seed.is_some() {
        cfg.initial.seed = seed;
    }
    match preset.sweep_values() {
        Some(values) => {
            let result = sweep(&cfg, SweepAxis::Amplitude, &values, true, out)?;
            if let Some(row) = result.rows.iter().find(|r| r.outcome == Outcome::SolverFailure) {
                return Err(Error::SolverFailure(format!("sweep value {}", row.value)));
            }
            Ok(PresetOutput::Sweep(result))
        }
        None => {
            cfg.output.directory = out.map(Path::to_path_buf);
            Ok(PresetOutput::Run(Box::new(run_config(&cfg)?)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Amplitude,
    Width,
    P,
    TEnd,
    Dt0,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Amplitude => "amplitude",
            SweepAxis::Width => "width",
            SweepAxis::P => "p",
            SweepAxis::TEnd => "t_end",
            SweepAxis::Dt0 => "dt0",
        }
    }

    pub fn apply(&self, template: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = template.clone();
        match self {
            SweepAxis::Amplitude => cfg.initial.amplitude = value,
            SweepAxis::Width => cfg.initial.width = Some(value),
            SweepAxis::P => cfg.params.p = value,
            SweepAxis::TEnd => cfg.stepper.t_end = value,
            SweepAxis::Dt0 => cfg.stepper.dt0 = value,
        }
        cfg
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::Amplitude, SweepAxis::Width, SweepAxis::P, SweepAxis::TEnd, SweepAxis::Dt0]
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Outcome,
    pub t_est: Option<f64>,
    pub j0: f64,
    pub i0: f64,
    pub s0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunResult>,
}

impl SweepResult {
    pub fn write_phase_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value,outcome,t_est,J0,I0,S0")?;
        for r in &self.rows {
            let t_est = r.t_est.map(|t| format!("{t:.16e}")).unwrap_or_default();
            writeln!(w, "{:.16e},{},{},{:.16e},{:.16e},{:.16e}", r.value, r.outcome.label(), t_est, r.j0, r.i0, r.s0)?;
        }
        Ok(())
    }
}

/// One independent run per value. Each run writes to `out/run_NNN` when
/// `out` is given, and the phase table goes to `out/phase.csv`.
pub fn sweep(
    template: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    parallel: bool,
    out: Option<&Path>,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    let configs: Vec<RunConfig> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut cfg = axis.apply(template, v);
            cfg.output.directory = out.map(|d| d.join(format!("run_{k:03}")));
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    let one = |cfg: &RunConfig| -> Result<RunResult> {
        let result = execute(cfg)?;
        if let Some(dir) = &cfg.output.directory {
            write_run(dir, &result)?;
        }
        Ok(result)
    };
    let runs: Vec<RunResult> = if parallel {
        configs.par_iter().map(one).collect::<Result<_>>()?
    } else {
        configs.iter().map(one).collect::<Result<_>>()?
    };
    let rows = values
        .iter()
        .zip(&runs)
        .map(|(&value, run)| SweepRow {
            value,
            outcome: run.trajectory.outcome,
            t_est: match run.trajectory.outcome {
                Outcome::BlowUp { t_est } => Some(t_est),
                _ => None,
            },
            j0: run.initial.j0,
            i0: run.initial.i0,
            s0: run.initial.s0,
        })
        .collect();
    let result = SweepResult { axis, rows, runs };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        result.write_phase_csv(BufWriter::new(fs::File::create(dir.join("phase.csv"))?))?;
    }
    Ok(result)
}

/// Re-run the row-based checks on a stored run directory. Runs of a
/// linear eigenmode also get an informational comparison of the fitted
/// decay rate with the closed-form rate.
pub fn recheck(dir: &Path) -> Result<(RunConfig, Trajectory, Vec<CheckReport>)> {
    let config = RunConfig::load(&dir.join("config.toml"))?;
    config.validate()?;
    let rows = io::read_trajectory_csv(BufReader::new(fs::File::open(dir.join("trajectory.csv"))?))?;
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    let grid = config.grid.build()?;
    let params = config.params.build()?;
    let ops = DiscreteOperators::assemble(&grid);
    let (mass_sha, stiff_sha) = io::operator_checksums(&ops);
    if mass_sha != manifest.mass_sha256 || stiff_sha != manifest.stiffness_sha256 {
        return Err(Error::GridMismatch);
    }
    let trajectory = Trajectory {
        meta: stepper::TrajectoryMeta {
            p: params.p,
            tip_bc: grid.tip_bc(),
            measure: grid.measure(),
            tol_i: crate::functionals::NEHARI_TOL,
        },
        rows,
        snapshots: Vec::new(),
        outcome: manifest.outcome.parse()?,
        failure: manifest.failure,
        final_state: None,
    };
    let mut checks = run_checks(&trajectory, &config.checks.names, &config.checks.tolerances, None);
    if !params.source_on && config.initial.kind == InitialKind::Eigenmode {
        let [k, m] = config.initial.mode.unwrap_or([1, 0]);
        let reference = oracle::eigen_reference(grid.depth(), grid.tip_bc(), k, m)?;
        let fitted = oracle::fitted_decay_rate(&trajectory.rows)?;
        let rel = (fitted - reference.decay_rate).abs() / reference.decay_rate.max(f64::MIN_POSITIVE);
        checks.push(CheckReport {
            name: "decay_rate_oracle".into(),
            status: crate::diagnostics::CheckStatus::Informational,
            passed: true,
            worst_violation: rel,
            location_t: trajectory.rows.last().map_or(0.0, |r| r.t),
            tolerance_used: f64::INFINITY,
            detail: format!("fitted {fitted:.10e}, closed form {:.10e}", reference.decay_rate),
        });
    }
    Ok((config, trajectory, checks))
}
