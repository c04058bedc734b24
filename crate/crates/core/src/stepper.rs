//! Semi-implicit time stepping of `M u_t + K u_t + K u = M N(u)`.
//!
//! Each step solves `(M + (1+dt) K) u+ = (M + K) u + dt M N(u)`: the
//! linear part is implicit, the (nonlocal) power source explicit. The
//! matrix is SPD and is factored once per distinct `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{evaluate_raw, NEHARI_TOL};
use crate::grid::{dot, ConeGrid, DiscreteOperators, Field, ProblemParams, TipBc};
use crate::modal::{ModalSolver, ThetaModes};

/// Magnitude beyond which the power map is treated as overflow.
pub const OVERFLOW_GUARD: f64 = 1e100;

/// Accepted steps before the step size is doubled again.
const GROWTH_STREAK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Largest accepted ratio `||u+||_inf / ||u||_inf` per step.
    pub growth_cap: f64,
    /// `H2` level at which blow-up is declared.
    pub blowup_threshold: f64,
    /// Relative residual allowed in each linear solve.
    pub linear_tol: f64,
    /// Keep a field snapshot every this many accepted steps (0: none).
    pub snapshot_every: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt0: 1e-2,
            dt_min: 1e-10,
            dt_max: 0.1,
            t_end: 10.0,
            growth_cap: 1.05,
            blowup_threshold: 1e8,
            linear_tol: 1e-10,
            snapshot_every: 0,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt0
            && self.dt0 <= self.dt_max
            && self.dt_max.is_finite()
            && self.t_end > 0.0
            && self.t_end.is_finite()
            && self.growth_cap > 1.0
            && self.blowup_threshold > 0.0
            && self.linear_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "stepper config must satisfy 0 < dt_min <= dt0 <= dt_max, t_end > 0, growth_cap > 1, \
                 blowup_threshold > 0, linear_tol > 0: {self:?}"
            )))
        }
    }
}

/// Terminal classification of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Horizon reached, never in `N-`, `H2` below its initial value and not growing.
    GlobalDecay,
    /// Horizon reached, never in `N-`.
    GlobalBounded,
    /// `H2` crossed the threshold or the step size collapsed.
    BlowUp {
        t_est: f64,
    },
    /// Horizon reached after entering `N-`.
    HorizonReached,
    SolverFailure,
}

impl Outcome {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Outcome::BlowUp { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::GlobalDecay => "GlobalDecay",
            Outcome::GlobalBounded => "GlobalBounded",
            Outcome::BlowUp { .. } => "BlowUp",
            Outcome::HorizonReached => "HorizonReached",
            Outcome::SolverFailure => "SolverFailure",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::BlowUp { t_est } => write!(f, "BlowUp({t_est:e})"),
            other => f.write_str(other.label()),
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "GlobalDecay" => Outcome::GlobalDecay,
            "GlobalBounded" => Outcome::GlobalBounded,
            "HorizonReached" => Outcome::HorizonReached,
            "SolverFailure" => Outcome::SolverFailure,
            _ => {
                let inner = s
                    .strip_prefix("BlowUp(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown outcome `{s}`")))?;
                let t_est = inner.parse().map_err(|_| Error::Parse(format!("bad blow-up time `{inner}`")))?;
                Outcome::BlowUp { t_est }
            }
        })
    }
}

/// One recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub j: f64,
    pub i: f64,
    pub s: f64,
    pub h2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

/// What the checks need to know about the run that produced the rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub p: f64,
    pub tip_bc: TipBc,
    pub measure: f64,
    pub tol_i: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub rows: Vec<Row>,
    pub snapshots: Vec<Snapshot>,
    pub outcome: Outcome,
    pub failure: Option<String>,
    /// Last accepted state; absent on trajectories read back from rows.
    pub final_state: Option<Snapshot>,
}

impl Trajectory {
    pub fn first(&self) -> Option<&Row> {
        self.rows.first()
    }
    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }
}

/// `|u|^{p-1} u`, minus its cone mean when the nonlocal term is on.
/// With the source switched off the result is zero.
pub fn nonlocal_source(grid: &ConeGrid, ops: &DiscreteOperators, u: &Field, params: &ProblemParams) -> Result<Field> {
    u.check_on(grid)?;
    let values = source_raw(ops, u.values(), params, grid.measure())?;
    Field::new(grid, values)
}

fn source_raw(ops: &DiscreteOperators, u: &[f64], params: &ProblemParams, measure: f64) -> Result<Vec<f64>> {
    if !params.source_on {
        return Ok(vec![0.0; u.len()]);
    }
    if let Some(k) = u.iter().position(|v| !(v.abs() <= OVERFLOW_GUARD)) {
        return Err(Error::SolverFailure(format!("|u| = {:e} at node {k} exceeds the overflow guard", u[k])));
    }
    let pm1 = params.p - 1.0;
    let mut g: Vec<f64> = u.iter().map(|&v| v.abs().powf(pm1) * v).collect();
    if let Some(k) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::SolverFailure(format!("power map overflowed at node {k}")));
    }
    if params.nonlocal_on {
        let mean = ops.integrate_raw(&g) / measure;
        g.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(g)
}

/// Reusable stepping state for one grid and parameter set.
pub struct Stepper<'a> {
    grid: &'a ConeGrid,
    ops: &'a DiscreteOperators,
    params: ProblemParams,
    modes: ThetaModes,
    solver: Option<ModalSolver>,
    linear_tol: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a ConeGrid,
        ops: &'a DiscreteOperators,
        params: &ProblemParams,
        linear_tol: f64,
    ) -> Result<Self> {
        params.require_planar()?;
        if ops.grid_id() != grid.id() {
            return Err(Error::GridMismatch);
        }
        Ok(Stepper { grid, ops, params: *params, modes: ThetaModes::new(grid.ntheta()), solver: None, linear_tol })
    }

    fn solver_for(&mut self, dt: f64) -> Result<&ModalSolver> {
        let coupling = 1.0 + dt;
        let stale = self.solver.as_ref().is_none_or(|s| s.coupling() != coupling);
        if stale {
            let solver = ModalSolver::with_modes(self.grid, coupling, self.modes.clone())
                .ok_or_else(|| Error::SolverFailure(format!("factorization failed for dt = {dt:e}")))?;
            self.solver = Some(solver);
        }
        Ok(self.solver.as_ref().expect("solver just built"))
    }

    /// Advance nodal values by one step of size `dt`.
    pub fn advance(&mut self, u: &[f64], dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let ops = self.ops;
        let source = source_raw(ops, u, &self.params, self.grid.measure())?;
        let ku = ops.apply_stiffness(u);
        let rhs: Vec<f64> =
            ops.mass().iter().zip(u).zip(&ku).zip(&source).map(|(((m, v), kv), f)| m * v + kv + dt * m * f).collect();
        let tol = self.linear_tol;
        let solver = self.solver_for(dt)?;
        let coupling = solver.coupling();
        let next = solver.solve(&rhs);

        let kx = ops.apply_stiffness(&next);
        let residual: Vec<f64> =
            ops.mass().iter().zip(&next).zip(&kx).zip(&rhs).map(|(((m, x), k), b)| m * x + coupling * k - b).collect();
        let res = dot(&residual, &residual).sqrt();
        let scale = dot(&rhs, &rhs).sqrt().max(f64::MIN_POSITIVE);
        if !(res <= tol * scale) {
            return Err(Error::SolverFailure(format!(
                "linear residual {res:e} exceeds {tol:e} * ||rhs|| = {:e}",
                tol * scale
            )));
        }
        if let Some(k) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::SolverFailure(format!("non-finite value at node {k}")));
        }
        Ok(next)
    }
}

/// One step from `u` with step size `dt`.
pub fn step(grid: &ConeGrid, ops: &DiscreteOperators, u: &Field, dt: f64, params: &ProblemParams) -> Result<Field> {
    u.check_on(grid)?;
    let mut stepper = Stepper::new(grid, ops, params, StepperConfig::default().linear_tol)?;
    let next = stepper.advance(u.values(), dt)?;
    Field::new(grid, next)
}

fn row_for(ops: &DiscreteOperators, params: &ProblemParams, step: usize, t: f64, dt: f64, u: &[f64]) -> Row {
    let r = evaluate_raw(ops, u, params, NEHARI_TOL);
    let linf = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Row { step, t, dt, j: r.j, i: r.i, s: r.s, h2: r.h2, linf }
}

/// Integrate from `u0` until the horizon, blow-up or failure.
pub fn run(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    u0: &Field,
    params: &ProblemParams,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    u0.check_on(grid)?;
    if u0.is_zero() {
        return Err(Error::Precondition("initial data must be a nontrivial function".into()));
    }
    let mut stepper = Stepper::new(grid, ops, params, cfg.linear_tol)?;
    let meta = TrajectoryMeta { p: params.p, tip_bc: grid.tip_bc(), measure: grid.measure(), tol_i: NEHARI_TOL };

    let mut u = u0.values().to_vec();
    let mut rows = vec![row_for(ops, params, 0, 0.0, 0.0, &u)];
    let mut snapshots = Vec::new();
    if cfg.snapshot_every > 0 {
        snapshots.push(Snapshot { step: 0, t: 0.0, values: u.clone() });
    }

    let mut t = 0.0;
    let mut dt = cfg.dt0;
    let mut streak = 0;
    let mut step_no = 0;
    let horizon_slack = 1e-12 * cfg.t_end;
    let mut failure = None;

    let outcome = loop {
        if t >= cfg.t_end - horizon_slack {
            break horizon_outcome(&rows, meta.tol_i);
        }
        let h = dt.min(cfg.t_end - t);
        let next = match stepper.advance(&u, h) {
            Ok(next) => next,
            Err(Error::SolverFailure(msg)) => {
                failure = Some(msg);
                break Outcome::SolverFailure;
            }
            Err(e) => return Err(e),
        };
        let linf_old = rows.last().map_or(0.0, |r| r.linf);
        let linf_new = next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if linf_old > 0.0 && linf_new > cfg.growth_cap * linf_old {
            streak = 0;
            dt = 0.5 * h;
            if dt < cfg.dt_min {
                break Outcome::BlowUp { t_est: blowup_extrapolation(&rows, params.p).unwrap_or(t) };
            }
            continue;
        }

        step_no += 1;
        t += h;
        u = next;
        let row = row_for(ops, params, step_no, t, h, &u);
        rows.push(row);
        if cfg.snapshot_every > 0 && step_no % cfg.snapshot_every == 0 {
            snapshots.push(Snapshot { step: step_no, t, values: u.clone() });
        }
        if row.h2 > cfg.blowup_threshold {
            break Outcome::BlowUp { t_est: blowup_extrapolation(&rows, params.p).unwrap_or(t) };
        }
        streak += 1;
        if streak >= GROWTH_STREAK {
            streak = 0;
            dt = (2.0 * dt).min(cfg.dt_max);
        }
    };

    let final_state = Some(Snapshot { step: step_no, t, values: u });
    Ok(Trajectory { meta, rows, snapshots, outcome, failure, final_state })
}

fn horizon_outcome(rows: &[Row], tol_i: f64) -> Outcome {
    let entered_nminus = rows.iter().any(|r| r.i < -tol_i * r.h2.max(1.0));
    if entered_nminus {
        return Outcome::HorizonReached;
    }
    let first = rows[0].h2;
    let n = rows.len();
    let last = rows[n - 1].h2;
    let settling = n < 2 || rows[n - 1].h2 <= rows[n - 2].h2;
    if last < first && settling {
        Outcome::GlobalDecay
    } else {
        Outcome::GlobalBounded
    }
}

/// Blow-up time extrapolated from the final rows.
///
/// Heuristic: assumes `H2 ~ (T - t)^{-2/(p-1)}` near blow-up, fits
/// `H2^{-(p-1)/2}` linearly in `t` over the rows within the last decade of
/// `H2`, and returns the zero of the fit (never earlier than the last row).
pub fn blowup_time_estimate(traj: &Trajectory) -> Result<f64> {
    if !traj.outcome.is_blowup() {
        return Err(Error::Precondition(format!("blow-up time requested for a {} trajectory", traj.outcome.label())));
    }
    blowup_extrapolation(&traj.rows, traj.meta.p)
        .ok_or_else(|| Error::Precondition("H2 is not growing over the final rows".into()))
}

fn blowup_extrapolation(rows: &[Row], p: f64) -> Option<f64> {
    let last = rows.last()?;
    let cutoff = last.h2 / 10.0;
    let mut window: Vec<&Row> = rows.iter().rev().take_while(|r| r.h2 >= cutoff && r.h2 > 0.0).collect();
    if window.len() < 3 {
        window = rows.iter().rev().take(10).filter(|r| r.h2 > 0.0).collect();
    }
    if window.len() < 2 {
        return None;
    }
    // less than a doubling over the window is not a growth phase
    if window[0].h2 < 2.0 * window[window.len() - 1].h2 {
        return None;
    }
    let expo = -(p - 1.0) / 2.0;
    let pts: Vec<(f64, f64)> = window.iter().map(|r| (r.t, r.h2.powf(expo))).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return None;
    }
    let root = mt - my / slope;
    Some(root.max(last.t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::separable_mode;
    use std::f64::consts::PI;

    fn params3() -> ProblemParams {
        ProblemParams::new(3.0, 2, true).unwrap()
    }

    #[test]
    fn constant_source_vanishes() {
        let g = ConeGrid::new(5.0, 12, 8, TipBc::NeumannTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let f = nonlocal_source(&g, &ops, &Field::constant(&g, 1.0), &params3()).unwrap();
        assert!(f.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sine_source_is_cube() {
        let g = ConeGrid::new(5.0, 12, 16, TipBc::NeumannTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let u = Field::from_fn(&g, |_, th| th.sin());
        let f = nonlocal_source(&g, &ops, &u, &params3()).unwrap();
        for (fv, uv) in f.values().iter().zip(u.values()) {
            assert!((fv - uv.powi(3)).abs() < 1e-15);
        }
        assert!(ops.integrate(&f).unwrap().abs() < 1e-14);
    }

    #[test]
    fn source_has_zero_mean_and_local_variant() {
        let g = ConeGrid::new(5.0, 16, 12, TipBc::DirichletTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let u = Field::from_fn(&g, |s, th| (-(s + 2.5f64).powi(2)).exp() * (1.0 + 0.3 * th.cos()));
        let f = nonlocal_source(&g, &ops, &u, &params3()).unwrap();
        let scale: f64 = ops.integrate(&f.scaled(0.0)).unwrap() + ops.power_integral(f.values(), 1.0);
        assert!(ops.integrate(&f).unwrap().abs() < 1e-14 * scale.max(1.0));
        let mut local = params3();
        local.nonlocal_on = false;
        let f = nonlocal_source(&g, &ops, &u, &local).unwrap();
        for (fv, uv) in f.values().iter().zip(u.values()) {
            assert_eq!(*fv, uv.abs().powf(2.0) * uv);
        }
    }

    #[test]
    fn overflow_guard_trips() {
        let g = ConeGrid::new(5.0, 8, 8, TipBc::NeumannTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let mut u = Field::constant(&g, 1.0);
        u.values_mut()[3] = 1e101;
        assert!(matches!(nonlocal_source(&g, &ops, &u, &params3()), Err(Error::SolverFailure(_))));
    }

    #[test]
    fn eigenline_reduction() {
        let g = ConeGrid::new(5.0, 32, 8, TipBc::DirichletTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let phi = Field::from_fn(&g, |s, th| separable_mode(TipBc::DirichletTip, 5.0, 1, 0, s, th));
        // discrete eigenvalue of the sampled mode
        let hs = g.hs();
        let mu = 4.0 / (hs * hs) * (PI * hs / 20.0).sin().powi(2);
        let kphi = ops.apply_stiffness(phi.values());
        for (k, (kv, v)) in kphi.iter().zip(phi.values()).enumerate() {
            assert!((kv - mu * ops.mass()[k] * v).abs() < 1e-13, "node {k}");
        }
        let dt = 0.01;
        let next = step(&g, &ops, &phi, dt, &ProblemParams::linear(3.0).unwrap()).unwrap();
        let factor = (1.0 + mu) / (1.0 + mu + dt * mu);
        for (a, b) in next.values().iter().zip(phi.values()) {
            assert!((a - factor * b).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let g = ConeGrid::new(5.0, 16, 16, TipBc::NeumannTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let c = 0.7;
        let next = step(&g, &ops, &Field::constant(&g, c), 0.05, &params3()).unwrap();
        assert!(next.values().iter().all(|v| (v - c).abs() < 1e-14));
    }

    #[test]
    fn zero_initial_data_rejected() {
        let g = ConeGrid::new(5.0, 8, 8, TipBc::NeumannTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let r = run(&g, &ops, &Field::zeros(&g), &params3(), &StepperConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = StepperConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dt0 = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = StepperConfig { growth_cap: 1.0, ..StepperConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_eigenmode_decays() {
        let g = ConeGrid::new(5.0, 24, 8, TipBc::DirichletTip).unwrap();
        let ops = DiscreteOperators::assemble(&g);
        let u0 = Field::from_fn(&g, |s, th| 0.01 * separable_mode(TipBc::DirichletTip, 5.0, 1, 0, s, th));
        let cfg = StepperConfig { t_end: 10.0, dt0: 0.05, dt_max: 0.2, ..Default::default() };
        let traj = run(&g, &ops, &u0, &params3(), &cfg).unwrap();
        assert_eq!(traj.outcome, Outcome::GlobalDecay);
        assert!(traj.rows.windows(2).all(|w| w[1].h2 < w[0].h2));
        assert!(traj.rows.windows(2).all(|w| w[1].t > w[0].t));
        assert!((traj.last().unwrap().t - 10.0).abs() < 1e-9);
    }

    fn synthetic(h2: impl Fn(f64) -> f64, times: &[f64], outcome: Outcome) -> Trajectory {
        let rows = times
            .iter()
            .enumerate()
            .map(|(k, &t)| Row { step: k, t, dt: 0.0, j: 0.0, i: 0.0, s: 0.0, h2: h2(t), linf: 1.0 })
            .collect();
        Trajectory {
            meta: TrajectoryMeta { p: 3.0, tip_bc: TipBc::NeumannTip, measure: 1.0, tol_i: NEHARI_TOL },
            rows,
            snapshots: vec![],
            outcome,
            failure: None,
            final_state: None,
        }
    }

    #[test]
    fn blowup_fit_recovers_synthetic_time() {
        let times: Vec<f64> = (0..200).map(|k| 0.995 * k as f64 / 199.0).collect();
        let traj = synthetic(|t| 1.0 / (1.0 - t), &times, Outcome::BlowUp { t_est: 0.0 });
        let est = blowup_time_estimate(&traj).unwrap();
        assert!((est - 1.0).abs() < 0.02, "{est}");
        assert!(est >= traj.last().unwrap().t);
    }

    #[test]
    fn blowup_fit_refuses_bounded_rows() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let bounded = synthetic(|t| 2.0 - (-t).exp(), &times, Outcome::GlobalBounded);
        assert!(blowup_time_estimate(&bounded).is_err());
        let flat = synthetic(|t| 1.5 - 0.5 * (-t).exp(), &times, Outcome::BlowUp { t_est: 0.0 });
        assert!(blowup_time_estimate(&flat).is_err());
    }

    #[test]
    fn outcome_text_round_trip() {
        for o in [
            Outcome::GlobalDecay,
            Outcome::GlobalBounded,
            Outcome::HorizonReached,
            Outcome::SolverFailure,
            Outcome::BlowUp { t_est: 0.123456789012345 },
        ] {
            assert_eq!(o.to_string().parse::<Outcome>().unwrap(), o);
        }
    }
}
