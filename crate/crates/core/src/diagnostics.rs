//! Checks of the identities and inequalities weak solutions satisfy,
//! evaluated on recorded trajectories.
//!
//! Every check reads rows (and, for the dissipation identity, snapshots)
//! and never mutates them. A report is gating only when its status is
//! `Pass` or `Fail`; the other statuses document why no verdict was given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::evaluate_raw;
use crate::grid::{ConeGrid, DiscreteOperators, ProblemParams, TipBc};
use crate::stepper::{Outcome, Row, Trajectory};

pub const DEFAULT_TOL_ABS: f64 = 1e-8;
pub const DEFAULT_TOL_REL: f64 = 5e-2;
pub const DEFAULT_DISSIPATION_TOL: f64 = 1e-10;
pub const DEFAULT_CONSERVATION_RATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Hypotheses of the underlying statement do not hold on this run.
    Inapplicable,
    /// Reported for information, never gating.
    Informational,
    /// Finite-horizon data cannot decide the statement.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    /// `worst_violation <= tolerance_used`.
    pub passed: bool,
    pub worst_violation: f64,
    pub location_t: f64,
    pub tolerance_used: f64,
    pub detail: String,
}

impl CheckReport {
    fn judged(name: &str, worst: f64, location_t: f64, tol: f64, detail: String) -> Self {
        let passed = worst <= tol;
        CheckReport {
            name: name.into(),
            status: if passed { CheckStatus::Pass } else { CheckStatus::Fail },
            passed,
            worst_violation: worst,
            location_t,
            tolerance_used: tol,
            detail,
        }
    }

    fn with_status(name: &str, status: CheckStatus, worst: f64, location_t: f64, tol: f64, detail: String) -> Self {
        CheckReport {
            name: name.into(),
            status,
            passed: worst <= tol,
            worst_violation: worst,
            location_t,
            tolerance_used: tol,
            detail,
        }
    }

    fn inapplicable(name: &str, reason: String) -> Self {
        Self::with_status(name, CheckStatus::Inapplicable, 0.0, 0.0, 0.0, reason)
    }

    pub fn is_failure(&self) -> bool {
        self.status == CheckStatus::Fail
    }

    /// One JSON object, no trailing newline.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("check report serializes")
    }

    pub fn from_record(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("check record: {e}")))
    }
}

/// Checks selectable by name in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Dissipation,
    DissipationIdentity,
    Conservation,
    Gronwall,
    GrowthLowerBound,
    NminusInvariance,
    GlobalBound,
    Dichotomy,
    L2Monotonicity,
}

impl CheckName {
    pub const ALL: [CheckName; 9] = [
        CheckName::Dissipation,
        CheckName::DissipationIdentity,
        CheckName::Conservation,
        CheckName::Gronwall,
        CheckName::GrowthLowerBound,
        CheckName::NminusInvariance,
        CheckName::GlobalBound,
        CheckName::Dichotomy,
        CheckName::L2Monotonicity,
    ];
}

/// Tolerances for a batch of checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    /// Absolute slack of the exponential and global bounds.
    pub tol_abs: f64,
    /// Relative slack of the exponential bounds.
    pub tol_rel: f64,
    /// Largest allowed increase of `J` between rows.
    pub dissipation_tol: f64,
    /// Allowed drift of `S`, relative to `max(1, |S0|)`, per unit time.
    pub conservation_rate: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
            dissipation_tol: DEFAULT_DISSIPATION_TOL,
            conservation_rate: DEFAULT_CONSERVATION_RATE,
        }
    }
}

impl CheckSettings {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tol_abs, self.tol_rel, self.dissipation_tol, self.conservation_rate];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) && self.tol_rel < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("check tolerances must be finite and non-negative: {self:?}")))
        }
    }
}

fn in_nminus(row: &Row, tol_i: f64) -> bool {
    row.i < -tol_i * row.h2.max(1.0)
}

/// `J(t_{k+1}) <= J(t_k) + tol` over all consecutive rows.
pub fn check_dissipation(traj: &Trajectory, tol: f64) -> CheckReport {
    const NAME: &str = "dissipation";
    if traj.rows.len() < 2 {
        return CheckReport::inapplicable(NAME, "fewer than two rows".into());
    }
    let (mut worst, mut at) = (0.0_f64, traj.rows[0].t);
    for w in traj.rows.windows(2) {
        let jump = w[1].j - w[0].j;
        if jump > worst {
            worst = jump;
            at = w[1].t;
        }
    }
    CheckReport::judged(NAME, worst, at, tol, format!("largest increase of J over {} rows", traj.rows.len()))
}

/// Defect of the discrete energy identity on one pair of consecutive snapshots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub t: f64,
    pub dt: f64,
    /// `J(u+) - J(u) + dt * ||(u+ - u)/dt||_H^2`
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationIdentity {
    pub pairs: Vec<IdentityResidual>,
    /// `max |residual| / dt^2`
    pub fitted_c: f64,
    /// `max |residual| / dt`, the identity defect per unit time
    pub max_rate: f64,
}

/// Evaluate `dJ/dt = -||u_t||_H^2` on every pair of snapshots taken at
/// consecutive steps, with `u_t` the difference quotient.
pub fn dissipation_identity(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    traj: &Trajectory,
) -> Result<DissipationIdentity> {
    let mut pairs = Vec::new();
    for w in traj.snapshots.windows(2) {
        if w[1].step != w[0].step + 1 {
            continue;
        }
        if w[0].values.len() != grid.len() || w[1].values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: w[0].values.len() });
        }
        let dt = w[1].t - w[0].t;
        let j0 = evaluate_raw(ops, &w[0].values, params, traj.meta.tol_i).j;
        let j1 = evaluate_raw(ops, &w[1].values, params, traj.meta.tol_i).j;
        let delta: Vec<f64> = w[1].values.iter().zip(&w[0].values).map(|(a, b)| a - b).collect();
        let residual = j1 - j0 + ops.h1_norm_sq(&delta) / dt;
        pairs.push(IdentityResidual { t: w[1].t, dt, residual });
    }
    if pairs.is_empty() {
        return Err(Error::Precondition("no snapshots at consecutive steps".into()));
    }
    let fitted_c = pairs.iter().map(|r| r.residual.abs() / (r.dt * r.dt)).fold(0.0, f64::max);
    let max_rate = pairs.iter().map(|r| r.residual.abs() / r.dt).fold(0.0, f64::max);
    Ok(DissipationIdentity { pairs, fitted_c, max_rate })
}

/// Informational report of the snapshot-level energy identity.
pub fn check_dissipation_identity(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    traj: &Trajectory,
) -> CheckReport {
    const NAME: &str = "dissipation_identity";
    match dissipation_identity(grid, ops, params, traj) {
        Ok(id) => {
            let (worst, at) =
                id.pairs
                    .iter()
                    .map(|r| (r.residual.abs(), r.t))
                    .fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
            CheckReport::with_status(
                NAME,
                CheckStatus::Informational,
                worst,
                at,
                f64::INFINITY,
                format!("{} pairs, fitted C = {:e}, max |res|/dt = {:e}", id.pairs.len(), id.fitted_c, id.max_rate),
            )
        }
        Err(e) => CheckReport::inapplicable(NAME, e.to_string()),
    }
}

/// `max_k |S(t_k) - S(t_0)| <= tol`. On DirichletTip runs mass leaves
/// through the tip, so the drift is reported without a verdict.
pub fn check_conservation(traj: &Trajectory, tol: f64) -> CheckReport {
    const NAME: &str = "conservation";
    let Some(first) = traj.rows.first() else {
        return CheckReport::inapplicable(NAME, "empty trajectory".into());
    };
    if traj.rows.len() < 2 {
        return CheckReport::inapplicable(NAME, "fewer than two rows".into());
    }
    let (mut worst, mut at) = (0.0_f64, first.t);
    for r in &traj.rows {
        let d = (r.s - first.s).abs();
        if d > worst {
            worst = d;
            at = r.t;
        }
    }
    match traj.meta.tip_bc {
        TipBc::NeumannTip => CheckReport::judged(NAME, worst, at, tol, format!("S(0) = {:e}", first.s)),
        TipBc::DirichletTip => CheckReport::with_status(
            NAME,
            CheckStatus::Informational,
            worst,
            at,
            tol,
            format!("DirichletTip: drift through the tip boundary, S(0) = {:e}", first.s),
        ),
    }
}

/// Index of the first row inside `N-`.
pub fn nminus_entry_index(traj: &Trajectory) -> Option<usize> {
    traj.rows.iter().position(|r| in_nminus(r, traj.meta.tol_i))
}

fn exponential_preconditions(traj: &Trajectory, t0_index: usize, tol_abs: f64) -> std::result::Result<(), String> {
    let Some(first) = traj.rows.first() else {
        return Err("empty trajectory".into());
    };
    if first.s > tol_abs {
        return Err(format!("S(u0) = {:e} > 0", first.s));
    }
    let Some(r0) = traj.rows.get(t0_index) else {
        return Err(format!("t0 index {t0_index} out of range"));
    };
    if !(r0.i < 0.0) {
        return Err(format!("I(t0) = {:e} is not negative", r0.i));
    }
    Ok(())
}

/// `I(t) <= I(t0) e^{(p-1)(t-t0)} (1 - tol_rel) + tol_abs` for `t >= t0`.
pub fn check_gronwall(traj: &Trajectory, t0_index: usize, tol_rel: f64, tol_abs: f64) -> CheckReport {
    const NAME: &str = "gronwall";
    if let Err(reason) = exponential_preconditions(traj, t0_index, tol_abs) {
        return CheckReport::inapplicable(NAME, reason);
    }
    let p = traj.meta.p;
    let r0 = traj.rows[t0_index];
    let (mut worst, mut at) = (0.0_f64, r0.t);
    for r in &traj.rows[t0_index..] {
        let bound = r0.i * ((p - 1.0) * (r.t - r0.t)).exp() * (1.0 - tol_rel) + tol_abs;
        let excess = r.i - bound;
        if excess > worst {
            worst = excess;
            at = r.t;
        }
    }
    CheckReport::with_status(
        NAME,
        if worst <= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
        worst,
        at,
        0.0,
        format!("t0 = {:e}, I(t0) = {:e}, tol_rel = {tol_rel}, tol_abs = {tol_abs:e}", r0.t, r0.i),
    )
}

/// `H2(t) >= -2 I(t0) e^{(p-1)(t-t0)} (t-t0) (1 - tol_rel) + H2(t0) - tol_abs`.
pub fn check_growth_lower_bound(traj: &Trajectory, t0_index: usize, tol_rel: f64, tol_abs: f64) -> CheckReport {
    const NAME: &str = "growth_lower_bound";
    if let Err(reason) = exponential_preconditions(traj, t0_index, tol_abs) {
        return CheckReport::inapplicable(NAME, reason);
    }
    let p = traj.meta.p;
    let r0 = traj.rows[t0_index];
    let (mut worst, mut at) = (0.0_f64, r0.t);
    for r in &traj.rows[t0_index..] {
        let tau = r.t - r0.t;
        let bound = -2.0 * r0.i * ((p - 1.0) * tau).exp() * tau * (1.0 - tol_rel) + r0.h2 - tol_abs;
        let shortfall = bound - r.h2;
        if shortfall > worst {
            worst = shortfall;
            at = r.t;
        }
    }
    CheckReport::with_status(
        NAME,
        if worst <= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
        worst,
        at,
        0.0,
        format!("t0 = {:e}, I(t0) = {:e}, H2(t0) = {:e}, tol_rel = {tol_rel}", r0.t, r0.i, r0.h2),
    )
}

/// Once `I < -tol_I`, `I` must stay negative.
pub fn check_nminus_invariance(traj: &Trajectory) -> CheckReport {
    const NAME: &str = "nminus_invariance";
    let Some(first) = traj.rows.first() else {
        return CheckReport::inapplicable(NAME, "empty trajectory".into());
    };
    if first.s > DEFAULT_TOL_ABS {
        return CheckReport::inapplicable(NAME, format!("S(u0) = {:e} > 0", first.s));
    }
    let Some(entry) = nminus_entry_index(traj) else {
        return CheckReport::judged(NAME, 0.0, first.t, 0.0, "never entered N-".into());
    };
    let (mut worst, mut at) = (0.0_f64, traj.rows[entry].t);
    for r in &traj.rows[entry..] {
        if r.i >= 0.0 && r.i >= worst {
            worst = r.i.max(f64::MIN_POSITIVE);
            at = r.t;
        }
    }
    CheckReport::judged(NAME, worst, at, 0.0, format!("entered N- at t = {:e}", traj.rows[entry].t))
}

/// `(p-1)/(2(p+1)) H2(t) <= J(t0) + tol` on runs that never enter `N-`.
pub fn check_global_bound(traj: &Trajectory, tol: f64) -> CheckReport {
    const NAME: &str = "global_bound";
    let Some(first) = traj.rows.first() else {
        return CheckReport::inapplicable(NAME, "empty trajectory".into());
    };
    if let Some(k) = nminus_entry_index(traj) {
        return CheckReport::inapplicable(NAME, format!("I < 0 at t = {:e}", traj.rows[k].t));
    }
    let p = traj.meta.p;
    let coef = (p - 1.0) / (2.0 * (p + 1.0));
    let (mut worst, mut at) = (0.0_f64, first.t);
    for r in &traj.rows {
        let excess = coef * r.h2 - first.j;
        if excess > worst {
            worst = excess;
            at = r.t;
        }
    }
    CheckReport::judged(NAME, worst, at, tol, format!("J(0) = {:e}", first.j))
}

/// Whether some recorded state lies in `N-`.
pub fn classify_sminus(traj: &Trajectory) -> Result<bool> {
    if traj.rows.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    Ok(nminus_entry_index(traj).is_some())
}

/// Blow-up if and only if the orbit enters `N-` (runs with `S(u0) <= 0`).
pub fn check_dichotomy(traj: &Trajectory) -> CheckReport {
    const NAME: &str = "dichotomy";
    let Ok(sminus) = classify_sminus(traj) else {
        return CheckReport::inapplicable(NAME, "empty trajectory".into());
    };
    let first = traj.rows[0];
    if first.s > DEFAULT_TOL_ABS {
        return CheckReport::inapplicable(NAME, format!("S(u0) = {:e} > 0", first.s));
    }
    let detail = format!("sminus = {sminus}, outcome = {}", traj.outcome);
    let t_last = traj.rows.last().map_or(0.0, |r| r.t);
    match (sminus, traj.outcome) {
        (_, Outcome::SolverFailure) => CheckReport::with_status(NAME, CheckStatus::Fail, 1.0, t_last, 0.0, detail),
        (true, Outcome::BlowUp { .. }) => CheckReport::judged(NAME, 0.0, t_last, 0.0, detail),
        (true, Outcome::HorizonReached) => {
            CheckReport::with_status(NAME, CheckStatus::Inconclusive, 0.0, t_last, 0.0, detail)
        }
        (true, _) => CheckReport::with_status(NAME, CheckStatus::Fail, 1.0, t_last, 0.0, detail),
        (false, Outcome::BlowUp { .. }) => CheckReport::with_status(NAME, CheckStatus::Fail, 1.0, t_last, 0.0, detail),
        (false, _) => CheckReport::judged(NAME, 0.0, t_last, 0.0, detail),
    }
}

/// Reports the largest increase of `||u||^2_{L^2}` between rows. The claim
/// that this norm never increases is not a consequence of the energy
/// identities in general, so the report is informational.
pub fn check_l2_monotonicity(traj: &Trajectory) -> CheckReport {
    const NAME: &str = "l2_monotonicity";
    if traj.rows.len() < 2 {
        return CheckReport::inapplicable(NAME, "fewer than two rows".into());
    }
    let p = traj.meta.p;
    // a = (2(p+1) J - 2 I) / (p-1), so ||u||^2 = H2 - a
    let l2 = |r: &Row| r.h2 - (2.0 * (p + 1.0) * r.j - 2.0 * r.i) / (p - 1.0);
    let (mut worst, mut at) = (0.0_f64, traj.rows[0].t);
    for w in traj.rows.windows(2) {
        let inc = l2(&w[1]) - l2(&w[0]);
        if inc > worst {
            worst = inc;
            at = w[1].t;
        }
    }
    CheckReport::with_status(
        NAME,
        CheckStatus::Informational,
        worst,
        at,
        0.0,
        "largest increase of the L2 norm squared".into(),
    )
}

/// Context the snapshot-based checks need.
pub struct FieldContext<'a> {
    pub grid: &'a ConeGrid,
    pub ops: &'a DiscreteOperators,
    pub params: &'a ProblemParams,
}

/// Run the named checks with the conventions used by presets: the
/// exponential checks start at the first row inside `N-`, and the
/// conservation budget is `conservation_rate * max(1, |S0|) * max(1, t_last)`.
pub fn run_checks(
    traj: &Trajectory,
    names: &[CheckName],
    settings: &CheckSettings,
    fields: Option<&FieldContext<'_>>,
) -> Vec<CheckReport> {
    let entry = nminus_entry_index(traj);
    let s0 = traj.rows.first().map_or(0.0, |r| r.s.abs());
    let t_span = traj.rows.last().map_or(0.0, |r| r.t).max(1.0);
    names
        .iter()
        .map(|name| match name {
            CheckName::Dissipation => check_dissipation(traj, settings.dissipation_tol),
            CheckName::DissipationIdentity => match fields {
                Some(ctx) => check_dissipation_identity(ctx.grid, ctx.ops, ctx.params, traj),
                None => CheckReport::inapplicable("dissipation_identity", "no field context".into()),
            },
            CheckName::Conservation => check_conservation(traj, settings.conservation_rate * s0.max(1.0) * t_span),
            CheckName::Gronwall => match entry {
                Some(k) => check_gronwall(traj, k, settings.tol_rel, settings.tol_abs),
                None => CheckReport::inapplicable("gronwall", "never entered N-".into()),
            },
            CheckName::GrowthLowerBound => match entry {
                Some(k) => check_growth_lower_bound(traj, k, settings.tol_rel, settings.tol_abs),
                None => CheckReport::inapplicable("growth_lower_bound", "never entered N-".into()),
            },
            CheckName::NminusInvariance => check_nminus_invariance(traj),
            CheckName::GlobalBound => check_global_bound(traj, settings.tol_abs),
            CheckName::Dichotomy => check_dichotomy(traj),
            CheckName::L2Monotonicity => check_l2_monotonicity(traj),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::NEHARI_TOL;
    use crate::stepper::TrajectoryMeta;

    fn traj(rows: Vec<(f64, f64, f64, f64, f64)>, outcome: Outcome) -> Trajectory {
        // (t, J, I, S, H2)
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(k, (t, j, i, s, h2))| Row { step: k, t, dt: 0.1, j, i, s, h2, linf: 1.0 })
            .collect();
        Trajectory {
            meta: TrajectoryMeta { p: 3.0, tip_bc: TipBc::NeumannTip, measure: 10.0, tol_i: NEHARI_TOL },
            rows,
            snapshots: vec![],
            outcome,
            failure: None,
            final_state: None,
        }
    }

    #[test]
    fn injected_energy_jump_is_reported() {
        let t = traj(
            vec![(0.0, 1.0, 1.0, 0.0, 1.0), (0.1, 0.9, 1.0, 0.0, 1.0), (0.2, 0.95, 1.0, 0.0, 1.0)],
            Outcome::GlobalBounded,
        );
        let r = check_dissipation(&t, 1e-10);
        assert_eq!(r.status, CheckStatus::Fail);
        assert!((r.worst_violation - 0.05).abs() < 1e-12);
        assert_eq!(r.location_t, 0.2);
    }

    #[test]
    fn constant_energy_passes() {
        let t = traj(vec![(0.0, 1.0, 1.0, 0.0, 1.0), (0.1, 1.0, 1.0, 0.0, 1.0)], Outcome::GlobalBounded);
        let r = check_dissipation(&t, 1e-10);
        assert_eq!(r.status, CheckStatus::Pass);
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn drifting_mass_fails() {
        let t = traj(vec![(0.0, 1.0, 1.0, 0.5, 1.0), (0.1, 1.0, 1.0, 0.5 + 1e-6, 1.0)], Outcome::GlobalBounded);
        assert_eq!(check_conservation(&t, 1e-8).status, CheckStatus::Fail);
        let mut d = t.clone();
        d.meta.tip_bc = TipBc::DirichletTip;
        assert_eq!(check_conservation(&d, 1e-8).status, CheckStatus::Informational);
    }

    #[test]
    fn gronwall_guard_and_violation() {
        let positive = traj(vec![(0.0, 1.0, 0.5, 0.0, 1.0), (0.1, 1.0, 0.4, 0.0, 1.0)], Outcome::GlobalBounded);
        assert_eq!(check_gronwall(&positive, 0, 0.05, 1e-8).status, CheckStatus::Inapplicable);
        // I(t) = I(0) e^{2t} / 2 sits above the bound
        let rows = (0..5)
            .map(|k| {
                let t = 0.1 * k as f64;
                let i = if k == 0 { -1.0 } else { -(2.0 * t).exp() / 2.0 };
                (t, 0.0, i, 0.0, 1.0)
            })
            .collect();
        let r = check_gronwall(&traj(rows, Outcome::HorizonReached), 0, 0.05, 1e-8);
        assert_eq!(r.status, CheckStatus::Fail);
    }

    #[test]
    fn growth_bound_endpoint_and_violation() {
        let single = traj(vec![(0.0, 0.0, -1.0, 0.0, 3.0)], Outcome::HorizonReached);
        let r = check_growth_lower_bound(&single, 0, 0.0, 0.0);
        assert_eq!(r.status, CheckStatus::Pass);
        assert_eq!(r.worst_violation, 0.0);
        let flat = traj(
            vec![(0.0, 0.0, -1.0, 0.0, 3.0), (0.1, 0.0, -1.0, 0.0, 3.0), (0.2, 0.0, -1.0, 0.0, 3.0)],
            Outcome::HorizonReached,
        );
        let r = check_growth_lower_bound(&flat, 0, 0.05, 1e-8);
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.location_t, 0.2);
    }

    #[test]
    fn nminus_sign_flip_fails() {
        let vacuous = traj(vec![(0.0, 1.0, 1.0, 0.0, 1.0), (0.1, 1.0, 0.9, 0.0, 1.0)], Outcome::GlobalDecay);
        assert_eq!(check_nminus_invariance(&vacuous).status, CheckStatus::Pass);
        let flip = traj(
            vec![(0.0, 1.0, -0.1, 0.0, 1.0), (0.1, 1.0, -0.01, 0.0, 1.0), (0.2, 1.0, 0.02, 0.0, 1.0)],
            Outcome::HorizonReached,
        );
        let r = check_nminus_invariance(&flip);
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.location_t, 0.2);
    }

    #[test]
    fn global_bound_cases() {
        let entering = traj(vec![(0.0, 1.0, 1.0, 0.0, 1.0), (0.1, 1.0, -1.0, 0.0, 1.0)], Outcome::HorizonReached);
        assert_eq!(check_global_bound(&entering, 1e-8).status, CheckStatus::Inapplicable);
        // p = 3: H2/4 <= J(0) = 1 requires H2 <= 4
        let bad = traj(vec![(0.0, 1.0, 1.0, 0.0, 3.0), (0.1, 0.9, 1.0, 0.0, 5.0)], Outcome::GlobalBounded);
        let r = check_global_bound(&bad, 1e-8);
        assert_eq!(r.status, CheckStatus::Fail);
        assert!((r.worst_violation - 0.25).abs() < 1e-12);
        let good = traj(vec![(0.0, 1.0, 1.0, 0.0, 3.0), (0.1, 0.9, 1.0, 0.0, 2.0)], Outcome::GlobalDecay);
        assert_eq!(check_global_bound(&good, 1e-8).status, CheckStatus::Pass);
    }

    #[test]
    fn sminus_and_dichotomy() {
        let empty = traj(vec![], Outcome::GlobalDecay);
        assert!(classify_sminus(&empty).is_err());
        let blow = traj(vec![(0.0, -1.0, -2.0, 0.0, 5.0)], Outcome::BlowUp { t_est: 1.0 });
        assert!(classify_sminus(&blow).unwrap());
        assert_eq!(check_dichotomy(&blow).status, CheckStatus::Pass);
        let open = traj(vec![(0.0, -1.0, -2.0, 0.0, 5.0)], Outcome::HorizonReached);
        assert_eq!(check_dichotomy(&open).status, CheckStatus::Inconclusive);
        let wrong = traj(vec![(0.0, 1.0, 2.0, 0.0, 5.0)], Outcome::BlowUp { t_est: 1.0 });
        assert_eq!(check_dichotomy(&wrong).status, CheckStatus::Fail);
    }

    #[test]
    fn record_round_trip() {
        let t = traj(vec![(0.0, 1.0, 1.0, 0.0, 1.0), (0.1, 0.9, 1.0, 0.0, 1.0)], Outcome::GlobalDecay);
        let r = check_dissipation(&t, 1e-10);
        let back = CheckReport::from_record(&r.to_record()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn checks_do_not_mutate() {
        let t = traj(vec![(0.0, 1.0, -1.0, 0.0, 1.0), (0.1, 0.9, -2.0, 0.0, 2.0)], Outcome::HorizonReached);
        let before = t.clone();
        let _ = run_checks(&t, &CheckName::ALL, &CheckSettings::default(), None);
        assert_eq!(t, before);
    }
}
