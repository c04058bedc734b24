//! Variational quantities: energy `J`, Nehari functional `I`, the conserved
//! mass `S`, cone norms, the fibering map `lambda -> J(lambda u)` and
//! sampled estimates of the well depth and of `Lambda_alpha`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ConeGrid, DiscreteOperators, Field, ProblemParams, TipBc};
use crate::modal::ModalSolver;

/// Relative tolerance for the sign of `I`, measured against `max(1, H2)`.
pub const NEHARI_TOL: f64 = 1e-9;

/// Side of the Nehari manifold a field lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NehariClass {
    NPlus,
    NZero,
    NMinus,
}

/// Classify by the sign of `I` with the relative band `tol * max(1, h2)`.
pub fn classify(i: f64, h2: f64, tol: f64) -> NehariClass {
    let band = tol * h2.max(1.0);
    if i.abs() <= band {
        NehariClass::NZero
    } else if i > 0.0 {
        NehariClass::NPlus
    } else {
        NehariClass::NMinus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    /// `J = a/2 - b/(p+1)`; with the source off `J = a/2` and `I = a`.
    pub j: f64,
    /// `I = a - b`
    pub i: f64,
    /// `S = int u dmu`
    pub s: f64,
    /// `||u||^2 + a`
    pub h2: f64,
    /// `b = int |u|^{p+1} dmu`
    pub lp1: f64,
    /// `a = int |grad_B u|^2 dmu`
    pub grad: f64,
    /// `||u||^2` in the cone `L^2`
    pub l2: f64,
    /// `None` for the zero field, which the Nehari sets do not classify.
    pub nehari_class: Option<NehariClass>,
}

/// Evaluate every functional of `u`.
pub fn evaluate(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    u: &Field,
    params: &ProblemParams,
) -> Result<FunctionalReport> {
    u.check_on(grid)?;
    Ok(evaluate_raw(ops, u.values(), params, NEHARI_TOL))
}

pub(crate) fn evaluate_raw(ops: &DiscreteOperators, u: &[f64], params: &ProblemParams, tol_i: f64) -> FunctionalReport {
    let p = params.p;
    let grad = ops.grad_energy_raw(u);
    let l2 = ops.mass_inner(u, u);
    let lp1 = ops.power_integral(u, p + 1.0);
    let s = ops.integrate_raw(u);
    // the linear flow (source off) dissipates the quadratic part alone
    let b = if params.source_on { lp1 } else { 0.0 };
    let j = 0.5 * grad - b / (p + 1.0);
    let i = grad - b;
    let h2 = l2 + grad;
    let nehari_class = if u.iter().all(|&v| v == 0.0) { None } else { Some(classify(i, h2, tol_i)) };
    FunctionalReport { j, i, s, h2, lp1, grad, l2, nehari_class }
}

/// `lambda* = (a/b)^{1/(p-1)}`, the maximizer of `lambda -> J(lambda u)`.
pub fn fibering_lambda_star(a: f64, b: f64, p: f64) -> Result<f64> {
    check_fibering(a, b, p)?;
    Ok((a / b).powf(1.0 / (p - 1.0)))
}

/// `sup_{lambda >= 0} J(lambda u) = (p-1)/(2(p+1)) a^{(p+1)/(p-1)} / b^{2/(p-1)}`.
pub fn mountain_pass_level(a: f64, b: f64, p: f64) -> Result<f64> {
    check_fibering(a, b, p)?;
    let coef = (p - 1.0) / (2.0 * (p + 1.0));
    // log form keeps large or tiny a, b from overflowing
    let log = ((p + 1.0) * a.ln() - 2.0 * b.ln()) / (p - 1.0);
    Ok(coef * log.exp())
}

fn check_fibering(a: f64, b: f64, p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must exceed 1")));
    }
    if !(a > 0.0) {
        return Err(Error::Degenerate(format!("gradient energy a = {a} must be positive")));
    }
    if !(b > 0.0) {
        return Err(Error::UnboundedFibering);
    }
    Ok(())
}

/// `sqrt(2 alpha (p+1)/(p-1))`, the gradient-norm radius of `N^alpha`.
pub fn nalpha_radius(alpha: f64, p: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be positive")));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must exceed 1")));
    }
    Ok((2.0 * alpha * (p + 1.0) / (p - 1.0)).sqrt())
}

/// Trial-family upper bound on the discrete well depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellDepth {
    pub d_est: f64,
    /// Position of the minimizing trial in the family sequence.
    pub best_trial: usize,
    pub trials: usize,
    /// Descent iterations that lowered the estimate.
    pub refinements: usize,
}

/// Sublevel geometry around one energy level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellGeometry {
    pub d_est: f64,
    pub alpha: f64,
    pub nalpha_radius: f64,
    pub lambda_alpha_est: f64,
}

impl WellGeometry {
    pub fn estimate(
        grid: &ConeGrid,
        ops: &DiscreteOperators,
        params: &ProblemParams,
        alpha: f64,
        trial_budget: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let depth = estimate_well_depth(grid, ops, params, trial_budget, seed)?;
        if !(alpha > depth.d_est) {
            return Err(Error::Precondition(format!(
                "alpha = {alpha} must exceed the estimated well depth {}",
                depth.d_est
            )));
        }
        Ok(WellGeometry {
            d_est: depth.d_est,
            alpha,
            nalpha_radius: nalpha_radius(alpha, params.p)?,
            lambda_alpha_est: lambda_alpha_estimate(grid, ops, params, alpha, samples, seed)?,
        })
    }
}

/// Deterministic sequence of trial fields: separable eigenmodes first,
/// then seeded sums of smooth bumps. Every prefix of the sequence is the
/// same for a given seed, so a larger budget only adds trials.
pub struct TrialFamily<'a> {
    grid: &'a ConeGrid,
    rng: ChaCha8Rng,
    next: usize,
}

const EIGEN_TRIALS: [(usize, usize); 6] = [(1, 0), (2, 0), (1, 1), (3, 0), (2, 1), (1, 2)];

impl<'a> TrialFamily<'a> {
    pub fn new(grid: &'a ConeGrid, seed: u64) -> Self {
        TrialFamily { grid, rng: ChaCha8Rng::seed_from_u64(seed), next: 0 }
    }

    fn eigen_trial(&self, k: usize, m: usize) -> Field {
        let depth = self.grid.depth();
        let tip = self.grid.tip_bc();
        Field::from_fn(self.grid, |s, th| separable_mode(tip, depth, k, m, s, th))
    }

    fn bump_trial(&mut self) -> Field {
        let depth = self.grid.depth();
        let count = self.rng.gen_range(1..=3);
        let bumps: Vec<(f64, f64, f64, f64)> = (0..count)
            .map(|_| {
                let sc = -self.rng.gen_range(0.0..depth);
                let tc = self.rng.gen_range(0.0..2.0 * PI);
                let w = self.rng.gen_range(0.15..0.5) * depth.min(PI);
                let amp = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 } * self.rng.gen_range(0.5..1.0);
                (sc, tc, w, amp)
            })
            .collect();
        Field::from_fn(self.grid, |s, th| {
            bumps.iter().map(|&(sc, tc, w, amp)| amp * gaussian(s - sc, periodic_gap(th, tc), w)).sum()
        })
    }
}

impl Iterator for TrialFamily<'_> {
    type Item = Field;
    fn next(&mut self) -> Option<Field> {
        let idx = self.next;
        self.next += 1;
        Some(match EIGEN_TRIALS.get(idx) {
            Some(&(k, m)) => self.eigen_trial(k, m),
            None => self.bump_trial(),
        })
    }
}

/// Separable Laplacian mode on the log cylinder, unit maximum.
///
/// Dirichlet tip: `sin((2k-1) pi (s+L) / (2L)) cos(m theta)`, `k >= 1`.
/// Neumann tip: `cos(k pi (s+L) / L) cos(m theta)`, `k >= 0`.
pub fn separable_mode(tip: TipBc, depth: f64, k: usize, m: usize, s: f64, theta: f64) -> f64 {
    let x = (s + depth) / depth;
    let radial = match tip {
        TipBc::DirichletTip => ((2 * k.max(1) - 1) as f64 * PI * x / 2.0).sin(),
        TipBc::NeumannTip => (k as f64 * PI * x).cos(),
    };
    radial * (m as f64 * theta).cos()
}

pub(crate) fn gaussian(ds: f64, dth: f64, width: f64) -> f64 {
    (-(ds * ds + dth * dth) / (2.0 * width * width)).exp()
}

/// Signed angular gap `theta - center` wrapped into `(-pi, pi]`.
pub(crate) fn periodic_gap(theta: f64, center: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut d = (theta - center).rem_euclid(two_pi);
    if d > PI {
        d -= two_pi;
    }
    d
}

/// Minimum mountain-pass level over the first `trial_budget` trials.
pub fn estimate_well_depth(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    trial_budget: usize,
    seed: u64,
) -> Result<WellDepth> {
    estimate_well_depth_refined(grid, ops, params, trial_budget, seed, 0)
}

/// As [`estimate_well_depth`], then run up to `refine_steps` iterations of
/// Sobolev-preconditioned descent on the scale-free level from the best trial.
pub fn estimate_well_depth_refined(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    trial_budget: usize,
    seed: u64,
    refine_steps: usize,
) -> Result<WellDepth> {
    params.validate()?;
    if grid.tip_bc() != TipBc::DirichletTip {
        return Err(Error::Precondition(
            "well-depth estimation needs a DirichletTip grid (near-constant trials drive the level to 0 otherwise)"
                .into(),
        ));
    }
    if trial_budget == 0 {
        return Err(Error::InvalidParameter("trial_budget must be at least 1".into()));
    }
    let p = params.p;
    let mut best: Option<(f64, usize, Field)> = None;
    for (idx, trial) in TrialFamily::new(grid, seed).take(trial_budget).enumerate() {
        let level = level_of(ops, trial.values(), p);
        if let Some(level) = level {
            if best.as_ref().is_none_or(|b| level < b.0) {
                best = Some((level, idx, trial));
            }
        }
    }
    let (mut d_est, best_trial, mut u) =
        best.ok_or_else(|| Error::Degenerate("no trial with positive a and b".into()))?;

    let mut refinements = 0;
    if refine_steps > 0 {
        let solver =
            ModalSolver::new(grid, 1.0).ok_or_else(|| Error::SolverFailure("M + K factorization failed".into()))?;
        for _ in 0..refine_steps {
            match descend_once(ops, &solver, u.values(), p, d_est) {
                Some((next, level)) => {
                    u = Field::new(grid, next)?;
                    d_est = level;
                    refinements += 1;
                }
                None => break,
            }
        }
    }
    Ok(WellDepth { d_est, best_trial, trials: trial_budget, refinements })
}

fn level_of(ops: &DiscreteOperators, u: &[f64], p: f64) -> Option<f64> {
    let a = ops.grad_energy_raw(u);
    let b = ops.power_integral(u, p + 1.0);
    mountain_pass_level(a, b, p).ok()
}

/// One backtracking step on `log level(u)` along the `(M+K)^{-1}` gradient.
fn descend_once(
    ops: &DiscreteOperators,
    solver: &ModalSolver,
    u: &[f64],
    p: f64,
    current: f64,
) -> Option<(Vec<f64>, f64)> {
    let a = ops.grad_energy_raw(u);
    let b = ops.power_integral(u, p + 1.0);
    let ku = ops.apply_stiffness(u);
    let grad: Vec<f64> = ku
        .iter()
        .zip(u)
        .zip(ops.mass())
        .map(|((kv, v), m)| {
            let pow = v.abs().powf(p - 1.0) * v;
            (p + 1.0) / (p - 1.0) * (2.0 * kv / a - 2.0 * m * pow / b)
        })
        .collect();
    let dir: Vec<f64> = solver.solve(&grad).into_iter().map(|v| -v).collect();
    let dir_norm = ops.h1_norm_sq(&dir).sqrt();
    if !(dir_norm > 0.0) {
        return None;
    }
    let mut tau = 0.25 * ops.h1_norm_sq(u).sqrt() / dir_norm;
    for _ in 0..30 {
        let trial: Vec<f64> = u.iter().zip(&dir).map(|(v, d)| v + tau * d).collect();
        if let Some(level) = level_of(ops, &trial, p) {
            if level < current * (1.0 - 1e-12) {
                return Some((trial, level));
            }
        }
        tau *= 0.5;
    }
    None
}

/// Largest `H2` over sampled fields rescaled onto `N` whose gradient norm
/// stays within the `N^alpha` radius. A lower bound of `Lambda_alpha`;
/// `0` when no sample is admissible.
pub fn lambda_alpha_estimate(
    grid: &ConeGrid,
    ops: &DiscreteOperators,
    params: &ProblemParams,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let radius = nalpha_radius(alpha, params.p)?;
    let p = params.p;
    let mut best: f64 = 0.0;
    for trial in TrialFamily::new(grid, seed).take(samples) {
        let u = trial.values();
        let a = ops.grad_energy_raw(u);
        let b = ops.power_integral(u, p + 1.0);
        let Ok(lam) = fibering_lambda_star(a, b, p) else { continue };
        let scale = lam * lam;
        if scale * a <= radius * radius {
            best = best.max(scale * (ops.mass_inner(u, u) + a));
        }
    }
    Ok(best)
}
