//! Ground-truth computations that share no code path with the main
//! discretization: composite Simpson quadrature, closed-form separable
//! eigenvalues, a dense generalized eigensolve on a separately assembled
//! stencil, and Richardson order estimates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TipBc;
use crate::stepper::Row;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub method: String,
    pub resolution: usize,
    pub estimated_error: f64,
}

fn simpson_trapezoid(f: &dyn Fn(f64, f64) -> f64, depth: f64, ns_intervals: usize, ntheta: usize) -> f64 {
    let hs = depth / ns_intervals as f64;
    let ht = 2.0 * PI / ntheta as f64;
    let mut total = 0.0;
    for i in 0..=ns_intervals {
        let s = if i == ns_intervals { 0.0 } else { -depth + i as f64 * hs };
        let w = if i == 0 || i == ns_intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let line: f64 = (0..ntheta).map(|j| f(s, j as f64 * ht)).sum();
        total += w * line;
    }
    total * hs / 3.0 * ht
}

/// `int_{-L}^0 int_0^{2 pi} f(s, theta) dtheta ds` by composite Simpson in
/// `s` and the periodic trapezoid rule in `theta`, both with `resolution`
/// intervals (rounded up to a multiple of 4). The error estimate compares
/// against half the resolution.
pub fn dense_quadrature(f: &dyn Fn(f64, f64) -> f64, depth: f64, resolution: usize) -> Result<OracleResult> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidParameter(format!("depth must be positive, got {depth}")));
    }
    if resolution < 8 {
        return Err(Error::UndersizedGrid(format!("quadrature resolution {resolution} < 8")));
    }
    let n = resolution.div_ceil(4) * 4;
    let fine = simpson_trapezoid(f, depth, n, n);
    let coarse = simpson_trapezoid(f, depth, n / 2, n / 2);
    if !fine.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(OracleResult {
        value: fine,
        method: "simpson_s x periodic_trapezoid_theta".into(),
        resolution: n,
        estimated_error: (fine - coarse).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReference {
    pub eigenvalue: OracleResult,
    /// `mu / (1 + mu)`, the decay rate of the linear pseudo-parabolic flow.
    pub decay_rate: f64,
}

/// Closed-form eigenvalue of the separable mode `(k, m)` on `[-L, 0] x S^1`
/// with the outer end Neumann. DirichletTip modes start at `k = 1`.
pub fn eigen_reference(depth: f64, tip: TipBc, k: usize, m: usize) -> Result<EigenReference> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidParameter(format!("depth must be positive, got {depth}")));
    }
    let mu_s = match tip {
        TipBc::DirichletTip => {
            if k == 0 {
                return Err(Error::InvalidParameter("DirichletTip modes are numbered from k = 1".into()));
            }
            ((2 * k - 1) as f64 * PI / (2.0 * depth)).powi(2)
        }
        TipBc::NeumannTip => (k as f64 * PI / depth).powi(2),
    };
    let mu = mu_s + (m * m) as f64;
    Ok(EigenReference {
        eigenvalue: OracleResult {
            value: mu,
            method: "separation_of_variables".into(),
            resolution: 0,
            estimated_error: 0.0,
        },
        decay_rate: mu / (1.0 + mu),
    })
}

/// Per-step factor of the linear implicit scheme on an eigenvector.
pub fn eigenline_amplification(mu: f64, dt: f64) -> f64 {
    (1.0 + mu) / (1.0 + (1.0 + dt) * mu)
}

/// Sorted generalized eigenvalues of `K x = mu M x` for the five-point
/// cone stencil, assembled here from the stencil formulas and solved densely.
pub fn dense_generalized_eigenvalues(depth: f64, ns: usize, ntheta: usize, tip: TipBc) -> Result<Vec<f64>> {
    if ns < 4 || ntheta < 4 {
        return Err(Error::UndersizedGrid(format!("{ns} x {ntheta}")));
    }
    let hs = depth / (ns - 1) as f64;
    let ht = 2.0 * PI / ntheta as f64;
    let first = usize::from(tip == TipBc::DirichletTip);
    let rows = ns - first;
    let n = rows * ntheta;
    if n > 4096 {
        return Err(Error::Unsupported(format!("dense eigensolve of size {n}")));
    }
    let at = |r: usize, j: usize| r * ntheta + j;
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut mass = vec![0.0; n];
    for r in 0..rows {
        let i = r + first;
        let row_len = if i == 0 || i == ns - 1 { hs / 2.0 } else { hs };
        for j in 0..ntheta {
            let a = at(r, j);
            mass[a] = row_len * ht;
            // theta neighbours: flux coefficient row_len / ht
            let jp = (j + 1) % ntheta;
            let c = row_len / ht;
            let b = at(r, jp);
            k[(a, a)] += c;
            k[(b, b)] += c;
            k[(a, b)] -= c;
            k[(b, a)] -= c;
            // link to the next row outward
            if i + 1 < ns {
                let b = at(r + 1, j);
                let c = ht / hs;
                k[(a, a)] += c;
                k[(b, b)] += c;
                k[(a, b)] -= c;
                k[(b, a)] -= c;
            }
            // link to a constrained tip row
            if i == 1 && first == 1 {
                k[(a, a)] += ht / hs;
            }
        }
    }
    let scale: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |x, y| k[(x, y)] * scale[x] * scale[y]);
    let mut eig: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvergenceReport {
    /// All values agree to rounding.
    Exact {
        value: f64,
    },
    /// `order` comes from the finest pair or triple.
    Order {
        order: f64,
        errors: Vec<f64>,
    },
    Inconsistent {
        reason: String,
    },
}

impl ConvergenceReport {
    pub fn order(&self) -> Option<f64> {
        match self {
            ConvergenceReport::Order { order, .. } => Some(*order),
            _ => None,
        }
    }
}

/// Observed order of `value(h)` from samples ordered coarse to fine.
///
/// With `exact` given, errors must shrink strictly and the order is taken
/// from the two finest samples. Without it, three samples are needed and
/// the order solves `(h0^q - h1^q) / (h1^q - h2^q) = d1 / d2` for the last
/// three; the ratios of `h` may differ.
pub fn convergence_study(samples: &[(f64, f64)], exact: Option<f64>) -> Result<ConvergenceReport> {
    if samples.len() < 2 {
        return Err(Error::Precondition("convergence study needs at least two resolutions".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 < w[0].0 && w[1].0 > 0.0)) {
        return Err(Error::Precondition("resolutions must be positive and strictly refining".into()));
    }
    let scale = samples.iter().map(|s| s.1.abs()).fold(exact.map_or(0.0, f64::abs), f64::max).max(1e-300);
    if samples.iter().all(|s| (s.1 - samples[0].1).abs() <= 1e-13 * scale)
        && exact.is_none_or(|e| (samples[0].1 - e).abs() <= 1e-13 * scale)
    {
        return Ok(ConvergenceReport::Exact { value: samples[samples.len() - 1].1 });
    }
    match exact {
        Some(e) => {
            let errors: Vec<f64> = samples.iter().map(|s| (s.1 - e).abs()).collect();
            if errors.windows(2).any(|w| !(w[1] < w[0])) {
                return Ok(ConvergenceReport::Inconsistent { reason: format!("errors not decreasing: {errors:?}") });
            }
            let n = samples.len();
            let order = (errors[n - 2] / errors[n - 1]).ln() / (samples[n - 2].0 / samples[n - 1].0).ln();
            Ok(ConvergenceReport::Order { order, errors })
        }
        None => {
            if samples.len() < 3 {
                return Err(Error::Precondition("without an exact value three resolutions are needed".into()));
            }
            let n = samples.len();
            let (h0, h1, h2) = (samples[n - 3].0, samples[n - 2].0, samples[n - 1].0);
            let d1 = samples[n - 2].1 - samples[n - 3].1;
            let d2 = samples[n - 1].1 - samples[n - 2].1;
            if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() || d2.abs() >= d1.abs() {
                return Ok(ConvergenceReport::Inconsistent {
                    reason: format!("differences {d1:e}, {d2:e} are not monotone and shrinking"),
                });
            }
            let target = d1 / d2;
            let ratio = |q: f64| (h0.powf(q) - h1.powf(q)) / (h1.powf(q) - h2.powf(q));
            let (mut lo, mut hi) = (1e-3, 16.0);
            if !(ratio(lo) <= target && target <= ratio(hi)) {
                return Ok(ConvergenceReport::Inconsistent {
                    reason: format!("difference ratio {target} out of range"),
                });
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ratio(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let q = 0.5 * (lo + hi);
            // error estimate of the finest value from the fitted power law
            let c = d2 / (h2.powf(q) - h1.powf(q));
            let errors = samples.iter().map(|s| (c * s.0.powf(q)).abs()).collect();
            Ok(ConvergenceReport::Order { order: q, errors })
        }
    }
}

/// Decay rate `r` from a least-squares fit of `ln sqrt(H2) = c - r t`.
pub fn fitted_decay_rate(rows: &[Row]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::Precondition("decay fit needs at least two rows".into()));
    }
    if rows.iter().any(|r| !(r.h2 > 0.0)) {
        return Err(Error::Precondition("decay fit needs positive H2".into()));
    }
    let n = rows.len() as f64;
    let tm = rows.iter().map(|r| r.t).sum::<f64>() / n;
    let ym = rows.iter().map(|r| 0.5 * r.h2.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in rows {
        let dx = r.t - tm;
        sxy += dx * (0.5 * r.h2.ln() - ym);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("all rows at one time".into()));
    }
    Ok(-sxy / sxx)
}
