//! Discretized stretched cone `[0,1) x S^1` in logarithmic coordinates.
//!
//! With `s = ln x1` the Fuchsian operator `(x1 d/dx1)^2 + d^2/dtheta^2`
//! becomes the flat Laplacian in `(s, theta)` and the cone measure
//! `dx1/x1 dtheta` becomes `ds dtheta`. The tip `x1 = 0` sits at
//! `s = -inf`; the grid truncates at `s = -L`.
//!
//! Nodes are vertex-centered: `s_i = -L + i*hs` with `hs = L/(Ns-1)`,
//! `i = 0..Ns`, and `theta_j = j*htheta` with `htheta = 2*pi/Ntheta`
//! (periodic). Quadrature is trapezoidal in `s` (half weights on the two
//! end rows) and the periodic rectangle rule in `theta`.
//!
//! Operators are built from a node-to-edge difference map `G` (incidence,
//! entries `+1/-1`) and positive edge conductances `W = area/length^2`,
//! so that the stiffness matrix is `K = G^T W G` by construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Condition imposed at the truncated tip `s = -L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TipBc {
    /// `d_s u = 0`: the log-coordinate form of `grad_B u . nu = 0`.
    NeumannTip,
    /// `u = 0` on the tip row; those nodes are eliminated.
    DirichletTip,
}

impl std::fmt::Display for TipBc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TipBc::NeumannTip => write!(f, "NeumannTip"),
            TipBc::DirichletTip => write!(f, "DirichletTip"),
        }
    }
}

impl std::str::FromStr for TipBc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "NeumannTip" => Ok(TipBc::NeumannTip),
            "DirichletTip" => Ok(TipBc::DirichletTip),
            other => Err(Error::Parse(format!("unknown tip condition `{other}`"))),
        }
    }
}

/// Condition at the outer edge `s = 0` (`x1 = 1`). Only zero flux is offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum OuterBc {
    #[default]
    NeumannOuter,
}

/// Exponent, dimension and source switches of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub n: u32,
    /// Subtract the mean-field term `|B|^-1 * int |u|^{p-1} u`.
    pub nonlocal_on: bool,
    /// When false the right-hand side is dropped entirely (linear flow).
    #[serde(default = "default_true")]
    pub source_on: bool,
}

fn default_true() -> bool {
    true
}

impl ProblemParams {
    pub fn new(p: f64, n: u32, nonlocal_on: bool) -> Result<Self> {
        let params = ProblemParams { p, n, nonlocal_on, source_on: true };
        params.validate()?;
        Ok(params)
    }

    /// Same exponent, nonlinearity switched off.
    pub fn linear(p: f64) -> Result<Self> {
        let mut params = Self::new(p, 2, false)?;
        params.source_on = false;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("dimension n = {} must be >= 2", self.n)));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::InvalidParameter(format!("exponent p = {} must satisfy p > 1", self.p)));
        }
        if let Some(crit) = self.critical_exponent() {
            if self.p + 1.0 >= crit {
                return Err(Error::InvalidParameter(format!(
                    "p + 1 = {} is not below the critical exponent 2n/(n-2) = {crit}",
                    self.p + 1.0
                )));
            }
        }
        Ok(())
    }

    /// `2n/(n-2)` for `n >= 3`; `None` when every `p > 1` is subcritical.
    pub fn critical_exponent(&self) -> Option<f64> {
        (self.n >= 3).then(|| 2.0 * self.n as f64 / (self.n as f64 - 2.0))
    }

    /// The discretization models `X = S^1` only.
    pub fn require_planar(&self) -> Result<()> {
        self.validate()?;
        if self.n != 2 {
            return Err(Error::Unsupported(format!(
                "dimension n = {} (only n = 2 with X = S^1 is discretized)",
                self.n
            )));
        }
        Ok(())
    }

    /// `(p-1) / (2(p+1))`, the coefficient linking `J`, `I` and the gradient energy.
    pub fn well_coefficient(&self) -> f64 {
        (self.p - 1.0) / (2.0 * (self.p + 1.0))
    }
}

/// Discrete stretched cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeGrid {
    depth: f64,
    ns: usize,
    ntheta: usize,
    tip_bc: TipBc,
    outer_bc: OuterBc,
    hs: f64,
    htheta: f64,
    measure: f64,
    id: u64,
}

impl ConeGrid {
    /// Build a grid over `s in [-depth, 0]` with `ns x ntheta` nodes.
    pub fn new(depth: f64, ns: usize, ntheta: usize, tip_bc: TipBc) -> Result<Self> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidParameter(format!("depth L = {depth} must be positive")));
        }
        if ns < 4 || ntheta < 4 {
            return Err(Error::UndersizedGrid(format!(
                "need Ns >= 4 and Ntheta >= 4, got Ns = {ns}, Ntheta = {ntheta}"
            )));
        }
        let hs = depth / (ns - 1) as f64;
        let htheta = 2.0 * PI / ntheta as f64;
        let mut grid = ConeGrid {
            depth,
            ns,
            ntheta,
            tip_bc,
            outer_bc: OuterBc::NeumannOuter,
            hs,
            htheta,
            measure: 0.0,
            id: fingerprint(depth, ns, ntheta, tip_bc),
        };
        // same summation order as `DiscreteOperators::integrate`
        grid.measure = (0..grid.len()).map(|k| grid.node_weight(k)).fold(0.0, |acc, w| acc + w);
        Ok(grid)
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }
    pub fn ns(&self) -> usize {
        self.ns
    }
    pub fn ntheta(&self) -> usize {
        self.ntheta
    }
    pub fn tip_bc(&self) -> TipBc {
        self.tip_bc
    }
    pub fn outer_bc(&self) -> OuterBc {
        self.outer_bc
    }
    pub fn hs(&self) -> f64 {
        self.hs
    }
    pub fn htheta(&self) -> f64 {
        self.htheta
    }
    pub fn id(&self) -> u64 {
        self.id
    }

    /// `|B_h|`: sum of the quadrature weights of the active nodes.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Index of the first unconstrained `s` row.
    pub fn first_active_row(&self) -> usize {
        match self.tip_bc {
            TipBc::NeumannTip => 0,
            TipBc::DirichletTip => 1,
        }
    }

    /// Number of unconstrained `s` rows.
    pub fn active_rows(&self) -> usize {
        self.ns - self.first_active_row()
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.active_rows() * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unknown index of active row `r` (counted from the first active row), column `j`.
    #[inline]
    pub fn index(&self, r: usize, j: usize) -> usize {
        r * self.ntheta + j
    }

    /// `s` coordinate of active row `r`.
    pub fn s_of_row(&self, r: usize) -> f64 {
        let i = r + self.first_active_row();
        if i + 1 == self.ns {
            0.0
        } else {
            -self.depth + i as f64 * self.hs
        }
    }

    pub fn theta_of_col(&self, j: usize) -> f64 {
        j as f64 * self.htheta
    }

    /// `(s, theta)` of unknown `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        (self.s_of_row(k / self.ntheta), self.theta_of_col(k % self.ntheta))
    }

    /// Trapezoid weight in `s` for grid row `i` (absolute, including the tip row).
    pub fn s_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.ns {
            0.5 * self.hs
        } else {
            self.hs
        }
    }

    /// Quadrature weight of unknown `k`.
    pub fn node_weight(&self, k: usize) -> f64 {
        self.s_weight(k / self.ntheta + self.first_active_row()) * self.htheta
    }
}

fn fingerprint(depth: f64, ns: usize, ntheta: usize, tip_bc: TipBc) -> u64 {
    // FNV-1a over the defining parameters
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&depth.to_bits().to_le_bytes());
    feed(&(ns as u64).to_le_bytes());
    feed(&(ntheta as u64).to_le_bytes());
    feed(&[tip_bc as u8]);
    h
}

/// One scalar state on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    grid_id: u64,
}

impl Field {
    pub fn new(grid: &ConeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Field { values, grid_id: grid.id() })
    }

    pub fn zeros(grid: &ConeGrid) -> Self {
        Field { values: vec![0.0; grid.len()], grid_id: grid.id() }
    }

    pub fn constant(grid: &ConeGrid, c: f64) -> Self {
        Field { values: vec![c; grid.len()], grid_id: grid.id() }
    }

    /// Sample `f(s, theta)` at every unknown.
    pub fn from_fn(grid: &ConeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (s, th) = grid.coords(k);
                f(s, th)
            })
            .collect();
        Field { values, grid_id: grid.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Errors unless the field lives on `grid` and every entry is finite.
    pub fn check_on(&self, grid: &ConeGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: self.values.len() });
        }
        if self.grid_id != grid.id() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(())
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field { values: self.values.iter().map(|v| v * factor).collect(), grid_id: self.grid_id }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Compressed sparse row matrix, enough for the stiffness operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}

/// Direction of a grid edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    S,
    Theta,
}

/// Edge of the difference map: `(G u)_e = u[head] - u[tail]`, where a
/// missing tail is a constrained (zero) tip node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: Option<usize>,
    pub head: usize,
    pub kind: EdgeKind,
    /// Physical edge length (`hs` or `htheta`).
    pub length: f64,
}

/// Mass, difference map, conductances and assembled stiffness.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    grid_id: u64,
    mass: Vec<f64>,
    edges: Vec<Edge>,
    conductance: Vec<f64>,
    stiffness: CsrMatrix,
}

impl DiscreteOperators {
    pub fn assemble(grid: &ConeGrid) -> Self {
        let nt = grid.ntheta();
        let first = grid.first_active_row();
        let rows = grid.active_rows();
        let mass: Vec<f64> = (0..grid.len()).map(|k| grid.node_weight(k)).collect();

        let mut edges = Vec::with_capacity(2 * grid.len());
        let mut conductance = Vec::with_capacity(2 * grid.len());

        // s-edges between grid rows i and i+1 (dual area hs*htheta)
        let s_cond = grid.htheta() / grid.hs();
        for i in 0..grid.ns() - 1 {
            for j in 0..nt {
                let tail = (i >= first).then(|| grid.index(i - first, j));
                let head = grid.index(i + 1 - first, j);
                edges.push(Edge { tail, head, kind: EdgeKind::S, length: grid.hs() });
                conductance.push(s_cond);
            }
        }
        // periodic theta-edges on every active row (dual area s_weight*htheta)
        for r in 0..rows {
            let theta_cond = grid.s_weight(r + first) / grid.htheta();
            for j in 0..nt {
                let tail = Some(grid.index(r, j));
                let head = grid.index(r, (j + 1) % nt);
                edges.push(Edge { tail, head, kind: EdgeKind::Theta, length: grid.htheta() });
                conductance.push(theta_cond);
            }
        }

        let stiffness = assemble_gtwg(grid.len(), &edges, &conductance);
        DiscreteOperators { grid_id: grid.id(), mass, edges, conductance, stiffness }
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
    /// Diagonal of `M`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    /// Diagonal of `W`.
    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.mass.len() {
            return Err(Error::ShapeMismatch { expected: self.mass.len(), got: u.len() });
        }
        if u.grid_id() != self.grid_id {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `G u`: one difference per edge.
    pub fn difference(&self, u: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|e| u[e.head] - e.tail.map_or(0.0, |t| u[t])).collect()
    }

    /// Difference quotients `(G u)_e / length_e`, the discrete `grad_B u` on edges.
    pub fn edge_gradient(&self, u: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|e| (u[e.head] - e.tail.map_or(0.0, |t| u[t])) / e.length).collect()
    }

    /// `G^T y` for an edge field `y`.
    pub fn difference_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mass.len()];
        for (e, &ye) in self.edges.iter().zip(y) {
            out[e.head] += ye;
            if let Some(t) = e.tail {
                out[t] -= ye;
            }
        }
        out
    }

    /// `K u` with the assembled matrix.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.mul_vec(u)
    }

    /// `v^T K u` through the assembled matrix.
    pub fn stiffness_form(&self, v: &[f64], u: &[f64]) -> f64 {
        dot(v, &self.stiffness.mul_vec(u))
    }

    /// `(G v)^T W (G u)` through the edge map.
    pub fn edge_form(&self, v: &[f64], u: &[f64]) -> f64 {
        let gv = self.difference(v);
        let gu = self.difference(u);
        gv.iter().zip(&gu).zip(&self.conductance).fold(0.0, |acc, ((a, b), w)| acc + w * a * b)
    }

    /// `1^T M u`, the cone integral of `u`.
    pub fn integrate(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(self.integrate_raw(u.values()))
    }

    pub(crate) fn integrate_raw(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).fold(0.0, |acc, (m, v)| acc + m * v)
    }

    /// `u^T K u`, the discrete `int |grad_B u|^2 dmu`.
    pub fn grad_energy(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(self.grad_energy_raw(u.values()))
    }

    /// Summed edge by edge: every term is non-negative, so nearly constant
    /// fields do not lose digits the way `u^T K u` does.
    pub(crate) fn grad_energy_raw(&self, u: &[f64]) -> f64 {
        self.edge_form(u, u)
    }

    /// `(u, v)` in the cone `L^2` inner product.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.iter().zip(u).zip(v).fold(0.0, |acc, ((m, a), b)| acc + m * a * b)
    }

    /// `int |u|^q dmu`.
    pub fn power_integral(&self, u: &[f64], q: f64) -> f64 {
        self.mass.iter().zip(u).fold(0.0, |acc, (m, v)| acc + m * v.abs().powf(q))
    }

    /// Squared full Sobolev norm `||u||^2 + ||grad_B u||^2`.
    pub fn h1_norm_sq(&self, u: &[f64]) -> f64 {
        self.mass_inner(u, u) + self.grad_energy_raw(u)
    }
}

fn assemble_gtwg(n: usize, edges: &[Edge], conductance: &[f64]) -> CsrMatrix {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); n];
    let mut add = |i: usize, j: usize, v: f64| {
        let row = &mut rows[i];
        match row.iter_mut().find(|(c, _)| *c == j) {
            Some(entry) => entry.1 += v,
            None => row.push((j, v)),
        }
    };
    for (e, &w) in edges.iter().zip(conductance) {
        add(e.head, e.head, w);
        if let Some(t) = e.tail {
            add(t, t, w);
            add(t, e.head, -w);
            add(e.head, t, -w);
        }
    }
    CsrMatrix::from_rows(rows)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}
