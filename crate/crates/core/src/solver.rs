//! Dirichlet solver for `ℒu = 0` on box grids by pseudo-time iteration, and
//! certified sub/super pairs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::VectorFieldSystem;
use crate::grid::{Grid, GridFunction};
use crate::operator::{Diffusion, QuasilinearOperator, ZeroGradientRule};

/// Regularization of `ξ⊗ξ/|ξ|²` used by the normalized p-Laplacian inside the solver.
pub const P_REGULARIZATION: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// `u ← u − τℒ̂u` with the local step `τ = cfl/L`.
    Explicit,
    /// Nesterov momentum on the same update, restarted whenever the residual grows.
    Accelerated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverParams {
    /// Fraction of the local stability bound `1/L` used as pseudo-time step.
    pub cfl: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: Scheme,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { cfl: 1.0, tolerance: 1e-8, max_iterations: 200_000, scheme: Scheme::Accelerated }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: GridFunction,
    /// `(iteration, ‖ℒ̂u‖∞)` per residual evaluation.
    pub history: Vec<(usize, f64)>,
    pub iterations: usize,
    pub residual: f64,
    /// Interior nodes where the zero-gradient surrogate was used at the end.
    pub degenerate_nodes: Vec<usize>,
}

/// Discrete operator `ℒ̂` on a fixed grid.
///
/// Second differences are central and written in Euclidean form
/// `σᵀD²uσ + M`. For `A(ξ) = ξ⊗ξ` the second-order term is the second
/// difference of `u` along `σξ` with interpolated end points, which keeps the
/// stencil weights nonnegative. Where the zero-gradient rule applies the node
/// uses `−a₁Tr(𝔛*𝔛u)` with `a₁` the least `ℰ` on the unit sphere.
pub struct Discretization<'a> {
    op: &'a QuasilinearOperator,
    grid: Grid,
    n: usize,
    m: usize,
    sigma: Vec<f64>,
    /// `c[node][(i*m + j)*n + k]`, with `M_ij = Σ_k c_ijk ∂_k u`.
    coupling: Vec<f64>,
    surrogate: f64,
    direction_step: f64,
}

struct NodeEval {
    value: f64,
    /// Gershgorin bound of the node's linearized stencil.
    lipschitz: f64,
    degenerate: bool,
}

impl<'a> Discretization<'a> {
    pub fn new(op: &'a QuasilinearOperator, sys: &VectorFieldSystem, grid: &Grid) -> Result<Self> {
        let (n, m) = (sys.dim(), sys.fields());
        if grid.dim() != n {
            return Err(Error::Dimension { expected: n, got: grid.dim() });
        }
        op.check_dim(m)?;
        if grid.counts().iter().any(|&c| c < 3) {
            return Err(Error::Config("solver grids need at least 3 nodes per axis".into()));
        }
        let mut sigma = vec![0.0; grid.len() * n * m];
        let mut coupling = vec![0.0; grid.len() * m * m * n];
        let mut x = vec![0.0; n];
        let mut ds = vec![0.0; m * n * n];
        for node in 0..grid.len() {
            grid.coords_into(node, &mut x);
            let s = &mut sigma[node * n * m..(node + 1) * n * m];
            sys.sigma_into(&x, s);
            sys.dsigma_into(&x, &mut ds);
            let c = &mut coupling[node * m * m * n..(node + 1) * m * m * n];
            // ⟨Dσʲσⁱ, e_k⟩ = Σ_l ∂_l σʲ_k σⁱ_l
            for i in 0..m {
                for j in 0..m {
                    for k in 0..n {
                        let mut a = 0.0;
                        let mut b = 0.0;
                        for l in 0..n {
                            a += ds[(j * n + k) * n + l] * s[i * n + l];
                            b += ds[(i * n + k) * n + l] * s[j * n + l];
                        }
                        c[(i * m + j) * n + k] = 0.5 * (a + b);
                    }
                }
            }
        }
        let edge = grid.domain().min_edge();
        let direction_step = (grid.max_spacing() * edge).sqrt() / 2.0;
        Ok(Self {
            op,
            grid: grid.clone(),
            n,
            m,
            sigma,
            coupling,
            surrogate: op.unit_energy_floor(m),
            direction_step: direction_step.max(grid.max_spacing()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn eval(&self, v: &[f64], node: usize, scratch: &mut Scratch) -> NodeEval {
        let (n, m) = (self.n, self.m);
        let h = self.grid.spacing();
        let st = self.grid.strides();
        let c0 = v[node];
        let Scratch { g, hs, xi, a, b, bm, dir, x, p } = scratch;
        for k in 0..n {
            let p = v[node + st[k]];
            let q = v[node - st[k]];
            g[k] = (p - q) / (2.0 * h[k]);
            hs[k * n + k] = (p - 2.0 * c0 + q) / (h[k] * h[k]);
            for l in k + 1..n {
                let d = (v[node + st[k] + st[l]] - v[node + st[k] - st[l]] - v[node - st[k] + st[l]]
                    + v[node - st[k] - st[l]])
                    / (4.0 * h[k] * h[l]);
                hs[k * n + l] = d;
                hs[l * n + k] = d;
            }
        }
        let s = &self.sigma[node * n * m..(node + 1) * n * m];
        let c = &self.coupling[node * m * m * n..(node + 1) * m * m * n];
        for i in 0..m {
            xi[i] = (0..n).map(|k| s[i * n + k] * g[k]).sum();
        }
        let degenerate = self.op.zero_rule == ZeroGradientRule::DropSecondOrder && xi.iter().all(|a| *a == 0.0);
        if degenerate {
            a.fill(0.0);
            for i in 0..m {
                a[i * m + i] = self.surrogate;
            }
        } else {
            self.op.diffusion_regularized_into(xi, P_REGULARIZATION, a);
        }
        let drift = self.op.drift(xi);
        // first-order coefficients b_k = Σ_ij A_ij c_ijk
        for k in 0..n {
            b[k] = 0.0;
            for e in 0..m * m {
                b[k] += a[e] * c[e * n + k];
            }
        }
        let first: f64 = (0..n).map(|k| b[k] * g[k]).sum();
        let first_l: f64 = (0..n).map(|k| b[k].abs() / h[k]).sum();
        if !degenerate && matches!(self.op.diffusion, Diffusion::Infinity) {
            if let Some((second, l)) = self.directional(v, node, s, xi, dir, x, p) {
                return NodeEval { value: -(second + first) + drift, lipschitz: l + first_l, degenerate };
            }
        }
        // B = σAσᵀ
        for k in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += s[i * n + k] * a[i * m + j] * s[j * n + l];
                    }
                }
                bm[k * n + l] = acc;
            }
        }
        let second: f64 = bm.iter().zip(hs.iter()).map(|(p, q)| p * q).sum();
        let mut lip = first_l;
        for k in 0..n {
            lip += 4.0 * bm[k * n + k].max(0.0) / (h[k] * h[k]);
            for l in 0..n {
                if l != k {
                    lip += bm[k * n + l].abs() / (h[k] * h[l]);
                }
            }
        }
        NodeEval { value: -(second + first) + drift, lipschitz: lip, degenerate }
    }

    /// `(σξ)ᵀD²u(σξ)` by a second difference along `σξ`, with its stencil bound.
    #[allow(clippy::too_many_arguments)]
    fn directional(
        &self,
        v: &[f64],
        node: usize,
        s: &[f64],
        xi: &[f64],
        dir: &mut [f64],
        x: &mut [f64],
        p: &mut [f64],
    ) -> Option<(f64, f64)> {
        let (n, m) = (self.n, self.m);
        for k in 0..n {
            dir[k] = (0..m).map(|i| s[i * n + k] * xi[i]).sum();
        }
        let norm2: f64 = dir.iter().map(|a| a * a).sum();
        if norm2 == 0.0 {
            return Some((0.0, 0.0));
        }
        let norm = norm2.sqrt();
        self.grid.coords_into(node, x);
        let lo = self.grid.lower();
        let hi = self.grid.upper();
        let mut step = self.direction_step;
        for k in 0..n {
            let d = (dir[k] / norm).abs();
            if d > 0.0 {
                step = step.min((x[k] - lo[k]) / d).min((hi[k] - x[k]) / d);
            }
        }
        if step < self.grid.min_spacing() {
            return None;
        }
        for k in 0..n {
            p[k] = x[k] + step * dir[k] / norm;
        }
        let up = self.grid.interpolate(v, p)?;
        for k in 0..n {
            p[k] = x[k] - step * dir[k] / norm;
        }
        let um = self.grid.interpolate(v, p)?;
        let second = norm2 * (up - 2.0 * v[node] + um) / (step * step);
        Some((second, 4.0 * norm2 / (step * step)))
    }
}

struct Scratch {
    g: Vec<f64>,
    hs: Vec<f64>,
    xi: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    bm: Vec<f64>,
    dir: Vec<f64>,
    x: Vec<f64>,
    p: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, m: usize) -> Self {
        Self {
            g: vec![0.0; n],
            hs: vec![0.0; n * n],
            xi: vec![0.0; m],
            a: vec![0.0; m * m],
            b: vec![0.0; n],
            bm: vec![0.0; n * n],
            dir: vec![0.0; n],
            x: vec![0.0; n],
            p: vec![0.0; n],
        }
    }
}

/// Evaluates `ℒ̂` on every interior node; returns the sup norm.
fn sweep(
    disc: &Discretization,
    interior: &[usize],
    v: &[f64],
    res: &mut [f64],
    lip: &mut [f64],
    degenerate: &mut [bool],
    scratch: &mut Scratch,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &node) in interior.iter().enumerate() {
        let e = disc.eval(v, node, scratch);
        res[i] = e.value;
        lip[i] = e.lipschitz;
        degenerate[i] = e.degenerate;
        worst = worst.max(e.value.abs());
    }
    worst
}

/// `ℒ̂u` on interior nodes, 0 on the rim.
pub fn residual(op: &QuasilinearOperator, sys: &VectorFieldSystem, u: &GridFunction) -> Result<GridFunction> {
    let disc = Discretization::new(op, sys, u.grid())?;
    let grid = u.grid();
    let mut out = vec![0.0; grid.len()];
    let mut scratch = Scratch::new(sys.dim(), sys.fields());
    for node in grid.interior_nodes() {
        out[node] = disc.eval(u.values(), node, &mut scratch).value;
    }
    GridFunction::with_mask(grid.clone(), out, u.mask().to_vec())
}

/// Solves `ℒ̂u = 0` on interior nodes with `u = boundary` on the rim.
///
/// The interior starts at the midrange of the rim data. Iterations count residual
/// evaluations, so data that is already a fixed point takes one.
pub fn solve_dirichlet(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    grid: &Grid,
    boundary: &dyn Fn(&[f64]) -> f64,
    params: &SolverParams,
) -> Result<Solution> {
    if !(params.cfl > 0.0 && params.cfl <= 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", params.cfl)));
    }
    if !(params.tolerance > 0.0) || params.max_iterations == 0 {
        return Err(Error::Config("tolerance and max_iterations must be positive".into()));
    }
    let disc = Discretization::new(op, sys, grid)?;
    let rim = grid.rim_nodes();
    let interior = grid.interior_nodes();
    let mut u = vec![0.0; grid.len()];
    let mut x = vec![0.0; grid.dim()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &node in &rim {
        grid.coords_into(node, &mut x);
        let f = boundary(&x);
        if !f.is_finite() {
            return Err(Error::Config(format!("boundary data is not finite at {x:?}")));
        }
        u[node] = f;
        lo = lo.min(f);
        hi = hi.max(f);
    }
    let start = 0.5 * (lo + hi);
    for &node in &interior {
        u[node] = start;
    }
    let k = interior.len();
    let mut res = vec![0.0; k];
    let mut lip = vec![0.0; k];
    let mut deg = vec![false; k];
    let mut scratch = Scratch::new(sys.dim(), sys.fields());
    let mut history = Vec::new();
    let mut prev = u.clone();
    let mut y = u.clone();
    let mut momentum_age = 0usize;
    let mut last = f64::INFINITY;
    for it in 1..=params.max_iterations {
        let r = sweep(&disc, &interior, &y, &mut res, &mut lip, &mut deg, &mut scratch);
        history.push((it, r));
        if !r.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual: r });
        }
        if r <= params.tolerance {
            let degenerate_nodes = interior.iter().zip(&deg).filter(|(_, d)| **d).map(|(n, _)| *n).collect();
            let field = GridFunction::new(grid.clone(), y)?;
            return Ok(Solution { field, history, iterations: it, residual: r, degenerate_nodes });
        }
        match params.scheme {
            Scheme::Explicit => {
                for (i, &node) in interior.iter().enumerate() {
                    y[node] -= params.cfl / lip[i].max(f64::MIN_POSITIVE) * res[i];
                }
            }
            Scheme::Accelerated => {
                if r > last {
                    // restart from the current look-ahead point
                    momentum_age = 0;
                    prev.copy_from_slice(&y);
                }
                last = r;
                // u_new = y − τℒ̂y; y_next = u_new + β(u_new − u)
                for (i, &node) in interior.iter().enumerate() {
                    u[node] = y[node] - params.cfl / lip[i].max(f64::MIN_POSITIVE) * res[i];
                }
                momentum_age += 1;
                let beta = (momentum_age as f64 - 1.0) / (momentum_age as f64 + 2.0);
                for &node in &interior {
                    y[node] = u[node] + beta * (u[node] - prev[node]);
                    prev[node] = u[node];
                }
            }
        }
    }
    let r = history.last().map(|h| h.1).unwrap_or(f64::INFINITY);
    Err(Error::NonConvergence { iterations: params.max_iterations, residual: r })
}

/// Sub-solution from data `f − gap` and super-solution from `f`, each certified
/// nodewise (`ℒ̂u ≤ tol`, `ℒ̂v ≥ −tol`) before return.
pub fn make_sub_super_pair(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    grid: &Grid,
    boundary: &dyn Fn(&[f64]) -> f64,
    gap: f64,
    params: &SolverParams,
) -> Result<(Solution, Solution)> {
    if !(gap >= 0.0 && gap.is_finite()) {
        return Err(Error::Config(format!("gap must be nonnegative, got {gap}")));
    }
    let shifted = |x: &[f64]| boundary(x) - gap;
    let sub = solve_dirichlet(op, sys, grid, &shifted, params)?;
    let sup = solve_dirichlet(op, sys, grid, boundary, params)?;
    let tol = params.tolerance;
    let rs = residual(op, sys, &sub.field)?;
    let rv = residual(op, sys, &sup.field)?;
    let mut bad = Vec::new();
    for node in grid.interior_nodes() {
        if rs.value(node) > tol {
            bad.push((node, rs.value(node)));
        }
        if rv.value(node) < -tol {
            bad.push((node, rv.value(node)));
        }
    }
    for node in grid.rim_nodes() {
        if sub.field.value(node) > sup.field.value(node) {
            bad.push((node, sub.field.value(node) - sup.field.value(node)));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Certification { nodes: bad });
    }
    Ok((sub, sup))
}
