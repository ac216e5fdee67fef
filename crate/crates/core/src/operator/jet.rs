use nalgebra::{DMatrix, DVector};

use super::QuasilinearOperator;
use crate::error::{Error, Result};
use crate::functions::SmoothFunction;
use crate::geometry::VectorFieldSystem;
use crate::grid::GridFunction;

/// Horizontal gradient `𝔛u = σᵀ∇u` and symmetrized horizontal Hessian
/// `𝔛*𝔛u = σᵀD²uσ + M(x, ∇u)` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalJet {
    pub base: Vec<f64>,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl HorizontalJet {
    pub fn grad_slice(&self) -> &[f64] {
        self.grad.as_slice()
    }

    /// Hessian as a row-major buffer.
    pub fn hess_row_major(&self) -> Vec<f64> {
        let m = self.hess.nrows();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = self.hess[(i, j)];
            }
        }
        out
    }
}

/// Builds the jet from ambient derivatives.
///
/// `sigma` is column-major `n×m`, `dsigma` uses the crate-wide layout,
/// `grad_u` has length `n` and `hess_u` is row-major `n×n`.
/// `M_ij = ½(⟨Dσʲσⁱ, ∇u⟩ + ⟨Dσⁱσʲ, ∇u⟩)`.
pub fn jet_from_derivatives(
    n: usize,
    m: usize,
    sigma: &[f64],
    dsigma: &[f64],
    grad_u: &[f64],
    hess_u: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let grad = DVector::from_fn(m, |i, _| (0..n).map(|k| sigma[i * n + k] * grad_u[k]).sum());
    // w[j][i] = ⟨Dσʲσⁱ, ∇u⟩
    let mut w = vec![0.0; m * m];
    for j in 0..m {
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..n {
                let mut row = 0.0;
                for l in 0..n {
                    row += dsigma[(j * n + k) * n + l] * sigma[i * n + l];
                }
                acc += row * grad_u[k];
            }
            w[j * m + i] = acc;
        }
    }
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..n {
                    acc += sigma[i * n + k] * hess_u[k * n + l] * sigma[j * n + l];
                }
            }
            acc += 0.5 * (w[j * m + i] + w[i * m + j]);
            hess[(i, j)] = acc;
            hess[(j, i)] = acc;
        }
    }
    (grad, hess)
}

/// Jet of a smooth function at `x`.
pub fn horizontal_jet(sys: &VectorFieldSystem, u: &dyn SmoothFunction, x: &[f64]) -> Result<HorizontalJet> {
    let (n, m) = (sys.dim(), sys.fields());
    if u.dim() != n {
        return Err(Error::Dimension { expected: n, got: u.dim() });
    }
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    let mut s = vec![0.0; n * m];
    let mut ds = vec![0.0; m * n * n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    sys.sigma_into(x, &mut s);
    sys.dsigma_into(x, &mut ds);
    u.gradient(x, &mut g);
    u.hessian(x, &mut h);
    let (grad, hess) = jet_from_derivatives(n, m, &s, &ds, &g, &h);
    Ok(HorizontalJet { base: x.to_vec(), grad, hess })
}

/// Second-order central differences of a grid field at `node`.
pub(crate) fn grid_derivatives(u: &GridFunction, node: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = u.grid();
    if grid.is_rim(node) {
        return Err(Error::BoundaryStencil { node });
    }
    let n = grid.dim();
    let h = grid.spacing();
    let st = grid.strides();
    let v = u.values();
    let c = v[node];
    let mut g = vec![0.0; n];
    let mut hs = vec![0.0; n * n];
    for k in 0..n {
        let p = v[node + st[k]];
        let q = v[node - st[k]];
        g[k] = (p - q) / (2.0 * h[k]);
        hs[k * n + k] = (p - 2.0 * c + q) / (h[k] * h[k]);
        for l in k + 1..n {
            let pp = v[node + st[k] + st[l]];
            let pm = v[node + st[k] - st[l]];
            let mp = v[node - st[k] + st[l]];
            let mm = v[node - st[k] - st[l]];
            let d = (pp - pm - mp + mm) / (4.0 * h[k] * h[l]);
            hs[k * n + l] = d;
            hs[l * n + k] = d;
        }
    }
    Ok((g, hs))
}

/// Jet of a grid field at an interior node.
pub fn horizontal_jet_grid(sys: &VectorFieldSystem, u: &GridFunction, node: usize) -> Result<HorizontalJet> {
    let (n, m) = (sys.dim(), sys.fields());
    if u.grid().dim() != n {
        return Err(Error::Dimension { expected: n, got: u.grid().dim() });
    }
    let (g, h) = grid_derivatives(u, node)?;
    let x = u.grid().coords(node);
    let mut s = vec![0.0; n * m];
    let mut ds = vec![0.0; m * n * n];
    sys.sigma_into(&x, &mut s);
    sys.dsigma_into(&x, &mut ds);
    let (grad, hess) = jet_from_derivatives(n, m, &s, &ds, &g, &h);
    Ok(HorizontalJet { base: x, grad, hess })
}

/// `ℒu(x)` through the smooth-callable path.
pub fn evaluate_operator(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    u: &dyn SmoothFunction,
    x: &[f64],
) -> Result<f64> {
    op.check_dim(sys.fields())?;
    let jet = horizontal_jet(sys, u, x)?;
    Ok(op.apply(jet.grad_slice(), &jet.hess_row_major()).value)
}

/// `ℒu` at an interior grid node from central differences.
pub fn evaluate_operator_grid(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    u: &GridFunction,
    node: usize,
) -> Result<f64> {
    op.check_dim(sys.fields())?;
    let jet = horizontal_jet_grid(sys, u, node)?;
    Ok(op.apply(jet.grad_slice(), &jet.hess_row_major()).value)
}

/// `max |σᵀ∇u|` over nodes off the rim, from central differences.
pub fn horizontal_gradient_norm_grid(sys: &VectorFieldSystem, u: &GridFunction) -> f64 {
    let grid = u.grid();
    let (n, m) = (sys.dim(), sys.fields());
    let h = grid.spacing();
    let st = grid.strides();
    let v = u.values();
    let mut x = vec![0.0; n];
    let mut s = vec![0.0; n * m];
    let mut g = vec![0.0; n];
    let mut best: f64 = 0.0;
    for node in 0..grid.len() {
        if grid.is_rim(node) {
            continue;
        }
        grid.coords_into(node, &mut x);
        sys.sigma_into(&x, &mut s);
        for k in 0..n {
            g[k] = (v[node + st[k]] - v[node - st[k]]) / (2.0 * h[k]);
        }
        let norm2: f64 = (0..m)
            .map(|i| {
                let xi: f64 = (0..n).map(|k| s[i * n + k] * g[k]).sum();
                xi * xi
            })
            .sum();
        best = best.max(norm2.sqrt());
    }
    best
}
