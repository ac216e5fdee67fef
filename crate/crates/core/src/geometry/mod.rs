//! Hörmander vector-field systems: coefficient matrices, brackets, rank and
//! step, exponential flows and their Jacobians, and pulled-back systems.
//!
//! A system with `m` fields on `ℝⁿ` is described by `σ(x)`, the `n×m` matrix
//! whose column `j` holds the coefficients of `X_j = σʲ·∇`, together with the
//! Jacobians `Dσʲ`. Flat buffers use these layouts throughout the crate:
//!
//! * `sigma`: column-major, `out[j*n + k] = σʲ_k(x)`;
//! * `dsigma`: `out[(j*n + k)*n + l] = ∂_l σʲ_k(x)`.

mod flow;
mod perturbation;
mod pullback;
pub mod polynomial;
mod rank;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::BoxDomain;
use polynomial::{PolyField, Polynomial};

pub use flow::{exp_flow, exp_flow_default, flow_jacobian, flow_with_jacobian, DEFAULT_FLOW_STEPS};
pub use perturbation::{perturbed_operator_convergence, PerturbationRow};
pub use pullback::{pullback_system, Diffeomorphism, FlowMap, Identity, Translation};
pub use rank::{hormander_rank, RankReport, RANK_TOLERANCE};

/// Central-difference step used when a system has no closed-form `Dσ`.
pub const FD_STEP: f64 = 1e-5;

/// Coefficient provider for a vector-field system.
pub trait FieldCoefficients: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn fields(&self) -> usize;

    /// Writes `σ(x)` column-major into `out` (length `n*m`).
    fn sigma_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes the `m` Jacobians `Dσʲ(x)` into `out` (length `m*n*n`).
    ///
    /// The default uses central differences with step [`FD_STEP`].
    fn dsigma_into(&self, x: &[f64], out: &mut [f64]) {
        fd_dsigma(self, x, out, FD_STEP);
    }

    /// Exact polynomial coefficients, when available. Enables symbolic brackets.
    fn polynomial_fields(&self) -> Option<Vec<PolyField>> {
        None
    }
}

pub(crate) fn fd_dsigma<C: FieldCoefficients + ?Sized>(c: &C, x: &[f64], out: &mut [f64], step: f64) {
    let n = c.dim();
    let m = c.fields();
    let mut xp = x.to_vec();
    let mut plus = vec![0.0; n * m];
    let mut minus = vec![0.0; n * m];
    for l in 0..n {
        xp[l] = x[l] + step;
        c.sigma_into(&xp, &mut plus);
        xp[l] = x[l] - step;
        c.sigma_into(&xp, &mut minus);
        xp[l] = x[l];
        for j in 0..m {
            for k in 0..n {
                out[(j * n + k) * n + l] = (plus[j * n + k] - minus[j * n + k]) / (2.0 * step);
            }
        }
    }
}

/// `m` smooth vector fields on a box in `ℝⁿ`.
#[derive(Clone)]
pub struct VectorFieldSystem {
    coeffs: Arc<dyn FieldCoefficients>,
    name: Option<String>,
    declared_step: Option<usize>,
    domain: BoxDomain,
}

impl fmt::Debug for VectorFieldSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSystem")
            .field("name", &self.name)
            .field("n", &self.dim())
            .field("m", &self.fields())
            .field("declared_step", &self.declared_step)
            .field("domain", &self.domain)
            .finish()
    }
}

impl VectorFieldSystem {
    pub fn new(coeffs: Arc<dyn FieldCoefficients>, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != coeffs.dim() {
            return Err(Error::Dimension { expected: coeffs.dim(), got: domain.dim() });
        }
        if coeffs.fields() == 0 {
            return Err(Error::Config("a system needs at least one field".into()));
        }
        Ok(Self { coeffs, name: None, declared_step: None, domain })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_declared_step(mut self, step: usize) -> Self {
        self.declared_step = Some(step);
        self
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: domain.dim() });
        }
        self.domain = domain;
        Ok(self)
    }

    /// System given by polynomial coefficient tables, one [`PolyField`] per field.
    pub fn from_polynomials(fields: Vec<PolyField>, domain: BoxDomain) -> Result<Self> {
        Self::new(Arc::new(PolynomialFields::new(fields)?), domain)
    }

    /// System given by a closure for `σ`; `Dσ` falls back to central differences.
    pub fn from_fn<F>(n: usize, m: usize, sigma: F, domain: BoxDomain) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(Arc::new(FnFields { n, m, sigma: Box::new(sigma) }), domain)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn fields(&self) -> usize {
        self.coeffs.fields()
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn declared_step(&self) -> Option<usize> {
        self.declared_step
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn coefficients(&self) -> &Arc<dyn FieldCoefficients> {
        &self.coeffs
    }

    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.coeffs.sigma_into(x, out)
    }

    pub fn dsigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.coeffs.dsigma_into(x, out)
    }

    /// `σ(x)` as an `n×m` matrix.
    pub fn sigma(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.dim(), self.fields());
        let mut buf = vec![0.0; n * m];
        self.sigma_into(x, &mut buf);
        DMatrix::from_column_slice(n, m, &buf)
    }

    /// The Jacobians `Dσʲ(x)`, each `n×n` with rows indexed by component.
    pub fn dsigma(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let (n, m) = (self.dim(), self.fields());
        let mut buf = vec![0.0; m * n * n];
        self.dsigma_into(x, &mut buf);
        (0..m)
            .map(|j| DMatrix::from_row_slice(n, n, &buf[j * n * n..(j + 1) * n * n]))
            .collect()
    }

    /// Coefficients of field `j` at `x`.
    pub fn field(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.dim(), self.fields());
        if j >= m {
            return Err(Error::FieldIndex { index: j, fields: m });
        }
        let mut buf = vec![0.0; n * m];
        self.sigma_into(x, &mut buf);
        Ok(buf[j * n..(j + 1) * n].to_vec())
    }

    /// `Σ_j h_j σʲ(x)`.
    pub fn combination(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let (n, m) = (self.dim(), self.fields());
        let mut buf = vec![0.0; n * m];
        self.sigma_into(x, &mut buf);
        let mut v = vec![0.0; n];
        for j in 0..m {
            for k in 0..n {
                v[k] += h[j] * buf[j * n + k];
            }
        }
        v
    }
}

/// `[X_i, X_j](x) = Dσʲ(x)σⁱ(x) − Dσⁱ(x)σʲ(x)`, with zero-based field indices.
pub fn lie_bracket(
    sys: &VectorFieldSystem,
    i: usize,
    j: usize,
) -> Result<impl Fn(&[f64]) -> Vec<f64> + '_> {
    let m = sys.fields();
    for idx in [i, j] {
        if idx >= m {
            return Err(Error::FieldIndex { index: idx, fields: m });
        }
    }
    Ok(move |x: &[f64]| {
        let n = sys.dim();
        let mut s = vec![0.0; n * m];
        let mut ds = vec![0.0; m * n * n];
        sys.sigma_into(x, &mut s);
        sys.dsigma_into(x, &mut ds);
        (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ds[(j * n + k) * n + l] * s[i * n + l];
                    acc -= ds[(i * n + k) * n + l] * s[j * n + l];
                }
                acc
            })
            .collect()
    })
}

/// Coordinate fields `∂_1, …, ∂_n`.
#[derive(Debug, Clone, Copy)]
pub struct Euclidean {
    pub n: usize,
}

impl FieldCoefficients for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }
    fn fields(&self) -> usize {
        self.n
    }
    fn sigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for j in 0..self.n {
            out[j * self.n + j] = 1.0;
        }
    }
    fn dsigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn polynomial_fields(&self) -> Option<Vec<PolyField>> {
        let n = self.n;
        Some(
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| if k == j { Polynomial::constant(n, 1.0) } else { Polynomial::zero(n) })
                        .collect()
                })
                .collect(),
        )
    }
}

/// First Heisenberg group: `X₁ = ∂x − (y/2)∂t`, `X₂ = ∂y + (x/2)∂t`.
#[derive(Debug, Clone, Copy)]
pub struct Heisenberg;

impl FieldCoefficients for Heisenberg {
    fn dim(&self) -> usize {
        3
    }
    fn fields(&self) -> usize {
        2
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = -0.5 * x[1];
        out[3] = 0.0;
        out[4] = 1.0;
        out[5] = 0.5 * x[0];
    }
    fn dsigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        // ∂_y of the t-component of X₁
        out[2 * 3 + 1] = -0.5;
        // ∂_x of the t-component of X₂
        out[9 + 2 * 3] = 0.5;
    }
    fn polynomial_fields(&self) -> Option<Vec<PolyField>> {
        let one = Polynomial::constant(3, 1.0);
        let zero = Polynomial::zero(3);
        Some(vec![
            vec![one.clone(), zero.clone(), Polynomial::var(3, 1).scale(-0.5)],
            vec![zero, one, Polynomial::var(3, 0).scale(0.5)],
        ])
    }
}

/// Grushin plane: `X₁ = ∂x`, `X₂ = x∂y`.
#[derive(Debug, Clone, Copy)]
pub struct Grushin;

impl FieldCoefficients for Grushin {
    fn dim(&self) -> usize {
        2
    }
    fn fields(&self) -> usize {
        2
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = x[0];
    }
    fn dsigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[4 + 2] = 1.0;
    }
    fn polynomial_fields(&self) -> Option<Vec<PolyField>> {
        let one = Polynomial::constant(2, 1.0);
        let zero = Polynomial::zero(2);
        Some(vec![vec![one, zero.clone()], vec![zero, Polynomial::var(2, 0)]])
    }
}

/// Fields with polynomial coefficients and exact derivatives.
#[derive(Debug, Clone)]
pub struct PolynomialFields {
    n: usize,
    fields: Vec<PolyField>,
    derivs: Vec<Vec<Vec<Polynomial>>>,
}

impl PolynomialFields {
    pub fn new(fields: Vec<PolyField>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::Config("a system needs at least one field".into()));
        };
        let n = first.len();
        for f in &fields {
            if f.len() != n {
                return Err(Error::Dimension { expected: n, got: f.len() });
            }
            for p in f {
                if p.dim() != n {
                    return Err(Error::Dimension { expected: n, got: p.dim() });
                }
            }
        }
        let derivs = fields
            .iter()
            .map(|f| f.iter().map(|p| (0..n).map(|l| p.derivative(l)).collect()).collect())
            .collect();
        Ok(Self { n, fields, derivs })
    }
}

impl FieldCoefficients for PolynomialFields {
    fn dim(&self) -> usize {
        self.n
    }
    fn fields(&self) -> usize {
        self.fields.len()
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, f) in self.fields.iter().enumerate() {
            for (k, p) in f.iter().enumerate() {
                out[j * self.n + k] = p.eval(x);
            }
        }
    }
    fn dsigma_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (j, f) in self.derivs.iter().enumerate() {
            for (k, row) in f.iter().enumerate() {
                for (l, p) in row.iter().enumerate() {
                    out[(j * n + k) * n + l] = p.eval(x);
                }
            }
        }
    }
    fn polynomial_fields(&self) -> Option<Vec<PolyField>> {
        Some(self.fields.clone())
    }
}

type SigmaFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

struct FnFields {
    n: usize,
    m: usize,
    sigma: SigmaFn,
}

impl fmt::Debug for FnFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnFields(n={}, m={})", self.n, self.m)
    }
}

impl FieldCoefficients for FnFields {
    fn dim(&self) -> usize {
        self.n
    }
    fn fields(&self) -> usize {
        self.m
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }
}

const PRESET_HALF_WIDTH: f64 = 4.0;

pub fn euclidean(n: usize) -> VectorFieldSystem {
    let domain = BoxDomain::cube(n, -PRESET_HALF_WIDTH, PRESET_HALF_WIDTH).expect("n >= 1");
    VectorFieldSystem::new(Arc::new(Euclidean { n }), domain)
        .expect("valid preset")
        .with_name(format!("euclidean:{n}"))
        .with_declared_step(1)
}

pub fn heisenberg1() -> VectorFieldSystem {
    let domain = BoxDomain::cube(3, -PRESET_HALF_WIDTH, PRESET_HALF_WIDTH).unwrap();
    VectorFieldSystem::new(Arc::new(Heisenberg), domain)
        .expect("valid preset")
        .with_name("heisenberg1")
        .with_declared_step(2)
}

/// The Grushin plane. Its step is 2 on `{x = 0}` and 1 elsewhere, so no
/// single step is declared.
pub fn grushin() -> VectorFieldSystem {
    let domain = BoxDomain::cube(2, -PRESET_HALF_WIDTH, PRESET_HALF_WIDTH).unwrap();
    VectorFieldSystem::new(Arc::new(Grushin), domain)
        .expect("valid preset")
        .with_name("grushin")
}

/// Looks up a preset by name: `euclidean` (plane), `euclidean:<n>`,
/// `heisenberg1` (alias `heisenberg`) or `grushin`.
pub fn preset(name: &str) -> Result<VectorFieldSystem> {
    let name = name.trim();
    match name {
        "euclidean" => Ok(euclidean(2)),
        "heisenberg1" | "heisenberg" => Ok(heisenberg1()),
        "grushin" => Ok(grushin()),
        _ => {
            if let Some(n) = name.strip_prefix("euclidean:") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Config(format!("bad euclidean dimension in {name:?}")))?;
                if n == 0 {
                    return Err(Error::Config("euclidean dimension must be positive".into()));
                }
                Ok(euclidean(n))
            } else {
                Err(Error::Config(format!("unknown system preset {name:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_brackets_vanish() {
        let sys = euclidean(2);
        let b = lie_bracket(&sys, 0, 1).unwrap();
        assert_eq!(b(&[0.3, -0.7]), vec![0.0, 0.0]);
    }

    #[test]
    fn bracket_rejects_bad_index() {
        let sys = heisenberg1();
        assert!(matches!(lie_bracket(&sys, 0, 2), Err(Error::FieldIndex { index: 2, fields: 2 })));
    }

    #[test]
    fn heisenberg_bracket_against_symbolic() {
        // symbolic: [X1,X2] computed on polynomial coefficients
        let sys = heisenberg1();
        let pf = sys.coefficients().polynomial_fields().unwrap();
        let sym = polynomial::poly_bracket(&pf[0], &pf[1]);
        let b = lie_bracket(&sys, 0, 1).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [-0.3, 0.9, 3.0]] {
            let num = b(&x);
            for k in 0..3 {
                assert_eq!(num[k], sym[k].eval(&x));
            }
            assert_eq!(num, vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn grushin_bracket_against_symbolic() {
        let sys = grushin();
        let b = lie_bracket(&sys, 0, 1).unwrap();
        assert_eq!(b(&[0.0, 0.0]), vec![0.0, 1.0]);
        assert_eq!(b(&[2.5, -1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn preset_dsigma_matches_finite_differences() {
        for sys in [euclidean(3), heisenberg1(), grushin()] {
            let n = sys.dim();
            let m = sys.fields();
            let x: Vec<f64> = (0..n).map(|k| 0.3 * k as f64 - 0.4).collect();
            let mut exact = vec![0.0; m * n * n];
            let mut fd = vec![0.0; m * n * n];
            sys.dsigma_into(&x, &mut exact);
            fd_dsigma(sys.coefficients().as_ref(), &x, &mut fd, FD_STEP);
            for (a, b) in exact.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn closure_system_uses_fd_derivatives() {
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let sys = VectorFieldSystem::from_fn(
            2,
            1,
            |x, out| {
                out[0] = x[1].sin();
                out[1] = x[0] * x[0];
            },
            dom,
        )
        .unwrap();
        let d = sys.dsigma(&[0.5, 0.2]);
        assert!((d[0][(0, 1)] - 0.2f64.cos()).abs() < 1e-9);
        assert!((d[0][(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(preset("euclidean:3").unwrap().dim(), 3);
        assert_eq!(preset("heisenberg1").unwrap().fields(), 2);
        assert!(preset("euclidean:0").is_err());
        assert!(preset("sphere").is_err());
    }
}
